//! Bounded derivative-free maximization: multi-start adaptive Nelder-Mead.
//!
//! Each coordinate is mapped through a logistic transform
//! `x = lo + (hi - lo) / (1 + e^{-z})`, so the simplex moves in unbounded
//! `z` space and every queried point lies inside the box. Start points come
//! from a Halton sequence with a seeded Cranley-Patterson rotation. A run
//! that stalls is restarted around its incumbent until a restart no longer
//! improves it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Initial simplex edge (in search variables) of the first run and of
/// successive restarts; a run ends after every size failed to improve in a row.
const RESTART_STEPS: [f64; 3] = [0.8, 2.0, 0.25];

/// Clamp on `|z|` so that the logistic map never saturates to the exact bound.
const Z_LIMIT: f64 = 36.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_starts: usize,
    pub seed: u64,
    /// Objective evaluations allowed per start (restarts included).
    pub max_evals: usize,
    /// A run has stalled once the spread of simplex values drops below this.
    pub tol: f64,
    /// Caller-supplied start points (in box coordinates), used before the
    /// low-discrepancy starts. They count towards `n_starts`.
    #[serde(default)]
    pub initial: Vec<Vec<f64>>,
}

impl SearchSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            lower,
            upper,
            n_starts: 16,
            seed: 0,
            max_evals: 4000,
            tol: 1e-10,
            initial: Vec::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn with_starts(mut self, n: usize) -> Self {
        self.n_starts = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.max_evals = n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_initial(mut self, points: Vec<Vec<f64>>) -> Self {
        self.initial = points;
        self
    }

    /// Coordinates with `lower == upper` are pinned and never searched.
    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lower.len(),
                got: self.upper.len(),
            });
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        for (&lo, &hi) in self.lower.iter().zip(&self.upper) {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("invalid bounds [{lo}, {hi}]")));
            }
        }
        for p in &self.initial {
            if p.len() != self.dims() {
                return Err(Error::DimensionMismatch {
                    expected: self.dims(),
                    got: p.len(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    Converged,
    MaxEvalsReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub value: f64,
    pub point: Vec<f64>,
    pub evals: usize,
    pub status: SearchStatus,
    /// End point of every start as `(value, point)`, best first.
    pub runs: Vec<(f64, Vec<f64>)>,
}

/// Maps between box coordinates and the unbounded search variables of the
/// free coordinates.
struct BoxMap<'a> {
    lower: &'a [f64],
    upper: &'a [f64],
    free: Vec<usize>,
}

impl<'a> BoxMap<'a> {
    fn new(spec: &'a SearchSpec) -> Self {
        let free = (0..spec.dims())
            .filter(|&i| spec.upper[i] > spec.lower[i])
            .collect();
        Self {
            lower: &spec.lower,
            upper: &spec.upper,
            free,
        }
    }

    fn to_box(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.lower.to_vec();
        for (&i, &zi) in self.free.iter().zip(z) {
            let s = 1.0 / (1.0 + (-zi.clamp(-Z_LIMIT, Z_LIMIT)).exp());
            x[i] = self.lower[i] + (self.upper[i] - self.lower[i]) * s;
        }
        x
    }

    fn to_search(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| {
                let u = ((x[i] - self.lower[i]) / (self.upper[i] - self.lower[i]))
                    .clamp(1e-12, 1.0 - 1e-12);
                (u / (1.0 - u)).ln()
            })
            .collect()
    }
}

fn halton(index: usize, base: u32) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    let b = base as usize;
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Low-discrepancy start points in the unit cube, rotated by a seeded shift.
pub fn start_points(dims: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|k| {
            (0..dims)
                .map(|d| {
                    let u = if d < PRIMES.len() {
                        halton(k + 1, PRIMES[d])
                    } else {
                        rng.gen::<f64>()
                    };
                    (u + shift[d]).fract()
                })
                .collect()
        })
        .collect()
}

struct Run {
    value: f64,
    z: Vec<f64>,
    evals: usize,
    status: SearchStatus,
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients) maximizing `f`
/// from `z0`, with restarts around the incumbent after each stall.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, z0: Vec<f64>, max_evals: usize, tol: f64) -> Run {
    let n = z0.len();
    if n == 0 {
        return Run {
            value: f(&z0),
            z: z0,
            evals: 1,
            status: SearchStatus::Converged,
        };
    }
    let nf = n as f64;
    let (rho, chi, gamma, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    // minimize the negated objective; non-finite values count as worst
    let cost = |z: &[f64]| {
        let v = f(z);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut evals = 0usize;
    let mut best_z = z0;
    let mut best_c = cost(&best_z);
    evals += 1;
    let mut step = RESTART_STEPS[0];
    let mut failures = 0;
    loop {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_z.clone(), best_c));
        for i in 0..n {
            let mut z = best_z.clone();
            z[i] += if z[i] > 0.0 { -step } else { step };
            let c = cost(&z);
            simplex.push((z, c));
        }
        evals += n;
        let mut stalled = false;
        while evals < max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            let size = simplex[1..]
                .iter()
                .flat_map(|(z, _)| z.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= tol * (1.0 + simplex[0].1.abs())) || size < 1e-12 {
                stalled = true;
                break;
            }
            let mut centroid = vec![0.0; n];
            for (z, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(z) {
                    *c += v / nf;
                }
            }
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let zr = along(rho);
            let cr = cost(&zr);
            evals += 1;
            if cr < simplex[0].1 {
                let ze = along(rho * chi);
                let ce = cost(&ze);
                evals += 1;
                simplex[n] = if ce < cr { (ze, ce) } else { (zr, cr) };
                continue;
            }
            if cr < simplex[n - 1].1 {
                simplex[n] = (zr, cr);
                continue;
            }
            let (zc, cc) = if cr < worst.1 {
                let z = along(rho * gamma);
                let c = cost(&z);
                (z, c)
            } else {
                let z = along(-gamma);
                let c = cost(&z);
                (z, c)
            };
            evals += 1;
            if cc < worst.1.min(cr) {
                simplex[n] = (zc, cc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for (z, c) in simplex.iter_mut().skip(1) {
                for (zi, ai) in z.iter_mut().zip(&anchor) {
                    *zi = ai + sigma * (*zi - ai);
                }
                *c = cost(z);
            }
            evals += n;
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_c - tol * (1.0 + best_c.abs());
        if simplex[0].1 < best_c {
            best_c = simplex[0].1;
            best_z = simplex[0].0.clone();
        }
        if !stalled {
            return Run {
                value: -best_c,
                z: best_z,
                evals,
                status: SearchStatus::MaxEvalsReached,
            };
        }
        failures = if improved { 0 } else { failures + 1 };
        if failures == RESTART_STEPS.len() {
            return Run {
                value: -best_c,
                z: best_z,
                evals,
                status: SearchStatus::Converged,
            };
        }
        step = RESTART_STEPS[failures];
    }
}

/// Maximizes `objective` over the box in `spec`.
///
/// Deterministic for a fixed spec: starts are independent and reduced by
/// maximum value, ties broken by start index.
pub fn maximize<F>(objective: F, spec: &SearchSpec) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let map = BoxMap::new(spec);
    let n_random = spec.n_starts.saturating_sub(spec.initial.len());
    let mut starts: Vec<Vec<f64>> = spec
        .initial
        .iter()
        .take(spec.n_starts)
        .map(|x| map.to_search(x))
        .collect();
    starts.extend(
        start_points(map.free.len(), n_random, spec.seed)
            .into_iter()
            .map(|u| {
                u.into_iter()
                    .map(|ui| {
                        let ui = ui.clamp(1e-6, 1.0 - 1e-6);
                        (ui / (1.0 - ui)).ln()
                    })
                    .collect()
            }),
    );
    let g = |z: &[f64]| objective(&map.to_box(z));
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|z0| nelder_mead(&g, z0, spec.max_evals, spec.tol))
        .collect();
    let total_evals = runs.iter().map(|r| r.evals).sum();
    let mut ends: Vec<(f64, Vec<f64>)> = runs.iter().map(|r| (r.value, map.to_box(&r.z))).collect();
    // stable sort keeps the start order among ties
    ends.sort_by(|a, b| b.0.total_cmp(&a.0));
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start");
    Ok(SearchResult {
        value: best.value,
        point: map.to_box(&best.z),
        evals: total_evals,
        status: best.status,
        runs: ends,
    })
}

/// Bisection for a sign change of `f` on `[lo, hi]`; returns the midpoint of
/// the final bracket and the visited abscissae.
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if (f_lo > 0.0) == (f_hi > 0.0) {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let mut visited = vec![lo, hi];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        visited.push(mid);
        if (fm > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), visited))
}
