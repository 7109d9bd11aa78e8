//! Finite-size key length from entropy accumulation with a CHSH test.
//!
//! Winning probabilities `s`, `t`, `omega` relate to CHSH scores through
//! `omega = (4 + S) / 8`. Logarithms are base 2 unless written `ln`.

use std::f64::consts::{E, LN_10, LN_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::optimizer::{maximize, SearchSpec};
use crate::photonics::{heralding_probability, SetupParams};
use crate::protocol::{binary_entropy, noisy_conditional_entropy, optimize_noise, Distribution};

/// Lowest quantum CHSH winning probability.
pub const OMEGA_MIN: f64 = (1.0 - 1.0 / SQRT_2) / 2.0;
/// Tsirelson winning probability.
pub const OMEGA_MAX: f64 = (1.0 + 1.0 / SQRT_2) / 2.0;
/// Largest winning probability of local strategies.
pub const OMEGA_LOCAL: f64 = 0.75;
/// Fixed overhead in the key length, in bits.
pub const KEY_OVERHEAD_BITS: f64 = 264.0;
/// Slack added to the error-correction syndrome, per `sqrt(n)`.
pub const SYNDROME_SLACK: f64 = 50.0;
/// Standard deviations of margin in the test threshold.
pub const DEFAULT_SIGMAS: f64 = 3.0;
/// Abort probability targeted with honest devices.
pub const COMPLETENESS_TARGET: f64 = 0.01;

/// `b = 4 / ln 2` in the key-length correction.
pub const Y_B: f64 = 4.0 / LN_2;

/// Which printed form of the entropy bound to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaForm {
    /// Radical over the whole product `q(1-q)(64s - 64s^2 - 8)`; agrees
    /// with the asymptotic rate formula.
    #[default]
    Consistent,
    /// `q(1-q)` outside the radical, as printed in the finite-size appendix.
    /// Kept for comparison only.
    Printed,
}

fn radicands(s: f64, q: f64, form: EtaForm) -> (f64, f64) {
    let a = (16.0 * s * s - 16.0 * s + 3.0).max(0.0);
    let inner = 64.0 * s - 64.0 * s * s - 8.0;
    let b = match form {
        EtaForm::Consistent => (1.0 - q * (1.0 - q) * inner).max(0.0).sqrt(),
        EtaForm::Printed => q * (1.0 - q) * inner.max(0.0).sqrt(),
    };
    (a.sqrt(), b)
}

fn check_winning(s: f64) -> Result<()> {
    if !(0.25..=OMEGA_MAX + 1e-12).contains(&s) {
        return Err(Error::OutOfRange {
            name: "s",
            value: s,
            range: "[1/4, (1 + 1/sqrt 2) / 2]",
        });
    }
    Ok(())
}

/// Entropy bound `eta(s)` for winning probability `s` and preprocessing
/// noise `q`: zero on `[1/4, 3/4]`, the CHSH bound above.
pub fn eta_bound(s: f64, q: f64) -> Result<f64> {
    eta_bound_with(s, q, EtaForm::Consistent)
}

pub fn eta_bound_with(s: f64, q: f64, form: EtaForm) -> Result<f64> {
    check_winning(s)?;
    if s <= OMEGA_LOCAL {
        return Ok(0.0);
    }
    let s = s.min(OMEGA_MAX);
    let (ra, rb) = radicands(s, q, form);
    Ok(1.0 - binary_entropy((1.0 + ra) / 2.0) + binary_entropy((1.0 + rb) / 2.0))
}

/// `d eta / ds` on the branch `(3/4, omega_max)`.
pub fn eta_slope(t: f64, q: f64) -> Result<f64> {
    if !(t > OMEGA_LOCAL && t < OMEGA_MAX) {
        return Err(Error::OutOfRange {
            name: "t",
            value: t,
            range: "(3/4, (1 + 1/sqrt 2) / 2)",
        });
    }
    let dh = |x: f64| ((1.0 - x) / x).log2();
    let (ra, rb) = radicands(t, q, EtaForm::Consistent);
    let x1 = (1.0 + ra) / 2.0;
    let x2 = (1.0 + rb) / 2.0;
    let dx1 = (8.0 * t - 4.0) / ra;
    let mut slope = -dh(x1) * dx1;
    if q > 0.0 && rb > 0.0 {
        let dx2 = q * (1.0 - q) * (32.0 * t - 16.0) / rb;
        slope += dh(x2) * dx2;
    }
    Ok(slope)
}

/// Tangent of `eta` at `t`, evaluated at `omega`.
pub fn g_linear(t: f64, omega: f64, q: f64) -> Result<f64> {
    Ok(eta_bound(t, q)? + (omega - t) * eta_slope(t, q)?)
}

/// Values of `f_t` on the point masses at test outcomes 0 and 1 and at a
/// key round.
pub fn f_affine(t: f64, gamma: f64, q: f64) -> Result<[f64; 3]> {
    check_open("gamma", gamma, 0.0, 1.0, "(0, 1]", true)?;
    let g0 = g_linear(t, 0.0, q)?;
    let g1 = g_linear(t, 1.0, q)?;
    Ok([g0 / gamma + (1.0 - 1.0 / gamma) * g1, g1, g1])
}

/// Test-round distribution `(gamma (1 - omega), gamma omega, 1 - gamma)`.
pub fn round_distribution(gamma: f64, omega: f64) -> [f64; 3] {
    [gamma * (1.0 - omega), gamma * omega, 1.0 - gamma]
}

/// `Var_p(f)` for values `f` on three outcomes.
pub fn variance(p: &[f64; 3], f: &[f64; 3]) -> f64 {
    let mean: f64 = p.iter().zip(f).map(|(a, b)| a * b).sum();
    let second: f64 = p.iter().zip(f).map(|(a, b)| a * b * b).sum();
    second - mean * mean
}

/// `(2 + sqrt 2) / (4 gamma) (g_t(1) - g_t(0))^2`, a bound on the variance
/// of `f_t` over all quantum winning probabilities.
pub fn variance_bound(t: f64, gamma: f64, q: f64) -> Result<f64> {
    let spread = g_linear(t, 1.0, q)? - g_linear(t, 0.0, q)?;
    Ok((2.0 + SQRT_2) / (4.0 * gamma) * spread * spread)
}

/// `theta_eps`, using the upper bound `log(2 / eps^2)`.
pub fn theta_eps(eps: f64) -> Result<f64> {
    check_open("eps", eps, 0.0, 1.0, "(0, 1]", true)?;
    Ok((2.0 / (eps * eps)).log2())
}

/// Exact `log(1 / (1 - sqrt(1 - eps^2)))`, for comparison with the bound.
pub fn theta_eps_exact(eps: f64) -> Result<f64> {
    check_open("eps", eps, 0.0, 1.0, "(0, 1]", true)?;
    // 1 - sqrt(1 - e^2) = e^2 / (1 + sqrt(1 - e^2)) avoids cancellation
    let denom = eps * eps / (1.0 + (1.0 - eps * eps).sqrt());
    Ok(-denom.log2())
}

/// Second-order Renyi correction `K_{alpha'}(f_t)`.
pub fn k_term(alpha_p: f64, t: f64, q: f64) -> Result<f64> {
    check_open("alpha_p", alpha_p, 1.0, 2.0, "(1, 2)", false)?;
    let spread = 2.0 + g_linear(t, 1.0, q)? - g_linear(t, OMEGA_MIN, q)?;
    let pre = 1.0 / (6.0 * (2.0 - alpha_p).powi(3) * LN_2);
    Ok(pre * 2f64.powf((alpha_p - 1.0) * spread) * (2f64.powf(spread) + E * E).ln().powi(3))
}

/// `V(f_t, q(omega)) = (ln 2 / 2)(log 33 + sqrt(2 + Var))^2` for a given variance.
pub fn v_of_variance(var: f64) -> f64 {
    LN_2 / 2.0 * (33f64.log2() + (2.0 + var).sqrt()).powi(2)
}

/// `V` at the test distribution for winning probability `omega`.
pub fn v_term(t: f64, gamma: f64, omega: f64, q: f64) -> Result<f64> {
    let f = f_affine(t, gamma, q)?;
    Ok(v_of_variance(variance(
        &round_distribution(gamma, omega),
        &f,
    )))
}

/// Upper bound on `max_omega V`, through [`variance_bound`].
pub fn v_max(t: f64, gamma: f64, q: f64) -> Result<f64> {
    Ok(v_of_variance(variance_bound(t, gamma, q)?))
}

/// `Delta(f_t, omega) = (eta(omega) - eta(t)) - eta'(t)(omega - t)`.
pub fn delta_term(t: f64, omega: f64, q: f64) -> Result<f64> {
    if omega == t {
        return Ok(0.0);
    }
    Ok((eta_bound(omega, q)? - eta_bound(t, q)?) - eta_slope(t, q)? * (omega - t))
}

/// Principal branch of the Lambert W function.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch {
        return Err(Error::OutOfRange {
            name: "x",
            value: x,
            range: "[-1/e, inf)",
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch {
        return Ok(-1.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.3 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        (1.0 + x).ln() * (1.0 - (1.0 + x).ln().ln_1p() / (2.0 + (1.0 + x).ln()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        if (next - w).abs() <= 1e-16 * next.abs().max(1e-300) {
            w = next;
            break;
        }
        w = next;
    }
    Ok(w)
}

/// `W_0(e^{ln_z})` for arguments too large to exponentiate.
fn lambert_w0_of_exp(ln_z: f64) -> f64 {
    if ln_z < 700.0 {
        return lambert_w0(ln_z.exp()).expect("positive argument");
    }
    // w + ln w = ln_z
    let mut w = ln_z - ln_z.ln();
    for _ in 0..64 {
        let f = w + w.ln() - ln_z;
        let next = w - f / (1.0 + 1.0 / w);
        if (next - w).abs() <= 1e-16 * next {
            return next;
        }
        w = next;
    }
    w
}

/// `Y_b(x) = b W(e^{x/b} / b)` with `b = 4 / ln 2`; the solution `y` of
/// `y = x - 4 log y`.
pub fn y_correction(x: f64) -> f64 {
    Y_B * lambert_w0_of_exp(x / Y_B - Y_B.ln())
}

/// CHSH winning probability `(4 + S) / 8`.
pub fn winning_probability(s: f64) -> f64 {
    (4.0 + s) / 8.0
}

/// Winning-probability threshold below which the protocol aborts.
pub fn omega_threshold(s: f64, gamma: f64, n: f64, k: f64) -> f64 {
    let q = gamma * (1.0 - winning_probability(s));
    let q_thr = q + k * (q * (1.0 - q) / n).sqrt();
    1.0 - q_thr / gamma
}

/// Length of the error-correction syndrome in bits.
pub fn syndrome_length(n: f64, gamma: f64, key_entropy: f64, s: f64) -> f64 {
    n * ((1.0 - gamma) * key_entropy + gamma * binary_entropy((4.0 - s) / 8.0))
        + SYNDROME_SLACK * n.sqrt()
}

fn check_open(
    name: &'static str,
    v: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
    hi_closed: bool,
) -> Result<()> {
    let ok = v > lo && (v < hi || (hi_closed && v == hi));
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            range,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSet {
    pub eps_s: f64,
    pub eps_s_p: f64,
    pub eps_s_pp: f64,
    #[serde(rename = "eps_EA")]
    pub eps_ea: f64,
    #[serde(rename = "eps_PA")]
    pub eps_pa: f64,
    pub eps_h: f64,
}

impl Default for EpsilonSet {
    fn default() -> Self {
        Self {
            eps_s: 1e-6,
            eps_s_p: 3e-7,
            eps_s_pp: 3e-7,
            eps_ea: 1e-6,
            eps_pa: 1e-6,
            eps_h: 2f64.powi(-61),
        }
    }
}

impl EpsilonSet {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_s", self.eps_s),
            ("eps_s_p", self.eps_s_p),
            ("eps_s_pp", self.eps_s_pp),
            ("eps_EA", self.eps_ea),
            ("eps_PA", self.eps_pa),
            ("eps_h", self.eps_h),
        ] {
            check_open(name, v, 0.0, 1.0, "(0, 1)", false)?;
        }
        let lhs = self.eps_s_p + 2.0 * self.eps_s_pp;
        if lhs >= self.eps_s {
            return Err(Error::EpsilonConstraint {
                lhs,
                eps_s: self.eps_s,
            });
        }
        Ok(())
    }

    /// `max(eps_EA, eps_PA + 2 eps_s) + 4 eps_h`.
    pub fn soundness(&self) -> f64 {
        self.eps_ea.max(self.eps_pa + 2.0 * self.eps_s) + 4.0 * self.eps_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteSizeParams {
    pub n: f64,
    pub gamma: f64,
    pub t: f64,
    pub q_n: f64,
    pub alpha_p: f64,
    pub alpha_pp: f64,
    pub epsilons: EpsilonSet,
    pub k: f64,
}

impl Default for FiniteSizeParams {
    fn default() -> Self {
        Self {
            n: 1e10,
            gamma: 0.01,
            t: 0.85,
            q_n: 0.0,
            alpha_p: 1.01,
            alpha_pp: 1.001,
            epsilons: EpsilonSet::default(),
            k: DEFAULT_SIGMAS,
        }
    }
}

impl FiniteSizeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(Error::OutOfRange {
                name: "n",
                value: self.n,
                range: "[1, inf)",
            });
        }
        check_open("gamma", self.gamma, 0.0, 1.0, "(0, 1)", false)?;
        check_open(
            "t",
            self.t,
            OMEGA_LOCAL,
            OMEGA_MAX,
            "(3/4, (1 + 1/sqrt 2) / 2)",
            false,
        )?;
        check_range("q_n", self.q_n, 0.0, 0.5, "[0, 1/2]")?;
        check_open("alpha_p", self.alpha_p, 1.0, 2.0, "(1, 2)", false)?;
        check_open(
            "alpha_pp",
            self.alpha_pp,
            1.0,
            1.0 + 1.0 / 5f64.log2(),
            "(1, 1 + 1/log 5)",
            false,
        )?;
        if !(self.k >= 0.0) {
            return Err(Error::OutOfRange {
                name: "k",
                value: self.k,
                range: "[0, inf)",
            });
        }
        self.epsilons.validate()
    }
}

/// Honest-device statistics entering the key length: the expected CHSH
/// score and the key-round distribution before preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyStatistics {
    pub chsh: f64,
    pub key_distribution: Distribution,
}

impl KeyStatistics {
    pub fn key_entropy(&self, q: f64) -> f64 {
        noisy_conditional_entropy(&self.key_distribution, q)
    }

    /// Asymptotic rate with the noise level optimized.
    pub fn asymptotic_rate(&self) -> f64 {
        optimize_noise(self.chsh, &self.key_distribution).rate
    }
}

/// Terms of the key length, kept separately for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyLength {
    /// Argument `l` of the final correction; negative when the overheads
    /// exceed the accumulated entropy.
    pub raw: f64,
    /// `Y_b(l)`.
    pub corrected: f64,
    /// Usable key bits: `Y_b(l)` when `l > 0`, else 0.
    pub ell: f64,
    pub omega_thr: f64,
    pub syndrome: f64,
}

/// Finite-size key length for `stats` under `params`.
pub fn key_length(stats: &KeyStatistics, params: &FiniteSizeParams) -> Result<KeyLength> {
    params.validate()?;
    let FiniteSizeParams {
        n,
        gamma,
        t,
        q_n: q,
        alpha_p: a1,
        alpha_pp: a2,
        epsilons: eps,
        k,
    } = *params;
    let omega_thr = omega_threshold(stats.chsh, gamma, n, k);
    let syndrome = syndrome_length(n, gamma, stats.key_entropy(q), stats.chsh);
    let log5 = 5f64.log2();
    let log_ea = (1.0 / eps.eps_ea).log2();
    let l = n * g_linear(t, omega_thr, q)? + n * delta_term(t, t, q)?
        - (a1 - 1.0) * v_max(t, gamma, q)?
        - n * (a1 - 1.0).powi(2) * k_term(a1, t, q)?
        - n * gamma
        - n * (a2 - 1.0) * log5 * log5
        - (theta_eps(eps.eps_s_p)? + a1 * log_ea) / (a1 - 1.0)
        - (theta_eps(eps.eps_s_pp)? + a2 * log_ea) / (a2 - 1.0)
        - 3.0 * theta_eps(eps.eps_s - eps.eps_s_p - 2.0 * eps.eps_s_pp)?
        - 5.0 * eps.eps_pa.log2()
        - syndrome
        - KEY_OVERHEAD_BITS;
    let corrected = y_correction(l);
    Ok(KeyLength {
        raw: l,
        corrected,
        ell: if l > 0.0 { corrected } else { 0.0 },
        omega_thr,
        syndrome,
    })
}

/// Search effort for [`optimize_finite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteSearch {
    pub n_starts: usize,
    pub seed: u64,
    pub max_evals: usize,
}

impl Default for FiniteSearch {
    fn default() -> Self {
        Self {
            n_starts: 16,
            seed: 11,
            max_evals: 3000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteOptimum {
    pub key: KeyLength,
    pub params: FiniteSizeParams,
}

/// Maximizes the key length over `(gamma, t, q_n, alpha', alpha'')`.
///
/// `gamma` and the Renyi offsets `alpha - 1` are searched in log scale so
/// that optima close to the interval ends stay reachable.
pub fn optimize_finite(
    stats: &KeyStatistics,
    n: f64,
    epsilons: &EpsilonSet,
    k: f64,
    search: &FiniteSearch,
) -> Result<FiniteOptimum> {
    let base = FiniteSizeParams {
        n,
        epsilons: *epsilons,
        k,
        ..FiniteSizeParams::default()
    };
    base.validate()?;
    let pp_max = 1.0 / 5f64.log2();
    let lower = vec![-12.0 * LN_10, 0.0, 0.0, -14.0 * LN_10, -14.0 * LN_10];
    let upper = vec![
        (0.999f64).ln(),
        1.0,
        0.5,
        (0.999f64).ln(),
        (0.999 * pp_max).ln(),
    ];
    let span = OMEGA_MAX - OMEGA_LOCAL;
    let decode = |x: &[f64]| FiniteSizeParams {
        gamma: x[0].exp(),
        t: OMEGA_LOCAL + span * (1e-9 + (1.0 - 2e-9) * x[1]),
        q_n: x[2],
        alpha_p: 1.0 + x[3].exp(),
        alpha_pp: 1.0 + x[4].exp(),
        ..base
    };
    let objective = |x: &[f64]| match key_length(stats, &decode(x)) {
        Ok(k) if k.raw.is_finite() => k.raw / n,
        _ => -1e6,
    };
    // start from the tangent at the honest winning probability
    let omega = winning_probability(stats.chsh).clamp(OMEGA_LOCAL + 1e-6, OMEGA_MAX - 1e-6);
    let q0 = optimize_noise(stats.chsh, &stats.key_distribution)
        .q
        .min(0.5);
    let guess = vec![
        (10.0 / n.sqrt()).clamp(1e-12, 0.5).ln(),
        (omega - OMEGA_LOCAL) / span,
        q0,
        (3.0 / n.sqrt()).clamp(1e-14, 0.5).ln(),
        (3.0 / n.sqrt()).clamp(1e-14, 0.5 * pp_max).ln(),
    ];
    let spec = SearchSpec::new(lower, upper)
        .with_starts(search.n_starts)
        .with_seed(search.seed)
        .with_max_evals(search.max_evals)
        .with_initial(vec![guess]);
    let res = maximize(objective, &spec)?;
    let params = decode(&res.point);
    Ok(FiniteOptimum {
        key: key_length(stats, &params)?,
        params,
    })
}

/// Key bits per second, `P_H nu max(ell, 0) / n`.
pub fn finite_rate_per_second(ell: f64, n: f64, params: &SetupParams) -> Result<f64> {
    Ok(heralding_probability(params)? * params.source_rate * ell.max(0.0) / n)
}
