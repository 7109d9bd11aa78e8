//! Squeezed-displaced photodetection.
//!
//! A measurement displaces the incoming mode, squeezes it, and sends it to a
//! threshold detector of efficiency `eta_D`. With `V = S(xi) D(alpha)` the
//! no-click element is `V (1 - eta_D)^n V^dagger` (for `eta_D = 1` the vacuum
//! projector `V |0><0| V^dagger`) and the click element is its complement.
//! Outcome `+1` is assigned to no-click; which physical outcome carries which
//! sign is immaterial because every setting used in a Bell test also carries
//! a relabeling bit.

use std::f64::consts::{LN_10, PI};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};
use crate::fock::{
    loss_kraus, max_abs, CMatrix, FockDim, GaussianKernel, ModeOperator, ModeSpace, C64,
};
use crate::optimizer::{maximize, SearchSpec};

pub type Qubit2 = Matrix2<C64>;

/// Largest squeezing used, 4.08 dB, as a squeeze parameter `|xi|`.
pub const SQUEEZE_CAP: f64 = 4.08 * LN_10 / 20.0;
/// Largest displacement amplitude used.
pub const DISPLACEMENT_CAP: f64 = 0.9;
/// Photon cutoff for measured modes.
pub const DEFAULT_CUTOFF: usize = 20;

/// Squeezing in dB for a squeeze parameter `|xi|`.
pub fn squeeze_to_db(xi_amp: f64) -> f64 {
    20.0 * xi_amp / LN_10
}

pub fn db_to_squeeze(db: f64) -> f64 {
    db * LN_10 / 20.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub xi_amp: f64,
    pub xi_phase: f64,
    pub alpha_amp: f64,
    pub alpha_phase: f64,
    pub detector_efficiency: f64,
}

impl MeasurementSetting {
    /// Plain photon counting with a detector of the given efficiency.
    pub fn photon_counting(detector_efficiency: f64) -> Self {
        Self {
            xi_amp: 0.0,
            xi_phase: 0.0,
            alpha_amp: 0.0,
            alpha_phase: 0.0,
            detector_efficiency,
        }
    }

    pub fn from_params(p: &[f64], detector_efficiency: f64) -> Self {
        Self {
            xi_amp: p[0],
            xi_phase: p[1],
            alpha_amp: p[2],
            alpha_phase: p[3],
            detector_efficiency,
        }
    }

    pub fn params(&self) -> [f64; 4] {
        [self.xi_amp, self.xi_phase, self.alpha_amp, self.alpha_phase]
    }

    pub fn validate(&self, caps: &MeasurementCaps) -> Result<()> {
        check_range(
            "xi_amp",
            self.xi_amp,
            0.0,
            caps.max_squeeze,
            "[0, squeeze cap]",
        )?;
        check_range(
            "alpha_amp",
            self.alpha_amp,
            0.0,
            caps.max_displacement,
            "[0, displacement cap]",
        )?;
        check_range(
            "detector_efficiency",
            self.detector_efficiency,
            0.0,
            1.0,
            "[0, 1]",
        )
    }
}

/// Amplitude limits applied to squeezing and displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementCaps {
    pub max_squeeze: f64,
    pub max_displacement: f64,
}

impl Default for MeasurementCaps {
    fn default() -> Self {
        Self {
            max_squeeze: SQUEEZE_CAP,
            max_displacement: DISPLACEMENT_CAP,
        }
    }
}

impl MeasurementCaps {
    pub fn without_squeezing(self) -> Self {
        Self {
            max_squeeze: 0.0,
            ..self
        }
    }

    /// Box bounds for the four parameters of one setting.
    pub fn bounds(&self) -> ([f64; 4], [f64; 4]) {
        (
            [0.0, 0.0, 0.0, 0.0],
            [self.max_squeeze, 2.0 * PI, self.max_displacement, 2.0 * PI],
        )
    }
}

/// Binary POVM restricted to `span{|0>, |1>}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitPovm {
    pub click: Qubit2,
    pub no_click: Qubit2,
}

impl QubitPovm {
    pub fn from_no_click(no_click: Qubit2) -> Self {
        Self {
            click: Qubit2::identity() - no_click,
            no_click,
        }
    }

    /// Ideal projective measurement of `sigma_n`, `+1` on `|n>`.
    pub fn pauli(direction: BlochDirection) -> Self {
        let p = (Qubit2::identity() + direction.sigma()) * C64::new(0.5, 0.0);
        Self::from_no_click(p)
    }

    /// `Pi_{+1} - Pi_{-1}` with `+1` on no-click.
    pub fn observable(&self) -> Qubit2 {
        self.no_click - self.click
    }

    /// Element of outcome `+1` (`plus = true`) or `-1`.
    pub fn element(&self, plus: bool) -> Qubit2 {
        if plus {
            self.no_click
        } else {
            self.click
        }
    }

    /// Heisenberg-picture pure loss on the qubit block. Only the qubit block
    /// of the input operator enters, since loss never raises photon number.
    pub fn with_local_loss(&self, eta: f64) -> Self {
        Self::from_no_click(local_loss_adjoint_qubit(&self.no_click, eta))
    }

    /// Smallest eigenvalue of both elements and `|| click + no_click - I ||`.
    pub fn check(&self) -> (f64, f64) {
        let min_eig = |m: &Qubit2| {
            let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
            h.symmetric_eigenvalues().min()
        };
        let max_eig = |m: &Qubit2| {
            let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
            h.symmetric_eigenvalues().max()
        };
        let completeness = (self.click + self.no_click - Qubit2::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let lo = min_eig(&self.click).min(min_eig(&self.no_click));
        let hi = max_eig(&self.click).max(max_eig(&self.no_click));
        (lo.min(1.0 - hi), completeness)
    }
}

fn local_loss_adjoint_qubit(x: &Qubit2, eta: f64) -> Qubit2 {
    let s = C64::new(eta.sqrt(), 0.0);
    Qubit2::new(
        x[(0, 0)],
        s * x[(0, 1)],
        s * x[(1, 0)],
        x[(1, 1)] * eta + x[(0, 0)] * (1.0 - eta),
    )
}

/// Unit vector on the Bloch sphere of `span{|0>, |1>}`; `theta = 0` is `|0>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochDirection {
    pub theta: f64,
    pub phi: f64,
}

impl BlochDirection {
    pub const Z: Self = Self {
        theta: 0.0,
        phi: 0.0,
    };
    pub const X: Self = Self {
        theta: PI / 2.0,
        phi: 0.0,
    };
    pub const Y: Self = Self {
        theta: PI / 2.0,
        phi: PI / 2.0,
    };

    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn vector(&self) -> [f64; 3] {
        [
            self.theta.sin() * self.phi.cos(),
            self.theta.sin() * self.phi.sin(),
            self.theta.cos(),
        ]
    }

    /// `|n><n| - |-n><-n| = n . sigma`.
    pub fn sigma(&self) -> Qubit2 {
        let [x, y, z] = self.vector();
        Qubit2::new(
            C64::new(z, 0.0),
            C64::new(x, -y),
            C64::new(x, y),
            C64::new(-z, 0.0),
        )
    }
}

/// Builds POVMs for one Fock cutoff; holds the generator spectra so that
/// repeated evaluations inside an optimizer cost O(cutoff^2).
#[derive(Debug, Clone)]
pub struct MeasurementKernel {
    gaussian: GaussianKernel,
}

impl Default for MeasurementKernel {
    fn default() -> Self {
        Self::new(FockDim::new(DEFAULT_CUTOFF).expect("nonzero cutoff"))
    }
}

impl MeasurementKernel {
    pub fn new(dim: FockDim) -> Self {
        Self {
            gaussian: GaussianKernel::new(dim),
        }
    }

    pub fn dim(&self) -> FockDim {
        self.gaussian.dim()
    }

    fn dark_weights(&self, eta: f64) -> Vec<f64> {
        let d = self.dim().size();
        (0..d)
            .map(|n| {
                if n == 0 {
                    1.0
                } else {
                    (1.0 - eta).powi(n as i32)
                }
            })
            .collect()
    }

    /// `V = S(xi) D(alpha)` as a dense matrix.
    pub fn unitary(&self, s: &MeasurementSetting) -> CMatrix {
        self.gaussian.squeezing(s.xi_amp, s.xi_phase)
            * self.gaussian.displacement(s.alpha_amp, s.alpha_phase)
    }

    /// Amplitudes `<k| S(xi) D(alpha) |0>` for all `k` up to the cutoff.
    pub fn amplitudes(&self, s: &MeasurementSetting) -> Vec<C64> {
        self.unitary(s).column(0).iter().copied().collect()
    }

    pub fn no_click_full(&self, s: &MeasurementSetting) -> ModeOperator {
        let v = self.unitary(s);
        let w = self.dark_weights(s.detector_efficiency);
        let d = w.len();
        let m = CMatrix::from_fn(d, d, |j, k| {
            (0..d).map(|n| v[(j, n)] * v[(k, n)].conj() * w[n]).sum()
        });
        ModeOperator::new(m, ModeSpace::single("mode", self.dim())).expect("square")
    }

    pub fn click_full(&self, s: &MeasurementSetting) -> ModeOperator {
        let nc = self.no_click_full(s);
        let d = nc.dim();
        ModeOperator::new(CMatrix::identity(d, d) - nc.matrix, nc.space).expect("square")
    }

    /// Qubit block of the no-click element, from rows 0 and 1 of `V`.
    pub fn no_click_qubit(&self, s: &MeasurementSetting) -> Qubit2 {
        let r0 =
            self.gaussian
                .squeeze_displace_row(0, s.xi_amp, s.xi_phase, s.alpha_amp, s.alpha_phase);
        let r1 =
            self.gaussian
                .squeeze_displace_row(1, s.xi_amp, s.xi_phase, s.alpha_amp, s.alpha_phase);
        let w = self.dark_weights(s.detector_efficiency);
        let dot = |a: &[C64], b: &[C64]| -> C64 {
            a.iter()
                .zip(b)
                .zip(&w)
                .filter(|(_, &wn)| wn != 0.0)
                .map(|((x, y), &wn)| x * y.conj() * wn)
                .sum()
        };
        let n00 = dot(&r0, &r0);
        let n01 = dot(&r0, &r1);
        let n11 = dot(&r1, &r1);
        Qubit2::new(
            C64::new(n00.re, 0.0),
            n01,
            n01.conj(),
            C64::new(n11.re, 0.0),
        )
    }

    pub fn qubit_povm(&self, s: &MeasurementSetting) -> QubitPovm {
        QubitPovm::from_no_click(self.no_click_qubit(s))
    }
}

/// Heisenberg-picture pure loss, `X -> sum_k K_k^dagger X K_k`.
pub fn apply_local_loss_to_povm(op: &ModeOperator, eta: f64) -> Result<ModeOperator> {
    check_range("eta", eta, 0.0, 1.0, "[0, 1]")?;
    let d = op.dim();
    let mut out = CMatrix::zeros(d, d);
    for k in loss_kraus(d, eta) {
        out += k.adjoint() * &op.matrix * &k;
    }
    ModeOperator::new(out, op.space.clone())
}

/// Weight of the ideal projector along `direction`,
/// `|Tr((Pi_{+1} - Pi_{-1}) sigma_n)| / 2`. Equals 1 for a perfect Pauli
/// measurement along `direction` and lies in `[0, 1]` for any binary POVM.
pub fn projective_part(povm: &QubitPovm, direction: BlochDirection) -> f64 {
    0.5 * (povm.observable() * direction.sigma()).trace().re.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuOptimum {
    pub mu: f64,
    pub setting: MeasurementSetting,
}

/// Search options shared by the measurement-level optimizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuSearch {
    pub caps: MeasurementCaps,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for MuSearch {
    fn default() -> Self {
        Self {
            caps: MeasurementCaps::default(),
            n_starts: 16,
            seed: 1,
        }
    }
}

/// Maximizes the projective part along `direction` over squeezing and
/// displacement, for a detector of efficiency `detector_efficiency` placed
/// after a pure-loss channel of transmissivity `local_efficiency`.
pub fn optimize_mu(
    kernel: &MeasurementKernel,
    direction: BlochDirection,
    detector_efficiency: f64,
    local_efficiency: f64,
    search: &MuSearch,
) -> Result<MuOptimum> {
    check_range(
        "detector_efficiency",
        detector_efficiency,
        0.0,
        1.0,
        "[0, 1]",
    )?;
    check_range("local_efficiency", local_efficiency, 0.0, 1.0, "[0, 1]")?;
    let (lo, hi) = search.caps.bounds();
    let spec = SearchSpec::new(lo.to_vec(), hi.to_vec())
        .with_starts(search.n_starts)
        .with_seed(search.seed)
        .with_initial(vec![vec![0.0, 0.0, 0.0, 0.0]]);
    let mu_of = |p: &[f64]| {
        let s = MeasurementSetting::from_params(p, detector_efficiency);
        projective_part(
            &kernel.qubit_povm(&s).with_local_loss(local_efficiency),
            direction,
        )
    };
    let res = maximize(mu_of, &spec)?;
    Ok(MuOptimum {
        mu: res.value,
        setting: MeasurementSetting::from_params(&res.point, detector_efficiency),
    })
}

/// Closed-form amplitudes and qubit blocks for perfect detectors. These are
/// independent checks on the numerical construction above.
pub mod analytic {
    use super::*;

    /// Physicists' Hermite polynomial `H_k(z)` for complex argument.
    pub fn hermite(k: usize, z: C64) -> C64 {
        let mut h0 = C64::new(1.0, 0.0);
        if k == 0 {
            return h0;
        }
        let mut h1 = z * 2.0;
        for n in 1..k {
            let h2 = z * h1 * 2.0 - h0 * (2.0 * n as f64);
            h0 = h1;
            h1 = h2;
        }
        h1
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// `<k| S(xi) D(alpha) |0>` from the displaced-squeezed-vacuum expansion:
    /// `S(xi) D(alpha) = D(beta) S(xi)` with
    /// `beta = alpha cosh r - alpha^* e^{i phi} sinh r`, and the Hermite
    /// argument `(beta cosh r + beta^* e^{i phi} sinh r) / sqrt(e^{i phi} sinh 2r)`
    /// reduces to `alpha / sqrt(e^{i phi} sinh 2r)`.
    pub fn amplitude(k: usize, s: &MeasurementSetting) -> C64 {
        let r = s.xi_amp;
        let phi = s.xi_phase;
        let alpha = C64::from_polar(s.alpha_amp, s.alpha_phase);
        let e_phi = C64::from_polar(1.0, phi);
        let beta = alpha * r.cosh() - alpha.conj() * e_phi * r.sinh();
        let pre = (-0.5 * beta.norm_sqr() - 0.5 * beta.conj() * beta.conj() * e_phi * r.tanh())
            .exp()
            / (factorial(k) * r.cosh()).sqrt();
        if r == 0.0 {
            // coherent state limit
            return pre * alpha.powu(k as u32);
        }
        let scale = (e_phi * 0.5 * r.tanh()).sqrt().powu(k as u32);
        let arg = alpha / (e_phi * (2.0 * r).sinh()).sqrt();
        pre * scale * hermite(k, arg)
    }

    /// The 2x2 rank-one vacuum-projector block in the `sech` form:
    /// `theta_v * [[sech r, |alpha| e^{-i theta} sech^2 r], [c.c., |alpha|^2 sech^3 r]]`
    /// with `theta_v = exp(|alpha|^2 (cos(phi - 2 theta) tanh r - 1))`.
    pub fn sech_form_block(s: &MeasurementSetting) -> Qubit2 {
        let r = s.xi_amp;
        let sech = 1.0 / r.cosh();
        let a = s.alpha_amp;
        let th = s.alpha_phase;
        let tv = (a * a * ((s.xi_phase - 2.0 * th).cos() * r.tanh() - 1.0)).exp();
        Qubit2::new(
            C64::new(tv * sech, 0.0),
            C64::from_polar(a * tv * sech * sech, -th),
            C64::from_polar(a * tv * sech * sech, th),
            C64::new(a * a * tv * sech.powi(3), 0.0),
        )
    }

    /// `max |numerical - sech form|` over the qubit block, for reporting.
    pub fn sech_form_discrepancy(kernel: &MeasurementKernel, s: &MeasurementSetting) -> f64 {
        let ideal = MeasurementSetting {
            detector_efficiency: 1.0,
            ..*s
        };
        let numeric = kernel.no_click_qubit(&ideal);
        let diff = numeric - sech_form_block(&ideal);
        max_abs(&CMatrix::from_iterator(2, 2, diff.iter().copied()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kernel() -> MeasurementKernel {
        MeasurementKernel::default()
    }

    fn setting(xa: f64, xp: f64, aa: f64, ap: f64, eta: f64) -> MeasurementSetting {
        MeasurementSetting {
            xi_amp: xa,
            xi_phase: xp,
            alpha_amp: aa,
            alpha_phase: ap,
            detector_efficiency: eta,
        }
    }

    #[test]
    fn cap_in_natural_units() {
        assert_abs_diff_eq!(SQUEEZE_CAP, 0.469_727_4, epsilon = 1e-6);
        assert_abs_diff_eq!(squeeze_to_db(SQUEEZE_CAP), 4.08, epsilon = 1e-12);
    }

    #[test]
    fn bare_vacuum_projector() {
        let k = kernel();
        let nc = k
            .no_click_full(&MeasurementSetting::photon_counting(1.0))
            .matrix;
        let d = nc.nrows();
        let mut expect = CMatrix::zeros(d, d);
        expect[(0, 0)] = C64::new(1.0, 0.0);
        assert!(max_abs(&(nc - expect)) < 1e-14);
    }

    #[test]
    fn binomial_detector_model() {
        let k = kernel();
        let click = k
            .click_full(&MeasurementSetting::photon_counting(0.95))
            .matrix;
        for n in 0..=DEFAULT_CUTOFF {
            assert_abs_diff_eq!(
                click[(n, n)].re,
                1.0 - 0.05f64.powi(n as i32),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn ideal_detector_element_is_rank_one() {
        let k = kernel();
        let nc = k.no_click_full(&setting(0.3, 1.1, 0.6, -0.4, 1.0)).matrix;
        let eig = ((&nc + nc.adjoint()) * C64::new(0.5, 0.0)).symmetric_eigenvalues();
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-10);
        assert!(v[1].abs() < 1e-10);
    }

    #[test]
    fn photon_counting_qubit_povm() {
        let k = kernel();
        let p = k.qubit_povm(&MeasurementSetting::photon_counting(1.0));
        assert_abs_diff_eq!(p.no_click[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.click[(1, 1)].re, 1.0, epsilon = 1e-14);
        assert!(p.click[(0, 1)].norm() < 1e-14);
        assert_abs_diff_eq!(projective_part(&p, BlochDirection::Z), 1.0, epsilon = 1e-14);
        assert!(projective_part(&p, BlochDirection::X) < 1e-14);
    }

    #[test]
    fn fast_qubit_block_matches_full_operator() {
        let k = kernel();
        for s in [
            setting(0.47, 0.3, 0.9, 2.0, 1.0),
            setting(0.2, -1.0, 0.4, 0.7, 0.95),
            setting(0.0, 0.0, 0.8, 1.5, 0.8),
        ] {
            let full = k.no_click_full(&s).matrix;
            let q = k.no_click_qubit(&s);
            for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                assert!((full[(i, j)] - q[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn amplitudes_match_hermite_expansion() {
        // truncating D(alpha) at 20 photons perturbs low amplitudes at ~1e-8
        let k = MeasurementKernel::new(FockDim::new(40).unwrap());
        for s in [
            setting(0.47, 0.9, 0.9, -0.6, 1.0),
            setting(0.1, 2.5, 0.3, 1.2, 1.0),
            setting(0.0, 0.0, 0.7, 0.4, 1.0),
        ] {
            let num = k.amplitudes(&s);
            for n in 0..6 {
                let exact = analytic::amplitude(n, &s);
                assert!(
                    (num[n] - exact).norm() < 1e-9,
                    "n={n}: {} vs {}",
                    num[n],
                    exact
                );
            }
        }
    }

    #[test]
    fn sech_form_diagonal_ratio() {
        // The sech-form block gets |c_1|^2 / |c_0|^2 = |alpha|^2 sech^2 r right;
        // its overall weight and phases are not relied upon.
        let k = kernel();
        let s = setting(0.4, 0.8, 0.7, 0.3, 1.0);
        let num = k.no_click_qubit(&s);
        let sech = analytic::sech_form_block(&s);
        let ratio = |m: &Qubit2| m[(1, 1)].re / m[(0, 0)].re;
        assert_abs_diff_eq!(ratio(&num), ratio(&sech), epsilon = 1e-10);
    }

    #[test]
    fn loss_adjoint_of_vacuum_projector() {
        let k = kernel();
        let vac = k.no_click_full(&MeasurementSetting::photon_counting(1.0));
        let out = apply_local_loss_to_povm(&vac, 0.7).unwrap().matrix;
        for n in 0..=DEFAULT_CUTOFF {
            assert_abs_diff_eq!(out[(n, n)].re, 0.3f64.powi(n as i32), epsilon = 1e-14);
        }
        assert_eq!(
            apply_local_loss_to_povm(&vac, 1.0).unwrap().matrix,
            vac.matrix
        );
    }

    #[test]
    fn loss_duality_on_two_photon_states() {
        use crate::fock::{loss_channel, CVector, DensityOperator};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = kernel();
        let d = FockDim::new(DEFAULT_CUTOFF).unwrap();
        let pi = k.click_full(&setting(0.3, 0.5, 0.6, 1.0, 0.9));
        for _ in 0..5 {
            let mut ket = CVector::zeros(d.size());
            for n in 0..3 {
                ket[n] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
            let ket = &ket / C64::new(ket.norm(), 0.0);
            let rho = DensityOperator::pure(&ket, ModeSpace::single("mode", d)).unwrap();
            let eta = rng.gen::<f64>();
            let schrodinger = loss_channel(&rho, "mode", eta)
                .unwrap()
                .expectation(&pi.matrix);
            let heisenberg = rho.expectation(&apply_local_loss_to_povm(&pi, eta).unwrap().matrix);
            assert!((schrodinger - heisenberg).norm() < 1e-10);
            // qubit-block shortcut agrees for qubit-supported states
            let q = k
                .qubit_povm(&setting(0.3, 0.5, 0.6, 1.0, 0.9))
                .with_local_loss(eta);
            let full =
                apply_local_loss_to_povm(&k.no_click_full(&setting(0.3, 0.5, 0.6, 1.0, 0.9)), eta)
                    .unwrap()
                    .matrix;
            for (i, j) in [(0, 0), (0, 1), (1, 1)] {
                assert!((q.no_click[(i, j)] - full[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn squeezing_beats_plain_displacement_along_x() {
        let k = kernel();
        let search = MuSearch::default();
        let with = optimize_mu(&k, BlochDirection::X, 1.0, 1.0, &search).unwrap();
        let without = optimize_mu(
            &k,
            BlochDirection::X,
            1.0,
            1.0,
            &MuSearch {
                caps: search.caps.without_squeezing(),
                ..search
            },
        )
        .unwrap();
        assert!(without.mu > 0.5, "displacement alone gives {}", without.mu);
        assert!(with.mu > without.mu + 1e-3, "{} vs {}", with.mu, without.mu);
        assert!(with.setting.xi_amp > 0.0);
    }

    #[test]
    fn z_direction_optimum_is_photon_counting() {
        let k = kernel();
        let res = optimize_mu(&k, BlochDirection::Z, 1.0, 1.0, &MuSearch::default()).unwrap();
        assert_abs_diff_eq!(res.mu, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn lossy_equatorial_projection_exceeds_z() {
        let k = kernel();
        let s = MuSearch::default();
        let z = optimize_mu(&k, BlochDirection::Z, 1.0, 0.8, &s).unwrap().mu;
        let x = optimize_mu(&k, BlochDirection::X, 1.0, 0.8, &s).unwrap().mu;
        let y = optimize_mu(&k, BlochDirection::Y, 1.0, 0.8, &s).unwrap().mu;
        assert!(x > z && y > z, "x {x} y {y} z {z}");
    }

    #[test]
    fn mu_monotone_in_detector_efficiency() {
        let k = kernel();
        let s = MuSearch {
            n_starts: 8,
            ..MuSearch::default()
        };
        for dir in [
            BlochDirection::Z,
            BlochDirection::X,
            BlochDirection::new(0.7, 0.3),
            BlochDirection::new(2.2, 1.9),
        ] {
            let hi = optimize_mu(&k, dir, 1.0, 1.0, &s).unwrap().mu;
            let lo = optimize_mu(&k, dir, 0.95, 1.0, &s).unwrap().mu;
            assert!(lo <= hi + 1e-9, "{lo} > {hi}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn povm_valid_within_caps(
            xa in 0.0..SQUEEZE_CAP, xp in 0.0..(2.0 * PI),
            aa in 0.0..DISPLACEMENT_CAP, ap in 0.0..(2.0 * PI),
            eta in 0.0..=1.0f64, loss in 0.0..=1.0f64,
            theta in 0.0..PI, phi in 0.0..(2.0 * PI),
        ) {
            let k = kernel();
            let p = k.qubit_povm(&setting(xa, xp, aa, ap, eta)).with_local_loss(loss);
            let (floor, completeness) = p.check();
            prop_assert!(floor >= -1e-10);
            prop_assert!(completeness <= 1e-10);
            let mu = projective_part(&p, BlochDirection::new(theta, phi));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&mu));
        }
    }
}
