//! The heralding setup: single-photon sources, unbalanced beamsplitters,
//! lossy links to a central station, and the one-click herald.

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::fock::{
    beamsplitter, loss_channel, partial_trace, CMatrix, DensityOperator, FockDim, ModeSpace, C64,
};

pub type TwoQubit = Matrix4<C64>;

/// Physical scenario. Field names in serialized form follow the usual
/// symbols (`T`, `L`, `eta_D`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupParams {
    /// Transmittance of the source-side unbalanced beamsplitters.
    #[serde(rename = "T")]
    pub transmittance: f64,
    /// Alice-Bob distance in km; the station sits at the midpoint.
    #[serde(rename = "L")]
    pub distance_km: f64,
    /// Fiber attenuation in dB/km.
    #[serde(rename = "alpha_att")]
    pub attenuation: f64,
    /// Efficiency of the station's detectors.
    #[serde(rename = "eta_D")]
    pub herald_efficiency: f64,
    /// Transmission from the source to the local measurement.
    #[serde(rename = "eta_tilde_L")]
    pub local_efficiency: f64,
    /// Efficiency of the local detectors.
    #[serde(rename = "eta_tilde_D")]
    pub local_detector_efficiency: f64,
    /// Source repetition rate in Hz.
    #[serde(rename = "nu")]
    pub source_rate: f64,
}

impl Default for SetupParams {
    fn default() -> Self {
        Self {
            transmittance: 0.005,
            distance_km: 0.0,
            attenuation: 0.2,
            herald_efficiency: 1.0,
            local_efficiency: 1.0,
            local_detector_efficiency: 0.95,
            source_rate: 5e6,
        }
    }
}

impl SetupParams {
    pub fn validate(&self) -> Result<()> {
        check_range("T", self.transmittance, 0.0, 1.0, "[0, 1]")?;
        if self.distance_km < 0.0 || !self.distance_km.is_finite() {
            return Err(Error::OutOfRange {
                name: "L",
                value: self.distance_km,
                range: "[0, inf)",
            });
        }
        if self.attenuation < 0.0 || !self.attenuation.is_finite() {
            return Err(Error::OutOfRange {
                name: "alpha_att",
                value: self.attenuation,
                range: "[0, inf)",
            });
        }
        check_range("eta_D", self.herald_efficiency, 0.0, 1.0, "[0, 1]")?;
        check_range("eta_tilde_L", self.local_efficiency, 0.0, 1.0, "[0, 1]")?;
        check_range(
            "eta_tilde_D",
            self.local_detector_efficiency,
            0.0,
            1.0,
            "[0, 1]",
        )?;
        if !(self.source_rate > 0.0 && self.source_rate.is_finite()) {
            return Err(Error::OutOfRange {
                name: "nu",
                value: self.source_rate,
                range: "(0, inf)",
            });
        }
        Ok(())
    }

    /// Overall local efficiency `eta_L = eta_tilde_L * eta_tilde_D`.
    pub fn overall_local_efficiency(&self) -> f64 {
        self.local_efficiency * self.local_detector_efficiency
    }

    /// Sets `eta_tilde_L` so that the overall local efficiency is `eta_l`.
    pub fn with_overall_local_efficiency(self, eta_l: f64) -> Self {
        Self {
            local_efficiency: eta_l / self.local_detector_efficiency,
            ..self
        }
    }

    /// Per-arm herald efficiency `eta_H = eta_D sqrt(eta_C)`.
    pub fn herald_arm_efficiency(&self) -> Result<f64> {
        Ok(self.herald_efficiency * channel_efficiency(self.distance_km, self.attenuation)?.sqrt())
    }
}

/// Fiber transmission over `distance_km` at `attenuation` dB/km.
pub fn channel_efficiency(distance_km: f64, attenuation: f64) -> Result<f64> {
    if distance_km < 0.0 || distance_km.is_nan() {
        return Err(Error::OutOfRange {
            name: "L",
            value: distance_km,
            range: "[0, inf)",
        });
    }
    Ok(10f64.powf(-attenuation * distance_km / 10.0))
}

/// Herald probability to first order in `T`: `T eta_D sqrt(eta_C)`.
pub fn heralding_probability(params: &SetupParams) -> Result<f64> {
    Ok(params.transmittance * params.herald_arm_efficiency()?)
}

/// Herald probability of schemes needing both photons at the station,
/// `T^2 eta_D^2 eta_C`. Only used as a rate comparator.
pub fn heralding_probability_twophoton(params: &SetupParams) -> Result<f64> {
    let h = params.herald_arm_efficiency()?;
    Ok(params.transmittance * params.transmittance * h * h)
}

/// Normalized post-herald state of Alice's and Bob's modes (labels `A`, `B`,
/// photon numbers 0 and 1) and the probability of the herald.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedState {
    pub state: DensityOperator,
    pub herald_prob: f64,
}

impl HeraldedState {
    fn qubit_space() -> ModeSpace {
        let q = FockDim::new(1).expect("nonzero cutoff");
        ModeSpace::new([("A", q), ("B", q)])
    }

    /// Wraps a 4x4 density matrix in the basis `|00>, |01>, |10>, |11>`
    /// (Alice's occupation first).
    pub fn from_qubits(rho: TwoQubit, herald_prob: f64) -> Result<Self> {
        let m = CMatrix::from_iterator(4, 4, rho.iter().copied());
        let state = DensityOperator::from_matrix(m, Self::qubit_space())?;
        Ok(Self { state, herald_prob })
    }

    /// `(|10> + |01>) / sqrt 2`, heralded with certainty.
    pub fn ideal() -> Self {
        let h = C64::new(0.5, 0.0);
        let mut rho = TwoQubit::zeros();
        for i in [1, 2] {
            for j in [1, 2] {
                rho[(i, j)] = h;
            }
        }
        Self::from_qubits(rho, 1.0).expect("valid state")
    }

    pub fn qubits(&self) -> TwoQubit {
        TwoQubit::from_iterator(self.state.matrix().iter().copied())
    }

    /// Pure local loss `eta` on both of Alice's and Bob's modes.
    pub fn with_local_loss(&self, eta: f64) -> Result<Self> {
        let a = loss_channel(&self.state, "A", eta)?;
        Ok(Self {
            state: loss_channel(&a, "B", eta)?,
            herald_prob: self.herald_prob,
        })
    }
}

/// Closed-form heralded state to leading order in `T`, after local loss:
/// entangled block weight `eta_tilde_L (1 - T)`, vacuum weight
/// `1 - eta_tilde_L + T eta_tilde_L`.
pub fn heralded_state_analytic(params: &SetupParams) -> Result<HeraldedState> {
    params.validate()?;
    let t = params.transmittance;
    let el = params.local_efficiency;
    let block = 0.5 * el * (1.0 - t);
    let vac = 1.0 - el + t * el;
    let mut rho = TwoQubit::zeros();
    rho[(0, 0)] = C64::new(vac, 0.0);
    for i in [1, 2] {
        for j in [1, 2] {
            rho[(i, j)] = C64::new(block, 0.0);
        }
    }
    let norm = vac + 2.0 * block;
    HeraldedState::from_qubits(rho / C64::new(norm, 0.0), heralding_probability(params)?)
}

/// Photon cutoff for the modes of the heralding chain.
pub const CHAIN_CUTOFF: usize = 3;

/// Full simulation of the heralding chain with no expansion in `T`.
///
/// Modes `A`, `B` hold the reflected photons and `C1`, `C2` the transmitted
/// ones. Both `C` arms see loss `eta_H`, then a balanced beamsplitter, then
/// the herald operator `sum_n (|n0><n0| + |0n><0n|) / (2n)`. The phase flip
/// between the two single-click outcomes is undone by applying `(-1)^{n_A}`
/// whenever the first output port fires, so both outcomes herald the same
/// state. Local loss `eta_tilde_L` is applied last.
pub fn heralded_state_oracle(params: &SetupParams) -> Result<HeraldedState> {
    params.validate()?;
    let eta_h = params.herald_arm_efficiency()?;
    let dim = FockDim::new(CHAIN_CUTOFF)?;
    let space = ModeSpace::new([("A", dim), ("B", dim), ("C1", dim), ("C2", dim)]);
    let mut rho = DensityOperator::fock(space, &[1, 1, 0, 0]);
    rho = beamsplitter(&rho, "A", "C1", params.transmittance)?;
    rho = beamsplitter(&rho, "B", "C2", params.transmittance)?;
    rho = loss_channel(&rho, "C1", eta_h)?;
    rho = loss_channel(&rho, "C2", eta_h)?;
    rho = beamsplitter(&rho, "C1", "C2", 0.5)?;

    let space = rho.space().clone();
    let d = dim.size();
    let parity = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |n, _| {
        C64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
    }));
    let mut heralded: Option<DensityOperator> = None;
    for n in 1..d {
        for (port, occ) in [(0, [n, 0]), (1, [0, n])] {
            let keep: Vec<bool> = (0..space.total_dim())
                .map(|i| {
                    let dg = space.digits(i);
                    dg[2] == occ[0] && dg[3] == occ[1]
                })
                .collect();
            let m = CMatrix::from_fn(space.total_dim(), space.total_dim(), |i, j| {
                if keep[i] && keep[j] {
                    rho.matrix()[(i, j)]
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let projected = DensityOperator::from_matrix(m, space.clone())?;
            let mut ab = partial_trace(&projected, &["A", "B"])?.scaled(1.0 / (2.0 * n as f64));
            if port == 0 {
                ab = ab.conjugate_by(&["A"], &parity)?;
            }
            heralded = Some(match heralded {
                None => ab,
                Some(acc) => acc.add(&ab)?,
            });
        }
    }
    let heralded = heralded.expect("at least one outcome");
    let prob = heralded.trace();
    if prob <= 0.0 {
        // nothing reaches the station; report vacuum with zero probability
        let mut vac = TwoQubit::zeros();
        vac[(0, 0)] = C64::new(1.0, 0.0);
        return HeraldedState::from_qubits(vac, 0.0);
    }
    let mut ab = heralded.normalized();
    ab = loss_channel(&ab, "A", params.local_efficiency)?;
    ab = loss_channel(&ab, "B", params.local_efficiency)?;
    let q = FockDim::new(1)?;
    let state = ab.resized(&[q, q])?;
    Ok(HeraldedState {
        state,
        herald_prob: prob,
    })
}

/// Population of `rho` outside photon numbers `{0, 1}` per mode.
pub fn leakage_outside_qubits(rho: &DensityOperator) -> f64 {
    let space = rho.space();
    (0..space.total_dim())
        .filter(|&i| space.digits(i).iter().any(|&n| n > 1))
        .map(|i| rho.matrix()[(i, i)].re)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(t: f64, eta_d: f64, l: f64, el: f64) -> SetupParams {
        SetupParams {
            transmittance: t,
            distance_km: l,
            herald_efficiency: eta_d,
            local_efficiency: el,
            ..SetupParams::default()
        }
    }

    #[test]
    fn channel_efficiency_values() {
        assert_eq!(channel_efficiency(0.0, 0.2).unwrap(), 1.0);
        assert_abs_diff_eq!(channel_efficiency(50.0, 0.2).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(
            channel_efficiency(100.0, 0.2).unwrap(),
            0.01,
            epsilon = 1e-16
        );
        assert!(channel_efficiency(-1.0, 0.2).is_err());
    }

    #[test]
    fn herald_probability_values() {
        let p = |t, e, l| heralding_probability(&params(t, e, l, 1.0)).unwrap();
        assert_abs_diff_eq!(p(0.005, 1.0, 0.0), 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(p(0.005, 1.0, 100.0), 0.0005, epsilon = 1e-15);
        assert_abs_diff_eq!(p(0.005, 0.8, 0.0), 0.004, epsilon = 1e-15);
        let q = |t, e, l| heralding_probability_twophoton(&params(t, e, l, 1.0)).unwrap();
        assert_abs_diff_eq!(q(0.005, 1.0, 0.0), 2.5e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(
            q(0.005, 1.0, 100.0) / q(0.005, 1.0, 0.0),
            0.01,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            q(0.005, 0.8, 0.0) / q(0.005, 1.0, 0.0),
            0.64,
            epsilon = 1e-14
        );
    }

    #[test]
    fn herald_ratio_between_schemes() {
        for (t, e, l) in [(0.005, 1.0, 0.0), (0.02, 0.8, 120.0), (0.001, 0.5, 300.0)] {
            let s = params(t, e, l, 1.0);
            let ratio =
                heralding_probability(&s).unwrap() / heralding_probability_twophoton(&s).unwrap();
            let expect = 1.0 / (t * e * channel_efficiency(l, 0.2).unwrap().sqrt());
            assert!((ratio / expect - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn analytic_state_limits() {
        let ideal = heralded_state_analytic(&params(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(
            ideal
                .state
                .trace_distance(&HeraldedState::ideal().state)
                .unwrap()
                < 1e-15
        );
        let dark = heralded_state_analytic(&params(0.005, 1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(dark.state.population(&[0, 0]), 1.0, epsilon = 1e-15);
        let s = heralded_state_analytic(&params(0.005, 1.0, 0.0, 0.9)).unwrap();
        assert_abs_diff_eq!(s.state.population(&[0, 0]), 0.1045, epsilon = 1e-14);
        assert_abs_diff_eq!(s.state.population(&[0, 1]), 0.44775, epsilon = 1e-14);
        assert_abs_diff_eq!(
            s.state.element(&[0, 1], &[1, 0]).re,
            0.44775,
            epsilon = 1e-14
        );
    }

    #[test]
    fn analytic_state_ignores_pre_herald_losses() {
        let a = heralded_state_analytic(&params(0.005, 1.0, 0.0, 0.9)).unwrap();
        let b = heralded_state_analytic(&params(0.005, 0.6, 250.0, 0.9)).unwrap();
        assert_eq!(a.state, b.state);
        assert!(b.herald_prob < a.herald_prob);
    }

    #[test]
    fn oracle_is_a_two_qubit_state() {
        let s = params(0.05, 0.9, 10.0, 0.8);
        let o = heralded_state_oracle(&s).unwrap();
        o.state.validate().unwrap();
        assert_abs_diff_eq!(o.state.trace(), 1.0, epsilon = 1e-12);
        assert!((0.0..=1.0).contains(&o.herald_prob));
    }

    #[test]
    fn oracle_nothing_arrives() {
        let o = heralded_state_oracle(&params(0.005, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(o.herald_prob, 0.0);
    }

    #[test]
    fn oracle_herald_probability_first_order() {
        // Exact herald probability for photons in both arms: single-photon
        // branches give 2 T (1 - T) eta_H / 2, the branch with both photons
        // transmitted gives T^2 [2 eta_H (1 - eta_H) / 2 + eta_H^2 / 4].
        for (t, eh) in [(0.005, 1.0), (0.01, 0.5), (0.2, 0.8), (0.5, 0.3)] {
            let s = params(t, eh, 0.0, 1.0);
            let o = heralded_state_oracle(&s).unwrap();
            let exact = t * (1.0 - t) * eh + t * t * (eh * (1.0 - eh) + eh * eh / 4.0);
            assert_abs_diff_eq!(o.herald_prob, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn oracle_vacuum_weight_closed_form() {
        // Every herald from the branch with both photons transmitted leaves
        // Alice and Bob empty.
        for (t, eh) in [(0.005, 1.0), (0.01, 0.5), (0.2, 0.8)] {
            let o = heralded_state_oracle(&params(t, eh, 0.0, 1.0)).unwrap();
            let both = t * t * (eh * (1.0 - eh) + eh * eh / 4.0);
            let single = t * (1.0 - t) * eh;
            assert_abs_diff_eq!(
                o.state.population(&[0, 0]),
                both / (single + both),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn oracle_coherence_is_positive() {
        let o = heralded_state_oracle(&params(0.005, 0.9, 0.0, 1.0)).unwrap();
        let c = o.state.element(&[0, 1], &[1, 0]);
        assert!(c.re > 0.49 && c.im.abs() < 1e-14);
    }
}
