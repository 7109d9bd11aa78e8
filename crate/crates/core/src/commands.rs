//! The computations behind each command-line subcommand, returning tables
//! and serializable reports so that they can be tested without the binary.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, ScanSpec, ScanVariable};
use crate::error::{Error, Result};
use crate::finitekey::{
    finite_rate_per_second, optimize_finite, EpsilonSet, FiniteSearch, FiniteSizeParams, KeyLength,
    KeyStatistics, COMPLETENESS_TARGET, KEY_OVERHEAD_BITS, SYNDROME_SLACK,
};
use crate::measurements::{DEFAULT_CUTOFF, DISPLACEMENT_CAP, SQUEEZE_CAP};
use crate::optimizer::bisect;
use crate::photonics::{
    heralding_probability, heralding_probability_twophoton, HeraldedState, SetupParams,
    CHAIN_CUTOFF,
};
use crate::protocol::{
    optimize_chsh, optimize_setup, BellModel, KeyRateReport, ProtocolSearch, ProtocolSettings,
};

/// Bisection tolerance on `eta_L` for key thresholds.
pub const THRESHOLD_TOL: f64 = 0.002;
/// Lower end of the default threshold bracket.
pub const THRESHOLD_LOW: f64 = 0.75;
/// Rate defining the distance cutoff, bits/s.
pub const CUTOFF_RATE: f64 = 0.1;

/// Formats with 12 significant digits, plain `.` decimals and no locale.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let s = format!("{:.*}", (11 - exp).max(0) as usize, x);
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        // rounding can push the value to the next decade
        if s.trim_start_matches('-')
            .replace('.', "")
            .trim_start_matches('0')
            .len()
            > 12
        {
            return format!("{x:.11e}");
        }
        s
    } else {
        let s = format!("{x:.11e}");
        let (mantissa, e) = s.split_once('e').expect("exponent");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_sig(*x),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }
}

/// Frozen constants, echoed in every report.
#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub squeeze_cap: f64,
    pub displacement_cap: f64,
    pub measurement_cutoff: usize,
    pub herald_chain_cutoff: usize,
    pub key_overhead_bits: f64,
    pub syndrome_slack_per_sqrt_n: f64,
    pub completeness_target: f64,
    pub threshold_tolerance: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            squeeze_cap: SQUEEZE_CAP,
            displacement_cap: DISPLACEMENT_CAP,
            measurement_cutoff: DEFAULT_CUTOFF,
            herald_chain_cutoff: CHAIN_CUTOFF,
            key_overhead_bits: KEY_OVERHEAD_BITS,
            syndrome_slack_per_sqrt_n: SYNDROME_SLACK,
            completeness_target: COMPLETENESS_TARGET,
            threshold_tolerance: THRESHOLD_TOL,
        }
    }
}

const ROLES: [&str; 5] = ["a1", "a2", "b1", "b2", "b3"];

fn settings_header() -> Vec<String> {
    ROLES
        .iter()
        .flat_map(|r| {
            ["xi_amp", "xi_phase", "alpha_amp", "alpha_phase"]
                .into_iter()
                .map(move |f| format!("{f}_{r}"))
        })
        .collect()
}

fn settings_cells(s: &ProtocolSettings) -> Vec<Cell> {
    s.params().into_iter().map(Cell::Num).collect()
}

/// The state plotted against `eta_tilde_L` in the CHSH comparison: the ideal
/// heralded state with local loss on both sides.
pub fn lossy_ideal_state(local_efficiency: f64) -> Result<HeraldedState> {
    HeraldedState::ideal().with_local_loss(local_efficiency)
}

/// Optimized CHSH score at one local efficiency.
pub fn chsh_at(
    local_efficiency: f64,
    detector_efficiency: f64,
    search: &ProtocolSearch,
) -> Result<(f64, ProtocolSettings)> {
    let model = BellModel::new(&lossy_ideal_state(local_efficiency)?);
    let o = optimize_chsh(&model, detector_efficiency, search)?;
    Ok((o.chsh, o.settings))
}

fn local_efficiency_grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    let scan = cfg
        .scan
        .clone()
        .unwrap_or_else(|| ScanSpec::range(ScanVariable::LocalEfficiency, 0.75, 1.0, 26));
    let eta_d = cfg.scenario.local_detector_efficiency;
    let grid = match scan.variable {
        ScanVariable::LocalEfficiency => scan.grid()?,
        ScanVariable::OverallLocalEfficiency => {
            scan.grid()?.into_iter().map(|e| e / eta_d).collect()
        }
        other => {
            return Err(Error::Config(format!(
                "chsh-scan cannot scan `{other}`; use eta_tilde_L or eta_L"
            )))
        }
    };
    if let Some(x) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Config(format!("eta_tilde_L = {x} outside [0, 1]")));
    }
    Ok(grid)
}

/// Optimized CHSH score over a grid of `eta_tilde_L`.
pub fn chsh_scan(cfg: &RunConfig) -> Result<Table> {
    let grid = local_efficiency_grid(cfg)?;
    let eta_d = cfg.scenario.local_detector_efficiency;
    let rows = grid
        .par_iter()
        .map(|&el| {
            let (s, settings) = chsh_at(el, eta_d, &cfg.search)?;
            let mut row = vec![Cell::Num(el), Cell::Num(s)];
            row.extend(settings_cells(&settings));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["eta_tilde_L".to_string(), "S".to_string()];
    header.extend(settings_header());
    Ok(Table { header, rows })
}

/// Linear interpolation of the first upward crossing of `level`.
pub fn crossing(xs: &[f64], ys: &[f64], level: f64) -> Option<f64> {
    xs.windows(2).zip(ys.windows(2)).find_map(|(x, y)| {
        if y[0] < level && y[1] >= level {
            Some(x[0] + (level - y[0]) * (x[1] - x[0]) / (y[1] - y[0]))
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BisectionStep {
    pub eta_l: f64,
    pub normalized_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    #[serde(rename = "eta_L_threshold")]
    pub eta_l_threshold: f64,
    #[serde(rename = "S_at_threshold")]
    pub s_at_threshold: f64,
    pub settings: ProtocolSettings,
    pub bracket: [f64; 2],
    /// Every evaluated point, in evaluation order.
    pub steps: Vec<BisectionStep>,
}

/// Overall local efficiency where the optimized asymptotic rate reaches 0,
/// by bisection on `[lo, hi]`.
pub fn key_threshold(
    scenario: &SetupParams,
    search: &ProtocolSearch,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<ThresholdReport> {
    let mut steps = Vec::new();
    let mut failure = None;
    let (eta, _) = bisect(
        |e| match optimize_setup(&scenario.with_overall_local_efficiency(e), search) {
            Ok(r) => {
                steps.push(BisectionStep {
                    eta_l: e,
                    normalized_rate: r.normalized_rate,
                });
                r.normalized_rate
            }
            Err(err) => {
                failure.get_or_insert(err);
                f64::NAN
            }
        },
        lo,
        hi,
        tol,
    )?;
    if let Some(err) = failure {
        return Err(err);
    }
    let at = optimize_setup(&scenario.with_overall_local_efficiency(eta), search)?;
    Ok(ThresholdReport {
        eta_l_threshold: eta,
        s_at_threshold: at.chsh,
        settings: at.settings,
        bracket: [lo, hi],
        steps,
    })
}

fn threshold_bracket(cfg: &RunConfig) -> Result<(f64, f64)> {
    let eta_d = cfg.scenario.local_detector_efficiency;
    match &cfg.scan {
        Some(s) if s.variable == ScanVariable::OverallLocalEfficiency => {
            let g = s.grid()?;
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > eta_d || lo <= 0.0 || lo >= hi {
                return Err(Error::Config(format!(
                    "threshold bracket [{lo}, {hi}] must lie in (0, eta_tilde_D = {eta_d}]"
                )));
            }
            Ok((lo, hi))
        }
        Some(s) => Err(Error::Config(format!(
            "threshold scans eta_L, not `{}`",
            s.variable
        ))),
        None => Ok((THRESHOLD_LOW.min(0.8 * eta_d), eta_d)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdOutput {
    #[serde(flatten)]
    pub report: ThresholdReport,
    pub config: RunConfig,
    pub constants: Constants,
}

pub fn threshold(cfg: &RunConfig) -> Result<ThresholdOutput> {
    let (lo, hi) = threshold_bracket(cfg)?;
    Ok(ThresholdOutput {
        report: key_threshold(&cfg.scenario, &cfg.search, lo, hi, THRESHOLD_TOL)?,
        config: cfg.clone(),
        constants: Constants::default(),
    })
}

/// Herald probability for the single-photon scheme or the comparator whose
/// herald needs both photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    SinglePhoton,
    TwoPhotonScaling,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Self::SinglePhoton => "single_photon",
            Self::TwoPhotonScaling => "two_photon_scaling",
        }
    }

    pub fn herald_probability(self, params: &SetupParams) -> Result<f64> {
        match self {
            Self::SinglePhoton => heralding_probability(params),
            Self::TwoPhotonScaling => heralding_probability_twophoton(params),
        }
    }
}

/// Key bits per second at distance `l` for a per-round key fraction `r`.
pub fn rate_at_distance(scenario: &SetupParams, scheme: Scheme, r: f64, l: f64) -> Result<f64> {
    let p = SetupParams {
        distance_km: l,
        ..*scenario
    };
    Ok(scheme.herald_probability(&p)? * p.source_rate * r.max(0.0))
}

/// Distance where the rate for per-round fraction `r` falls to `target`
/// bits/s, or `None` if it is below `target` already at `L = 0`.
pub fn distance_cutoff(
    scenario: &SetupParams,
    scheme: Scheme,
    r: f64,
    target: f64,
) -> Result<Option<f64>> {
    let r0 = rate_at_distance(scenario, scheme, r, 0.0)?;
    if r0 < target {
        return Ok(None);
    }
    // the rate falls as eta_C^(1/2) or eta_C, so the crossing is explicit
    let power = match scheme {
        Scheme::SinglePhoton => 0.5,
        Scheme::TwoPhotonScaling => 1.0,
    };
    Ok(Some(
        10.0 * (r0 / target).log10() / (power * scenario.attenuation),
    ))
}

/// Key-round statistics of the optimized protocol for a scenario.
pub fn key_statistics(
    scenario: &SetupParams,
    search: &ProtocolSearch,
) -> Result<(KeyStatistics, KeyRateReport)> {
    let report = optimize_setup(scenario, search)?;
    Ok((
        KeyStatistics {
            chsh: report.chsh,
            key_distribution: report.key_distribution,
        },
        report,
    ))
}

/// Key bits per second against distance for each requested block size and,
/// when asked for or when no block size is given, in the asymptotic limit.
pub fn rate_vs_distance(cfg: &RunConfig) -> Result<Table> {
    let distances = match &cfg.scan {
        Some(s) if s.variable == ScanVariable::Distance => s.grid()?,
        Some(s) => {
            return Err(Error::Config(format!(
                "rate-vs-distance scans L, not `{}`",
                s.variable
            )))
        }
        None => ScanSpec::range(ScanVariable::Distance, 0.0, 400.0, 41).grid()?,
    };
    if let Some(l) = distances.iter().find(|l| **l < 0.0) {
        return Err(Error::Config(format!("negative distance {l}")));
    }
    // the key fraction per round does not depend on L
    let base = SetupParams {
        distance_km: 0.0,
        ..cfg.scenario
    };
    let (stats, report) = key_statistics(&base, &cfg.search)?;
    let mut fractions: Vec<(Option<f64>, f64)> = Vec::new();
    if cfg.asymptotic || cfg.finite.n.is_empty() {
        fractions.push((None, report.r_inf));
    }
    let finite: Vec<(Option<f64>, f64)> = cfg
        .finite
        .n
        .par_iter()
        .map(|&n| {
            let o = optimize_finite(
                &stats,
                n,
                &cfg.finite.epsilons,
                cfg.finite.k,
                &cfg.finite.search,
            )?;
            Ok((Some(n), o.key.ell / n))
        })
        .collect::<Result<_>>()?;
    fractions.extend(finite);
    let mut rows = Vec::new();
    for (n, r) in fractions {
        for scheme in [Scheme::SinglePhoton, Scheme::TwoPhotonScaling] {
            for &l in &distances {
                rows.push(vec![
                    Cell::Num(l),
                    n.map_or(Cell::Text("inf".into()), Cell::Num),
                    Cell::Num(rate_at_distance(&cfg.scenario, scheme, r, l)?),
                    Cell::Text(scheme.name().into()),
                ]);
            }
        }
    }
    Ok(Table {
        header: ["L_km", "n", "R_bits_per_s", "scheme"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

/// Asymptotic rate at the scenario's `eta_L` and the key threshold, per `T`.
pub fn t_scan(cfg: &RunConfig) -> Result<Table> {
    let ts = match &cfg.scan {
        Some(s) if s.variable == ScanVariable::Transmittance => s.grid()?,
        Some(s) => {
            return Err(Error::Config(format!(
                "t-scan scans T, not `{}`",
                s.variable
            )))
        }
        None => vec![0.001, 0.005, 0.02, 0.05],
    };
    if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("T = {t} outside [0, 1]")));
    }
    let eta_d = cfg.scenario.local_detector_efficiency;
    let lo = THRESHOLD_LOW.min(0.8 * eta_d);
    let rows = ts
        .par_iter()
        .map(|&t| {
            let p = SetupParams {
                transmittance: t,
                ..cfg.scenario
            };
            let r = optimize_setup(&p, &cfg.search)?;
            let thr = key_threshold(&p, &cfg.search, lo, eta_d, THRESHOLD_TOL)?;
            Ok(vec![
                Cell::Num(t),
                Cell::Num(p.overall_local_efficiency()),
                Cell::Num(r.r_inf),
                Cell::Num(thr.eta_l_threshold),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        header: ["T", "eta_L", "r_inf", "eta_L_threshold"]
            .map(String::from)
            .to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteEntry {
    pub n: f64,
    /// Usable key bits, 0 when the raw length is not positive.
    pub ell: f64,
    pub ell_raw: f64,
    pub ell_per_n: f64,
    pub r_inf: f64,
    pub rate_bits_per_s: f64,
    pub key: KeyLength,
    pub params: FiniteSizeParams,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteOutput {
    pub results: Vec<FiniteEntry>,
    #[serde(rename = "S")]
    pub chsh: f64,
    pub soundness: f64,
    pub completeness_target: f64,
    pub epsilons: EpsilonSet,
    pub config: RunConfig,
    pub constants: Constants,
}

/// Finite-size key length for one set of statistics and block size.
pub fn finite_entry(
    stats: &KeyStatistics,
    r_inf: f64,
    n: f64,
    scenario: &SetupParams,
    epsilons: &EpsilonSet,
    k: f64,
    search: &FiniteSearch,
) -> Result<FiniteEntry> {
    let o = optimize_finite(stats, n, epsilons, k, search)?;
    Ok(FiniteEntry {
        n,
        ell: o.key.ell,
        ell_raw: o.key.raw,
        ell_per_n: o.key.ell / n,
        r_inf,
        rate_bits_per_s: finite_rate_per_second(o.key.ell, n, scenario)?,
        key: o.key,
        params: o.params,
    })
}

pub fn finite_keylen(cfg: &RunConfig) -> Result<FiniteOutput> {
    if cfg.finite.n.is_empty() {
        return Err(Error::Config(
            "finite-keylen needs at least one block size (--n or finite.n)".into(),
        ));
    }
    let (stats, report) = key_statistics(&cfg.scenario, &cfg.search)?;
    let results = cfg
        .finite
        .n
        .par_iter()
        .map(|&n| {
            finite_entry(
                &stats,
                report.r_inf,
                n,
                &cfg.scenario,
                &cfg.finite.epsilons,
                cfg.finite.k,
                &cfg.finite.search,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FiniteOutput {
        results,
        chsh: stats.chsh,
        soundness: cfg.finite.epsilons.soundness(),
        completeness_target: COMPLETENESS_TARGET,
        epsilons: cfg.finite.epsilons,
        config: cfg.clone(),
        constants: Constants::default(),
    })
}
