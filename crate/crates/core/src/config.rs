//! Run configuration for the command-line scans.
//!
//! A config file is JSON; every section is optional and unknown keys are
//! rejected. Command-line flags are applied on top with [`RunConfig::apply`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finitekey::{EpsilonSet, FiniteSearch, DEFAULT_SIGMAS};
use crate::photonics::SetupParams;
use crate::protocol::ProtocolSearch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanVariable {
    #[serde(rename = "L")]
    Distance,
    #[serde(rename = "eta_tilde_L")]
    LocalEfficiency,
    #[serde(rename = "eta_L")]
    OverallLocalEfficiency,
    #[serde(rename = "T")]
    Transmittance,
    #[serde(rename = "n")]
    Rounds,
}

impl ScanVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Distance => "L",
            Self::LocalEfficiency => "eta_tilde_L",
            Self::OverallLocalEfficiency => "eta_L",
            Self::Transmittance => "T",
            Self::Rounds => "n",
        }
    }
}

impl fmt::Display for ScanVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScanVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "L" => Self::Distance,
            "eta_tilde_L" => Self::LocalEfficiency,
            "eta_L" => Self::OverallLocalEfficiency,
            "T" => Self::Transmittance,
            "n" => Self::Rounds,
            other => {
                return Err(Error::Config(format!(
                    "unknown scan variable `{other}` (expected L, eta_tilde_L, eta_L, T or n)"
                )))
            }
        })
    }
}

/// A scan axis: either an even grid `min..=max` with `steps` points or an
/// explicit list of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub variable: ScanVariable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl ScanSpec {
    pub fn range(variable: ScanVariable, min: f64, max: f64, steps: usize) -> Self {
        Self {
            variable,
            min: Some(min),
            max: Some(max),
            steps: Some(steps),
            values: None,
        }
    }

    pub fn list(variable: ScanVariable, values: Vec<f64>) -> Self {
        Self {
            variable,
            min: None,
            max: None,
            steps: None,
            values: Some(values),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().map(|_| ())
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        let bad = |msg: String| Err(Error::Config(msg));
        let grid = match (&self.values, self.min, self.max, self.steps) {
            (Some(v), None, None, None) => {
                if v.is_empty() {
                    return bad("scan `values` is empty".into());
                }
                v.clone()
            }
            (None, Some(lo), Some(hi), Some(steps)) => {
                if steps < 2 {
                    return bad(format!("scan needs at least 2 steps, got {steps}"));
                }
                if !(lo < hi) {
                    return bad(format!("scan min {lo} must be below max {hi}"));
                }
                (0..steps)
                    .map(|i| {
                        if i + 1 == steps {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (steps - 1) as f64
                        }
                    })
                    .collect()
            }
            _ => return bad("scan takes either `values` or all of `min`, `max`, `steps`".into()),
        };
        if let Some(x) = grid.iter().find(|x| !x.is_finite()) {
            return bad(format!("non-finite scan value {x}"));
        }
        Ok(grid)
    }
}

impl FromStr for ScanSpec {
    type Err = Error;

    /// `VAR:MIN:MAX:STEPS` or `VAR=V1,V2,...`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{t}` in scan `{s}`")))
        };
        let spec = if let Some((var, list)) = s.split_once('=') {
            let values = list.split(',').map(num).collect::<Result<Vec<_>>>()?;
            Self::list(var.parse()?, values)
        } else {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 4 {
                return Err(Error::Config(format!(
                    "scan `{s}` should look like VAR:MIN:MAX:STEPS or VAR=V1,V2"
                )));
            }
            let steps = parts[3]
                .parse()
                .map_err(|_| Error::Config(format!("bad step count `{}`", parts[3])))?;
            Self::range(parts[0].parse()?, num(parts[1])?, num(parts[2])?, steps)
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteConfig {
    /// Block sizes to evaluate.
    pub n: Vec<f64>,
    pub epsilons: EpsilonSet,
    /// Standard deviations of margin in the test threshold.
    pub k: f64,
    pub search: FiniteSearch,
}

impl Default for FiniteConfig {
    fn default() -> Self {
        Self {
            n: Vec::new(),
            epsilons: EpsilonSet::default(),
            k: DEFAULT_SIGMAS,
            search: FiniteSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: SetupParams,
    pub search: ProtocolSearch,
    pub finite: FiniteConfig,
    pub scan: Option<ScanSpec>,
    pub output: Option<PathBuf>,
    /// Overrides the seeds of both searches when set.
    pub seed: Option<u64>,
    /// Include the asymptotic rate in distance scans.
    pub asymptotic: bool,
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scan: Option<ScanSpec>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<Vec<f64>>,
    pub asymptotic: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        if o.scan.is_some() {
            self.scan = o.scan;
        }
        if o.output.is_some() {
            self.output = o.output;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if let Some(n) = o.n {
            self.finite.n = n;
        }
        self.asymptotic |= o.asymptotic;
        if let Some(seed) = self.seed {
            self.search.seed = seed;
            self.finite.search.seed = seed;
        }
        self
    }

    /// Checks everything that does not need a numerical run. All failures
    /// are reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.scenario.validate().map_err(cfg)?;
        self.finite.epsilons.validate().map_err(cfg)?;
        if let Some(scan) = &self.scan {
            scan.validate()?;
        }
        if self.search.n_starts == 0 || self.finite.search.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        if let Some(n) = self
            .finite
            .n
            .iter()
            .find(|n| !(**n >= 1.0 && n.is_finite()))
        {
            return Err(Error::Config(format!(
                "block size n = {n} must be a finite number >= 1"
            )));
        }
        if !(self.finite.k >= 0.0) {
            return Err(Error::Config(format!(
                "k = {} must be non-negative",
                self.finite.k
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"scenario": {"eta_X": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn scenario_names() {
        let c =
            RunConfig::from_json(r#"{"scenario": {"T": 0.01, "L": 50, "eta_D": 0.8}}"#).unwrap();
        assert_eq!(c.scenario.transmittance, 0.01);
        assert_eq!(c.scenario.distance_km, 50.0);
        assert_eq!(c.scenario.herald_efficiency, 0.8);
    }

    #[test]
    fn scan_strings() {
        let s: ScanSpec = "eta_tilde_L:0.8:1:5".parse().unwrap();
        let g = s.grid().unwrap();
        assert_eq!(g.len(), 5);
        for (a, b) in g.iter().zip([0.8, 0.85, 0.9, 0.95, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(g[4], 1.0);
        let s: ScanSpec = "T=0.001,0.005".parse().unwrap();
        assert_eq!(s.variable, ScanVariable::Transmittance);
        assert_eq!(s.grid().unwrap(), vec![0.001, 0.005]);
        assert!("eta:0:1:5".parse::<ScanSpec>().is_err());
        assert!("L:0:1:1".parse::<ScanSpec>().is_err());
        assert!("L:1:0:3".parse::<ScanSpec>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let c = RunConfig::from_json(r#"{"seed": 3, "finite": {"n": [1e8]}}"#).unwrap();
        let c = c.apply(Overrides {
            seed: Some(9),
            n: Some(vec![1e10]),
            ..Default::default()
        });
        assert_eq!(c.search.seed, 9);
        assert_eq!(c.finite.search.seed, 9);
        assert_eq!(c.finite.n, vec![1e10]);
    }

    #[test]
    fn validation_is_config_error() {
        let mut c = RunConfig::default();
        c.scenario.transmittance = 2.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.finite.epsilons.eps_s_p = 1e-3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
