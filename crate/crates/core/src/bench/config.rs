//! Experiment descriptions, read from flat TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimator::AlgoConfig;
use crate::linalg::SpectralOptions;
use crate::solver::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    GaussianTwoCluster,
    ParetoConstant,
    CsvFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// √λ_max of the inlier sample covariance.
    #[default]
    Empirical,
    /// The generator's population value.
    Theoretical,
}

impl FromStr for SigmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "theoretical" => Ok(Self::Theoretical),
            _ => Err(Error::Usage(format!("unknown sigma mode {s:?}"))),
        }
    }
}

/// How `c₂⁽⁰⁾` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum C2Init {
    /// `3√d + 2c₁`.
    #[default]
    Default,
    /// `‖median − μ‖₂ / σ`, using the known mean of the generator, or the
    /// oracle mean when the population mean is unknown.
    MedianError,
    Fixed(f64),
}

impl Serialize for C2Init {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            C2Init::Default => s.serialize_str("default"),
            C2Init::MedianError => s.serialize_str("median_error"),
            C2Init::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for C2Init {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(C2Init::Fixed(v)),
            Raw::Int(v) => Ok(C2Init::Fixed(v as f64)),
            Raw::Name(s) if s == "default" => Ok(C2Init::Default),
            Raw::Name(s) if s == "median_error" => Ok(C2Init::MedianError),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "c2_init must be a number, \"default\" or \"median_error\", got {s:?}"
            ))),
        }
    }
}

/// An estimator tag: `l1`, `lp(p)`, `median`, `mean` or `simple_filter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    L1,
    Lp(f64),
    Median,
    Mean,
    SimpleFilter,
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::L1 => f.write_str("l1"),
            EstimatorSpec::Lp(p) => write!(f, "lp({p})"),
            EstimatorSpec::Median => f.write_str("median"),
            EstimatorSpec::Mean => f.write_str("mean"),
            EstimatorSpec::SimpleFilter => f.write_str("simple_filter"),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let spec = match s {
            "l1" => EstimatorSpec::L1,
            "median" => EstimatorSpec::Median,
            "mean" => EstimatorSpec::Mean,
            "simple_filter" => EstimatorSpec::SimpleFilter,
            _ => {
                let p = s
                    .strip_prefix("lp(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Config(format!(
                        "lp exponent must lie in (0, 1], got {p}"
                    )));
                }
                EstimatorSpec::Lp(p)
            }
        };
        Ok(spec)
    }
}

impl Serialize for EstimatorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A scalar or a list in the config file; lists span the table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![*v],
            Grid::Many(v) => v.clone(),
        }
    }
}

fn default_trials() -> usize {
    10
}
fn default_estimators() -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::L1,
        EstimatorSpec::Median,
        EstimatorSpec::Mean,
    ]
}
fn default_output() -> PathBuf {
    PathBuf::from("bench_report")
}
fn default_parallelism() -> usize {
    1
}
fn default_tau() -> f64 {
    0.6
}
fn default_c1() -> f64 {
    1.1
}
fn default_shape() -> f64 {
    2.5
}
fn default_one() -> f64 {
    1.0
}
fn default_filter_c() -> f64 {
    1.1
}

/// One benchmark run. Every key of the TOML file maps to one field here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    /// Ignored for `csv_file`.
    #[serde(default)]
    pub d: usize,
    /// Ignored for `csv_file`.
    #[serde(default = "default_n")]
    pub n: Grid<usize>,
    #[serde(default = "default_eps")]
    pub eps: Grid<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub seed: u64,
    /// Report base path; `.json` and `.csv` are appended.
    #[serde(default = "default_output")]
    pub output_path: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,

    #[serde(default)]
    pub sigma_mode: SigmaMode,
    /// Fixed σ; overrides `sigma_mode` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_check: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_threshold: Option<f64>,
    #[serde(default)]
    pub c2_init: C2Init,
    #[serde(default)]
    pub allow_breakdown_violation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_feas: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish_rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rw_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rw_rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_max_iters: Option<usize>,

    #[serde(default = "default_shape")]
    pub pareto_shape: f64,
    #[serde(default = "default_one")]
    pub pareto_scale: f64,

    /// Data file for `csv_file`; its sidecar supplies the oracle mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default)]
    pub header: bool,

    #[serde(default = "default_filter_c")]
    pub filter_c: f64,
    /// Defaults to `n / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_max_rounds: Option<usize>,
}

fn default_n() -> Grid<usize> {
    Grid::One(1000)
}
fn default_eps() -> Grid<f64> {
    Grid::One(0.0)
}

impl ExperimentConfig {
    pub fn new(setting: Setting) -> Self {
        toml::from_str(&format!(
            "setting = \"{}\"",
            match setting {
                Setting::GaussianTwoCluster => "gaussian_two_cluster",
                Setting::ParetoConstant => "pareto_constant",
                Setting::CsvFile => "csv_file",
            }
        ))
        .expect("defaults parse")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators must not be empty".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be >= 1".into());
        }
        match self.setting {
            Setting::CsvFile => {
                if self.data_path.is_none() {
                    return bad("setting csv_file requires data_path".into());
                }
                if self.sigma_mode == SigmaMode::Theoretical && self.sigma.is_none() {
                    return bad("csv_file has no theoretical sigma; set sigma".into());
                }
            }
            _ => {
                if self.d == 0 {
                    return bad("d must be >= 1".into());
                }
                if self.setting == Setting::GaussianTwoCluster && self.d < 2 {
                    return bad("gaussian_two_cluster needs d >= 2".into());
                }
                let ns = self.n.values();
                if ns.is_empty() || ns.contains(&0) {
                    return bad("n must be a non-empty list of positive counts".into());
                }
                let es = self.eps.values();
                if es.is_empty() || es.iter().any(|e| !(0.0..0.5).contains(e)) {
                    return bad("eps values must lie in [0, 0.5)".into());
                }
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma must be > 0, got {s}"));
            }
        }
        if !(self.filter_c > 1.0) {
            return bad(format!("filter_c must be > 1, got {}", self.filter_c));
        }
        // Range checks on the estimator parameters are shared with the library.
        self.algo_config(1.0, 1.0)
            .schedule(self.d.max(1))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Estimator configuration for one trial.
    pub fn algo_config(&self, p: f64, sigma: f64) -> AlgoConfig {
        let base = AlgoConfig::default();
        let sd = SolverOptions::default();
        let spectral = SpectralOptions {
            tol: self.spectral_tol.unwrap_or(sd.spectral.tol),
            max_iters: self.spectral_max_iters.unwrap_or(sd.spectral.max_iters),
        };
        AlgoConfig {
            p,
            tau: self.tau,
            c1: self.c1,
            sigma,
            eps_check: self.eps_check,
            final_threshold: self.final_threshold,
            c2_init: match self.c2_init {
                C2Init::Fixed(v) => Some(v),
                _ => None,
            },
            allow_breakdown_violation: self.allow_breakdown_violation,
            solver: SolverOptions {
                tol_feas: self.tol_feas.unwrap_or(sd.tol_feas),
                max_sweeps: self.max_sweeps.unwrap_or(sd.max_sweeps),
                eta: self.eta.unwrap_or(sd.eta),
                polish_rounds: self.polish_rounds.unwrap_or(sd.polish_rounds),
                spectral,
            },
            rw_delta: self.rw_delta.unwrap_or(base.rw_delta),
            rw_rounds: self.rw_rounds.unwrap_or(base.rw_rounds),
        }
    }
}
