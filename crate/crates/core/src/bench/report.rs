//! Multi-trial benchmark runs and their reports.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{C2Init, EstimatorSpec, ExperimentConfig, Setting, SigmaMode};
use super::io;
use crate::datagen::{
    gen_gaussian_two_cluster, gen_pareto_constant, pareto_std, LabeledSample, RngSeed,
};
use crate::error::{Error, Result};
use crate::estimator::{
    coordinate_wise_median, recovery_error, run_algorithm1, sample_mean, simple_filter_baseline,
};

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Schema version of [`BenchReport`].
pub const REPORT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub eps: f64,
    pub trial: usize,
    pub estimator: String,
    /// `None` when the trial failed.
    pub recovery_error: Option<f64>,
    pub wall_time_ms: f64,
    pub iterations: Option<usize>,
    pub terminated_by: Option<String>,
    #[serde(with = "nan_as_null")]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub eps: f64,
    pub estimator: String,
    #[serde(with = "nan_as_null")]
    pub mean_error: f64,
    /// Standard error of the mean over successful trials.
    #[serde(with = "nan_as_null")]
    pub std_error: f64,
    #[serde(with = "nan_as_null")]
    pub mean_time_ms: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: String,
    pub crate_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// What one estimator call produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutcome {
    pub estimate: Vec<f64>,
    pub iterations: Option<usize>,
    pub terminated_by: Option<String>,
}

impl BenchReport {
    pub fn aggregate(&self, n: usize, eps: f64, estimator: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.n == n && a.eps == eps && a.estimator == estimator)
    }

    /// Parses a report and checks that its aggregates match its records.
    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))?;
        report.check_aggregates()?;
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn check_aggregates(&self) -> Result<()> {
        let again = aggregate(&self.records);
        let close = |a: f64, b: f64| {
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0) || (a.is_nan() && b.is_nan())
        };
        let ok = again.len() == self.aggregates.len()
            && again.iter().zip(&self.aggregates).all(|(a, b)| {
                a.n == b.n
                    && a.eps == b.eps
                    && a.estimator == b.estimator
                    && a.trials_ok == b.trials_ok
                    && a.trials_failed == b.trials_failed
                    && close(a.mean_error, b.mean_error)
                    && close(a.std_error, b.std_error)
                    && close(a.mean_time_ms, b.mean_time_ms)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "report aggregates do not match its trial records".into(),
            ))
        }
    }

    /// Mean error per grid point and estimator. Rows follow the config grid;
    /// columns follow the estimator list.
    pub fn table_csv(&self) -> String {
        let labels: Vec<String> = self
            .config
            .estimators
            .iter()
            .map(|e| e.to_string())
            .collect();
        let mut out = String::from("n,eps");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (n, eps) in grid_points(&self.config) {
            out.push_str(&format!("{n},{eps}"));
            for l in &labels {
                out.push(',');
                if let Some(a) = self.aggregate(n, eps, l) {
                    out.push_str(&a.mean_error.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<base>.json` and `<base>.csv`; returns both paths.
    pub fn write(&self, base: &Path) -> Result<(PathBuf, PathBuf)> {
        let json = base.with_extension("json");
        let csv = base.with_extension("csv");
        if let Some(dir) = json.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        io::write_json(&json, self)?;
        std::fs::write(&csv, self.table_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok((json, csv))
    }
}

fn grid_points(cfg: &ExperimentConfig) -> Vec<(usize, f64)> {
    if cfg.setting == Setting::CsvFile {
        // Filled in from the file; the config grid does not apply.
        return vec![(cfg.n.values()[0], cfg.eps.values()[0])];
    }
    let mut pts = Vec::new();
    for &n in &cfg.n.values() {
        for &eps in &cfg.eps.values() {
            pts.push((n, eps));
        }
    }
    pts
}

fn aggregate(records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut errs: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<Vec<f64>> = Vec::new();
    for r in records {
        let k = match out
            .iter()
            .position(|a| a.n == r.n && a.eps == r.eps && a.estimator == r.estimator)
        {
            Some(k) => k,
            None => {
                out.push(Aggregate {
                    n: r.n,
                    eps: r.eps,
                    estimator: r.estimator.clone(),
                    mean_error: f64::NAN,
                    std_error: f64::NAN,
                    mean_time_ms: f64::NAN,
                    trials_ok: 0,
                    trials_failed: 0,
                });
                errs.push(Vec::new());
                times.push(Vec::new());
                out.len() - 1
            }
        };
        match r.recovery_error {
            Some(e) => {
                out[k].trials_ok += 1;
                errs[k].push(e);
                times[k].push(r.wall_time_ms);
            }
            None => out[k].trials_failed += 1,
        }
    }
    for ((a, e), t) in out.iter_mut().zip(&errs).zip(&times) {
        if e.is_empty() {
            continue;
        }
        let m = e.len() as f64;
        a.mean_error = e.iter().sum::<f64>() / m;
        a.mean_time_ms = t.iter().sum::<f64>() / m;
        a.std_error = if e.len() > 1 {
            let var = e.iter().map(|x| (x - a.mean_error).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
    }
    out
}

/// Sample for one trial of a synthetic setting. Streams are keyed by grid
/// point and trial, so results do not depend on scheduling.
pub fn trial_sample(
    cfg: &ExperimentConfig,
    grid_index: usize,
    n: usize,
    eps: f64,
    trial: usize,
) -> Result<LabeledSample> {
    let stream = ((grid_index as u64) << 32) | trial as u64;
    let mut rng = RngSeed::new(cfg.seed).trial_rng(stream);
    match cfg.setting {
        Setting::GaussianTwoCluster => gen_gaussian_two_cluster(cfg.d, n, eps, &mut rng),
        Setting::ParetoConstant => {
            gen_pareto_constant(cfg.d, n, eps, cfg.pareto_shape, cfg.pareto_scale, &mut rng)
        }
        Setting::CsvFile => Err(Error::contract("csv_file samples are read, not generated")),
    }
}

/// σ handed to the estimators for this sample.
pub fn trial_sigma(cfg: &ExperimentConfig, sample: &LabeledSample) -> Result<f64> {
    if let Some(s) = cfg.sigma {
        return Ok(s);
    }
    let s = match (cfg.sigma_mode, cfg.setting) {
        (SigmaMode::Empirical, _) => sample.empirical_sigma(),
        (SigmaMode::Theoretical, Setting::GaussianTwoCluster) => 1.0,
        (SigmaMode::Theoretical, Setting::ParetoConstant) => {
            pareto_std(cfg.pareto_scale, cfg.pareto_shape)
        }
        (SigmaMode::Theoretical, Setting::CsvFile) => {
            return Err(Error::Config("csv_file has no theoretical sigma".into()))
        }
    };
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::parameter(format!(
            "sigma of this sample is {s}; it must be > 0"
        )))
    }
}

/// Runs one estimator on a labeled sample.
pub fn run_estimator(
    cfg: &ExperimentConfig,
    spec: EstimatorSpec,
    sample: &LabeledSample,
    sigma: f64,
) -> Result<EstimateOutcome> {
    let points = &sample.points;
    let simple = |estimate| EstimateOutcome {
        estimate,
        iterations: None,
        terminated_by: None,
    };
    match spec {
        EstimatorSpec::Median => Ok(simple(coordinate_wise_median(points))),
        EstimatorSpec::Mean => Ok(simple(sample_mean(points))),
        EstimatorSpec::SimpleFilter => {
            let rounds = cfg.filter_max_rounds.unwrap_or(points.n() / 2);
            Ok(simple(simple_filter_baseline(
                points,
                sigma,
                cfg.filter_c,
                rounds,
            )?))
        }
        EstimatorSpec::L1 | EstimatorSpec::Lp(_) => {
            let p = if let EstimatorSpec::Lp(p) = spec {
                p
            } else {
                1.0
            };
            let mut algo = cfg.algo_config(p, sigma);
            if cfg.c2_init == C2Init::MedianError {
                let reference = sample.true_mean.as_ref().unwrap_or(&sample.oracle_mean);
                let med = coordinate_wise_median(points);
                let err = med
                    .iter()
                    .zip(reference)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                // A zero radius would make the schedule degenerate.
                algo.c2_init = Some((err / sigma).max(1e-6));
            }
            let trace = run_algorithm1(points, &algo)?;
            for w in &trace.warnings {
                log::warn!("{w}");
            }
            Ok(EstimateOutcome {
                estimate: trace.final_x.clone(),
                iterations: Some(trace.iterates.len()),
                terminated_by: Some(trace.terminated_by.as_str().to_string()),
            })
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

fn failed(n: usize, eps: f64, trial: usize, est: &str, sigma: f64, why: String) -> TrialRecord {
    TrialRecord {
        n,
        eps,
        trial,
        estimator: est.to_string(),
        recovery_error: None,
        wall_time_ms: 0.0,
        iterations: None,
        terminated_by: None,
        sigma,
        failure: Some(why),
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    sample: Result<LabeledSample>,
    n: usize,
    eps: f64,
    trial: usize,
) -> Vec<TrialRecord> {
    let prepared = sample.and_then(|s| {
        let sigma = trial_sigma(cfg, &s)?;
        Ok((s, sigma))
    });
    let (sample, sigma) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return cfg
                .estimators
                .iter()
                .map(|spec| failed(n, eps, trial, &spec.to_string(), f64::NAN, e.to_string()))
                .collect()
        }
    };
    let (n, eps) = (sample.points.n(), eps);
    cfg.estimators
        .iter()
        .map(|&spec| {
            let label = spec.to_string();
            let start = Instant::now();
            let res = catch_unwind(AssertUnwindSafe(|| {
                run_estimator(cfg, spec, &sample, sigma)
            }));
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let outcome = match res {
                Ok(Ok(o)) => o,
                Ok(Err(e)) => return failed(n, eps, trial, &label, sigma, e.to_string()),
                Err(p) => return failed(n, eps, trial, &label, sigma, panic_message(p)),
            };
            match recovery_error(&outcome.estimate, &sample) {
                Ok(err) => TrialRecord {
                    n,
                    eps,
                    trial,
                    estimator: label,
                    recovery_error: Some(err),
                    wall_time_ms: ms,
                    iterations: outcome.iterations,
                    terminated_by: outcome.terminated_by,
                    sigma,
                    failure: None,
                },
                Err(e) => failed(n, eps, trial, &label, sigma, e.to_string()),
            }
        })
        .collect()
}

/// Runs every trial of the experiment on a pool of `cfg.parallelism` workers.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let file_sample = if cfg.setting == Setting::CsvFile {
        let path = cfg.data_path.clone().expect("validated");
        let points = io::read_points_file(&path, cfg.header)?;
        let meta = io::read_sidecar(&io::sidecar_path(&path))?;
        let sample = meta.into_sample(points)?;
        cfg.n = super::config::Grid::One(sample.points.n());
        cfg.eps = super::config::Grid::One(sample.epsilon);
        cfg.d = sample.points.d();
        Some(sample)
    } else {
        None
    };
    let jobs: Vec<(usize, usize, f64, usize)> = grid_points(&cfg)
        .into_iter()
        .enumerate()
        .flat_map(|(g, (n, eps))| (0..cfg.trials).map(move |t| (g, n, eps, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.parallelism)))?;
    log::info!(
        "running {} trials on {} workers",
        jobs.len(),
        cfg.parallelism
    );
    let cfg_ref = &cfg;
    let file_ref = file_sample.as_ref();
    let records: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, n, eps, t)| {
                let sample = match file_ref {
                    Some(s) => Ok(s.clone()),
                    None => catch_unwind(AssertUnwindSafe(|| trial_sample(cfg_ref, g, n, eps, t)))
                        .unwrap_or_else(|p| Err(Error::Contract(panic_message(p)))),
                };
                let recs = run_trial(cfg_ref, sample, n, eps, t);
                log::debug!("n={n} eps={eps} trial={t} done");
                recs
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let aggregates = aggregate(&records);
    Ok(BenchReport {
        version: REPORT_VERSION.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: cfg,
        records,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimators: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            "setting = \"gaussian_two_cluster\"\nd = 5\nn = 60\neps = [0.0, 0.1]\ntrials = 3\nestimators = {estimators}\nc2_init = \"median_error\"\n"
        ))
        .unwrap()
    }

    #[test]
    fn mean_on_clean_data_has_zero_error() {
        let mut cfg = small("[\"mean\"]");
        cfg.eps = super::super::config::Grid::One(0.0);
        cfg.trials = 1;
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.records.len(), 1);
        assert!(r.records[0].recovery_error.unwrap() < 1e-12);
    }

    #[test]
    fn aggregates_recompute_and_round_trip() {
        let r = run_bench(&small("[\"l1\", \"median\", \"simple_filter\"]")).unwrap();
        assert_eq!(r.records.len(), 2 * 3 * 3);
        assert_eq!(r.aggregates.len(), 2 * 3);
        let text = serde_json::to_string(&r).unwrap();
        let back = BenchReport::from_json(&text).unwrap();
        assert_eq!(back.records, r.records);
    }

    #[test]
    fn tampered_aggregate_is_rejected() {
        let mut r = run_bench(&small("[\"median\"]")).unwrap();
        r.aggregates[0].mean_error += 0.5;
        let text = serde_json::to_string(&r).unwrap();
        assert!(BenchReport::from_json(&text).is_err());
    }

    #[test]
    fn parallelism_does_not_change_numbers() {
        let mut cfg = small("[\"l1\", \"lp(0.5)\", \"mean\"]");
        let a = run_bench(&cfg).unwrap();
        cfg.parallelism = 4;
        let b = run_bench(&cfg).unwrap();
        let strip = |r: &BenchReport| {
            r.records
                .iter()
                .map(|t| (t.trial, t.estimator.clone(), t.recovery_error, t.iterations))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn failing_trials_are_recorded() {
        // n = 2 with eps = 0.4 corrupts one of two rows, which the generator rejects.
        let mut cfg = small("[\"mean\"]");
        cfg.n = super::super::config::Grid::One(2);
        cfg.eps = super::super::config::Grid::One(0.4);
        let r = run_bench(&cfg).unwrap();
        assert!(r.records.iter().all(|t| t.failure.is_some()));
        assert_eq!(r.aggregates[0].trials_failed, 3);
        BenchReport::from_json(&serde_json::to_string(&r).unwrap()).unwrap();
    }

    #[test]
    fn table_has_one_row_per_grid_point() {
        let r = run_bench(&small("[\"median\", \"mean\"]")).unwrap();
        let t = r.table_csv();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "n,eps,median,mean");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("60,0,"));
    }
}
