use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use robust_mean::bench::{
    io, read_points_file, read_sidecar, run_bench, sidecar_path, trial_sample, C2Init,
    ExperimentConfig, Setting, Sidecar, SigmaMode,
};
use robust_mean::datagen::{empirical_sigma, pareto_std};
use robust_mean::estimator::coordinate_wise_median;
use robust_mean::{run_algorithm1, Error};

/// Log filter variable, e.g. `ROBUST_MEAN_LOG=debug`.
const LOG_ENV: &str = "ROBUST_MEAN_LOG";

#[derive(Parser)]
#[command(
    name = "robust-mean",
    version,
    about = "Robust mean estimation for corrupted high-dimensional samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corrupted sample as CSV plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Estimate the mean of a CSV file and print a JSON summary.
    Estimate(EstimateArgs),
    /// Run a multi-trial benchmark and write JSON and CSV reports.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaModeArg {
    Empirical,
    Theoretical,
}

impl From<SigmaModeArg> for SigmaMode {
    fn from(m: SigmaModeArg) -> Self {
        match m {
            SigmaModeArg::Empirical => SigmaMode::Empirical,
            SigmaModeArg::Theoretical => SigmaMode::Theoretical,
        }
    }
}

#[derive(Args)]
struct AlgoFlags {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "eps-check")]
    eps_check: Option<f64>,
    #[arg(long = "sigma-mode", value_enum)]
    sigma_mode: Option<SigmaModeArg>,
}

impl AlgoFlags {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.c1 {
            cfg.c1 = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = Some(v);
        }
        if let Some(v) = self.eps_check {
            cfg.eps_check = Some(v);
        }
        if let Some(m) = self.sigma_mode {
            cfg.sigma_mode = m.into();
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trial stream to draw; trial k matches trial k of a bench run.
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long)]
    header: bool,
    #[arg(long, value_name = "PATH")]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    GaussianTwoCluster,
    ParetoConstant,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV file, one point per row.
    data: PathBuf,
    #[command(flatten)]
    algo: AlgoFlags,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    header: bool,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    algo: AlgoFlags,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Estimate(a) => estimate(a),
        Command::Bench(a) => bench(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

/// Reads a config file, filling keys the subcommand does not need.
fn load_config(
    path: Option<&Path>,
    fill: &[(&str, toml::Value)],
) -> Result<ExperimentConfig, Error> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (k, v) in fill {
        table.entry(k.to_string()).or_insert_with(|| v.clone());
    }
    table
        .try_into::<ExperimentConfig>()
        .map_err(|e| Error::Config(e.to_string()))
}

fn generate(a: GenerateArgs) -> Result<(), Error> {
    let mut cfg = load_config(
        a.config.as_deref(),
        &[("setting", "gaussian_two_cluster".into()), ("d", 10.into())],
    )?;
    if let Some(s) = a.setting {
        cfg.setting = match s {
            SettingArg::GaussianTwoCluster => Setting::GaussianTwoCluster,
            SettingArg::ParetoConstant => Setting::ParetoConstant,
        };
    }
    if cfg.setting == Setting::CsvFile {
        return Err(Error::Usage("generate needs a synthetic setting".into()));
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let Some(v) = a.n {
        cfg.n = robust_mean::bench::Grid::One(v);
    }
    if let Some(v) = a.eps {
        cfg.eps = robust_mean::bench::Grid::One(v);
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let (n, eps) = (cfg.n.values()[0], cfg.eps.values()[0]);
    let sample = trial_sample(&cfg, 0, n, eps, a.trial)?;
    let mut meta = Sidecar::from_sample(&sample, Some(cfg.seed));
    meta.theoretical_sigma = Some(match cfg.setting {
        Setting::ParetoConstant => pareto_std(cfg.pareto_scale, cfg.pareto_shape),
        _ => 1.0,
    });
    meta.setting = Some(
        match cfg.setting {
            Setting::ParetoConstant => "pareto_constant",
            _ => "gaussian_two_cluster",
        }
        .into(),
    );
    io::write_sample(&a.output, &sample, &meta, a.header)?;
    log::info!(
        "wrote {} and {}",
        a.output.display(),
        sidecar_path(&a.output).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport {
    estimate: Vec<f64>,
    iterations: usize,
    c2_trace: Vec<f64>,
    h_support_size: usize,
    terminated_by: &'static str,
    sigma: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

fn estimate(a: EstimateArgs) -> Result<(), Error> {
    let mut cfg = load_config(
        a.algo.config.as_deref(),
        &[
            ("setting", "csv_file".into()),
            ("data_path", a.data.display().to_string().into()),
        ],
    )?;
    a.algo.apply(&mut cfg);
    let header = a.header || cfg.header;
    let points = read_points_file(&a.data, header)?;
    let meta_path = sidecar_path(&a.data);
    let meta = if meta_path.exists() {
        Some(read_sidecar(&meta_path)?)
    } else {
        None
    };

    let sigma = match (cfg.sigma, &meta) {
        (Some(s), _) => s,
        (None, Some(m)) => match cfg.sigma_mode {
            SigmaMode::Empirical => {
                if m.inlier_mask.len() != points.n() {
                    return Err(Error::Contract(format!(
                        "sidecar lists {} points, data has {}",
                        m.inlier_mask.len(),
                        points.n()
                    )));
                }
                empirical_sigma(&points, &m.inlier_mask)
            }
            SigmaMode::Theoretical => m.theoretical_sigma.ok_or_else(|| {
                Error::Usage("sidecar has no theoretical sigma; pass --sigma".into())
            })?,
        },
        (None, None) => {
            return Err(Error::Usage(format!(
                "no sigma: pass --sigma or provide {}",
                meta_path.display()
            )))
        }
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    let mut algo = cfg.algo_config(a.p.unwrap_or(1.0), sigma);
    if cfg.c2_init == C2Init::MedianError {
        let m = meta
            .as_ref()
            .ok_or_else(|| Error::Usage("c2_init = \"median_error\" needs a sidecar".into()))?;
        let reference = m.true_mean.as_ref().unwrap_or(&m.oracle_mean);
        if reference.len() != points.d() {
            return Err(Error::Contract(
                "sidecar mean has the wrong dimension".into(),
            ));
        }
        let med = coordinate_wise_median(&points);
        let err: f64 = med
            .iter()
            .zip(reference)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        algo.c2_init = Some((err / sigma).max(1e-6));
    }
    algo.schedule(points.d())
        .map_err(|e| Error::Usage(e.to_string()))?;
    let trace = run_algorithm1(&points, &algo)?;
    for w in &trace.warnings {
        log::warn!("{w}");
    }
    let report = EstimateReport {
        estimate: trace.final_x.clone(),
        iterations: trace.iterates.len(),
        c2_trace: trace.c2_trace(),
        h_support_size: trace
            .final_h
            .as_slice()
            .iter()
            .filter(|&&h| h > 0.0)
            .count(),
        terminated_by: trace.terminated_by.as_str(),
        sigma,
        warnings: trace.warnings.clone(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match a.output {
        Some(path) => std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e }),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn bench(a: BenchArgs) -> Result<(), Error> {
    let path = a
        .algo
        .config
        .as_deref()
        .ok_or_else(|| Error::Usage("bench needs --config PATH".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    a.algo.apply(&mut cfg);
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.output {
        cfg.output_path = v;
    }
    if let Some(v) = a.parallelism {
        cfg.parallelism = v;
    }
    cfg.validate()?;
    let report = run_bench(&cfg)?;
    let failed = report
        .records
        .iter()
        .filter(|r| r.failure.is_some())
        .count();
    if failed > 0 {
        log::warn!("{failed} of {} estimator runs failed", report.records.len());
    }
    let (json, csv) = report.write(&cfg.output_path)?;
    log::info!("wrote {} and {}", json.display(), csv.display());
    print!("{}", report.table_csv());
    Ok(())
}
