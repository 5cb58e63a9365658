//! Subcommands and their flag definitions.

use std::borrow::Cow;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use parity_forge::baselines::{default_bins, dpr_transform, fit_quantiles, multilabel_debias};
use parity_forge::evalharness::{
    sweep_with, ExperimentResult, ExperimentSpec, Method, SweepPoint, DEFAULT_K,
    DEFAULT_TEST_FRACTION, METRIC_COLUMNS,
};
use parity_forge::synthgen::{generate, inject_bias, SynthConfig};
use parity_forge::{multiclass_dp, r2b_debias, DebiasConfig, DebiasReport};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_g17};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "parity-forge",
    version,
    about = "Multiclass demographic parity label debiasing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Gaussian-mixture dataset.
    Synth(SynthArgs),
    /// Debias a label matrix.
    Debias(DebiasArgs),
    /// Repair features by quantile matching across groups.
    RepairFeatures(RepairArgs),
    /// Train-on-debiased, test-on-held-out evaluation over several seeds.
    Eval(EvalArgs),
    /// Per-round training DP and residuals for several tolerances.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub features: usize,
    #[arg(long = "per-class")]
    pub per_class: usize,
    #[arg(long, default_value_t = 5)]
    pub groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for features.csv, labels.csv and groups.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace each label with its group id with this probability.
    #[arg(long = "inject-bias")]
    pub inject_bias: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DebiasMethod {
    R2b,
    R2b0,
    Ml,
}

/// ADMM settings shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long = "max-rounds", default_value_t = 100)]
    pub max_rounds: usize,
    #[arg(long = "residual-tol", default_value_t = 1e-6)]
    pub residual_tol: f64,
}

impl SolverArgs {
    pub fn config(&self) -> CliResult<DebiasConfig> {
        let config = DebiasConfig {
            epsilon: self.epsilon,
            tau: self.tau,
            lambda: self.lambda,
            max_rounds: self.max_rounds,
            residual_tol: self.residual_tol,
            ..DebiasConfig::default()
        };
        config.validate().map_err(flag_error)?;
        Ok(config)
    }
}

/// Configuration and argument errors raised while interpreting flags are
/// reported as flag errors rather than data validation errors.
fn flag_error(e: parity_forge::Error) -> CliError {
    match e {
        parity_forge::Error::InvalidConfig(m) | parity_forge::Error::InvalidArgument(m) => {
            CliError::Parse(m)
        }
        other => CliError::Core(other),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct DebiasArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long, value_enum, default_value_t = DebiasMethod::R2b)]
    pub method: DebiasMethod,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report with per-round traces.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RepairArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub groups: PathBuf,
    /// Equal-mass bins per group; defaults to min(smallest group, 256).
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding features.csv, labels.csv and groups.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// One of bl, dpr, ml, r2b0, r2b.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long = "test-fraction", default_value_t = DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
    /// Bin count for dpr; defaults to min(smallest training group, 256).
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Status lines for stderr.
pub type Summary = Vec<String>;

pub fn run(cli: Cli) -> CliResult<Summary> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Debias(a) => debias(&a),
        Command::RepairFeatures(a) => repair_features(&a),
        Command::Eval(a) => eval(&a),
        Command::Curves(a) => curves(&a),
    }
}

pub fn synth(args: &SynthArgs) -> CliResult<Summary> {
    let config = SynthConfig {
        n_groups: args.groups,
        ..SynthConfig::new(args.classes, args.features, args.per_class, args.seed)
    };
    let mut data = generate(&config).map_err(flag_error)?;
    let before = multiclass_dp(data.labels().view(), data.groups())?;
    let mut summary = vec![format!("rows: {}", data.len())];
    if let Some(p) = args.inject_bias {
        data = inject_bias(&data, p, args.seed).map_err(flag_error)?;
        let after = multiclass_dp(data.labels().view(), data.groups())?;
        summary.push(format!("label dp before injection: {before:.4}"));
        summary.push(format!("label dp: {after:.4}"));
    } else {
        summary.push(format!("label dp: {before:.4}"));
    }
    io::write_dataset(&args.out, &data)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct Tolerances {
    pub residual_tol: f64,
    pub outer_tol: f64,
    pub inner_tol: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportConfig {
    pub method: &'static str,
    pub epsilon: f64,
    pub tau: f64,
    pub lambda: f64,
    pub max_rounds: usize,
    pub tolerances: Tolerances,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub read: f64,
    pub debias: f64,
    pub write: f64,
}

/// JSON report written by `debias`.
#[derive(Debug, Serialize)]
pub struct ReportFile {
    pub version: u32,
    pub config: ReportConfig,
    pub rounds_run: usize,
    pub dp_trace: Vec<f64>,
    pub primal_trace: Vec<f64>,
    pub dual_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub input_dp: f64,
    pub final_dp: f64,
    pub max_clamp_adjustment: f64,
    pub timings_ms: Timings,
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

pub fn debias(args: &DebiasArgs) -> CliResult<Summary> {
    let started = Instant::now();
    let labels = io::read_labels(&args.labels)?;
    let groups = io::read_groups(&args.groups)?;
    let mut config = args.solver.config()?;
    let read_ms = elapsed_ms(started);

    let started = Instant::now();
    let input_dp = multiclass_dp(labels.view(), &groups)?;
    let (out, report, name) = match args.method {
        DebiasMethod::R2b => {
            let (out, report) = r2b_debias(&labels, &groups, &config)?;
            (out, report, "r2b")
        }
        DebiasMethod::R2b0 => {
            config.max_rounds = 1;
            let (out, report) = r2b_debias(&labels, &groups, &config)?;
            (out, report, "r2b0")
        }
        DebiasMethod::Ml => {
            let out = multilabel_debias(&labels, &groups, &config)?;
            let report = DebiasReport {
                rounds_run: 0,
                dp_trace: Vec::new(),
                primal_trace: Vec::new(),
                dual_trace: Vec::new(),
                objective_trace: Vec::new(),
                final_dp: multiclass_dp(out.view(), &groups)?,
                max_clamp_adjustment: 0.0,
                config,
                elapsed_ms: 0.0,
            };
            (out, report, "ml")
        }
    };
    let debias_ms = elapsed_ms(started);

    let started = Instant::now();
    io::write_labels(&args.out, &out)?;
    let summary = vec![
        format!("method: {name}"),
        format!("input dp: {input_dp:.6}"),
        format!("final dp: {:.6}", report.final_dp),
        format!("rounds: {}", report.rounds_run),
    ];
    if let Some(path) = &args.report {
        let mut file = ReportFile {
            version: REPORT_VERSION,
            config: ReportConfig {
                method: name,
                epsilon: config.epsilon,
                tau: config.tau,
                lambda: config.lambda,
                max_rounds: config.max_rounds,
                tolerances: Tolerances {
                    residual_tol: config.residual_tol,
                    outer_tol: config.outer_tol,
                    inner_tol: config.inner_tol,
                },
            },
            rounds_run: report.rounds_run,
            dp_trace: report.dp_trace,
            primal_trace: report.primal_trace,
            dual_trace: report.dual_trace,
            objective_trace: report.objective_trace,
            input_dp,
            final_dp: report.final_dp,
            max_clamp_adjustment: report.max_clamp_adjustment,
            timings_ms: Timings {
                read: read_ms,
                debias: debias_ms,
                write: 0.0,
            },
        };
        file.timings_ms.write = elapsed_ms(started);
        io::write_json(path, &file)?;
    }
    Ok(summary)
}

pub fn repair_features(args: &RepairArgs) -> CliResult<Summary> {
    let features = io::read_features(&args.features)?;
    let groups = io::read_groups(&args.groups)?;
    if features.nrows() != groups.len() {
        return Err(parity_forge::Error::LengthMismatch {
            what: "feature rows",
            expected: groups.len(),
            actual: features.nrows(),
        }
        .into());
    }
    let bins = args.bins.unwrap_or_else(|| default_bins(&groups));
    let table = fit_quantiles(features.view(), &groups, bins)?;
    let repaired = dpr_transform(features.view(), &groups, &table)?;
    io::write_features(&args.out, &repaired)?;
    Ok(vec![
        format!("bins: {bins}"),
        format!("rows: {}", repaired.nrows()),
    ])
}

/// Header of the `eval` results file.
pub fn eval_header() -> Vec<String> {
    ["method", "seed"]
        .into_iter()
        .chain(METRIC_COLUMNS)
        .map(str::to_string)
        .collect()
}

/// Per-seed rows followed by a `mean` row and a `ci99` half-width row.
pub fn eval_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let method = result.method.name().to_string();
    let mut rows: Vec<Vec<String>> = result
        .seeds
        .iter()
        .zip(&result.runs)
        .map(|(seed, run)| {
            let mut row = vec![method.clone(), seed.to_string()];
            row.extend(
                METRIC_COLUMNS
                    .iter()
                    .map(|m| fmt_g17(parity_forge::evalharness::metric_value(run, m))),
            );
            row
        })
        .collect();
    let mut mean = vec![method.clone(), "mean".to_string()];
    let mut ci = vec![method, "ci99".to_string()];
    for m in METRIC_COLUMNS {
        let s = result.summary(m).expect("every metric is summarized");
        mean.push(fmt_g17(s.mean));
        ci.push(fmt_g17(s.half_width.unwrap_or(f64::NAN)));
    }
    rows.push(mean);
    rows.push(ci);
    rows
}

pub fn eval(args: &EvalArgs) -> CliResult<Summary> {
    let method = args.method;
    let data = io::read_dataset(&args.data)?;
    let spec = ExperimentSpec {
        k: args.k,
        test_fraction: args.test_fraction,
        n_bins: args.bins,
        ..ExperimentSpec::new(method, args.solver.config()?)
    };
    let results = sweep_with(&[SweepPoint::new(spec)], args.seeds, |_| {
        Ok(Cow::Borrowed(&data))
    })?;
    let result = &results[0];
    io::write_rows(&args.out, &eval_header(), eval_rows(result))?;
    let dp = result.summary("dp").expect("dp summarized");
    let acc = result.summary("acc").expect("acc summarized");
    let pm = |h: Option<f64>| h.map_or("n/a".to_string(), |h| format!("{h:.4}"));
    Ok(vec![
        format!("method: {method}, seeds: {}", args.seeds),
        format!("test dp: {:.4} +/- {}", dp.mean, pm(dp.half_width)),
        format!("accuracy: {:.4} +/- {}", acc.mean, pm(acc.half_width)),
    ])
}

pub fn curves_header() -> Vec<String> {
    [
        "epsilon",
        "round",
        "training_dp",
        "primal_residual",
        "dual_residual",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

/// Runs every round (no residual early exit) so all curves share a length.
pub fn curves(args: &CurvesArgs) -> CliResult<Summary> {
    let labels = io::read_labels(&args.labels)?;
    let groups = io::read_groups(&args.groups)?;
    let base = DebiasConfig {
        tau: args.tau,
        max_rounds: args.rounds,
        residual_tol: f64::MIN_POSITIVE,
        ..DebiasConfig::default()
    };
    for &epsilon in &args.epsilons {
        DebiasConfig { epsilon, ..base }
            .validate()
            .map_err(flag_error)?;
    }
    let curves =
        parity_forge::evalharness::convergence_curves(&labels, &groups, &args.epsilons, &base)?;
    let mut rows = Vec::new();
    let mut summary = vec![format!(
        "input dp: {:.6}",
        multiclass_dp(labels.view(), &groups)?
    )];
    for (epsilon, report) in &curves {
        for t in 0..report.rounds_run {
            rows.push(vec![
                fmt_g17(*epsilon),
                (t + 1).to_string(),
                fmt_g17(report.dp_trace[t]),
                fmt_g17(report.primal_trace[t]),
                fmt_g17(report.dual_trace[t]),
            ]);
        }
        summary.push(format!(
            "epsilon {epsilon}: final dp {:.6}",
            report.final_dp
        ));
    }
    io::write_rows(&args.out, &curves_header(), rows)?;
    Ok(summary)
}
