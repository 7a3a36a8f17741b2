//! Command-line front end: `estimate`, `simulate`, `trace` and `pattern`.
//!
//! Exit codes: 0 success, 2 input error, 3 solver failure, 4 config error.

pub mod experiment;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::glasso::SolverOptions;
use crate::metrics::{support, SUPPORT_TOL};
use crate::npn::estimate_npn;
use crate::penalty::{WeightKind, WeightSpec};
use crate::sequential::{run_sequence, SequenceConfig};
use crate::simgen::GraphFamily;

pub use experiment::{ExperimentConfig, LambdaGrid};

/// Overrides `--jobs` when set.
pub const THREADS_ENV: &str = "SEQGLASSO_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Input(String),
    Io(String),
    Solver(String),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    /// Solver failures map to 3, anything else raised while fitting data to 2.
    pub(crate) fn from_fit(e: Error) -> Self {
        match e.root() {
            Error::NotConverged { .. } | Error::NotPositiveDefinite { .. } => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(
    name = "seqglasso",
    version,
    about = "Sparse precision matrix estimation by sequentially reweighted graphical lasso"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a precision matrix from a data CSV.
    Estimate(EstimateArgs),
    /// Run a seeded simulation sweep over a lambda grid.
    Simulate(SimulateArgs),
    /// Per-stage error trace of the sequential estimator.
    Trace(TraceArgs),
    /// Spectral ratios of chain sparsity patterns.
    Pattern(PatternArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    Scad,
    Mcp,
    Lasso,
}

impl Penalty {
    pub fn kind(self) -> WeightKind {
        match self {
            Penalty::Scad => WeightKind::Scad,
            Penalty::Mcp => WeightKind::Mcp,
            Penalty::Lasso => WeightKind::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Random,
    Band,
    Chain,
    Star,
}

/// Validated weight spec; `lambda = 0` is allowed and means no penalty.
pub fn weight_spec(kind: WeightKind, lambda: f64, gamma: f64) -> Result<WeightSpec, CliError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(CliError::Config(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(WeightSpec::new(kind, 1.0, gamma)
        .map_err(CliError::config)?
        .with_lambda(lambda))
}

fn solver_options(tol: f64) -> Result<SolverOptions, CliError> {
    let opts = SolverOptions {
        kkt_tol: tol,
        ..SolverOptions::default()
    };
    opts.validate().map_err(CliError::config)?;
    Ok(opts)
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Data file: n rows, d numeric columns.
    pub input: PathBuf,
    /// The first line is a header.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = Penalty::Scad)]
    pub penalty: Penalty,
    #[arg(long, default_value_t = 2.1)]
    pub gamma: f64,
    /// Number of reweighted stages.
    #[arg(long, default_value_t = 4)]
    pub iters: usize,
    /// Rank-based (Kendall tau) correlation instead of Pearson.
    #[arg(long)]
    pub npn: bool,
    /// KKT tolerance of each solve.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Generator and run options shared by `simulate` and `trace`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Family::Band)]
    pub family: Family,
    /// Chain length or star size; defaults to d - 1.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 4)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Rank-based estimator; errors are measured against the inverse correlation.
    #[arg(long)]
    pub npn: bool,
    /// Use the shifted edge matrix as the covariance instead of the precision.
    #[arg(long)]
    pub literal_cov: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Minimum fraction of successful replicates for exit code 0.
    #[arg(long, default_value_t = 0.9)]
    pub min_success: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl ModelArgs {
    pub fn graph_family(&self) -> GraphFamily {
        let k = self.k.unwrap_or(self.d.saturating_sub(1));
        match self.family {
            Family::Random => GraphFamily::Random,
            Family::Band => GraphFamily::Band,
            Family::Chain => GraphFamily::Chain(k),
            Family::Star => GraphFamily::Star(k),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Penalty::Scad)]
    pub penalty: Penalty,
    /// Explicit comma-separated grid; overrides the log-spaced grid.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 15)]
    pub lambda_count: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_max: f64,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Penalty::Scad)]
    pub penalty: Penalty,
    /// Zero runs a single unpenalized stage.
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    #[arg(long, default_value_t = 4)]
    pub k_min: usize,
    #[arg(long, default_value_t = 50)]
    pub k_max: usize,
    #[arg(long, default_value_t = 150)]
    pub d: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 4 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("seqglasso: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(&args),
        Command::Simulate(args) => {
            let cfg = ExperimentConfig::from_simulate_args(&args)?;
            let pool = thread_pool(args.model.jobs)?;
            pool.install(|| experiment::cmd_simulate(&cfg))
        }
        Command::Trace(args) => {
            let cfg = ExperimentConfig::from_trace_args(&args)?;
            let pool = thread_pool(args.model.jobs)?;
            pool.install(|| experiment::cmd_trace(&cfg))
        }
        Command::Pattern(args) => cmd_pattern(&args),
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    let jobs = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        Err(_) => jobs,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(CliError::config)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct EstimateMeta<'a> {
    input: &'a Path,
    n: usize,
    d: usize,
    lambda: f64,
    penalty: Penalty,
    gamma: f64,
    iters: usize,
    npn: bool,
    tol: f64,
    centered: bool,
    per_stage_kkt: &'a [f64],
    per_stage_sweeps: &'a [usize],
    edges: usize,
    runtime_secs: f64,
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let weight = weight_spec(args.penalty.kind(), args.lambda, args.gamma)?;
    let cfg = SequenceConfig {
        weight,
        iters: args.iters,
        solver: solver_options(args.tol)?,
    };
    cfg.validate().map_err(CliError::config)?;

    let x = io::read_data_csv(&args.input, args.header)?;
    let start = Instant::now();
    let result = if args.npn {
        estimate_npn(&x, &cfg)
    } else {
        run_sequence(&x.centered_covariance(), &cfg)
    }
    .map_err(CliError::from_fit)?;
    let runtime_secs = start.elapsed().as_secs_f64();

    let theta = &result.theta_final;
    let edges: Vec<(usize, usize, f64)> = support(theta, SUPPORT_TOL)
        .iter()
        .map(|&(i, j)| (i, j, theta.get(i, j)))
        .collect();

    ensure_dir(&args.out)?;
    io::write_file(&args.out.join("theta.csv"), &io::matrix_to_csv(theta))?;
    io::write_file(
        &args.out.join("psi.csv"),
        &io::matrix_to_csv(result.final_psi()),
    )?;
    io::write_json(&args.out.join("edges.json"), &edges)?;
    io::write_json(
        &args.out.join("meta.json"),
        &EstimateMeta {
            input: &args.input,
            n: x.n(),
            d: x.d(),
            lambda: args.lambda,
            penalty: args.penalty,
            gamma: args.gamma,
            iters: args.iters,
            npn: args.npn,
            tol: args.tol,
            centered: !args.npn,
            per_stage_kkt: &result.per_stage_kkt,
            per_stage_sweeps: &result.per_stage_sweeps,
            edges: edges.len(),
            runtime_secs,
        },
    )
}

/// One row of `pattern.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRow {
    pub k: usize,
    pub s_k: usize,
    pub spectral_norm: f64,
    pub ratio: f64,
}

/// Chain-model sparsity patterns for `k_min..=k_max` in dimension `d`.
pub fn pattern_rows(k_min: usize, k_max: usize, d: usize) -> Result<Vec<PatternRow>, CliError> {
    if k_min == 0 || k_min > k_max {
        return Err(CliError::Config(format!(
            "need 1 <= k-min <= k-max, got {k_min}..{k_max}"
        )));
    }
    if k_max + 1 > d {
        return Err(CliError::Config(format!(
            "k-max + 1 = {} exceeds d = {d}",
            k_max + 1
        )));
    }
    (k_min..=k_max)
        .map(|k| {
            let model = crate::simgen::model_for(GraphFamily::Chain(k), d, 0, false)
                .map_err(CliError::config)?;
            let pattern = crate::metrics::sparsity_pattern(&model.theta_true, SUPPORT_TOL);
            let s_k = 2 * k;
            let spectral_norm = crate::spd::spectral_norm(&pattern);
            Ok(PatternRow {
                k,
                s_k,
                spectral_norm,
                ratio: crate::metrics::pattern_ratio(&pattern, s_k),
            })
        })
        .collect()
}

pub fn cmd_pattern(args: &PatternArgs) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = pattern_rows(args.k_min, args.k_max, args.d)?
        .into_iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.s_k.to_string(),
                io::fmt_f64(r.spectral_norm),
                io::fmt_f64(r.ratio),
            ]
        })
        .collect();
    ensure_dir(&args.out)?;
    io::write_table(
        &args.out.join("pattern.csv"),
        &["k", "s_k", "spectral_norm", "ratio"],
        &rows,
    )
}
