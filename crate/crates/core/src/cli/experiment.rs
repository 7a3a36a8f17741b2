//! Seeded simulation sweeps and contraction traces.
//!
//! Work runs in parallel on the current rayon pool. Every replicate draws its
//! data from its own stream of the seed and results are collected in a fixed
//! order, so output files do not depend on scheduling.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::{ensure_dir, io, weight_spec, CliError, ModelArgs, Penalty, SimulateArgs, TraceArgs};
use crate::error::Result;
use crate::glasso::{self, SolverOptions};
use crate::metrics::{norm_errors, support, tpr_fpr, SUPPORT_TOL};
use crate::npn::rank_correlation;
use crate::penalty::{WeightKind, WeightSpec};
use crate::sequential::{
    correlation_step, rescale_to_concentration, run_on_correlation, SequenceConfig,
};
use crate::simgen::{model_for, sample_gaussian, GraphFamily, ModelSpec, SimRng};
use crate::spd::SymMatrix;

pub const METRICS_HEADER: [&str; 11] = [
    "rep",
    "lambda",
    "method",
    "tpr",
    "fpr",
    "frob_err_theta",
    "spec_err_theta",
    "frob_err_psi",
    "stages_run",
    "seed",
    "status",
];

pub const SUMMARY_HEADER: [&str; 8] = [
    "lambda",
    "method",
    "reps_ok",
    "tpr",
    "fpr",
    "frob_err_theta",
    "spec_err_theta",
    "frob_err_psi",
];

pub const TRACE_HEADER: [&str; 9] = [
    "rep",
    "stage",
    "frob_err_psi",
    "kkt_residual",
    "active_edges",
    "edges_added",
    "edges_removed",
    "seed",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum LambdaGrid {
    Explicit(Vec<f64>),
    LogSpaced { count: usize, min: f64, max: f64 },
}

impl LambdaGrid {
    /// Grid points in ascending order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = match *self {
            LambdaGrid::Explicit(ref v) => v.clone(),
            LambdaGrid::LogSpaced { count, min, max } => {
                if count == 1 {
                    vec![min]
                } else {
                    let (a, b) = (min.ln(), max.ln());
                    (0..count)
                        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                        .collect()
                }
            }
        };
        v.sort_by(f64::total_cmp);
        v
    }

    fn validate(&self) -> std::result::Result<(), CliError> {
        if let LambdaGrid::LogSpaced { count, min, max } = *self {
            if count == 0 || !(min > 0.0 && min <= max && max.is_finite()) {
                return Err(CliError::Config(format!(
                    "log-spaced grid needs count >= 1 and 0 < min <= max, got {count} x [{min}, {max}]"
                )));
            }
        }
        let v = self.values();
        if v.is_empty() || v.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(CliError::Config(
                "lambda grid must be nonempty and positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub family: GraphFamily,
    pub d: usize,
    pub n: usize,
    pub reps: usize,
    pub lambda_grid: LambdaGrid,
    pub weight: WeightKind,
    pub gamma: f64,
    pub iters: usize,
    pub seed: u64,
    pub npn: bool,
    pub literal_cov: bool,
    pub tol: f64,
    pub min_success: f64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Defaults of the `simulate` command for the given setting.
    pub fn new(
        family: GraphFamily,
        d: usize,
        n: usize,
        reps: usize,
        out: impl Into<PathBuf>,
    ) -> Self {
        Self {
            family,
            d,
            n,
            reps,
            lambda_grid: LambdaGrid::LogSpaced {
                count: 15,
                min: 0.01,
                max: 1.0,
            },
            weight: WeightKind::Scad,
            gamma: 2.1,
            iters: 4,
            seed: 1,
            npn: false,
            literal_cov: false,
            tol: SolverOptions::default().kkt_tol,
            min_success: 0.9,
            out: out.into(),
        }
    }

    fn from_model_args(m: &ModelArgs, weight: WeightKind, grid: LambdaGrid) -> Self {
        Self {
            family: m.graph_family(),
            d: m.d,
            n: m.n,
            reps: m.reps,
            lambda_grid: grid,
            weight,
            gamma: m.gamma,
            iters: m.iters,
            seed: m.seed,
            npn: m.npn,
            literal_cov: m.literal_cov,
            tol: m.tol,
            min_success: m.min_success,
            out: m.out.clone(),
        }
    }

    pub fn from_simulate_args(a: &SimulateArgs) -> std::result::Result<Self, CliError> {
        if a.penalty == Penalty::Lasso {
            return Err(CliError::Config(
                "simulate compares scad or mcp against the lasso baseline; --penalty lasso is not a sequence".into(),
            ));
        }
        let grid = match &a.lambdas {
            Some(v) => LambdaGrid::Explicit(v.clone()),
            None => LambdaGrid::LogSpaced {
                count: a.lambda_count,
                min: a.lambda_min,
                max: a.lambda_max,
            },
        };
        let cfg = Self::from_model_args(&a.model, a.penalty.kind(), grid);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Single-lambda config for `trace`; zero is allowed here.
    pub fn from_trace_args(a: &TraceArgs) -> std::result::Result<Self, CliError> {
        let mut cfg =
            Self::from_model_args(&a.model, a.penalty.kind(), LambdaGrid::Explicit(vec![1.0]));
        cfg.validate()?;
        weight_spec(cfg.weight, a.lambda, cfg.gamma)?;
        cfg.lambda_grid = LambdaGrid::Explicit(vec![a.lambda]);
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), CliError> {
        if self.reps < 1 {
            return Err(CliError::Config("reps must be >= 1".into()));
        }
        if self.d < 2 || self.n < 2 {
            return Err(CliError::Config(format!(
                "need d, n >= 2, got d = {}, n = {}",
                self.d, self.n
            )));
        }
        if self.iters < 1 {
            return Err(CliError::Config("iters must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_success) {
            return Err(CliError::Config("min-success must lie in [0, 1]".into()));
        }
        self.lambda_grid.validate()?;
        weight_spec(self.weight, 1.0, self.gamma)?;
        self.solver().validate().map_err(CliError::config)?;
        Ok(())
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            kkt_tol: self.tol,
            ..SolverOptions::default()
        }
    }

    pub fn sequence(&self, lambda: f64) -> std::result::Result<SequenceConfig, CliError> {
        let iters = if lambda == 0.0 { 1 } else { self.iters };
        Ok(SequenceConfig {
            weight: weight_spec(self.weight, lambda, self.gamma)?,
            iters,
            solver: self.solver(),
        })
    }

    pub fn model(&self) -> std::result::Result<ModelSpec, CliError> {
        model_for(self.family, self.d, self.seed, self.literal_cov).map_err(CliError::config)
    }

    fn seq_label(&self) -> &'static str {
        match self.weight {
            WeightKind::Mcp => "seq-mcp",
            WeightKind::Constant => "seq-lasso",
            WeightKind::Scad => "seq-scad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
        }
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub rep: usize,
    pub lambda: f64,
    pub method: &'static str,
    pub tpr: f64,
    pub fpr: f64,
    pub frob_err_theta: f64,
    pub spec_err_theta: f64,
    pub frob_err_psi: f64,
    pub stages_run: usize,
    pub seed: u64,
    pub status: Status,
}

impl MetricRow {
    fn to_record(&self) -> Vec<String> {
        vec![
            self.rep.to_string(),
            io::fmt_f64(self.lambda),
            self.method.to_string(),
            io::fmt_f64(self.tpr),
            io::fmt_f64(self.fpr),
            io::fmt_f64(self.frob_err_theta),
            io::fmt_f64(self.spec_err_theta),
            io::fmt_f64(self.frob_err_psi),
            self.stages_run.to_string(),
            self.seed.to_string(),
            self.status.as_str().to_string(),
        ]
    }
}

/// Mean of the successful rows for one `(lambda, method)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub lambda: f64,
    pub method: &'static str,
    pub reps_ok: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub frob_err_theta: f64,
    pub spec_err_theta: f64,
    pub frob_err_psi: f64,
}

impl SummaryRow {
    fn to_record(&self) -> Vec<String> {
        vec![
            io::fmt_f64(self.lambda),
            self.method.to_string(),
            self.reps_ok.to_string(),
            io::fmt_f64(self.tpr),
            io::fmt_f64(self.fpr),
            io::fmt_f64(self.frob_err_theta),
            io::fmt_f64(self.spec_err_theta),
            io::fmt_f64(self.frob_err_psi),
        ]
    }
}

/// Standardized input of one replicate.
struct Replicate {
    c_hat: SymMatrix,
    w_hat: Vec<f64>,
}

/// Targets the estimates are scored against.
struct Truth<'a> {
    model: &'a ModelSpec,
    psi: SymMatrix,
    theta: SymMatrix,
}

impl<'a> Truth<'a> {
    fn new(model: &'a ModelSpec, npn: bool) -> Self {
        let psi = model.psi_true();
        // The rank-based estimator has no scale, so it targets the inverse correlation.
        let theta = if npn {
            psi.clone()
        } else {
            model.theta_true.clone()
        };
        Self { model, psi, theta }
    }
}

fn prepare(cfg: &ExperimentConfig, model: &ModelSpec, rep: usize) -> Result<Replicate> {
    let mut rng = SimRng::for_replicate(cfg.seed, rep as u64);
    let x = sample_gaussian(&model.sigma_true, cfg.n, &mut rng)?;
    if cfg.npn {
        Ok(Replicate {
            c_hat: rank_correlation(&x)?,
            w_hat: vec![1.0; cfg.d],
        })
    } else {
        let (c_hat, w_hat) = correlation_step(&x.second_moment())?;
        Ok(Replicate { c_hat, w_hat })
    }
}

struct Scores {
    tpr: f64,
    fpr: f64,
    frob_err_theta: f64,
    spec_err_theta: f64,
    frob_err_psi: f64,
}

fn score(truth: &Truth, psi: &SymMatrix, theta: &SymMatrix) -> Result<Scores> {
    let est = support(theta, SUPPORT_TOL);
    let (tpr, fpr) = tpr_fpr(&est, &truth.model.edges, truth.model.d);
    let (frob_err_theta, spec_err_theta) = norm_errors(theta, &truth.theta)?;
    Ok(Scores {
        tpr,
        fpr,
        frob_err_theta,
        spec_err_theta,
        frob_err_psi: psi.sub(&truth.psi)?.frobenius_norm(),
    })
}

fn row(
    cfg: &ExperimentConfig,
    rep: usize,
    lambda: f64,
    method: &'static str,
    outcome: Result<(Scores, usize)>,
) -> MetricRow {
    let (s, stages_run, status) = match outcome {
        Ok((s, stages)) => (s, stages, Status::Ok),
        Err(_) => (
            Scores {
                tpr: f64::NAN,
                fpr: f64::NAN,
                frob_err_theta: f64::NAN,
                spec_err_theta: f64::NAN,
                frob_err_psi: f64::NAN,
            },
            0,
            Status::Failed,
        ),
    };
    MetricRow {
        rep,
        lambda,
        method,
        tpr: s.tpr,
        fpr: s.fpr,
        frob_err_theta: s.frob_err_theta,
        spec_err_theta: s.spec_err_theta,
        frob_err_psi: s.frob_err_psi,
        stages_run,
        seed: cfg.seed,
        status,
    }
}

fn run_method(truth: &Truth, rep: &Replicate, seq: &SequenceConfig) -> Result<(Scores, usize)> {
    let r = run_on_correlation(&rep.c_hat, rep.w_hat.clone(), seq)?;
    Ok((
        score(truth, r.final_psi(), &r.theta_final)?,
        r.psi_stages.len(),
    ))
}

fn run_oracle(truth: &Truth, rep: &Replicate, opts: &SolverOptions) -> Result<(Scores, usize)> {
    let fit = glasso::solve_oracle(&rep.c_hat, &truth.model.edges, opts)?;
    let theta = rescale_to_concentration(&fit.psi, &rep.w_hat)?;
    Ok((score(truth, &fit.psi, &theta)?, 1))
}

/// Output of a simulation sweep, rows sorted by `(rep, lambda, method)`.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub model: ModelSpec,
    pub rows: Vec<MetricRow>,
    pub summary: Vec<SummaryRow>,
    /// Replicates whose every row succeeded.
    pub reps_ok: usize,
}

pub fn simulate(cfg: &ExperimentConfig) -> std::result::Result<SimulationOutput, CliError> {
    cfg.validate()?;
    let model = cfg.model()?;
    let truth = Truth::new(&model, cfg.npn);
    let grid = cfg.lambda_grid.values();
    let seq_label = cfg.seq_label();

    let reps: Vec<Result<Replicate>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| prepare(cfg, &model, r))
        .collect();

    // Task `li == grid.len()` is the lambda-free oracle fit.
    let tasks: Vec<(usize, usize)> = (0..cfg.reps)
        .flat_map(|r| (0..=grid.len()).map(move |li| (r, li)))
        .collect();
    let results: Vec<Vec<MetricRow>> = tasks
        .par_iter()
        .map(|&(r, li)| {
            let data = reps[r].as_ref().map_err(Clone::clone);
            if li == grid.len() {
                let o = data.and_then(|d| run_oracle(&truth, d, &cfg.solver()));
                return vec![row(cfg, r, f64::NAN, "oracle", o)];
            }
            let lambda = grid[li];
            let seq = cfg.sequence(lambda).expect("validated config");
            let base = SequenceConfig {
                weight: WeightSpec::new(WeightKind::Constant, 1.0, cfg.gamma)
                    .expect("constant weight")
                    .with_lambda(lambda),
                iters: 1,
                solver: cfg.solver(),
            };
            vec![
                row(
                    cfg,
                    r,
                    lambda,
                    seq_label,
                    data.clone().and_then(|d| run_method(&truth, d, &seq)),
                ),
                row(
                    cfg,
                    r,
                    lambda,
                    "glasso-baseline",
                    data.and_then(|d| run_method(&truth, d, &base)),
                ),
            ]
        })
        .collect();

    let mut rows = Vec::with_capacity(cfg.reps * grid.len() * 3);
    for (r, chunk) in results.chunks(grid.len() + 1).enumerate() {
        let oracle = &chunk[grid.len()][0];
        for (li, pair) in chunk[..grid.len()].iter().enumerate() {
            let mut cell = pair.clone();
            cell.push(MetricRow {
                lambda: grid[li],
                ..oracle.clone()
            });
            cell.sort_by(|a, b| a.method.cmp(b.method));
            debug_assert!(cell.iter().all(|m| m.rep == r));
            rows.extend(cell);
        }
    }

    let reps_ok = (0..cfg.reps)
        .filter(|&r| {
            rows.iter()
                .filter(|m| m.rep == r)
                .all(|m| m.status == Status::Ok)
        })
        .count();
    let summary = summarize(&rows);
    Ok(SimulationOutput {
        model,
        rows,
        summary,
        reps_ok,
    })
}

/// Per-`(lambda, method)` means over successful rows, accumulated in row order.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for m in rows {
        let idx = match out
            .iter()
            .position(|s| s.lambda.to_bits() == m.lambda.to_bits() && s.method == m.method)
        {
            Some(i) => i,
            None => {
                out.push(SummaryRow {
                    lambda: m.lambda,
                    method: m.method,
                    reps_ok: 0,
                    tpr: 0.0,
                    fpr: 0.0,
                    frob_err_theta: 0.0,
                    spec_err_theta: 0.0,
                    frob_err_psi: 0.0,
                });
                out.len() - 1
            }
        };
        if m.status == Status::Ok {
            let s = &mut out[idx];
            s.reps_ok += 1;
            s.tpr += m.tpr;
            s.fpr += m.fpr;
            s.frob_err_theta += m.frob_err_theta;
            s.spec_err_theta += m.spec_err_theta;
            s.frob_err_psi += m.frob_err_psi;
        }
    }
    for s in &mut out {
        let k = s.reps_ok as f64;
        s.tpr /= k;
        s.fpr /= k;
        s.frob_err_theta /= k;
        s.spec_err_theta /= k;
        s.frob_err_psi /= k;
    }
    out.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.method.cmp(b.method)));
    out
}

fn check_success(ok: usize, cfg: &ExperimentConfig) -> std::result::Result<(), CliError> {
    let frac = ok as f64 / cfg.reps as f64;
    if frac < cfg.min_success {
        return Err(CliError::Solver(format!(
            "only {ok} of {} replicates succeeded (threshold {})",
            cfg.reps, cfg.min_success
        )));
    }
    Ok(())
}

/// Writes `metrics.csv`, `summary.csv`, `model.json` and `config.json`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> std::result::Result<(), CliError> {
    let out = simulate(cfg)?;
    ensure_dir(&cfg.out)?;
    let metrics: Vec<Vec<String>> = out.rows.iter().map(MetricRow::to_record).collect();
    io::write_table(&cfg.out.join("metrics.csv"), &METRICS_HEADER, &metrics)?;
    let summary: Vec<Vec<String>> = out.summary.iter().map(SummaryRow::to_record).collect();
    io::write_table(&cfg.out.join("summary.csv"), &SUMMARY_HEADER, &summary)?;
    io::write_file(&cfg.out.join("model.json"), &(out.model.to_json() + "\n"))?;
    io::write_json(&cfg.out.join("config.json"), cfg)?;
    check_success(out.reps_ok, cfg)
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub rep: usize,
    pub stage: usize,
    pub frob_err_psi: f64,
    pub kkt_residual: f64,
    pub active_edges: usize,
    pub edges_added: usize,
    pub edges_removed: usize,
    pub seed: u64,
    pub status: Status,
}

impl TraceRow {
    fn to_record(&self) -> Vec<String> {
        vec![
            self.rep.to_string(),
            self.stage.to_string(),
            io::fmt_f64(self.frob_err_psi),
            io::fmt_f64(self.kkt_residual),
            self.active_edges.to_string(),
            self.edges_added.to_string(),
            self.edges_removed.to_string(),
            self.seed.to_string(),
            self.status.as_str().to_string(),
        ]
    }
}

fn trace_rep(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    psi_true: &SymMatrix,
    rep: usize,
) -> Result<Vec<TraceRow>> {
    let data = prepare(cfg, model, rep)?;
    let lambda = cfg.lambda_grid.values()[0];
    let seq = cfg.sequence(lambda).expect("validated config");
    let r = run_on_correlation(&data.c_hat, data.w_hat, &seq)?;
    let changes = r.support_changes(SUPPORT_TOL);
    r.psi_stages
        .iter()
        .enumerate()
        .map(|(l, psi)| {
            let (added, removed) = match l {
                0 => (0, 0),
                _ => (changes[l - 1].0.len(), changes[l - 1].1.len()),
            };
            Ok(TraceRow {
                rep,
                stage: l + 1,
                frob_err_psi: psi.sub(psi_true)?.frobenius_norm(),
                kkt_residual: r.per_stage_kkt[l],
                active_edges: support(psi, SUPPORT_TOL).len(),
                edges_added: added,
                edges_removed: removed,
                seed: cfg.seed,
                status: Status::Ok,
            })
        })
        .collect()
}

/// Per-stage rows for every replicate; a failed replicate yields one
/// `failed` row with stage 0.
pub fn trace(cfg: &ExperimentConfig) -> std::result::Result<Vec<TraceRow>, CliError> {
    let model = cfg.model()?;
    let psi_true = model.psi_true();
    let per_rep: Vec<Vec<TraceRow>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            trace_rep(cfg, &model, &psi_true, rep).unwrap_or_else(|_| {
                vec![TraceRow {
                    rep,
                    stage: 0,
                    frob_err_psi: f64::NAN,
                    kkt_residual: f64::NAN,
                    active_edges: 0,
                    edges_added: 0,
                    edges_removed: 0,
                    seed: cfg.seed,
                    status: Status::Failed,
                }]
            })
        })
        .collect();
    Ok(per_rep.into_iter().flatten().collect())
}

pub fn cmd_trace(cfg: &ExperimentConfig) -> std::result::Result<(), CliError> {
    let rows = trace(cfg)?;
    ensure_dir(&cfg.out)?;
    let records: Vec<Vec<String>> = rows.iter().map(TraceRow::to_record).collect();
    io::write_table(&cfg.out.join("trace.csv"), &TRACE_HEADER, &records)?;
    let ok = rows
        .iter()
        .filter(|r| r.status == Status::Ok && r.stage == 1)
        .count();
    check_success(ok, cfg)
}
