//! The sequential convex approximation.
//!
//! 1. Standardize the sample covariance to a correlation matrix.
//! 2. Solve `T` weighted graphical lasso programs; the first uses the uniform
//!    penalty `lambda`, each later one reweights by the previous estimate.
//! 3. Undo the standardization to get the concentration matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::glasso::{self, SolverOptions};
use crate::graph::EdgeSet;
use crate::metrics;
use crate::penalty::{build_penalty_matrix, PenaltyMatrix, WeightSpec};
use crate::spd::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceConfig {
    pub weight: WeightSpec,
    pub iters: usize,
    pub solver: SolverOptions,
}

impl SequenceConfig {
    /// Four stages with default solver options.
    pub fn new(weight: WeightSpec) -> Self {
        Self {
            weight,
            iters: 4,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.iters = iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::invalid("number of stages must be at least 1"));
        }
        if !(self.weight.lambda >= 0.0) || !self.weight.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and nonnegative"));
        }
        self.solver.validate()
    }
}

/// `ceil(log log d)`, at least 1: the stage count suggested by the
/// contraction analysis.
pub fn theoretical_stages(d: usize) -> usize {
    let ll = (d.max(3) as f64).ln().ln();
    (ll.ceil() as usize).max(1)
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    /// One estimate per stage.
    pub psi_stages: Vec<SymMatrix>,
    /// `penalties[l]` produced `psi_stages[l]`.
    pub penalties: Vec<PenaltyMatrix>,
    pub theta_final: SymMatrix,
    /// Marginal standard deviations used for standardization.
    pub w_hat: Vec<f64>,
    pub per_stage_kkt: Vec<f64>,
    pub per_stage_sweeps: Vec<usize>,
}

impl SequenceResult {
    pub fn final_psi(&self) -> &SymMatrix {
        self.psi_stages.last().expect("at least one stage")
    }

    /// Edges present at stage `l + 1` but not at stage `l`, for each `l`.
    pub fn support_changes(&self, tol: f64) -> Vec<(EdgeSet, EdgeSet)> {
        self.psi_stages
            .windows(2)
            .map(|pair| {
                let before = metrics::support(&pair[0], tol);
                let after = metrics::support(&pair[1], tol);
                (after.difference(&before), before.difference(&after))
            })
            .collect()
    }
}

/// Returns `(c_hat, w_hat)` with `w_hat_i = sqrt(sigma_ii)` and
/// `c_hat = diag(1/w) sigma diag(1/w)`; the diagonal of `c_hat` is exactly 1.
pub fn correlation_step(sigma_hat: &SymMatrix) -> Result<(SymMatrix, Vec<f64>)> {
    let diag = sigma_hat.diag();
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "variance of variable {i} is {} but must be positive",
            diag[i]
        )));
    }
    let w: Vec<f64> = diag.iter().map(|v| v.sqrt()).collect();
    let d = sigma_hat.dim();
    let c = SymMatrix::from_fn(d, |i, j| {
        if i == j {
            1.0
        } else {
            sigma_hat.get(i, j) / (w[i] * w[j])
        }
    });
    Ok((c, w))
}

/// `diag(1/w) psi diag(1/w)`.
pub fn rescale_to_concentration(psi: &SymMatrix, w_hat: &[f64]) -> Result<SymMatrix> {
    let inv: Vec<f64> = w_hat.iter().map(|w| 1.0 / w).collect();
    psi.scale_sym(&inv)
}

pub fn run_sequence(sigma_hat: &SymMatrix, cfg: &SequenceConfig) -> Result<SequenceResult> {
    let (c_hat, w_hat) = correlation_step(sigma_hat)?;
    run_on_correlation(&c_hat, w_hat, cfg)
}

/// Steps 2 and 3 on an already standardized matrix.
pub fn run_on_correlation(
    c_hat: &SymMatrix,
    w_hat: Vec<f64>,
    cfg: &SequenceConfig,
) -> Result<SequenceResult> {
    cfg.validate()?;
    let d = c_hat.dim();
    let mut psi_stages: Vec<SymMatrix> = Vec::with_capacity(cfg.iters);
    let mut penalties = Vec::with_capacity(cfg.iters);
    let mut per_stage_kkt = Vec::with_capacity(cfg.iters);
    let mut per_stage_sweeps = Vec::with_capacity(cfg.iters);

    for stage in 1..=cfg.iters {
        let lam = match psi_stages.last() {
            None => PenaltyMatrix::uniform(d, cfg.weight.lambda),
            Some(prev) => build_penalty_matrix(&cfg.weight, prev),
        };
        let fit = glasso::solve_from(c_hat, &lam, &cfg.solver, psi_stages.last()).map_err(|e| {
            Error::Stage {
                stage,
                source: Box::new(e),
            }
        })?;
        psi_stages.push(fit.psi);
        penalties.push(lam);
        per_stage_kkt.push(fit.kkt_residual);
        per_stage_sweeps.push(fit.sweeps);
    }

    let theta_final = rescale_to_concentration(psi_stages.last().expect("iters >= 1"), &w_hat)?;
    Ok(SequenceResult {
        psi_stages,
        penalties,
        theta_final,
        w_hat,
        per_stage_kkt,
        per_stage_sweeps,
    })
}

/// Frobenius distance of every stage to `psi_true`.
pub fn contraction_trace(result: &SequenceResult, psi_true: &SymMatrix) -> Result<Vec<f64>> {
    result
        .psi_stages
        .iter()
        .map(|p| Ok(p.sub(psi_true)?.frobenius_norm()))
        .collect()
}
