//! Weight functions and adaptive penalty matrices.
//!
//! A weight function maps the magnitude of a previous estimate entry to a
//! multiplier in `[0, 1]`; the next convex program penalizes that entry with
//! `lambda * w(|psi_ij|)`. Folded-concave penalties (SCAD, MCP) give weights
//! that vanish for large entries, which removes the shrinkage bias of the
//! plain lasso on strong edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Scad,
    Mcp,
    /// Constant weight 1: every stage is the plain graphical lasso.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub lambda: f64,
    /// Ignored for [`WeightKind::Constant`].
    pub gamma: f64,
}

impl WeightSpec {
    pub fn new(kind: WeightKind, lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        match kind {
            WeightKind::Scad if !(gamma > 2.0) => {
                return Err(Error::invalid(format!(
                    "SCAD requires gamma > 2, got {gamma}"
                )))
            }
            WeightKind::Mcp if !(gamma > 1.0) => {
                return Err(Error::invalid(format!(
                    "MCP requires gamma > 1, got {gamma}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            lambda,
            gamma,
        })
    }

    pub fn scad(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(WeightKind::Scad, lambda, gamma)
    }

    pub fn mcp(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(WeightKind::Mcp, lambda, gamma)
    }

    pub fn constant(lambda: f64) -> Result<Self> {
        Self::new(WeightKind::Constant, lambda, 0.0)
    }

    /// Same weight function at a different `lambda`, without re-validation.
    ///
    /// `lambda = 0` is allowed here; it produces an all-zero penalty and is
    /// how the unpenalized fit is expressed.
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }
}

/// `w(t)`, evaluated at `|t|`.
pub fn weight(spec: &WeightSpec, t: f64) -> f64 {
    let t = t.abs();
    let lam = spec.lambda;
    let gam = spec.gamma;
    match spec.kind {
        WeightKind::Constant => 1.0,
        WeightKind::Scad => {
            if t <= lam {
                1.0
            } else if t < gam * lam {
                (gam * lam - t) / ((gam - 1.0) * lam)
            } else {
                0.0
            }
        }
        WeightKind::Mcp => (1.0 - t / (gam * lam)).max(0.0),
    }
}

/// Off-diagonal penalty levels; the diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyMatrix(SymMatrix);

impl PenaltyMatrix {
    /// `lambda` on every off-diagonal entry.
    pub fn uniform(dim: usize, lambda: f64) -> Self {
        Self(SymMatrix::from_fn(
            dim,
            |i, j| if i == j { 0.0 } else { lambda },
        ))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(SymMatrix::zeros(dim))
    }

    /// Takes the off-diagonal part of `m`; entries must be nonnegative.
    pub fn from_matrix(m: SymMatrix) -> Result<Self> {
        let d = m.dim();
        if m.as_slice().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "penalty entries must be finite and nonnegative",
            ));
        }
        Ok(Self(SymMatrix::from_fn(d, |i, j| {
            if i == j {
                0.0
            } else {
                m.get(i, j)
            }
        })))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        Self(self.0.permute(perm))
    }
}

/// `Lambda_ij = lambda * w(|prev_ij|)` off the diagonal, zero on it.
pub fn build_penalty_matrix(spec: &WeightSpec, prev: &SymMatrix) -> PenaltyMatrix {
    PenaltyMatrix(SymMatrix::from_fn(prev.dim(), |i, j| {
        if i == j {
            0.0
        } else {
            spec.lambda * weight(spec, prev.get(i, j))
        }
    }))
}

/// Outcome of [`check_weight_class`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightClassReport {
    /// Smallest `alpha` with `w(alpha * lambda) = 0`, or `None` when the
    /// weight never vanishes (the lasso baseline).
    pub alpha: Option<f64>,
    pub grid_points: usize,
}

impl WeightClassReport {
    pub fn reaches_zero(&self) -> bool {
        self.alpha.is_some()
    }
}

const CLASS_GRID: usize = 1000;

/// Checks that `w` is nonincreasing in `|t|`, lies in `[0, 1]`, equals 1 for
/// `t <= 0`, and locates where it first reaches zero.
pub fn check_weight_class(spec: &WeightSpec) -> Result<WeightClassReport> {
    let lam = spec.lambda;
    let half_width = 2.0 * spec.gamma.max(1.0) * lam;
    let step = 2.0 * half_width / (CLASS_GRID - 1) as f64;
    let grid: Vec<f64> = (0..CLASS_GRID)
        .map(|k| -half_width + k as f64 * step)
        .collect();

    // The class member is `t -> w(t)` for `t > 0` and 1 otherwise; since
    // weights are applied to `|t|`, agreement at the origin is what matters.
    let at_zero = weight(spec, 0.0);
    if at_zero != 1.0 {
        return Err(Error::ClassViolation {
            t: 0.0,
            reason: format!("w = {at_zero} but must be 1 for t <= 0"),
        });
    }
    for &t in &grid {
        let w = weight(spec, t);
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::ClassViolation {
                t,
                reason: format!("w = {w} outside [0, 1]"),
            });
        }
    }

    let mut mags: Vec<f64> = grid.iter().map(|t| t.abs()).collect();
    mags.sort_by(f64::total_cmp);
    for pair in mags.windows(2) {
        if weight(spec, pair[1]) > weight(spec, pair[0]) {
            return Err(Error::ClassViolation {
                t: pair[1],
                reason: "w increases in |t|".into(),
            });
        }
    }

    let alpha = mags.iter().position(|&t| weight(spec, t) == 0.0).map(|k| {
        // Bisect between the last positive grid point and the first zero.
        let mut hi = mags[k];
        let mut lo = if k == 0 { 0.0 } else { mags[k - 1] };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if weight(spec, mid) == 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi / lam
    });

    Ok(WeightClassReport {
        alpha,
        grid_points: CLASS_GRID,
    })
}
