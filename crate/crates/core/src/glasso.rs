//! Weighted graphical lasso.
//!
//! Minimizes
//!
//! ```text
//! <psi, c> - log det psi + sum_{i != j} lam_ij |psi_ij|
//! ```
//!
//! over positive definite `psi` by primal block coordinate descent. Each
//! block is one column: with `psi` partitioned as `[[P11, p12], [p12^T, p22]]`
//! and `U = P11^{-1}`, the exact minimizer over `(p12, p22)` is
//!
//! ```text
//! p12 = argmin_b  1/2 c22 b^T U b + c12^T b + sum_k lam_kj |b_k|
//! p22 = 1/c22 + p12^T U p12
//! ```
//!
//! The inner lasso is solved by cyclic coordinate descent. `U` and the new
//! inverse are obtained from the maintained inverse `W = psi^{-1}` by the
//! block-inverse identities, so a column update costs `O(d^2)` plus the inner
//! iterations. Every block step is an exact minimization, so the objective
//! is nonincreasing and `psi` stays positive definite.
//!
//! Convergence is certified by the KKT residual, see [`kkt_residual`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::EdgeSet;
use crate::penalty::PenaltyMatrix;
use crate::spd::{cholesky, inverse_from_cholesky, inverse_spd, LowerTriangular, SymMatrix};

/// Entries with magnitude at or below this are treated as zero by the sign
/// logic in the KKT residual.
pub const ZERO_TOL: f64 = 1e-10;

/// Relative objective change per sweep below which a sweep counts as idle.
const STALL_REL_CHANGE: f64 = 1e-10;
/// Consecutive idle sweeps (without KKT progress) before giving up.
const STALL_SWEEPS: usize = 5;
const MAX_INNER_PASSES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Coordinate descent stops when no coordinate moves by more than this.
    pub inner_tol: f64,
    /// Ridge added to a non-positive-definite input before solving.
    pub ridge_on_indefinite: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_sweeps: 500,
            inner_tol: 1e-9,
            ridge_on_indefinite: 1e-3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tol > 0.0) {
            return Err(Error::invalid("kkt_tol must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps must be at least 1"));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::invalid("inner_tol must be positive"));
        }
        if !(self.ridge_on_indefinite >= 0.0) {
            return Err(Error::invalid("ridge_on_indefinite must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GlassoResult {
    pub psi: SymMatrix,
    /// `psi^{-1}`.
    pub sigma: SymMatrix,
    pub objective: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective at the initial point followed by one value per sweep.
    pub objective_trace: Vec<f64>,
    /// Ridge applied to an indefinite input, if any.
    pub ridge_applied: Option<f64>,
}

pub fn objective(psi: &SymMatrix, c: &SymMatrix, lam: &PenaltyMatrix) -> Result<f64> {
    check_dims(psi, c, lam)?;
    let l = cholesky(psi)?;
    Ok(objective_from_factor(psi, &l, c, lam))
}

fn objective_from_factor(
    psi: &SymMatrix,
    l: &LowerTriangular,
    c: &SymMatrix,
    lam: &PenaltyMatrix,
) -> f64 {
    let d = psi.dim();
    let log_det = 2.0 * (0..d).map(|i| l.get(i, i).ln()).sum::<f64>();
    let mut penalty = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                penalty += lam.get(i, j) * psi.get(i, j).abs();
            }
        }
    }
    psi.inner(c) - log_det + penalty
}

/// Maximal violation of the optimality conditions at `psi`.
///
/// With `G = c - psi^{-1}`: diagonal entries need `G_ii = 0`; nonzero
/// off-diagonal entries need `G_ij + lam_ij sign(psi_ij) = 0`; zero entries
/// need `|G_ij| <= lam_ij`.
pub fn kkt_residual(psi: &SymMatrix, c: &SymMatrix, lam: &PenaltyMatrix) -> Result<f64> {
    check_dims(psi, c, lam)?;
    let sigma = inverse_spd(psi)?;
    Ok(kkt_from_inverse(psi, &sigma, c, lam, None))
}

/// `free`, when given, marks the off-diagonal entries that are optimization
/// variables; fixed entries are excluded from the residual.
fn kkt_from_inverse(
    psi: &SymMatrix,
    sigma: &SymMatrix,
    c: &SymMatrix,
    lam: &PenaltyMatrix,
    free: Option<&[bool]>,
) -> f64 {
    let d = psi.dim();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in i..d {
            let g = c.get(i, j) - sigma.get(i, j);
            let v = if i == j {
                g.abs()
            } else {
                if let Some(mask) = free {
                    if !mask[i * d + j] {
                        continue;
                    }
                }
                let p = psi.get(i, j);
                let l = lam.get(i, j);
                if p.abs() > ZERO_TOL {
                    (g + l * p.signum()).abs()
                } else {
                    (g.abs() - l).max(0.0)
                }
            };
            worst = worst.max(v);
        }
    }
    worst
}

fn check_dims(psi: &SymMatrix, c: &SymMatrix, lam: &PenaltyMatrix) -> Result<()> {
    psi.check_dim(c)?;
    if lam.dim() != c.dim() {
        return Err(Error::DimMismatch {
            expected: c.dim(),
            got: lam.dim(),
        });
    }
    Ok(())
}

/// Solves from the default start `diag(1 / c_ii)`.
pub fn solve(c: &SymMatrix, lam: &PenaltyMatrix, opts: &SolverOptions) -> Result<GlassoResult> {
    solve_from(c, lam, opts, None)
}

/// Like [`solve`], starting from `init` when it is positive definite.
pub fn solve_from(
    c: &SymMatrix,
    lam: &PenaltyMatrix,
    opts: &SolverOptions,
    init: Option<&SymMatrix>,
) -> Result<GlassoResult> {
    Problem::new(c, lam, opts, None)?.run(init)
}

/// Maximum likelihood estimate with off-diagonal support restricted to
/// `support`. Entries outside the support are exactly zero.
pub fn solve_oracle(
    c: &SymMatrix,
    support: &EdgeSet,
    opts: &SolverOptions,
) -> Result<GlassoResult> {
    let d = c.dim();
    if support.max_index().is_some_and(|m| m >= d) {
        return Err(Error::invalid(format!(
            "support references node {} but dimension is {d}",
            support.max_index().unwrap_or(0)
        )));
    }
    let free = support.dense_mask(d);
    let lam = PenaltyMatrix::zeros(d);
    Problem::new(c, &lam, opts, Some(free))?.run(None)
}

struct Problem<'a> {
    c: SymMatrix,
    lam: &'a PenaltyMatrix,
    opts: &'a SolverOptions,
    free: Option<Vec<bool>>,
    ridge_applied: Option<f64>,
}

impl<'a> Problem<'a> {
    fn new(
        c: &SymMatrix,
        lam: &'a PenaltyMatrix,
        opts: &'a SolverOptions,
        free: Option<Vec<bool>>,
    ) -> Result<Self> {
        opts.validate()?;
        if lam.dim() != c.dim() {
            return Err(Error::DimMismatch {
                expected: c.dim(),
                got: lam.dim(),
            });
        }
        if !c.is_finite() {
            return Err(Error::invalid("input matrix has non-finite entries"));
        }
        if let Some(i) = c.diag().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::invalid(format!(
                "diagonal entry {i} is {} but must be positive",
                c.get(i, i)
            )));
        }

        let (c, ridge_applied) = match cholesky(c) {
            Ok(_) => (c.clone(), None),
            Err(_) => {
                let r = opts.ridge_on_indefinite;
                // c + r I, rescaled so the diagonal is unchanged.
                let scale: Vec<f64> = c.diag().iter().map(|&v| (v / (v + r)).sqrt()).collect();
                let ridged =
                    SymMatrix::from_fn(c.dim(), |i, j| c.get(i, j) + if i == j { r } else { 0.0 });
                let mut fixed = ridged.scale_sym(&scale)?;
                for (i, v) in c.diag().into_iter().enumerate() {
                    fixed.set_sym(i, i, v);
                }
                cholesky(&fixed)?;
                (fixed, Some(r))
            }
        };

        Ok(Self {
            c,
            lam,
            opts,
            free,
            ridge_applied,
        })
    }

    fn is_free(&self, i: usize, j: usize) -> bool {
        match &self.free {
            Some(m) => m[i * self.c.dim() + j],
            None => true,
        }
    }

    fn initial_point(&self, init: Option<&SymMatrix>) -> SymMatrix {
        let d = self.c.dim();
        if let Some(x) = init {
            if x.dim() == d && self.free.is_none() && cholesky(x).is_ok() {
                return x.clone();
            }
        }
        SymMatrix::from_diag(&self.c.diag().iter().map(|v| 1.0 / v).collect::<Vec<_>>())
    }

    fn run(self, init: Option<&SymMatrix>) -> Result<GlassoResult> {
        let d = self.c.dim();
        let mut psi = self.initial_point(init);
        let l = cholesky(&psi)?;
        let mut w = inverse_from_cholesky(&l);
        let mut obj = objective_from_factor(&psi, &l, &self.c, self.lam);
        let mut trace = vec![obj];
        let mut res = kkt_from_inverse(&psi, &w, &self.c, self.lam, self.free.as_deref());

        let mut scratch = ColumnScratch::new(d);
        let mut idle = 0usize;
        let mut res_at_idle_start = res;
        let mut sweeps = 0;

        while res > self.opts.kkt_tol {
            if sweeps == self.opts.max_sweeps {
                return Err(Error::NotConverged {
                    sweeps,
                    residual: res,
                    stalled: false,
                });
            }
            sweeps += 1;
            for j in 0..d {
                self.update_column(j, &mut psi, &mut w, &mut scratch);
            }

            // Refresh the inverse to stop drift from the rank-one updates.
            let l = cholesky(&psi)?;
            w = inverse_from_cholesky(&l);
            let new_obj = objective_from_factor(&psi, &l, &self.c, self.lam);
            let new_res = kkt_from_inverse(&psi, &w, &self.c, self.lam, self.free.as_deref());
            trace.push(new_obj);

            let rel_change = (obj - new_obj) / obj.abs().max(1.0);
            if rel_change <= STALL_REL_CHANGE {
                if idle == 0 {
                    res_at_idle_start = res;
                }
                idle += 1;
                if idle >= STALL_SWEEPS && new_res > 0.99 * res_at_idle_start {
                    return Err(Error::NotConverged {
                        sweeps,
                        residual: new_res,
                        stalled: true,
                    });
                }
            } else {
                idle = 0;
            }
            obj = new_obj;
            res = new_res;
        }

        Ok(GlassoResult {
            psi,
            sigma: w,
            objective: obj,
            kkt_residual: res,
            sweeps,
            converged: true,
            objective_trace: trace,
            ridge_applied: self.ridge_applied,
        })
    }

    /// Exact minimization over column `j` of `psi` (and its mirror row).
    fn update_column(
        &self,
        j: usize,
        psi: &mut SymMatrix,
        w: &mut SymMatrix,
        scratch: &mut ColumnScratch,
    ) {
        let d = self.c.dim();
        let s = self.c.get(j, j);
        let ColumnScratch {
            u,
            theta,
            grad,
            free,
            v,
        } = scratch;

        // U = W11 - w12 w12^T / w22, stored in the full d x d buffer with
        // row/column j unused.
        let wjj = w.get(j, j);
        for k in 0..d {
            if k == j {
                continue;
            }
            let wkj = w.get(k, j) / wjj;
            for l in k..d {
                if l == j {
                    continue;
                }
                let val = w.get(k, l) - wkj * w.get(l, j);
                u[k * d + l] = val;
                u[l * d + k] = val;
            }
        }

        free.clear();
        free.extend((0..d).filter(|&k| k != j && self.is_free(k, j)));
        for k in 0..d {
            theta[k] = if k != j && self.is_free(k, j) {
                psi.get(k, j)
            } else {
                0.0
            };
        }

        // grad_k = c_kj + s * (U theta)_k over free coordinates.
        for &k in free.iter() {
            let row = &u[k * d..(k + 1) * d];
            let mut acc = 0.0;
            for &l in free.iter() {
                acc += row[l] * theta[l];
            }
            grad[k] = self.c.get(k, j) + s * acc;
        }

        let mut full_pass = true;
        for _ in 0..MAX_INNER_PASSES {
            let mut max_delta = 0.0_f64;
            for &k in free.iter() {
                if !full_pass && theta[k] == 0.0 {
                    continue;
                }
                let akk = s * u[k * d + k];
                let lam = self.lam.get(k, j);
                let g = grad[k] - akk * theta[k];
                let new = soft_threshold(-g, lam) / akk;
                let delta = new - theta[k];
                if delta != 0.0 {
                    theta[k] = new;
                    let row = &u[k * d..(k + 1) * d];
                    for &l in free.iter() {
                        grad[l] += s * row[l] * delta;
                    }
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta <= self.opts.inner_tol {
                if full_pass {
                    break;
                }
                full_pass = true;
            } else {
                full_pass = false;
            }
        }

        // v = U theta; new diagonal and inverse via block identities.
        let mut quad = 0.0;
        for k in 0..d {
            if k == j {
                continue;
            }
            let row = &u[k * d..(k + 1) * d];
            let mut acc = 0.0;
            for &l in free.iter() {
                acc += row[l] * theta[l];
            }
            v[k] = acc;
            quad += theta[k] * acc;
        }

        for k in 0..d {
            if k != j {
                psi.set_sym(k, j, theta[k]);
            }
        }
        psi.set_sym(j, j, 1.0 / s + quad);

        w.set_sym(j, j, s);
        for k in 0..d {
            if k == j {
                continue;
            }
            w.set_sym(k, j, -s * v[k]);
            for l in k..d {
                if l == j {
                    continue;
                }
                w.set_sym(k, l, u[k * d + l] + s * v[k] * v[l]);
            }
        }
    }
}

struct ColumnScratch {
    u: Vec<f64>,
    theta: Vec<f64>,
    grad: Vec<f64>,
    free: Vec<usize>,
    v: Vec<f64>,
}

impl ColumnScratch {
    fn new(d: usize) -> Self {
        Self {
            u: vec![0.0; d * d],
            theta: vec![0.0; d],
            grad: vec![0.0; d],
            free: Vec::with_capacity(d),
            v: vec![0.0; d],
        }
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
