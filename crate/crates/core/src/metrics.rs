//! Support recovery and estimation error metrics.

use crate::error::Result;
use crate::graph::EdgeSet;
use crate::spd::{spectral_norm, SymMatrix};

/// Default threshold for treating an estimated entry as an edge.
pub const SUPPORT_TOL: f64 = 1e-8;

/// Off-diagonal pairs `(i < j)` with `|psi_ij| > tol`.
pub fn support(psi: &SymMatrix, tol: f64) -> EdgeSet {
    let d = psi.dim();
    let pairs = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j)));
    EdgeSet::new(pairs.filter(|&(i, j)| psi.get(i, j).abs() > tol))
        .expect("i < j pairs are never self loops")
}

/// True and false positive rates of `est` against `truth` over the
/// `d (d - 1) / 2` candidate edges.
///
/// With an empty truth the TPR is defined as 1; with a complete truth the
/// FPR is defined as 0.
pub fn tpr_fpr(est: &EdgeSet, truth: &EdgeSet, d: usize) -> (f64, f64) {
    let hits = est.intersection_len(truth);
    let false_pos = est.len() - hits;
    let tpr = if truth.is_empty() {
        1.0
    } else {
        hits as f64 / truth.len() as f64
    };
    let negatives = d * d.saturating_sub(1) / 2 - truth.len();
    let fpr = if negatives == 0 {
        0.0
    } else {
        false_pos as f64 / negatives as f64
    };
    (tpr, fpr)
}

/// 0/1 indicator of `|a_ij| > tol`, diagonal included.
pub fn sparsity_pattern(a: &SymMatrix, tol: f64) -> SymMatrix {
    a.map(|v| if v.abs() > tol { 1.0 } else { 0.0 })
}

/// `||m||_2^2 / s`.
pub fn pattern_ratio(m: &SymMatrix, s: usize) -> f64 {
    assert!(s > 0, "total sparsity must be positive");
    spectral_norm(m).powi(2) / s as f64
}

/// Frobenius and spectral norms of `est - truth`.
pub fn norm_errors(est: &SymMatrix, truth: &SymMatrix) -> Result<(f64, f64)> {
    let diff = est.sub(truth)?;
    Ok((diff.frobenius_norm(), spectral_norm(&diff)))
}

pub fn max_degree(edges: &EdgeSet, d: usize) -> usize {
    let mut deg = vec![0usize; d.max(edges.max_index().map_or(0, |m| m + 1))];
    for &(i, j) in edges.iter() {
        deg[i] += 1;
        deg[j] += 1;
    }
    deg.into_iter().max().unwrap_or(0)
}
