//! Nonparanormal front end.
//!
//! Kendall's tau is invariant under strictly increasing transforms of each
//! variable, and for a Gaussian copula `sin(pi/2 * tau)` recovers the latent
//! Pearson correlation. The sine-transformed tau matrix (repaired to be
//! positive definite) replaces the sample correlation matrix in the
//! sequential pipeline.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sequential::{run_on_correlation, SequenceConfig, SequenceResult};
use crate::spd::{SymMatrix, SymmetricEigen};

/// Default eigenvalue floor for [`psd_repair`].
pub const PSD_FLOOR: f64 = 1e-3;

/// Below this many rows the pairwise enumeration is used directly.
const NAIVE_TAU_MAX_ROWS: usize = 64;

/// `n x d` observations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        if n == 0 || d == 0 {
            return Err(Error::invalid("data matrix must be non-empty"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                k / d,
                k % d
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {d}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Elementwise transform; fails if it produces non-finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.n, self.d, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Reorders rows: row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let values = perm
            .iter()
            .flat_map(|&r| self.row(r).iter().copied())
            .collect();
        Self {
            n: self.n,
            d: self.d,
            values,
        }
    }

    /// `n^{-1} X^T X`, the second-moment matrix of zero-mean data.
    pub fn second_moment(&self) -> SymMatrix {
        let (n, d) = (self.n, self.d);
        let mut acc = vec![0.0; d * d];
        for i in 0..n {
            let r = self.row(i);
            for a in 0..d {
                let ra = r[a];
                for b in a..d {
                    acc[a * d + b] += ra * r[b];
                }
            }
        }
        SymMatrix::from_fn(d, |a, b| acc[a * d + b] / n as f64)
    }

    /// `n^{-1} sum (x - mean)(x - mean)^T`.
    pub fn centered_covariance(&self) -> SymMatrix {
        let (n, d) = (self.n, self.d);
        let means: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| self.get(i, j)).sum::<f64>() / n as f64)
            .collect();
        let centered = Self {
            n,
            d,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v - means[k % d])
                .collect(),
        };
        centered.second_moment()
    }
}

#[inline]
fn sign_cmp(a: f64, b: f64) -> i64 {
    match a.partial_cmp(&b) {
        Some(Ordering::Greater) => 1,
        Some(Ordering::Less) => -1,
        _ => 0,
    }
}

/// Concordant minus discordant pair count, by direct enumeration.
fn pair_score_naive(x: &[f64], y: &[f64]) -> i64 {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for k in (i + 1)..n {
            s += sign_cmp(x[i], x[k]) * sign_cmp(y[i], y[k]);
        }
    }
    s
}

fn tie_pairs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], eq: F) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts strict inversions while merge-sorting `v` ascending.
fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], &mut buf[..mid])
        + count_inversions(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Concordant minus discordant pair count in `O(n log n)` (Knight's method).
fn pair_score_sorted(x: &[f64], y: &[f64]) -> i64 {
    let n = x.len() as i64;
    let cmp = |a: &f64, b: &f64| a.partial_cmp(b).expect("finite data");
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(&a.0, &b.0).then_with(|| cmp(&a.1, &b.1)));

    let tied_x = tie_pairs(&pairs, |a, b| a.0 == b.0);
    let tied_xy = tie_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let discordant = count_inversions(&mut ys, &mut buf);
    let tied_y = tie_pairs(&ys, |a, b| a == b);

    n * (n - 1) / 2 - tied_x - tied_y + tied_xy - 2 * discordant
}

fn tau_matrix_with(x: &DataMatrix, score: fn(&[f64], &[f64]) -> i64) -> Result<SymMatrix> {
    let (n, d) = (x.n(), x.d());
    if n < 2 {
        return Err(Error::invalid(
            "Kendall's tau needs at least two observations",
        ));
    }
    let columns: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| ((j + 1)..d).map(move |k| (j, k)))
        .collect();
    let scores: Vec<i64> = pairs
        .par_iter()
        .map(|&(j, k)| score(&columns[j], &columns[k]))
        .collect();

    let norm = (n as f64) * (n as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; d * d];
    for j in 0..d {
        data[j * d + j] = 1.0;
    }
    for (&(j, k), &s) in pairs.iter().zip(&scores) {
        let tau = s as f64 / norm;
        data[j * d + k] = tau;
        data[k * d + j] = tau;
    }
    SymMatrix::from_row_major(d, data)
}

/// Kendall's tau for every column pair by direct `O(n^2)` enumeration.
pub fn kendall_tau_matrix_naive(x: &DataMatrix) -> Result<SymMatrix> {
    tau_matrix_with(x, pair_score_naive)
}

/// Kendall's tau matrix: `tau_jk = 2 / (n (n - 1)) sum_{i < i'} sign(dx_j dx_k)`.
///
/// Ties contribute zero. Uses an `O(n log n)` per-pair count for larger `n`;
/// both paths compute the same integer pair score, so results are identical.
pub fn kendall_tau_matrix(x: &DataMatrix) -> Result<SymMatrix> {
    if x.n() <= NAIVE_TAU_MAX_ROWS {
        kendall_tau_matrix_naive(x)
    } else {
        tau_matrix_with(x, pair_score_sorted)
    }
}

/// `sin(pi/2 * tau)` off the diagonal, 1 on it.
pub fn sine_transform(tau: &SymMatrix) -> Result<SymMatrix> {
    if let Some(v) = tau.as_slice().iter().find(|v| !(v.abs() <= 1.0 + 1e-12)) {
        return Err(Error::invalid(format!("tau value {v} outside [-1, 1]")));
    }
    Ok(SymMatrix::from_fn(tau.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            (tau.get(i, j) * std::f64::consts::FRAC_PI_2).sin()
        }
    }))
}

/// Clips eigenvalues below `floor` and rescales back to unit diagonal.
///
/// Returns the input unchanged when its smallest eigenvalue is already at
/// least `floor`.
pub fn psd_repair(s: &SymMatrix, floor: f64) -> SymMatrix {
    let eig = SymmetricEigen::new(s);
    if eig.values[0] >= floor {
        return s.clone();
    }
    let clipped = eig.reconstruct_with(|v| v.max(floor));
    let scale: Vec<f64> = clipped.diag().iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut out = clipped.scale_sym(&scale).expect("same dimension");
    for i in 0..out.dim() {
        out.set_sym(i, i, 1.0);
    }
    out
}

/// Rank-based correlation estimate: tau, sine transform, PD repair.
pub fn rank_correlation(x: &DataMatrix) -> Result<SymMatrix> {
    let tau = kendall_tau_matrix(x)?;
    Ok(psd_repair(&sine_transform(&tau)?, PSD_FLOOR))
}

/// Runs the sequential estimator on the rank-based correlation matrix.
///
/// The target is the latent inverse correlation matrix, so the scale vector
/// is all ones and `theta_final` equals the last stage.
pub fn estimate_npn(x: &DataMatrix, cfg: &SequenceConfig) -> Result<SequenceResult> {
    let s = rank_correlation(x)?;
    run_on_correlation(&s, vec![1.0; x.d()], cfg)
}
