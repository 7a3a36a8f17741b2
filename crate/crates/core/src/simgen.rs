//! Synthetic graphical models and seeded Gaussian sampling.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with a 64-bit seed.
//! Stream 0 of a seed generates graph structure; stream `r + 1` generates the
//! data of replicate `r`, so replicates can be produced in any order.
//! Standard normals are drawn by inverting the normal CDF at a uniform in the
//! open interval `(0, 1)` built from the top 53 bits of a `u64`.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::EdgeSet;
use crate::metrics::support;
use crate::npn::DataMatrix;
use crate::spd::{cholesky, inverse_spd, min_eigenvalue, SymMatrix};

/// Edge probability for [`GraphFamily::Random`].
pub const RANDOM_EDGE_PROB: f64 = 0.025;
/// Magnitude placed on every edge before the eigenvalue shift.
pub const EDGE_WEIGHT: f64 = 0.4;
/// Smallest eigenvalue of the shifted matrix before standardization.
pub const EIGEN_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "lowercase")]
pub enum GraphFamily {
    Random,
    Band,
    /// Path on the first `k + 1` nodes, remaining nodes isolated.
    Chain(usize),
    /// Node 0 joined to nodes `1..=k`.
    Star(usize),
}

/// Deterministic generator for one `(seed, stream)` pair.
pub struct SimRng {
    inner: ChaCha8Rng,
    normal: Normal,
}

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
        }
    }

    /// Graph-structure stream of `seed`.
    pub fn for_model(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Data stream of replicate `rep`.
    pub fn for_replicate(seed: u64, rep: u64) -> Self {
        Self::new(seed, rep + 1)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform_open();
        self.normal.inverse_cdf(u)
    }
}

/// 0/1 adjacency matrix with zero diagonal.
pub fn gen_adjacency(family: GraphFamily, d: usize, rng: &mut SimRng) -> Result<SymMatrix> {
    if d < 2 {
        return Err(Error::invalid(format!(
            "graph needs at least 2 nodes, got {d}"
        )));
    }
    let mut adj = SymMatrix::zeros(d);
    match family {
        GraphFamily::Random => {
            for i in 0..d {
                for j in (i + 1)..d {
                    if rng.uniform_open() < RANDOM_EDGE_PROB {
                        adj.set_sym(i, j, 1.0);
                    }
                }
            }
        }
        GraphFamily::Band => {
            for i in 0..d - 1 {
                adj.set_sym(i, i + 1, 1.0);
            }
        }
        GraphFamily::Chain(k) => {
            if k == 0 || k + 1 > d {
                return Err(Error::invalid(format!(
                    "chain length {k} needs 1 <= k < d = {d}"
                )));
            }
            for i in 0..k {
                adj.set_sym(i, i + 1, 1.0);
            }
        }
        GraphFamily::Star(k) => {
            if k == 0 || k + 1 > d {
                return Err(Error::invalid(format!(
                    "star size {k} needs 1 <= k < d = {d}"
                )));
            }
            for i in 1..=k {
                adj.set_sym(0, i, 1.0);
            }
        }
    }
    Ok(adj)
}

/// Ground truth for one simulation setting.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub family: GraphFamily,
    pub d: usize,
    pub seed: u64,
    pub edges: EdgeSet,
    pub theta_true: SymMatrix,
    pub sigma_true: SymMatrix,
}

impl ModelSpec {
    /// Inverse correlation matrix `W Theta W` with `W^2 = diag(Sigma)`.
    pub fn psi_true(&self) -> SymMatrix {
        let w: Vec<f64> = self.sigma_true.diag().iter().map(|v| v.sqrt()).collect();
        self.theta_true.scale_sym(&w).expect("same dimension")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

fn check_adjacency(adj: &SymMatrix) -> Result<()> {
    for i in 0..adj.dim() {
        for j in 0..adj.dim() {
            let v = adj.get(i, j);
            if (i == j && v != 0.0) || (v != 0.0 && v != 1.0) {
                return Err(Error::invalid(format!(
                    "adjacency entry ({i}, {j}) = {v}; need 0/1 with zero diagonal"
                )));
            }
        }
    }
    Ok(())
}

/// `E + (0.1 - e_min) I` scaled to unit diagonal, with `E = 0.4 * adj`.
fn shifted_standardized(adj: &SymMatrix) -> Result<SymMatrix> {
    check_adjacency(adj)?;
    let e = adj.scale(EDGE_WEIGHT);
    let shift = EIGEN_MARGIN - min_eigenvalue(&e);
    if !(shift > 0.0) {
        return Err(Error::DegenerateModel(format!(
            "eigenvalue shift {shift} is not positive"
        )));
    }
    let raw = e.add(&SymMatrix::identity(adj.dim()).scale(shift))?;
    let diag = raw.diag();
    let mut out = if diag.iter().all(|&v| v == diag[0]) {
        raw.scale(1.0 / diag[0])
    } else {
        let s: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
        raw.scale_sym(&s)?
    };
    for i in 0..out.dim() {
        out.set_sym(i, i, 1.0);
    }
    Ok(out)
}

/// Builds the precision matrix on the graph `adj`: the shifted, standardized
/// edge matrix is taken to be `Theta*`, and `Sigma* = Theta*^{-1}`.
pub fn build_model(adj: &SymMatrix, family: GraphFamily, seed: u64) -> Result<ModelSpec> {
    let theta_true = shifted_standardized(adj)?;
    let sigma_true = inverse_spd(&theta_true)?;
    let edges = support(&theta_true, 1e-12);
    Ok(ModelSpec {
        family,
        d: adj.dim(),
        seed,
        edges,
        theta_true,
        sigma_true,
    })
}

/// Literal covariance reading: the shifted, standardized edge matrix is
/// `Sigma*` and `Theta* = Sigma*^{-1}` is generally dense. `edges` is still
/// the adjacency support, which is what recovery is scored against.
pub fn build_model_literal_cov(
    adj: &SymMatrix,
    family: GraphFamily,
    seed: u64,
) -> Result<ModelSpec> {
    let sigma_true = shifted_standardized(adj)?;
    let theta_true = inverse_spd(&sigma_true)?;
    let edges = support(adj, 0.0);
    Ok(ModelSpec {
        family,
        d: adj.dim(),
        seed,
        edges,
        theta_true,
        sigma_true,
    })
}

/// Generates the graph from stream 0 of `seed` and builds the model.
pub fn model_for(family: GraphFamily, d: usize, seed: u64, literal_cov: bool) -> Result<ModelSpec> {
    let adj = gen_adjacency(family, d, &mut SimRng::for_model(seed))?;
    if literal_cov {
        build_model_literal_cov(&adj, family, seed)
    } else {
        build_model(&adj, family, seed)
    }
}

/// `n` rows `L z` with `L L^T = sigma` and `z` standard normal.
pub fn sample_gaussian(sigma: &SymMatrix, n: usize, rng: &mut SimRng) -> Result<DataMatrix> {
    let l = cholesky(sigma)?;
    let d = sigma.dim();
    let mut values = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.standard_normal();
        }
        values.extend(l.mul_vec(&z));
    }
    DataMatrix::new(n, d, values)
}
