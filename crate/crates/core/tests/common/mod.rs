#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqglasso::penalty::PenaltyMatrix;
use seqglasso::spd::SymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_na(m: &SymMatrix) -> DMatrix<f64> {
    let d = m.dim();
    DMatrix::from_fn(d, d, |i, j| m.get(i, j))
}

pub fn from_na(m: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_row_major(m.nrows(), m.transpose().as_slice().to_vec()).unwrap()
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    SymMatrix::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

/// `A^T A / m + eps I` with a Gaussian-like `A` of `m` rows.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    let m = d + 3;
    let a = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
    let s = a.transpose() * &a / m as f64 + DMatrix::identity(d, d) * 0.05;
    from_na(&s)
}

pub fn random_correlation(rng: &mut ChaCha8Rng, d: usize) -> SymMatrix {
    let s = random_spd(rng, d);
    let inv_sd: Vec<f64> = s.diag().iter().map(|v| 1.0 / v.sqrt()).collect();
    let c = s.scale_sym(&inv_sd).unwrap();
    SymMatrix::from_fn(d, |i, j| if i == j { 1.0 } else { c.get(i, j) })
}

/// Symmetric penalty with entries uniform in `[0, max)` and zero diagonal.
pub fn random_penalty(rng: &mut ChaCha8Rng, d: usize, max: f64) -> PenaltyMatrix {
    let m = SymMatrix::from_fn(d, |i, j| {
        if i == j {
            0.0
        } else {
            rng.random_range(0.0..max)
        }
    });
    PenaltyMatrix::from_matrix(m).unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, d: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

/// Optimality residual computed from a nalgebra inverse.
pub fn kkt_oracle(psi: &SymMatrix, c: &SymMatrix, lam: &PenaltyMatrix) -> f64 {
    let sigma = to_na(psi).try_inverse().unwrap();
    let d = psi.dim();
    let mut worst = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            let g = c.get(i, j) - sigma[(i, j)];
            let p = psi.get(i, j);
            let v = if i == j {
                g.abs()
            } else if p != 0.0 && p.abs() > 1e-10 {
                (g + lam.get(i, j) * p.signum()).abs()
            } else {
                (g.abs() - lam.get(i, j)).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}

pub fn frob_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm()
}

/// Restricted maximum likelihood on a free set of off-diagonal entries by
/// projected gradient descent with backtracking. Slow, simple, independent.
pub fn projected_gradient_mle(c: &SymMatrix, free: &[(usize, usize)], iters: usize) -> SymMatrix {
    let d = c.dim();
    let c = to_na(c);
    let f = |p: &DMatrix<f64>| -> Option<f64> {
        let chol = p.clone().cholesky()?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(p.component_mul(&c).sum() - logdet)
    };
    let project = |g: &mut DMatrix<f64>| {
        for i in 0..d {
            for j in 0..d {
                if i != j && !free.contains(&(i.min(j), i.max(j))) {
                    g[(i, j)] = 0.0;
                }
            }
        }
    };
    let mut p = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / c[(i, i)] } else { 0.0 });
    let mut fp = f(&p).unwrap();
    for _ in 0..iters {
        let mut g = &c - p.clone().try_inverse().unwrap();
        project(&mut g);
        if g.norm() < 1e-13 {
            break;
        }
        let mut step = 1.0;
        loop {
            let q = &p - &g * step;
            match f(&q) {
                Some(fq) if fq <= fp - 0.5 * step * g.norm_squared() => {
                    p = q;
                    fp = fq;
                    break;
                }
                _ => step *= 0.5,
            }
            if step < 1e-20 {
                return from_na(&p);
            }
        }
    }
    from_na(&p)
}
