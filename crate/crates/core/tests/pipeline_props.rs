mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use seqglasso::glasso::{solve, SolverOptions};
use seqglasso::metrics::{pattern_ratio, sparsity_pattern, support, SUPPORT_TOL};
use seqglasso::npn::{estimate_npn, kendall_tau_matrix, kendall_tau_matrix_naive, DataMatrix};
use seqglasso::penalty::{PenaltyMatrix, WeightSpec};
use seqglasso::sequential::{correlation_step, run_sequence, SequenceConfig};
use seqglasso::simgen::{model_for, sample_gaussian, GraphFamily, SimRng};
use seqglasso::spd::{cholesky, spectral_norm, SymMatrix};

fn scad(lambda: f64) -> SequenceConfig {
    SequenceConfig::new(WeightSpec::scad(lambda, 2.1).unwrap())
}

fn band_sample(d: usize, n: usize, seed: u64, rep: u64) -> DataMatrix {
    let m = model_for(GraphFamily::Band, d, seed, false).unwrap();
    sample_gaussian(&m.sigma_true, n, &mut SimRng::for_replicate(seed, rep)).unwrap()
}

#[test]
fn scale_equivariance() {
    let mut rng = rng(20);
    for rep in 0..5 {
        let s = band_sample(8, 300, 4, rep).second_moment();
        let dvec: Vec<f64> = (0..8).map(|_| rng.random_range(0.2..5.0)).collect();
        let scaled = s.scale_sym(&dvec).unwrap();

        let a = run_sequence(&s, &scad(0.15)).unwrap();
        let b = run_sequence(&scaled, &scad(0.15)).unwrap();
        for (x, y) in a.psi_stages.iter().zip(&b.psi_stages) {
            assert!(frob_diff(x, y) <= 1e-10);
        }
        let inv: Vec<f64> = dvec.iter().map(|v| 1.0 / v).collect();
        let expect = a.theta_final.scale_sym(&inv).unwrap();
        assert!(frob_diff(&b.theta_final, &expect) <= 1e-10 * expect.frobenius_norm().max(1.0));
    }
}

#[test]
fn single_constant_stage_is_plain_glasso() {
    let s = band_sample(10, 200, 2, 0).second_moment();
    let cfg = SequenceConfig::new(WeightSpec::constant(0.1).unwrap()).with_iters(1);
    let r = run_sequence(&s, &cfg).unwrap();
    let (c, _) = correlation_step(&s).unwrap();
    let plain = solve(
        &c,
        &PenaltyMatrix::uniform(10, 0.1),
        &SolverOptions::default(),
    )
    .unwrap();
    assert_eq!(r.final_psi(), &plain.psi);
}

#[test]
fn npn_two_by_two_matches_closed_form() {
    let x = band_sample(2, 400, 9, 0);
    let tau = kendall_tau_matrix(&x).unwrap().get(0, 1);
    let r12 = (std::f64::consts::FRAC_PI_2 * tau).sin();
    let lambda = 0.1;
    let cfg = SequenceConfig {
        solver: SolverOptions {
            kkt_tol: 1e-12,
            ..SolverOptions::default()
        },
        ..SequenceConfig::new(WeightSpec::constant(lambda).unwrap())
    };
    let psi = estimate_npn(&x, &cfg).unwrap().final_psi().clone();
    let s12 = r12 - lambda * r12.signum();
    let expect = -s12 / (1.0 - s12 * s12);
    assert!(
        (psi.get(0, 1) - expect).abs() <= 1e-8,
        "{} vs {expect}",
        psi.get(0, 1)
    );
}

#[test]
fn npn_invariant_under_monotone_maps() {
    let x = band_sample(6, 150, 3, 0);
    let cfg = scad(0.2);
    let base = estimate_npn(&x, &cfg).unwrap();
    let maps: [fn(f64) -> f64; 2] = [|v| v.powi(3), f64::exp];
    for f in maps {
        let y = x.map(f).unwrap();
        let r = estimate_npn(&y, &cfg).unwrap();
        assert_eq!(r.theta_final, base.theta_final);
        assert_eq!(r.psi_stages, base.psi_stages);
    }
}

#[test]
fn sample_covariance_converges() {
    let m = model_for(GraphFamily::Band, 3, 5, true).unwrap();
    assert!(m.sigma_true.diag().iter().all(|&v| v == 1.0));
    for seed in 0..10 {
        let x =
            sample_gaussian(&m.sigma_true, 50_000, &mut SimRng::for_replicate(seed, 0)).unwrap();
        let err = frob_diff(&x.second_moment(), &m.sigma_true);
        assert!(err < 0.05, "seed {seed}: {err}");
    }
}

#[test]
fn models_are_standardized_and_faithful() {
    let families = [
        GraphFamily::Random,
        GraphFamily::Band,
        GraphFamily::Chain(7),
        GraphFamily::Star(5),
    ];
    for (seed, family) in families.into_iter().enumerate() {
        let m = model_for(family, 40, seed as u64, false).unwrap();
        assert!(m.theta_true.diag().iter().all(|&v| v == 1.0));
        assert!(cholesky(&m.theta_true).is_ok());
        assert_eq!(support(&m.theta_true, 0.0), m.edges);
    }
}

#[test]
fn chain_patterns_are_tridiagonal_blocks() {
    for k in [4, 9, 20] {
        let m = model_for(GraphFamily::Chain(k), 30, 0, false).unwrap();
        let pattern = sparsity_pattern(&m.theta_true, 0.0);
        let expect = SymMatrix::from_fn(30, |i, j| {
            let block = i <= k && j <= k && i.abs_diff(j) <= 1;
            if i == j || block {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(pattern, expect);
    }
}

#[test]
fn chain_ratio_decreases_under_bound() {
    let mut prev = f64::INFINITY;
    for k in 4..=50 {
        let m = model_for(GraphFamily::Chain(k), 60, 0, false).unwrap();
        let ratio = pattern_ratio(&sparsity_pattern(&m.theta_true, SUPPORT_TOL), 2 * k);
        assert!(ratio < prev);
        assert!(ratio <= 9.0 / (2 * k) as f64 * (1.0 + 1e-9));
        prev = ratio;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pattern_dominates_spectral_norm(seed in any::<u64>(), d in 1usize..=15, density in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = SymMatrix::from_fn(d, |_, _| {
            if r.random_bool(density) { r.random_range(-1.0..=1.0) } else { 0.0 }
        });
        let a = a.scale(1.0 / a.max_abs().max(1.0));
        prop_assert!(spectral_norm(&a) <= spectral_norm(&sparsity_pattern(&a, 0.0)) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kendall_exact_under_row_permutation_and_monotone_maps(seed in any::<u64>(), n in 3usize..120) {
        let mut r = rng(seed);
        // Coarse values force ties.
        let values: Vec<f64> = (0..n * 3).map(|_| (r.random_range(-3.0f64..3.0) * 4.0).round()).collect();
        let x = DataMatrix::new(n, 3, values).unwrap();
        let perm = random_permutation(&mut r, n);
        let naive = kendall_tau_matrix_naive(&x).unwrap();
        prop_assert_eq!(&kendall_tau_matrix_naive(&x.permute_rows(&perm)).unwrap(), &naive);
        prop_assert_eq!(&kendall_tau_matrix(&x).unwrap(), &naive);
        prop_assert_eq!(&kendall_tau_matrix(&x.map(|v| v.powi(3)).unwrap()).unwrap(), &naive);
    }
}
