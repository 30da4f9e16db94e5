use detflow::metrics::principal_angle;
use detflow::objective::{f_det, DataMatrix, LoadingMatrix};
use detflow::randgen::{gaussian_matrix, haar_stiefel, random_gl, rng_from_seed, synthesize, RandomMatrixSpec, SpectrumModel};
use detflow::solvers::{run, SolverConfig, Termination, Variant};
use detflow::stationary::{classify, recover_svd, Verdict};
use proptest::prelude::*;

/// Relative gap 0.1 after σ_3, linear tail below.
fn spectrum() -> Vec<f64> {
    let mut s = vec![10.0, 9.0, 8.0];
    s.extend((0..57).map(|k| 7.2 - 6.2 * k as f64 / 56.0));
    s
}

#[test]
fn all_variants_converge_from_100_starts() {
    let mut failures = vec![];
    for seed in 0..100u64 {
        let inst = synthesize(&RandomMatrixSpec::new(60, 80, 5000 + seed, SpectrumModel::Explicit(spectrum()))).unwrap();
        let v = inst.ground_truth_vp(3);
        let x0 = LoadingMatrix::new(haar_stiefel(80, 3, 7000 + seed)).unwrap();
        for variant in Variant::ALL {
            let res = run(&inst.a, &x0, &SolverConfig::new(variant), None).unwrap();
            let angle = principal_angle(&v, &res.x_final).unwrap();
            if res.termination != Termination::GradBelowEpsilon || angle >= 1e-4 {
                failures.push(format!("seed {seed} {variant:?}: {:?} angle {angle:.3e}", res.termination));
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn converged_point_is_classified_global_max() {
    let inst = synthesize(&RandomMatrixSpec::new(30, 20, 17, SpectrumModel::Explicit(spectrum()[..20].to_vec()))).unwrap();
    let x0 = LoadingMatrix::new(haar_stiefel(20, 3, 18)).unwrap();
    let cfg = SolverConfig {
        epsilon: 1e-11,
        ..SolverConfig::new(Variant::AccDetLS)
    };
    let res = run(&inst.a, &x0, &cfg, None).unwrap();
    assert!(res.converged);
    assert_eq!(classify(&inst.a, &res.x_final).unwrap().verdict, Verdict::GlobalMax);
    let rec = recover_svd(&inst.a, &res.x_final).unwrap();
    for (s, t) in rec.singular_values.iter().zip(&inst.true_singular_values) {
        assert!((s - t).abs() <= 1e-9 * t);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn monotone_variants_never_decrease(seed in 0u64..1_000_000, p in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let a = DataMatrix::new(gaussian_matrix(25, 15, &mut rng)).unwrap();
        let x0 = LoadingMatrix::new(haar_stiefel(15, p, seed + 1)).unwrap();
        for variant in [Variant::DetLS, Variant::TraceFlow, Variant::AccDetLS] {
            let cfg = SolverConfig { max_iters: 300, ..SolverConfig::new(variant) };
            let res = run(&a, &x0, &cfg, None).unwrap();
            for w in res.trace.windows(2) {
                prop_assert!(w[1].f_value >= w[0].f_value - 1e-12, "{:?} at {}", variant, w[1].iter);
            }
        }
    }

    #[test]
    fn final_subspace_ignores_start_basis(seed in 0u64..1_000_000) {
        let mut rng = rng_from_seed(seed);
        let a = DataMatrix::new(gaussian_matrix(20, 12, &mut rng)).unwrap();
        let q = haar_stiefel(12, 2, seed + 1);
        let skew = &q * random_gl(2, 50.0, &mut rng);
        let f_q = f_det(&a, &q).unwrap();
        let f_skew = f_det(&a, &skew).unwrap();
        prop_assert!((f_q - f_skew).abs() <= 1e-10 * f_q.abs().max(1.0));
        let cfg = SolverConfig { epsilon: 1e-10, ..SolverConfig::new(Variant::DetFlow) };
        let r1 = run(&a, &LoadingMatrix::new(q).unwrap(), &cfg, None).unwrap();
        let r2 = run(&a, &LoadingMatrix::new(skew).unwrap(), &cfg, None).unwrap();
        prop_assert!(r1.converged && r2.converged);
        prop_assert!(principal_angle(&r1.x_final, &r2.x_final).unwrap() < 1e-7);
    }
}
