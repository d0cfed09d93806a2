mod common;

use common::{random_instance, scalar_objective, scalar_weight};
use nalgebra::{DMatrix, DVector};
use quadland::certifier::{
    dense_hessian, dual_certificate, min_hessian_eig, numerical_rank, Verdict,
};
use quadland::convex_oracle::solve_convex;
use quadland::linalg::{frob_inner, psd_factor, sym_min_eig};
use quadland::model::{hessian_vector_product, objective_value};
use quadland::{Dataset, LossKind, Objective, Task, Weights};

#[test]
fn lanczos_agrees_with_dense_hessian() {
    let mut worst: f64 = 0.0;
    for seed in 0..60u64 {
        let loss = if seed % 2 == 0 { LossKind::Squared } else { LossKind::Logistic };
        let (obj, w) = random_instance(seed, loss, seed % 3 == 0);
        assert!(w.k() * w.d() <= 64);
        let h = dense_hessian(&w, &obj).unwrap();
        let asym = (&h - h.transpose()).norm();
        assert!(asym <= 1e-10 * h.norm().max(1.0));
        let exact = sym_min_eig(&h);
        let got = min_hessian_eig(&w, &obj, 1e-10).unwrap();
        worst = worst.max((got.value - exact).abs());
        // Rayleigh quotient of the returned direction matches the value
        let u = &got.direction;
        let rq = frob_inner(u, &hessian_vector_product(&w, &obj, u).unwrap()) / u.norm_squared();
        assert!((rq - got.value).abs() <= 1e-8 * got.norm_estimate.max(1.0));
    }
    assert!(worst <= 1e-8, "worst eigenvalue error {worst:e}");
}

#[test]
fn origin_with_zero_labels_has_regularizer_curvature() {
    let data = Dataset::new(
        DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 1.0, 0.3, 0.3]),
        DVector::zeros(3),
        Task::Regression,
    )
    .unwrap();
    let obj = Objective::new(data, LossKind::Squared, 0.7).unwrap();
    let eig = min_hessian_eig(&Weights::zeros(2, 2), &obj, 1e-12).unwrap();
    assert!((eig.value - 0.7).abs() < 1e-12);
}

#[test]
fn saddle_direction_decreases_objective() {
    let obj = scalar_objective(0.0);
    let w = scalar_weight(0.0);
    let eig = min_hessian_eig(&w, &obj, 1e-12).unwrap();
    assert!((eig.value + 2.0).abs() <= 1e-8);
    let base = objective_value(&w, &obj).unwrap();
    let decreased = (0..30).any(|i| {
        let t = 0.5f64.powi(i);
        let moved = Weights(w.matrix() + &eig.direction * t);
        objective_value(&moved, &obj).unwrap() < base
    });
    assert!(decreased);
}

#[test]
fn random_saddles_are_escaped_along_lanczos_direction() {
    // wherever Lanczos reports negative curvature, its direction (signed
    // against the gradient) decreases the objective for a short enough step
    for seed in 0..20u64 {
        let (obj, w) = random_instance(seed + 500, LossKind::Squared, false);
        let eig = min_hessian_eig(&w, &obj, 1e-10).unwrap();
        if eig.value >= -1e-6 {
            continue;
        }
        let base = objective_value(&w, &obj).unwrap();
        let g = quadland::model::gradient(&w, &obj).unwrap();
        // pick the sign that does not increase to first order
        let dir = if frob_inner(&g, &eig.direction) > 0.0 { -&eig.direction } else { eig.direction.clone() };
        let decreased = (0..40).any(|i| {
            let moved = Weights(w.matrix() + &dir * 0.5f64.powi(i));
            objective_value(&moved, &obj).unwrap() < base
        });
        assert!(decreased, "seed {seed}");
    }
}

#[test]
fn rank_examples() {
    let w = Weights(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    assert_eq!(numerical_rank(&w, 1e-8), (1, 0.0));
    let w = Weights(DMatrix::identity(2, 2));
    assert_eq!(numerical_rank(&w, 1e-8), (2, 1.0));
    assert_eq!(numerical_rank(&Weights::zeros(3, 2), 1e-8), (0, 0.0));
    for seed in 0..100 {
        let g = common::gaussian(&mut common::rng(seed), 3, 10, 1.0);
        let (rank, ratio) = numerical_rank(&Weights(g), 1e-8);
        assert_eq!(rank, 3, "seed {seed}");
        assert!(ratio > 0.0);
    }
}

#[test]
fn scalar_certificates() {
    let obj = scalar_objective(0.0);
    let at_one = dual_certificate(&scalar_weight(1.0), &obj).unwrap();
    assert_eq!(at_one.verdict, Verdict::CertifiedGlobal);
    assert_eq!(at_one.dual_min_eig, 0.0);

    let at_zero = dual_certificate(&scalar_weight(0.0), &obj).unwrap();
    assert_ne!(at_zero.verdict, Verdict::CertifiedGlobal);
    assert_eq!(at_zero.dual_min_eig, -2.0);
    assert_eq!(at_zero.grad_norm, 0.0);
    assert!((at_zero.min_hess_eig + 2.0).abs() < 1e-8);
}

#[test]
fn zero_weights_zero_labels_certified() {
    let data = Dataset::new(
        DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 1.0, 0.3, 0.3]),
        DVector::zeros(2),
        Task::Regression,
    )
    .unwrap();
    let obj = Objective::new(data, LossKind::Squared, 0.1).unwrap();
    let cert = dual_certificate(&Weights::zeros(3, 3), &obj).unwrap();
    assert_eq!(cert.verdict, Verdict::CertifiedGlobal);
}

#[test]
fn factorized_oracle_solution_is_certified() {
    for seed in 0..10u64 {
        let loss = if seed % 2 == 0 { LossKind::Squared } else { LossKind::Logistic };
        let (obj, _) = random_instance(seed + 77, loss, false);
        let sol = solve_convex(&obj.dataset, loss, obj.lambda.max(0.05), 1e-10, 200_000).unwrap();
        let obj = Objective::new(obj.dataset.clone(), loss, obj.lambda.max(0.05)).unwrap();
        let d = obj.dataset.d();
        let w = Weights(psd_factor(&sol.m, d));
        let cert = dual_certificate(&w, &obj).unwrap();
        assert_eq!(cert.verdict, Verdict::CertifiedGlobal, "seed {seed}: {cert:?}");
        let v = objective_value(&w, &obj).unwrap();
        assert!((v - sol.value).abs() <= 1e-10 * sol.value.abs().max(1.0));
    }
}
