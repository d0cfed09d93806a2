mod common;

use common::{fd_curvature, fd_gradient, random_instance, rel_err, scalar_objective, scalar_weight};
use nalgebra::DMatrix;
use proptest::prelude::*;
use quadland::linalg::frob_inner;
use quadland::model::{
    forward, gradient, hessian_vector_product, loss_derivatives, objective_value,
};
use quadland::{LossKind, Objective, Weights};

#[test]
fn scalar_gradient_matches_finite_difference() {
    let obj = scalar_objective(0.0);
    let fd = fd_gradient(&scalar_weight(2.0), &obj, 1e-5);
    assert!((fd[(0, 0)] - 12.0).abs() < 1e-6);
    let g = gradient(&scalar_weight(2.0), &obj).unwrap();
    assert!((g[(0, 0)] - fd[(0, 0)]).abs() < 1e-6);
}

#[test]
fn scalar_curvature_at_saddle() {
    // L(w) = ½(w² − 1)², L″(w) = 6w² − 2
    let obj = scalar_objective(0.0);
    let one = DMatrix::from_element(1, 1, 1.0);
    let fd = fd_curvature(&scalar_weight(0.0), &obj, &one, 1e-4);
    assert!((fd + 2.0).abs() < 1e-6);
    let h = hessian_vector_product(&scalar_weight(0.0), &obj, &one).unwrap();
    assert!((h[(0, 0)] + 2.0).abs() < 1e-14);
    for w in [-1.3, 0.4, 2.0] {
        let h = hessian_vector_product(&scalar_weight(w), &obj, &one).unwrap();
        assert!((h[(0, 0)] - (6.0 * w * w - 2.0)).abs() < 1e-12);
    }
}

#[test]
fn scalar_objective_against_grid() {
    // independent tabulation of ½(w² − 1)² on a grid around w = 0.5
    let obj = scalar_objective(0.0);
    for i in 0..=100 {
        let w = 0.4 + 0.002 * i as f64;
        let expected = 0.5 * (w * w - 1.0) * (w * w - 1.0);
        let got = objective_value(&scalar_weight(w), &obj).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }
    assert_eq!(objective_value(&scalar_weight(0.5), &obj).unwrap(), 0.28125);
}

#[test]
fn zero_labels_zero_weights_have_flat_fit() {
    let data = quadland::Dataset::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.4, 0.9]),
        nalgebra::DVector::zeros(2),
        quadland::Task::Regression,
    )
    .unwrap();
    let obj = Objective::new(data, LossKind::Squared, 0.0).unwrap();
    let w = Weights::zeros(3, 2);
    for seed in 0..5 {
        let u = common::gaussian(&mut common::rng(seed), 3, 2, 1.0);
        let h = hessian_vector_product(&w, &obj, &u).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn gradient_matches_finite_differences_on_random_instances() {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        for loss in [LossKind::Squared, LossKind::Logistic] {
            let (obj, w) = random_instance(seed, loss, seed % 2 == 0);
            let g = gradient(&w, &obj).unwrap();
            let fd = fd_gradient(&w, &obj, 1e-6);
            let err = (&g - &fd).norm() / g.norm().max(1e-8);
            worst = worst.max(err);
        }
    }
    assert!(worst <= 1e-5, "worst relative gradient error {worst:e}");
}

#[test]
fn hvp_quadratic_form_matches_second_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        for loss in [LossKind::Squared, LossKind::Logistic] {
            let (obj, w) = random_instance(seed + 1000, loss, seed % 2 == 1);
            let u = common::gaussian(&mut common::rng(seed), w.k(), w.d(), 1.0);
            let quad = frob_inner(&u, &hessian_vector_product(&w, &obj, &u).unwrap());
            let fd = fd_curvature(&w, &obj, &u, 1e-4);
            worst = worst.max(rel_err(quad, fd, 1e-3));
        }
    }
    assert!(worst <= 1e-4, "worst relative HVP error {worst:e}");
}

#[test]
fn loss_curvature_nonnegative_everywhere() {
    let mut r = common::rng(77);
    use rand::Rng;
    for _ in 0..10_000 {
        let y_hat: f64 = r.gen_range(-50.0..50.0);
        let y_reg: f64 = r.gen_range(-5.0..5.0);
        let y_cls = if r.gen::<bool>() { 1.0 } else { -1.0 };
        assert!(loss_derivatives(LossKind::Squared, y_hat, y_reg).d2 >= 0.0);
        assert!(loss_derivatives(LossKind::Logistic, y_hat, y_cls).d2 >= 0.0);
    }
}

fn orthogonal(k: usize, seed: u64) -> DMatrix<f64> {
    let a = common::gaussian(&mut common::rng(seed), k, k, 1.0);
    a.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_is_gram_quadratic_form(seed in 0u64..10_000) {
        let (obj, w) = random_instance(seed, LossKind::Squared, false);
        let x = obj.dataset.sample(0);
        let f = forward(&w, &x).unwrap();
        let gram = (x.transpose() * w.gram() * &x)[(0, 0)];
        prop_assert!(f >= 0.0);
        prop_assert!(rel_err(f, gram, 1e-300) <= 1e-12);
    }

    #[test]
    fn objective_is_rotation_invariant(seed in 0u64..10_000, logistic in any::<bool>()) {
        let loss = if logistic { LossKind::Logistic } else { LossKind::Squared };
        let (obj, w) = random_instance(seed, loss, seed % 3 == 0);
        let q = orthogonal(w.k(), seed);
        let rotated = Weights(&q * w.matrix());
        let a = objective_value(&w, &obj).unwrap();
        let b = objective_value(&rotated, &obj).unwrap();
        prop_assert!(rel_err(a, b, 1e-300) <= 1e-10);
    }

    #[test]
    fn hvp_is_linear_and_symmetric(seed in 0u64..10_000, alpha in -3.0f64..3.0) {
        let (obj, w) = random_instance(seed, LossKind::Logistic, seed % 2 == 0);
        let mut r = common::rng(seed ^ 0xABC);
        let u = common::gaussian(&mut r, w.k(), w.d(), 1.0);
        let v = common::gaussian(&mut r, w.k(), w.d(), 1.0);
        let hu = hessian_vector_product(&w, &obj, &u).unwrap();
        let hv = hessian_vector_product(&w, &obj, &v).unwrap();
        let combo = hessian_vector_product(&w, &obj, &(&u * alpha + &v)).unwrap();
        let expected = &hu * alpha + &hv;
        prop_assert!((&combo - &expected).norm() <= 1e-10 * expected.norm().max(1.0));
        let uv = frob_inner(&v, &hu);
        let vu = frob_inner(&u, &hv);
        prop_assert!(rel_err(uv, vu, 1.0) <= 1e-10);
    }
}
