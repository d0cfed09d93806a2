mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use quadland::rademacher::{bounds, empirical_rc, fourth_moment_s, report, Expectation};
use quadland::{Dataset, Task};
use rand::Rng;

fn dataset(x: DMatrix<f64>) -> Dataset {
    let n = x.nrows();
    Dataset::new(x, DVector::zeros(n), Task::Regression).unwrap()
}

fn e1_e2() -> Dataset {
    dataset(DMatrix::identity(2, 2))
}

/// Random inputs: Gaussian rows, optionally rescaled onto a sphere of random radius.
fn random_dataset(seed: u64, max_d: usize, max_n: usize) -> Dataset {
    let mut r = common::rng(seed);
    let d = r.gen_range(2..=max_d);
    let n = r.gen_range(1..=max_n);
    let mut x = common::gaussian(&mut r, n, d, 1.0);
    if r.gen::<bool>() {
        let b: f64 = r.gen_range(0.1..3.0);
        for mut row in x.row_iter_mut() {
            let nrm = row.norm();
            row *= b / nrm;
        }
    }
    dataset(x)
}

#[test]
fn enumeration_is_exact_on_coordinate_example() {
    let est = empirical_rc(&e1_e2(), 1.0, 0, 0, Expectation::Enumerate).unwrap();
    assert!(est.exact);
    assert_eq!(est.mc_estimate_specnorm, 0.5);
    assert_eq!(est.mc_estimate_lambdamax, 0.25);
    assert_eq!(est.num_draws, 4);
}

#[test]
fn monte_carlo_approaches_enumeration() {
    let exact = empirical_rc(&e1_e2(), 1.0, 0, 0, Expectation::Enumerate).unwrap();
    for seed in 0..5 {
        let mc = empirical_rc(&e1_e2(), 1.0, 400, seed, Expectation::MonteCarlo).unwrap();
        // the spectral norm is constant over draws, so MC is exact too
        assert_eq!(mc.mc_estimate_specnorm, exact.mc_estimate_specnorm);
        assert_eq!(mc.mc_std_error, 0.0);
        // λ_max is 1 w.p. ¾ and −1 w.p. ¼: σ/√N with σ = √3/2 · ½
        let se = 0.5 * 3f64.sqrt() / 2.0 / 400f64.sqrt();
        assert!((mc.mc_estimate_lambdamax - 0.25).abs() <= 3.0 * se);
    }
    for seed in 0..10 {
        let data = random_dataset(seed, 6, 10);
        let exact = empirical_rc(&data, 1.3, 0, 0, Expectation::Enumerate).unwrap();
        let mc = empirical_rc(&data, 1.3, 2000, seed, Expectation::MonteCarlo).unwrap();
        let tol = 3.0 * mc.mc_std_error + 1e-12;
        assert!((mc.mc_estimate_specnorm - exact.mc_estimate_specnorm).abs() <= tol, "seed {seed}");
    }
}

#[test]
fn single_sample_estimates_are_one() {
    let data = dataset(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    let est = empirical_rc(&data, 1.0, 10, 0, Expectation::MonteCarlo).unwrap();
    assert_eq!(est.mc_estimate_specnorm, 1.0);
    let exact = empirical_rc(&data, 1.0, 0, 0, Expectation::Auto).unwrap();
    assert_eq!(exact.mc_estimate_specnorm, 1.0);
    // λ_max(xxᵀ) = 1 but λ_max(−xxᵀ) = 0 once d ≥ 2
    assert_eq!(exact.mc_estimate_lambdamax, 0.5);
    let scalar = dataset(DMatrix::from_element(1, 1, 1.0));
    let exact = empirical_rc(&scalar, 1.0, 0, 0, Expectation::Auto).unwrap();
    assert_eq!(exact.mc_estimate_specnorm, 1.0);
    assert_eq!(exact.mc_estimate_lambdamax, 0.0);
}

#[test]
fn budget_scales_quadratically() {
    let data = random_dataset(3, 5, 40);
    let a = empirical_rc(&data, 1.0, 100, 9, Expectation::MonteCarlo).unwrap();
    let b = empirical_rc(&data, 2.0, 100, 9, Expectation::MonteCarlo).unwrap();
    assert_eq!(b.mc_estimate_specnorm, 4.0 * a.mc_estimate_specnorm);
    assert_eq!(b.mc_estimate_lambdamax, 4.0 * a.mc_estimate_lambdamax);
}

#[test]
fn fourth_moment_examples() {
    assert!((fourth_moment_s(&e1_e2()) - 1.0).abs() < 1e-15);
    let single = dataset(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
    assert!((fourth_moment_s(&single) - 4.0).abs() < 1e-14);
}

#[test]
fn fourth_moment_below_bounded_ball_value() {
    for seed in 0..50 {
        let data = random_dataset(seed, 10, 60);
        let b = data.inputs().row_iter().map(|r| r.norm()).fold(0.0f64, f64::max);
        let s = fourth_moment_s(&data);
        assert!(s <= data.n() as f64 * b.powi(4) * (1.0 + 1e-12), "seed {seed}");
    }
}

#[test]
fn bound_examples() {
    let bd = bounds(2, 100, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert!((bd.bound_bounded - 0.11774).abs() < 1e-5);
    assert!((bd.bound_bounded - (2.0 * 2f64.ln() / 100.0).sqrt()).abs() < 1e-15);
    // s = n b⁴ collapses the fourth-moment bound onto the bounded-ball one
    for (d, n, m, b) in [(2, 100, 1.0, 1.0), (7, 33, 0.3, 2.5), (40, 1000, 4.0, 0.2)] {
        let s = n as f64 * f64::powi(b, 4);
        let bd = bounds(d, n, m, b, s, 1.0).unwrap();
        assert!(common::rel_err(bd.bound_fourth, bd.bound_bounded, 1e-300) < 1e-12);
    }
    // quadrupling n halves the bounds that do not depend on s
    let a = bounds(9, 50, 1.2, 1.1, 3.0, 2.0).unwrap();
    let b = bounds(9, 200, 1.2, 1.1, 3.0, 2.0).unwrap();
    assert!(common::rel_err(b.bound_bounded, a.bound_bounded / 2.0, 1e-300) < 1e-14);
    assert!(common::rel_err(b.bound_gaussian_nolog, a.bound_gaussian_nolog / 2.0, 1e-300) < 1e-14);
    assert!(common::rel_err(b.bound_gaussian_log, a.bound_gaussian_log / 2.0, 1e-300) < 1e-14);
}

#[test]
fn unit_dimension_flags_vacuous_log_bounds() {
    let bd = bounds(1, 10, 1.0, 1.0, 1.0, 1.0).unwrap();
    assert!(bd.log_d_vacuous);
    assert_eq!(bd.bound_bounded, 0.0);
    assert!(bounds(3, 10, 0.0, 1.0, 1.0, 1.0).is_err());
    assert!(bounds(3, 0, 1.0, 1.0, 1.0, 1.0).is_err());
}

#[test]
fn estimates_dominated_by_fourth_moment_bound() {
    for seed in 0..40 {
        let data = random_dataset(seed + 100, 20, 200);
        let (rep, vacuous) = report(&data, 1.0, 300, seed, Expectation::Auto, 1.0).unwrap();
        assert!(!vacuous);
        assert!(rep.mc_estimate_lambdamax <= rep.mc_estimate_specnorm);
        assert!(
            rep.mc_estimate_specnorm <= rep.bound_fourth + 3.0 * rep.mc_std_error,
            "seed {seed}: {} > {} (n={}, d={})",
            rep.mc_estimate_specnorm,
            rep.bound_fourth,
            rep.n,
            rep.d
        );
    }
}

#[test]
fn report_csv_row_has_header_arity() {
    let (rep, _) = report(&random_dataset(1, 4, 30), 1.0, 50, 1, Expectation::Auto, 1.0).unwrap();
    let cols = quadland::rademacher::RademacherReport::CSV_HEADER.split(',').count();
    assert_eq!(rep.csv_row().split(',').count(), cols);
}

#[test]
fn enumeration_limit_enforced() {
    let data = random_dataset(0, 3, 1);
    let big = dataset(DMatrix::from_element(30, 2, 1.0));
    assert!(empirical_rc(&big, 1.0, 0, 0, Expectation::Enumerate).is_err());
    assert!(empirical_rc(&big, 1.0, 0, 0, Expectation::MonteCarlo).is_err());
    assert!(empirical_rc(&data, 0.0, 10, 0, Expectation::Auto).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimates_are_deterministic_and_ordered(seed in 0u64..100_000, draws in 2usize..64) {
        let data = random_dataset(seed, 8, 40);
        let a = empirical_rc(&data, 1.0, draws, seed, Expectation::MonteCarlo).unwrap();
        let b = empirical_rc(&data, 1.0, draws, seed, Expectation::MonteCarlo).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.mc_estimate_specnorm >= 0.0);
        prop_assert!(a.mc_estimate_lambdamax <= a.mc_estimate_specnorm);
        prop_assert!(a.mc_std_error >= 0.0);
    }
}
