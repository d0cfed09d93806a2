#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use quadland::perturb::sample_psd;
use quadland::model::objective_value;
use quadland::{Dataset, LossKind, Objective, Task, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * r.sample::<f64, _>(StandardNormal))
}

/// Random objective with d, k ≤ 8 and n ≤ 12. Returns (objective, W).
pub fn random_instance(seed: u64, loss: LossKind, with_c: bool) -> (Objective, Weights) {
    let mut r = rng(seed);
    let d = r.gen_range(1..=8);
    let k = r.gen_range(1..=8);
    let n = r.gen_range(1..=12);
    let x = gaussian(&mut r, n, d, 1.0 / (d as f64).sqrt());
    let (labels, task) = match loss {
        LossKind::Squared => (DVector::from_fn(n, |_, _| r.sample(StandardNormal)), Task::Regression),
        LossKind::Logistic => (
            DVector::from_fn(n, |_, _| if r.gen::<bool>() { 1.0 } else { -1.0 }),
            Task::BinaryClassification,
        ),
    };
    let lambda = r.gen_range(0.0..1.0);
    let mut obj = Objective::new(Dataset::new(x, labels, task).unwrap(), loss, lambda).unwrap();
    if with_c {
        obj = obj.with_perturbation(sample_psd(d, 0.5, seed ^ 0xC).unwrap()).unwrap();
    }
    let w = Weights::new(gaussian(&mut r, k, d, 0.7)).unwrap();
    (obj, w)
}

pub fn scalar_objective(lambda: f64) -> Objective {
    let data = Dataset::new(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        Task::Regression,
    )
    .unwrap();
    Objective::new(data, LossKind::Squared, lambda).unwrap()
}

pub fn scalar_weight(v: f64) -> Weights {
    Weights::new(DMatrix::from_element(1, 1, v)).unwrap()
}

/// Relative error with an absolute floor of `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(floor)
}

fn shifted(w: &Weights, dir: &DMatrix<f64>, t: f64) -> Weights {
    Weights(w.matrix() + dir * t)
}

/// Central differences of the objective, one coordinate at a time.
pub fn fd_gradient(w: &Weights, obj: &Objective, h: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(w.k(), w.d());
    for i in 0..w.k() {
        for j in 0..w.d() {
            let mut e = DMatrix::zeros(w.k(), w.d());
            e[(i, j)] = 1.0;
            let up = objective_value(&shifted(w, &e, h), obj).unwrap();
            let dn = objective_value(&shifted(w, &e, -h), obj).unwrap();
            g[(i, j)] = (up - dn) / (2.0 * h);
        }
    }
    g
}

/// Second-order central difference of the objective along `u`.
pub fn fd_curvature(w: &Weights, obj: &Objective, u: &DMatrix<f64>, h: f64) -> f64 {
    let up = objective_value(&shifted(w, u, h), obj).unwrap();
    let mid = objective_value(w, obj).unwrap();
    let dn = objective_value(&shifted(w, u, -h), obj).unwrap();
    (up - 2.0 * mid + dn) / (h * h)
}
