//! Convex reference problem over the PSD cone
//!
//! ```text
//! min_{M ⪰ 0} (1/n) Σᵢ ℓ(xᵢᵀMxᵢ, yᵢ) + (λ/2) trace(M)
//! ```
//!
//! whose value coincides with the best factorized objective `L(W)` for
//! `M = WᵀW`. Solved by accelerated projected gradient with backtracking.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{QuadError, Result};
use crate::linalg::{self, project_psd};
use crate::model::{loss_change, Dataset, LossKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexSolution {
    pub m: DMatrix<f64>,
    pub value: f64,
    pub kkt_residual: f64,
    pub fixed_point_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ConvexSolution {
    /// ‖W*‖²_F for any factorization M* = W*ᵀW*.
    pub fn trace(&self) -> f64 {
        self.m.trace()
    }
}

fn predictions(m: &DMatrix<f64>, data: &Dataset) -> Vec<f64> {
    let x = data.inputs();
    let xm = x * m;
    xm.row_iter()
        .zip(x.row_iter())
        .map(|(a, b)| a.dot(&b))
        .collect()
}

fn check_m(m: &DMatrix<f64>, data: &Dataset) -> Result<()> {
    if m.nrows() != data.d() || m.ncols() != data.d() {
        return Err(QuadError::shape(
            "convex variable",
            format!("{0}x{0}", data.d()),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn objective_in_m(m: &DMatrix<f64>, data: &Dataset, loss: LossKind, lambda: f64) -> Result<f64> {
    check_m(m, data)?;
    let fit: f64 = predictions(m, data)
        .iter()
        .zip(data.labels().iter())
        .map(|(&p, &y)| loss.eval(p, y).value)
        .sum::<f64>()
        / data.n() as f64;
    let value = fit + 0.5 * lambda * m.trace();
    if !value.is_finite() {
        return Err(QuadError::NonFinite {
            what: "convex objective",
        });
    }
    Ok(value)
}

/// G = (1/n) Σ ℓ′ᵢ xᵢxᵢᵀ + (λ/2) I, the gradient of the convex objective.
fn gradient_in_m(m: &DMatrix<f64>, data: &Dataset, loss: LossKind, lambda: f64) -> DMatrix<f64> {
    let x = data.inputs();
    let d1: Vec<f64> = predictions(m, data)
        .iter()
        .zip(data.labels().iter())
        .map(|(&p, &y)| loss.eval(p, y).d1)
        .collect();
    let scaled = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * d1[i]);
    let mut g = (x.transpose() * scaled) / data.n() as f64;
    for i in 0..g.nrows() {
        g[(i, i)] += 0.5 * lambda;
    }
    linalg::symmetrize(&g)
}

/// max(0, −λ_min(G)) + |⟨G, M⟩| / (1 + ‖M‖_F).
pub fn kkt_residual(m: &DMatrix<f64>, data: &Dataset, loss: LossKind, lambda: f64) -> Result<f64> {
    check_m(m, data)?;
    let g = gradient_in_m(m, data, loss, lambda);
    Ok(kkt_from_gradient(m, &g))
}

fn kkt_from_gradient(m: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let dual_infeas = (-linalg::sym_min_eig(g)).max(0.0);
    dual_infeas + linalg::frob_inner(g, m).abs() / (1.0 + m.norm())
}

pub fn solve_convex(
    data: &Dataset,
    loss: LossKind,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ConvexSolution> {
    if !(lambda >= 0.0) {
        return Err(QuadError::invalid("lambda", "must be ≥ 0"));
    }
    if !(tol > 0.0) {
        return Err(QuadError::invalid("tol", "must be > 0"));
    }
    let d = data.d();
    let mut m = DMatrix::zeros(d, d);
    let mut prev = m.clone();
    let mut value = objective_in_m(&m, data, loss, lambda)?;
    let mut momentum = 1.0f64;
    let mut step = 1.0;
    let mut iterations = 0;
    loop {
        let g = gradient_in_m(&m, data, loss, lambda);
        let fixed_point_residual = (&m - project_psd(&(&m - &g))).norm();
        let kkt = kkt_from_gradient(&m, &g);
        let converged = fixed_point_residual <= tol && kkt <= tol;
        let mut stalled = false;
        if !converged && iterations < max_iters {
            // Nesterov extrapolation; dropped (restart) whenever it fails to decrease
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next_momentum;
            let mut accepted = None;
            if beta > 0.0 {
                let y = project_psd(&(&m + (&m - &prev) * beta));
                let gy = gradient_in_m(&y, data, loss, lambda);
                let (cand, t) = projected_step(&y, &gy, step, data, loss, lambda);
                step = t * 2.0;
                if change_in_m(&m, &(&cand - &m), data, loss, lambda) < 0.0 {
                    accepted = Some(cand);
                    momentum = next_momentum;
                } else {
                    momentum = 1.0;
                }
            }
            if accepted.is_none() {
                let (cand, t) = projected_step(&m, &g, step, data, loss, lambda);
                step = t * 2.0;
                // a plain step that cannot decrease means the value has hit
                // rounding level; nothing further is resolvable
                if change_in_m(&m, &(&cand - &m), data, loss, lambda) <= 0.0 && cand != m {
                    accepted = Some(cand);
                } else {
                    stalled = true;
                }
            }
            if let Some(next) = accepted {
                prev = std::mem::replace(&mut m, next);
                value = objective_in_m(&m, data, loss, lambda)?;
                iterations += 1;
                continue;
            }
        }
        if converged || stalled || iterations >= max_iters {
            return Ok(ConvexSolution {
                m,
                value,
                kkt_residual: kkt,
                fixed_point_residual,
                iterations,
                converged,
            });
        }
    }
}

/// Objective change from `m` to `m + diff`, formed per sample so that small
/// decreases are not lost to cancellation.
fn change_in_m(
    m: &DMatrix<f64>,
    diff: &DMatrix<f64>,
    data: &Dataset,
    loss: LossKind,
    lambda: f64,
) -> f64 {
    let dp = predictions(diff, data);
    let fit: f64 = predictions(m, data)
        .iter()
        .zip(&dp)
        .zip(data.labels().iter())
        .map(|((&p, &delta), &y)| loss_change(loss, p, delta, y))
        .sum::<f64>()
        / data.n() as f64;
    let total = fit + 0.5 * lambda * diff.trace();
    if total.is_nan() {
        f64::INFINITY
    } else {
        total
    }
}

/// One projected-gradient step from `base` with backtracking on the
/// quadratic upper model. Returns (point, accepted step).
fn projected_step(
    base: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    initial_step: f64,
    data: &Dataset,
    loss: LossKind,
    lambda: f64,
) -> (DMatrix<f64>, f64) {
    let mut t = initial_step;
    loop {
        let cand = project_psd(&(base - grad * t));
        let diff = &cand - base;
        let change = change_in_m(base, &diff, data, loss, lambda);
        let model = linalg::frob_inner(grad, &diff) + diff.norm_squared() / (2.0 * t);
        if change <= model || t < 1e-20 {
            return (cand, t);
        }
        t *= 0.5;
    }
}
