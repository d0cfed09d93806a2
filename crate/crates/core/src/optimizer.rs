//! Full-batch gradient descent on the weight-decay objective, and a
//! perturbed variant that escapes strict saddles using the Hessian's
//! smallest eigenvalue.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certifier::min_hessian_eig;
use crate::error::{QuadError, Result};
use crate::model::{gradient, objective_change, objective_value, Objective, Weights};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StepRule {
    Fixed { eta: f64 },
    /// Armijo backtracking: shrink by `shrink` until
    /// `L(W − tG) ≤ L(W) − c·t‖G‖²`. The trial step starts at twice the last
    /// accepted one.
    Backtracking {
        initial: f64,
        shrink: f64,
        sufficient_decrease: f64,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            initial: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeConfig {
    /// Frobenius radius of the uniform ball perturbation.
    pub radius: f64,
    /// Escape attempts allowed before giving up.
    pub patience: usize,
    /// Negative-curvature threshold ε_H.
    pub hess_tol: f64,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        EscapeConfig {
            radius: 1e-3,
            patience: 10,
            hess_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub step: StepRule,
    pub max_iters: usize,
    /// Stop when ‖∇L‖_F ≤ grad_tol·(1 + ‖W‖_F).
    pub grad_tol: f64,
    pub escape: Option<EscapeConfig>,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            step: StepRule::default(),
            max_iters: 100_000,
            grad_tol: 1e-6,
            escape: None,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(QuadError::invalid("max_iters", "must be ≥ 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(QuadError::invalid("grad_tol", "must be > 0"));
        }
        if !(self.init_scale >= 0.0) {
            return Err(QuadError::invalid("init_scale", "must be ≥ 0"));
        }
        match self.step {
            StepRule::Fixed { eta } if !(eta > 0.0) => {
                return Err(QuadError::invalid("step_size", "must be > 0"))
            }
            StepRule::Backtracking {
                initial,
                shrink,
                sufficient_decrease,
            } => {
                if !(initial > 0.0) || !(shrink > 0.0 && shrink < 1.0) || !(sufficient_decrease > 0.0) {
                    return Err(QuadError::invalid(
                        "backtracking",
                        "need initial > 0, 0 < shrink < 1, sufficient_decrease > 0",
                    ));
                }
            }
            _ => {}
        }
        if let Some(e) = self.escape {
            if !(e.radius > 0.0) || !(e.hess_tol > 0.0) {
                return Err(QuadError::invalid("escape", "radius and hess_tol must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult {
    pub final_weights: Weights,
    pub final_value: f64,
    pub grad_norm_history: Vec<f64>,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
    pub converged: bool,
    pub escapes: usize,
}

impl TrainResult {
    pub fn final_grad_norm(&self) -> f64 {
        self.grad_norm_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,value,grad_norm")?;
        for p in &self.trace {
            writeln!(out, "{},{:.17e},{:.17e}", p.iteration, p.value, p.grad_norm)?;
        }
        Ok(())
    }
}

pub fn init_weights(k: usize, d: usize, init_scale: f64, seed: u64) -> Weights {
    let mut rng = rng::seeded(seed);
    Weights(DMatrix::from_fn(k, d, |_, _| {
        init_scale * rng.sample::<f64, _>(StandardNormal)
    }))
}

fn stop_tolerance(cfg: &OptimConfig, w: &Weights) -> f64 {
    cfg.grad_tol * (1.0 + w.frob_norm())
}

struct Descent<'a> {
    obj: &'a Objective,
    cfg: &'a OptimConfig,
    trial_step: f64,
    trace: Vec<TracePoint>,
    iterations: usize,
}

impl<'a> Descent<'a> {
    fn new(obj: &'a Objective, cfg: &'a OptimConfig) -> Self {
        let trial_step = match cfg.step {
            StepRule::Fixed { eta } => eta,
            StepRule::Backtracking { initial, .. } => initial,
        };
        Descent {
            obj,
            cfg,
            trial_step,
            trace: Vec::new(),
            iterations: 0,
        }
    }

    /// Runs until the gradient test passes or the iteration budget is used.
    /// Returns (weights, value, gradient norm, converged).
    fn run(&mut self, mut w: Weights) -> Result<(Weights, f64, f64, bool)> {
        let mut value = objective_value(&w, self.obj)?;
        let mut grad = gradient(&w, self.obj)?;
        let mut gnorm = grad.norm();
        self.record(value, gnorm);
        loop {
            if gnorm <= stop_tolerance(self.cfg, &w) {
                return Ok((w, value, gnorm, true));
            }
            if self.iterations >= self.cfg.max_iters {
                return Ok((w, value, gnorm, false));
            }
            let Some((next, next_value)) = self.step(&w, value, &grad, gnorm)? else {
                // no representable decrease along −∇L
                return Ok((w, value, gnorm, false));
            };
            assert!(
                matches!(self.cfg.step, StepRule::Fixed { .. }) || next_value <= value,
                "backtracking accepted an ascent step"
            );
            w = next;
            value = next_value;
            grad = gradient(&w, self.obj)?;
            gnorm = grad.norm();
            if !gnorm.is_finite() {
                return Err(QuadError::NonFinite { what: "gradient" });
            }
            self.iterations += 1;
            self.record(value, gnorm);
        }
    }

    fn step(
        &mut self,
        w: &Weights,
        value: f64,
        grad: &DMatrix<f64>,
        gnorm: f64,
    ) -> Result<Option<(Weights, f64)>> {
        match self.cfg.step {
            StepRule::Fixed { eta } => {
                let next = Weights(w.matrix() - grad * eta);
                let v = objective_value(&next, self.obj)?;
                Ok(Some((next, v)))
            }
            StepRule::Backtracking {
                shrink,
                sufficient_decrease,
                ..
            } => {
                let mut t = self.trial_step;
                let g2 = gnorm * gnorm;
                loop {
                    let step = grad * (-t);
                    // overflow on a long trial step just means "shrink"
                    let change = objective_change(w, &step, self.obj).unwrap_or(f64::INFINITY);
                    if change <= -sufficient_decrease * t * g2 {
                        self.trial_step = t * 2.0;
                        let next = Weights(w.matrix() + step);
                        // both are evaluations of L(next); the smaller keeps the
                        // recorded sequence monotone under rounding
                        let fresh = objective_value(&next, self.obj)?;
                        return Ok(Some((next, fresh.min(value + change))));
                    }
                    t *= shrink;
                    if t * gnorm <= f64::EPSILON * (1.0 + w.frob_norm()) {
                        return Ok(None);
                    }
                }
            }
        }
    }

    fn record(&mut self, value: f64, grad_norm: f64) {
        self.trace.push(TracePoint {
            iteration: self.iterations,
            value,
            grad_norm,
        });
    }

    fn finish(self, w: Weights, value: f64, converged: bool, escapes: usize) -> TrainResult {
        TrainResult {
            final_weights: w,
            final_value: value,
            grad_norm_history: self.trace.iter().map(|p| p.grad_norm).collect(),
            trace: self.trace,
            iterations: self.iterations,
            converged,
            escapes,
        }
    }
}

fn check_shapes(w0: &Weights, obj: &Objective) -> Result<()> {
    if w0.d() != obj.dataset.d() {
        return Err(QuadError::shape("initial weights columns", obj.dataset.d(), w0.d()));
    }
    Ok(())
}

pub fn run_gd(w0: &Weights, obj: &Objective, cfg: &OptimConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_shapes(w0, obj)?;
    let mut descent = Descent::new(obj, cfg);
    let (w, value, _, converged) = descent.run(w0.clone())?;
    Ok(descent.finish(w, value, converged, 0))
}

/// Gradient descent that, on reaching a small gradient with Hessian
/// eigenvalue below −ε_H, jumps to a uniform random point in the Frobenius
/// ball of radius `escape.radius` and continues. Converged only when the
/// final point passes both the gradient and the curvature test.
pub fn run_perturbed_gd(w0: &Weights, obj: &Objective, cfg: &OptimConfig) -> Result<TrainResult> {
    cfg.validate()?;
    check_shapes(w0, obj)?;
    let escape = cfg
        .escape
        .ok_or_else(|| QuadError::invalid("escape", "perturbed GD needs an escape config"))?;
    let mut rng = rng::seeded(rng::derive_seed(cfg.seed, 0xE5CA_9E));
    let mut descent = Descent::new(obj, cfg);
    let mut w = w0.clone();
    let mut escapes = 0;
    loop {
        let (w_stop, value, _, small_grad) = descent.run(w)?;
        if !small_grad {
            return Ok(descent.finish(w_stop, value, false, escapes));
        }
        let curvature = min_hessian_eig(&w_stop, obj, 1e-10)?;
        if curvature.value >= -escape.hess_tol {
            return Ok(descent.finish(w_stop, value, true, escapes));
        }
        if escapes >= escape.patience {
            return Ok(descent.finish(w_stop, value, false, escapes));
        }
        escapes += 1;
        w = Weights(w_stop.matrix() + uniform_ball(&mut rng, w_stop.k(), w_stop.d(), escape.radius));
    }
}

/// Uniform sample from the Frobenius ball of the given radius.
fn uniform_ball(rng: &mut rng::SeededRng, k: usize, d: usize, radius: f64) -> DMatrix<f64> {
    let dir = DMatrix::<f64>::from_fn(k, d, |_, _| rng.sample(StandardNormal));
    let u: f64 = rng.gen();
    let r = radius * u.powf(1.0 / (k * d) as f64);
    dir.clone() * (r / dir.norm())
}
