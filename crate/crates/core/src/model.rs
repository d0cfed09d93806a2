//! Quadratic-activation network `f(x, W) = Σⱼ (wⱼᵀx)² = xᵀWᵀWx`, its losses,
//! and the weight-decay objective
//!
//! ```text
//! L(W) = (1/n) Σᵢ ℓ(f(xᵢ, W), yᵢ) + (λ/2)‖W‖²_F + ⟨C, WᵀW⟩
//! ```
//!
//! together with closed-form gradients and Hessian-vector products.
//! Everything depends on `W` only through `M = WᵀW`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{QuadError, Result};
use crate::perturb::PerturbationC;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    /// Labels must be in {−1, +1}.
    BinaryClassification,
}

/// `n` samples in `d` dimensions. Rows of `inputs` are the xᵢ.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    labels: DVector<f64>,
    task: Task,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, labels: DVector<f64>, task: Task) -> Result<Self> {
        if inputs.nrows() == 0 || inputs.ncols() == 0 {
            return Err(QuadError::invalid("inputs", "need n ≥ 1 and d ≥ 1"));
        }
        if labels.len() != inputs.nrows() {
            return Err(QuadError::shape(
                "dataset labels",
                inputs.nrows(),
                labels.len(),
            ));
        }
        for (i, row) in inputs.row_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(QuadError::NonFiniteSample {
                    index: i,
                    what: "input",
                });
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if !y.is_finite() {
                return Err(QuadError::NonFiniteSample {
                    index: i,
                    what: "label",
                });
            }
            if task == Task::BinaryClassification && y != 1.0 && y != -1.0 {
                return Err(QuadError::invalid(
                    "labels",
                    format!("classification label {y} at sample {i} is not ±1"),
                ));
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            task,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn d(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.inputs.row(i).transpose()
    }
}

/// Hidden-layer weights, a `k × d` matrix with one row per hidden unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights(pub DMatrix<f64>);

impl Weights {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 {
            return Err(QuadError::invalid("weights", "need k ≥ 1 hidden units"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(QuadError::invalid("weights", "entries must be finite"));
        }
        Ok(Weights(matrix))
    }

    pub fn zeros(k: usize, d: usize) -> Self {
        Weights(DMatrix::zeros(k, d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    /// `M = WᵀW`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.0.transpose() * &self.0
    }

    pub fn frob_norm(&self) -> f64 {
        self.0.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// ½(ŷ − y)²
    Squared,
    /// log(1 + exp(−yŷ))
    Logistic,
}

/// Loss value with first and second derivatives in ŷ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn loss_derivatives(kind: LossKind, y_hat: f64, y: f64) -> LossEval {
    match kind {
        LossKind::Squared => {
            let r = y_hat - y;
            LossEval {
                value: 0.5 * r * r,
                d1: r,
                d2: 1.0,
            }
        }
        LossKind::Logistic => {
            let z = y * y_hat;
            // softplus(−z) and σ(−z) without overflow
            let value = if z > 0.0 {
                (-z).exp().ln_1p()
            } else {
                -z + z.exp().ln_1p()
            };
            let sig_neg = if z >= 0.0 {
                let e = (-z).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + z.exp())
            };
            LossEval {
                value,
                d1: -y * sig_neg,
                d2: y * y * sig_neg * (1.0 - sig_neg),
            }
        }
    }
}

impl LossKind {
    pub fn eval(self, y_hat: f64, y: f64) -> LossEval {
        loss_derivatives(self, y_hat, y)
    }
}

/// Regularized (and optionally perturbed) training objective.
#[derive(Debug, Clone)]
pub struct Objective {
    pub dataset: Dataset,
    pub loss: LossKind,
    pub lambda: f64,
    pub perturbation: Option<PerturbationC>,
}

impl Objective {
    pub fn new(dataset: Dataset, loss: LossKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(QuadError::invalid("lambda", format!("{lambda} must be ≥ 0")));
        }
        Ok(Objective {
            dataset,
            loss,
            lambda,
            perturbation: None,
        })
    }

    pub fn with_perturbation(mut self, c: PerturbationC) -> Result<Self> {
        if c.dim() != self.dataset.d() {
            return Err(QuadError::shape(
                "perturbation dimension",
                self.dataset.d(),
                c.dim(),
            ));
        }
        self.perturbation = Some(c);
        Ok(self)
    }

    /// Same data and regularization, perturbation dropped.
    pub fn unperturbed(&self) -> Objective {
        Objective {
            dataset: self.dataset.clone(),
            loss: self.loss,
            lambda: self.lambda,
            perturbation: None,
        }
    }

    fn check_weights(&self, w: &Weights) -> Result<()> {
        if w.d() != self.dataset.d() {
            return Err(QuadError::shape("weights columns", self.dataset.d(), w.d()));
        }
        Ok(())
    }

    /// Per-sample predictions ŷᵢ = ‖W xᵢ‖² and the hidden pre-activations Z = X Wᵀ.
    fn predictions(&self, w: &Weights) -> (DMatrix<f64>, Vec<f64>) {
        let z = self.dataset.inputs() * w.matrix().transpose();
        let y_hat = z.row_iter().map(|r| r.norm_squared()).collect();
        (z, y_hat)
    }

    fn sample_losses(&self, y_hat: &[f64]) -> Result<Vec<LossEval>> {
        y_hat
            .iter()
            .zip(self.dataset.labels().iter())
            .enumerate()
            .map(|(i, (&p, &y))| {
                let e = self.loss.eval(p, y);
                if e.value.is_finite() && e.d1.is_finite() && e.d2.is_finite() {
                    Ok(e)
                } else {
                    Err(QuadError::NonFiniteSample {
                        index: i,
                        what: "loss",
                    })
                }
            })
            .collect()
    }

    /// Mean data-fit term (1/n) Σ ℓ(f(xᵢ,W), yᵢ), no regularizer.
    pub fn fit_loss(&self, w: &Weights) -> Result<f64> {
        self.check_weights(w)?;
        let (_, y_hat) = self.predictions(w);
        let evals = self.sample_losses(&y_hat)?;
        Ok(evals.iter().map(|e| e.value).sum::<f64>() / self.dataset.n() as f64)
    }

    /// Ŝ = (2/n) Σ ℓ′ᵢ xᵢxᵢᵀ + λI (+ 2C). The gradient is W·Ŝ.
    pub fn dual_matrix(&self, w: &Weights) -> Result<DMatrix<f64>> {
        self.check_weights(w)?;
        let (_, y_hat) = self.predictions(w);
        let evals = self.sample_losses(&y_hat)?;
        let x = self.dataset.inputs();
        let n = self.dataset.n() as f64;
        let scaled = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * evals[i].d1);
        let mut s = (x.transpose() * scaled) * (2.0 / n);
        for i in 0..s.nrows() {
            s[(i, i)] += self.lambda;
        }
        if let Some(c) = &self.perturbation {
            s += c.matrix() * 2.0;
        }
        Ok(crate::linalg::symmetrize(&s))
    }
}

/// `L(W + Δ) − L(W)` evaluated without cancellation: per-sample prediction
/// changes are formed as `(Δx)ᵀ(2Wx + Δx)` and loss changes from them
/// directly, so tiny decreases stay resolvable near a stationary point.
pub fn objective_change(w: &Weights, delta: &DMatrix<f64>, obj: &Objective) -> Result<f64> {
    obj.check_weights(w)?;
    if delta.shape() != w.matrix().shape() {
        return Err(QuadError::shape(
            "step direction",
            format!("{:?}", w.matrix().shape()),
            format!("{:?}", delta.shape()),
        ));
    }
    let (z, y_hat) = obj.predictions(w);
    let dz = obj.dataset.inputs() * delta.transpose();
    let mut fit = 0.0;
    for (i, (&p, &y)) in y_hat.iter().zip(obj.dataset.labels().iter()).enumerate() {
        let zi = z.row(i);
        let dzi = dz.row(i);
        let change = dzi.dot(&(zi * 2.0 + dzi));
        let dl = loss_change(obj.loss, p, change, y);
        if !dl.is_finite() {
            return Err(QuadError::NonFiniteSample {
                index: i,
                what: "loss",
            });
        }
        fit += dl;
    }
    let mut total = fit / obj.dataset.n() as f64
        + 0.5 * obj.lambda * crate::linalg::frob_inner(delta, &(w.matrix() * 2.0 + delta));
    if let Some(c) = &obj.perturbation {
        let cm = c.matrix();
        total += 2.0 * crate::linalg::frob_inner(&(w.matrix() * cm), delta)
            + crate::linalg::frob_inner(&(delta * cm), delta);
    }
    if !total.is_finite() {
        return Err(QuadError::NonFinite {
            what: "objective change",
        });
    }
    Ok(total)
}

/// ℓ(ŷ + δ, y) − ℓ(ŷ, y).
pub(crate) fn loss_change(kind: LossKind, y_hat: f64, delta: f64, y: f64) -> f64 {
    match kind {
        LossKind::Squared => delta * ((y_hat - y) + 0.5 * delta),
        LossKind::Logistic => {
            // softplus(a + h) − softplus(a) = ln(1 + σ(a)·(eʰ − 1))
            let a = -y * y_hat;
            let h = -y * delta;
            let sig = if a >= 0.0 {
                1.0 / (1.0 + (-a).exp())
            } else {
                let e = a.exp();
                e / (1.0 + e)
            };
            let em1 = h.exp_m1();
            if em1.is_finite() {
                (sig * em1).ln_1p()
            } else {
                kind.eval(y_hat + delta, y).value - kind.eval(y_hat, y).value
            }
        }
    }
}

pub fn forward(w: &Weights, x: &DVector<f64>) -> Result<f64> {
    if x.len() != w.d() {
        return Err(QuadError::shape("forward input", w.d(), x.len()));
    }
    Ok((w.matrix() * x).norm_squared())
}

pub fn objective_value(w: &Weights, obj: &Objective) -> Result<f64> {
    let fit = obj.fit_loss(w)?;
    let mut value = fit + 0.5 * obj.lambda * w.matrix().norm_squared();
    if let Some(c) = &obj.perturbation {
        value += crate::linalg::frob_inner(c.matrix(), &w.gram());
    }
    if !value.is_finite() {
        return Err(QuadError::NonFinite {
            what: "objective value",
        });
    }
    Ok(value)
}

pub fn gradient(w: &Weights, obj: &Objective) -> Result<DMatrix<f64>> {
    obj.check_weights(w)?;
    let (z, y_hat) = obj.predictions(w);
    let evals = obj.sample_losses(&y_hat)?;
    let x = obj.dataset.inputs();
    let n = obj.dataset.n() as f64;
    // (2/n) Zᵀ diag(ℓ′) X = (2/n) Σ ℓ′ᵢ W xᵢ xᵢᵀ
    let scaled_z = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * evals[i].d1);
    let mut g = scaled_z.transpose() * x * (2.0 / n);
    g += w.matrix() * obj.lambda;
    if let Some(c) = &obj.perturbation {
        g += w.matrix() * c.matrix() * 2.0;
    }
    Ok(g)
}

pub fn hessian_vector_product(
    w: &Weights,
    obj: &Objective,
    u: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    obj.check_weights(w)?;
    if u.shape() != w.matrix().shape() {
        return Err(QuadError::shape(
            "hessian direction",
            format!("{:?}", w.matrix().shape()),
            format!("{:?}", u.shape()),
        ));
    }
    let (z, y_hat) = obj.predictions(w);
    let evals = obj.sample_losses(&y_hat)?;
    let x = obj.dataset.inputs();
    let n = obj.dataset.n() as f64;
    let p = x * u.transpose();
    // aᵢ = 2 xᵢᵀWᵀU xᵢ
    let a: Vec<f64> = z
        .row_iter()
        .zip(p.row_iter())
        .map(|(zr, pr)| 2.0 * zr.dot(&pr))
        .collect();
    let curv = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| {
        z[(i, j)] * evals[i].d2 * a[i]
    });
    let slope = DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)] * evals[i].d1);
    let mut h = (curv.transpose() + slope.transpose()) * x * (2.0 / n);
    h += u * obj.lambda;
    if let Some(c) = &obj.perturbation {
        h += u * c.matrix() * 2.0;
    }
    Ok(h)
}
