//! Synthetic data and end-to-end experiment drivers.
//!
//! Every driver is a pure function of its configuration and seed list.
//! Trials run on the rayon pool and are returned in seed order.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certifier::{dual_certificate_with, CertTolerances, Verdict};
use crate::convex_oracle::{solve_convex, ConvexSolution};
use crate::error::{QuadError, Result};
use crate::model::{forward, objective_value, Dataset, LossKind, Objective, Task, Weights};
use crate::optimizer::{init_weights, run_gd, run_perturbed_gd, EscapeConfig, OptimConfig};
use crate::perturb::sample_psd;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputDistribution {
    GaussianStandard,
    /// Uniform on the sphere of radius `b`.
    BoundedSphere { b: f64 },
}

/// Planted network with `k0` units; every row has norm ≤ `row_norm_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    pub k0: usize,
    pub row_norm_bound: f64,
    pub weights: DMatrix<f64>,
}

impl Teacher {
    /// Gaussian rows rescaled to norm exactly `row_norm_bound`.
    pub fn random(k0: usize, d: usize, row_norm_bound: f64, seed: u64) -> Teacher {
        let mut r = rng::seeded(seed);
        let mut w = DMatrix::<f64>::from_fn(k0, d, |_, _| r.sample(StandardNormal));
        for mut row in w.row_iter_mut() {
            let nrm = row.norm();
            row *= row_norm_bound / nrm;
        }
        Teacher {
            k0,
            row_norm_bound,
            weights: w,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.weights.ncols() != d || self.weights.nrows() != self.k0 {
            return Err(QuadError::shape(
                "teacher weights",
                format!("{}x{d}", self.k0),
                format!("{}x{}", self.weights.nrows(), self.weights.ncols()),
            ));
        }
        for (j, row) in self.weights.row_iter().enumerate() {
            if row.norm() > self.row_norm_bound * (1.0 + 1e-12) {
                return Err(QuadError::invalid(
                    "teacher",
                    format!("row {j} norm {} exceeds bound {}", row.norm(), self.row_norm_bound),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub n: usize,
    pub d: usize,
    pub distribution: InputDistribution,
    pub teacher: Option<Teacher>,
    pub noise_std: f64,
    pub task: Task,
    pub seed: u64,
}

/// Regression labels are teacher output plus Gaussian noise. Classification
/// labels are the sign of (teacher output + noise) minus its median, which
/// balances the classes; ties go to +1.
pub fn gen_synthetic(spec: &DataSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.d == 0 {
        return Err(QuadError::invalid("n, d", "must be ≥ 1"));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(QuadError::invalid("noise_std", "must be ≥ 0"));
    }
    if let Some(t) = &spec.teacher {
        t.validate(spec.d)?;
    }
    let mut r = rng::seeded(spec.seed);
    let mut x = DMatrix::<f64>::from_fn(spec.n, spec.d, |_, _| r.sample(StandardNormal));
    if let InputDistribution::BoundedSphere { b } = spec.distribution {
        if !(b > 0.0) {
            return Err(QuadError::invalid("b", "sphere radius must be > 0"));
        }
        for mut row in x.row_iter_mut() {
            let nrm = row.norm();
            row *= b / nrm;
        }
    }
    let teacher = spec.teacher.as_ref().map(|t| Weights(t.weights.clone()));
    let mut scores = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let clean = match &teacher {
            Some(w) => forward(w, &x.row(i).transpose())?,
            None => 0.0,
        };
        let noise = if spec.noise_std > 0.0 {
            spec.noise_std * r.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        scores.push(clean + noise);
    }
    let labels = match spec.task {
        Task::Regression => scores,
        Task::BinaryClassification => {
            let med = median(&scores);
            scores
                .iter()
                .map(|&s| if s >= med { 1.0 } else { -1.0 })
                .collect()
        }
    };
    Dataset::new(x, DVector::from_vec(labels), spec.task)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

fn spec_with_seed(spec: &DataSpec, n: usize, seed: u64) -> DataSpec {
    DataSpec {
        n,
        seed,
        ..spec.clone()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn fmt(v: f64) -> String {
    crate::io::fmt_f64(v)
}

// ---------------------------------------------------------------------------
// generalization gap

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub data: DataSpec,
    pub k: usize,
    pub loss: LossKind,
    pub lambda: f64,
    pub test_n: usize,
    pub seeds: Vec<u64>,
    pub train: OptimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTrial {
    pub seed: u64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    pub m_frob: f64,
    pub bound_gaussian: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub train_loss: f64,
    pub test_loss: f64,
    pub gap: f64,
    /// M²√(d/n) with M = ‖W‖_F, the Gaussian-input rate with constant 1.
    pub bound_gaussian: f64,
    pub n: usize,
    pub d: usize,
    pub m_frob: f64,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<(u64, String)>,
    pub trials: Vec<GapTrial>,
}

impl GapReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "seed,n,d,train_loss,test_loss,gap,m_frob,bound_gaussian,iterations,converged"
        )?;
        for t in &self.trials {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.seed,
                self.n,
                self.d,
                fmt(t.train_loss),
                fmt(t.test_loss),
                fmt(t.gap),
                fmt(t.m_frob),
                fmt(t.bound_gaussian),
                t.iterations,
                t.converged
            )?;
        }
        Ok(())
    }
}

fn gap_trial(cfg: &GapConfig, seed: u64) -> Result<GapTrial> {
    let train = gen_synthetic(&spec_with_seed(&cfg.data, cfg.data.n, rng::derive_seed(seed, 0)))?;
    let test = gen_synthetic(&spec_with_seed(&cfg.data, cfg.test_n, rng::derive_seed(seed, 1)))?;
    let obj = Objective::new(train, cfg.loss, cfg.lambda)?;
    let w0 = init_weights(cfg.k, cfg.data.d, cfg.train.init_scale, rng::derive_seed(seed, 2));
    let res = run_gd(&w0, &obj, &cfg.train)?;
    let w = &res.final_weights;
    let train_loss = obj.fit_loss(w)?;
    let test_obj = Objective::new(test, cfg.loss, cfg.lambda)?;
    let test_loss = test_obj.fit_loss(w)?;
    let m_frob = w.frob_norm();
    Ok(GapTrial {
        seed,
        train_loss,
        test_loss,
        gap: test_loss - train_loss,
        m_frob,
        bound_gaussian: m_frob * m_frob * (cfg.data.d as f64 / cfg.data.n as f64).sqrt(),
        iterations: res.iterations,
        converged: res.converged,
    })
}

pub fn run_gap_experiment(cfg: &GapConfig) -> Result<GapReport> {
    if cfg.test_n == 0 {
        return Err(QuadError::invalid("test_n", "must be ≥ 1"));
    }
    if cfg.k == 0 {
        return Err(QuadError::invalid("k", "must be ≥ 1"));
    }
    cfg.train.validate()?;
    let outcomes: Vec<(u64, Result<GapTrial>)> = cfg
        .seeds
        .par_iter()
        .map(|&s| (s, gap_trial(cfg, s)))
        .collect();
    let mut trials = Vec::new();
    let mut failed_seeds = Vec::new();
    for (seed, out) in outcomes {
        match out {
            Ok(t) => trials.push(t),
            Err(e) if e.is_numerical() => failed_seeds.push((seed, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let col = |f: fn(&GapTrial) -> f64| mean(&trials.iter().map(f).collect::<Vec<_>>());
    let train_loss = col(|t| t.train_loss);
    let test_loss = col(|t| t.test_loss);
    Ok(GapReport {
        train_loss,
        test_loss,
        gap: test_loss - train_loss,
        bound_gaussian: col(|t| t.bound_gaussian),
        n: cfg.data.n,
        d: cfg.data.d,
        m_frob: col(|t| t.m_frob),
        seeds: cfg.seeds.clone(),
        failed_seeds,
        trials,
    })
}

// ---------------------------------------------------------------------------
// landscape suite

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub lambda: f64,
    pub loss: LossKind,
    /// Frobenius budget of the random PSD perturbation; `None` for the plain objective.
    pub smoothed_delta: Option<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Perturbed GD even without smoothing.
    pub perturbed: bool,
    pub teacher_k0: usize,
    pub noise_std: f64,
    pub train: OptimConfig,
    pub cert: CertTolerances,
    pub oracle_tol: f64,
    pub oracle_max_iters: usize,
    /// Relative value-gap tolerance against the oracle.
    pub value_tol: f64,
    /// σ_k/σ₁ threshold counted as rank deficient.
    pub rank_ratio_tol: f64,
}

impl LandscapeConfig {
    pub fn new(d: usize, k: usize, n: usize, lambda: f64, loss: LossKind, trials: usize) -> Self {
        LandscapeConfig {
            d,
            k,
            n,
            lambda,
            loss,
            smoothed_delta: None,
            trials,
            base_seed: 0,
            perturbed: false,
            teacher_k0: 2.min(d),
            noise_std: 0.5,
            // the dual certificate is only as accurate as ‖∇L‖/σ_min(W) allows;
            // stopping at 1e−6 leaves Ŝ visibly indefinite on small-σ runs
            train: OptimConfig {
                grad_tol: 1e-9,
                ..OptimConfig::default()
            },
            cert: CertTolerances::default(),
            oracle_tol: 1e-8,
            oracle_max_iters: 200_000,
            value_tol: 1e-4,
            rank_ratio_tol: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 || self.n == 0 || self.trials == 0 {
            return Err(QuadError::invalid("landscape", "d, k, n, trials must be ≥ 1"));
        }
        if let Some(delta) = self.smoothed_delta {
            if !(delta > 0.0) {
                return Err(QuadError::invalid("delta", "must be > 0"));
            }
            if self.k * (self.k + 1) / 2 <= self.n {
                return Err(QuadError::invalid(
                    "k",
                    format!("smoothed runs need k(k+1)/2 > n (k={}, n={})", self.k, self.n),
                ));
            }
            if self.k >= self.d {
                return Err(QuadError::invalid("k", "smoothed runs need k < d"));
            }
        }
        self.train.validate()
    }

    /// Data specification used for the trial with derived seed `seed`.
    pub fn data_spec(&self, seed: u64) -> DataSpec {
        let task = match self.loss {
            LossKind::Squared => Task::Regression,
            LossKind::Logistic => Task::BinaryClassification,
        };
        let teacher = (self.teacher_k0 > 0).then(|| {
            Teacher::random(self.teacher_k0, self.d, 1.0, rng::derive_seed(seed, 10))
        });
        DataSpec {
            n: self.n,
            d: self.d,
            distribution: InputDistribution::GaussianStandard,
            teacher,
            noise_std: self.noise_std,
            task,
            seed: rng::derive_seed(seed, 11),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeTrial {
    pub trial: usize,
    pub seed: u64,
    pub value: f64,
    /// Unperturbed objective at the final point.
    pub plain_value: f64,
    pub oracle_value: f64,
    pub oracle_trace: f64,
    pub oracle_kkt: f64,
    pub rel_gap: f64,
    pub verdict: Verdict,
    pub grad_norm: f64,
    /// ‖Ŵ‖_F
    pub weight_norm: f64,
    pub min_hess_eig: f64,
    pub dual_min_eig: f64,
    pub rank: usize,
    pub sigma_ratio: f64,
    pub iterations: usize,
    pub escapes: usize,
    pub converged: bool,
    /// Smoothed runs only: L(Ŵ) ≤ L* + δ·trace(M*) + 1e−4.
    pub smoothed_bound: Option<f64>,
    pub smoothed_bound_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSummary {
    pub config: LandscapeConfig,
    pub trials: Vec<LandscapeTrial>,
    pub fraction_certified: f64,
    pub fraction_value_matched: f64,
    pub max_rel_gap: f64,
    pub rank_min: usize,
    pub rank_max: usize,
    pub fraction_rank_deficient: f64,
    pub smoothed_bound_holds_all: Option<bool>,
}

impl LandscapeSummary {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,seed,value,plain_value,oracle_value,oracle_trace,rel_gap,verdict,grad_norm,weight_norm,min_hess_eig,dual_min_eig,rank,sigma_ratio,iterations,escapes,converged,smoothed_bound_holds")?;
        for t in &self.trials {
            let verdict = match t.verdict {
                Verdict::CertifiedGlobal => "certified-global",
                Verdict::SecondOrderStationaryOnly => "second-order-stationary-only",
                Verdict::NotStationary => "not-stationary",
            };
            let bound = t
                .smoothed_bound_holds
                .map(|b| b.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                fmt(t.value),
                fmt(t.plain_value),
                fmt(t.oracle_value),
                fmt(t.oracle_trace),
                fmt(t.rel_gap),
                verdict,
                fmt(t.grad_norm),
                fmt(t.weight_norm),
                fmt(t.min_hess_eig),
                fmt(t.dual_min_eig),
                t.rank,
                fmt(t.sigma_ratio),
                t.iterations,
                t.escapes,
                t.converged,
                bound
            )?;
        }
        Ok(())
    }
}

fn landscape_trial(cfg: &LandscapeConfig, trial: usize) -> Result<LandscapeTrial> {
    let seed = rng::derive_seed(cfg.base_seed, trial as u64);
    let data = gen_synthetic(&cfg.data_spec(seed))?;
    let plain = Objective::new(data, cfg.loss, cfg.lambda)?;
    let obj = match cfg.smoothed_delta {
        Some(delta) => plain
            .clone()
            .with_perturbation(sample_psd(cfg.d, delta, rng::derive_seed(seed, 12))?)?,
        None => plain.clone(),
    };
    let train_cfg = OptimConfig {
        seed: rng::derive_seed(seed, 13),
        escape: if cfg.perturbed || cfg.smoothed_delta.is_some() {
            Some(cfg.train.escape.unwrap_or_default())
        } else {
            None
        },
        ..cfg.train
    };
    let w0 = init_weights(cfg.k, cfg.d, train_cfg.init_scale, rng::derive_seed(seed, 14));
    let res = if train_cfg.escape.is_some() {
        run_perturbed_gd(&w0, &obj, &train_cfg)?
    } else {
        run_gd(&w0, &obj, &train_cfg)?
    };
    let w = &res.final_weights;
    let cert = dual_certificate_with(w, &obj, &cfg.cert)?;
    let oracle: ConvexSolution = solve_convex(
        &plain.dataset,
        cfg.loss,
        cfg.lambda,
        cfg.oracle_tol,
        cfg.oracle_max_iters,
    )?;
    let plain_value = objective_value(w, &plain)?;
    let rel_gap = (plain_value - oracle.value).abs() / oracle.value.abs().max(f64::MIN_POSITIVE);
    let smoothed_bound = cfg
        .smoothed_delta
        .map(|delta| oracle.value + delta * oracle.trace() + 1e-4);
    Ok(LandscapeTrial {
        trial,
        seed,
        value: res.final_value,
        plain_value,
        oracle_value: oracle.value,
        oracle_trace: oracle.trace(),
        oracle_kkt: oracle.kkt_residual,
        rel_gap,
        verdict: cert.verdict,
        grad_norm: cert.grad_norm,
        weight_norm: w.frob_norm(),
        min_hess_eig: cert.min_hess_eig,
        dual_min_eig: cert.dual_min_eig,
        rank: cert.numerical_rank_w,
        sigma_ratio: cert.sigma_ratio,
        iterations: res.iterations,
        escapes: res.escapes,
        converged: res.converged,
        smoothed_bound,
        smoothed_bound_holds: smoothed_bound.map(|b| plain_value <= b),
    })
}

pub fn run_landscape_suite(cfg: &LandscapeConfig) -> Result<LandscapeSummary> {
    cfg.validate()?;
    let trials: Vec<LandscapeTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| landscape_trial(cfg, t))
        .collect::<Result<_>>()?;
    let count = trials.len() as f64;
    let frac = |pred: &dyn Fn(&LandscapeTrial) -> bool| {
        trials.iter().filter(|t| pred(t)).count() as f64 / count
    };
    Ok(LandscapeSummary {
        fraction_certified: frac(&|t| t.verdict == Verdict::CertifiedGlobal),
        fraction_value_matched: frac(&|t| t.rel_gap <= cfg.value_tol),
        max_rel_gap: trials.iter().map(|t| t.rel_gap).fold(0.0, f64::max),
        rank_min: trials.iter().map(|t| t.rank).min().unwrap_or(0),
        rank_max: trials.iter().map(|t| t.rank).max().unwrap_or(0),
        fraction_rank_deficient: frac(&|t| t.sigma_ratio <= cfg.rank_ratio_tol),
        smoothed_bound_holds_all: cfg
            .smoothed_delta
            .map(|_| trials.iter().all(|t| t.smoothed_bound_holds == Some(true))),
        config: cfg.clone(),
        trials,
    })
}

// ---------------------------------------------------------------------------

/// Default gradient-descent settings used by the drivers: backtracking with
/// ε_g = 1e−6, escape radius 1e−3, patience 10.
pub fn default_train_config() -> OptimConfig {
    OptimConfig {
        escape: Some(EscapeConfig::default()),
        ..OptimConfig::default()
    }
}
