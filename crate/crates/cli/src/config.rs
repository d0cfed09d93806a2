//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use quadland::{LossKind, Task};

/// Every key a config file may set. Unknown keys are rejected by name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,

    // data
    pub data: Option<PathBuf>,
    pub task: Option<TaskName>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub distribution: Option<Distribution>,
    pub b: Option<f64>,
    pub k0: Option<usize>,
    pub teacher_norm: Option<f64>,
    pub noise_std: Option<f64>,

    // model and training
    pub weights: Option<PathBuf>,
    pub k: Option<usize>,
    pub loss: Option<LossName>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub step_size: Option<f64>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub init_scale: Option<f64>,
    pub perturbed: Option<bool>,
    pub escape_radius: Option<f64>,
    pub patience: Option<usize>,
    pub hess_tol: Option<f64>,
    pub trace: Option<PathBuf>,

    // certificate / oracle
    pub eps: Option<f64>,
    pub tol: Option<f64>,

    // rademacher
    pub mc_draws: Option<usize>,
    pub frob_budget: Option<f64>,
    pub c_gauss: Option<f64>,
    pub enumerate: Option<bool>,

    // experiments
    pub trials: Option<usize>,
    pub seeds: Option<usize>,
    pub test_n: Option<usize>,
    pub n_values: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Squared,
    Logistic,
}

impl From<LossName> for LossKind {
    fn from(l: LossName) -> Self {
        match l {
            LossName::Squared => LossKind::Squared,
            LossName::Logistic => LossKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gaussian,
    Sphere,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {}", path.display(), e.message()))
    }

    /// Values set in `over` win.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),* $(,)?) => {
                RunConfig { $($f: over.$f.or(self.$f)),* }
            };
        }
        pick!(
            seed, out, format, data, task, n, d, distribution, b, k0, teacher_norm, noise_std,
            weights, k, loss, lambda, delta, step_size, max_iters, grad_tol, init_scale,
            perturbed, escape_radius, patience, hess_tol, trace, eps, tol, mc_draws,
            frob_budget, c_gauss, enumerate, trials, seeds, test_n, n_values,
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn loss(&self) -> LossKind {
        self.loss.map(Into::into).unwrap_or(LossKind::Squared)
    }

    /// Explicit task, else classification exactly when the loss is logistic.
    pub fn task(&self) -> Task {
        match self.task {
            Some(TaskName::Regression) => Task::Regression,
            Some(TaskName::Classification) => Task::BinaryClassification,
            None => match self.loss() {
                LossKind::Logistic => Task::BinaryClassification,
                LossKind::Squared => Task::Regression,
            },
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(0.1)
    }
}
