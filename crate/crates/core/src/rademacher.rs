//! Empirical Rademacher complexity of the Frobenius-ball class
//! `{x ↦ xᵀWᵀWx : ‖W‖_F ≤ M}` and the closed-form bounds it is compared with.
//!
//! For a fixed sample the supremum over the class reduces to a spectral
//! quantity of the Rademacher matrix series `Σᵢ σᵢ xᵢxᵢᵀ`:
//!
//! ```text
//! R_S ≈ (M²/n) · E_σ ‖Σᵢ σᵢ xᵢxᵢᵀ‖₂        (spectral-norm form)
//!       (M²/n) · E_σ λ_max(Σᵢ σᵢ xᵢxᵢᵀ)   (rank-one unit-vector form)
//! ```
//!
//! Natural logarithms throughout.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QuadError, Result};
use crate::linalg::{self, CompensatedSum};
use crate::model::Dataset;
use crate::rng;

/// Sample sizes up to this use exact enumeration over all 2ⁿ sign vectors.
pub const MAX_ENUMERATION_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// Exhaustive when n ≤ 12, Monte Carlo otherwise.
    Auto,
    MonteCarlo,
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mc_estimate_specnorm: f64,
    pub mc_estimate_lambdamax: f64,
    /// Standard error of the spectral-norm form; 0 under exact enumeration.
    pub mc_std_error: f64,
    pub num_draws: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcBounds {
    pub bound_bounded: f64,
    pub bound_fourth: f64,
    pub bound_gaussian_nolog: f64,
    pub bound_gaussian_log: f64,
    /// Set when d = 1: the log d factor vanishes and the log bounds are 0.
    pub log_d_vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherReport {
    pub mc_estimate_specnorm: f64,
    pub mc_estimate_lambdamax: f64,
    pub mc_std_error: f64,
    pub num_draws: usize,
    pub exact: bool,
    pub s_fourth_moment: f64,
    pub bound_bounded: f64,
    pub bound_fourth: f64,
    pub bound_gaussian_nolog: f64,
    pub bound_gaussian_log: f64,
    pub frob_budget_m: f64,
    pub max_input_norm: f64,
    pub n: usize,
    pub d: usize,
}

impl RademacherReport {
    pub const CSV_HEADER: &'static str = "n,d,frob_budget_m,num_draws,exact,mc_estimate_specnorm,mc_estimate_lambdamax,mc_std_error,s_fourth_moment,bound_bounded,bound_fourth,bound_gaussian_nolog,bound_gaussian_log";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.17e},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.n,
            self.d,
            self.frob_budget_m,
            self.num_draws,
            self.exact,
            self.mc_estimate_specnorm,
            self.mc_estimate_lambdamax,
            self.mc_std_error,
            self.s_fourth_moment,
            self.bound_bounded,
            self.bound_fourth,
            self.bound_gaussian_nolog,
            self.bound_gaussian_log
        )
    }
}

/// (‖A‖₂, λ_max(A)) of A = Σᵢ σᵢ xᵢxᵢᵀ.
fn series_spectrum(data: &Dataset, signs: &[f64]) -> (f64, f64) {
    let x = data.inputs();
    let signed = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * signs[i]);
    let a = x.transpose() * signed;
    let (lo, hi) = linalg::sym_extreme_eigs(&a);
    (lo.abs().max(hi.abs()), hi)
}

pub fn empirical_rc(
    data: &Dataset,
    frob_budget: f64,
    num_draws: usize,
    seed: u64,
    mode: Expectation,
) -> Result<McEstimate> {
    if !(frob_budget > 0.0) {
        return Err(QuadError::invalid("frob_budget", "M must be > 0"));
    }
    let n = data.n();
    let enumerate = match mode {
        Expectation::Enumerate => {
            if n > 24 {
                return Err(QuadError::invalid(
                    "mode",
                    format!("enumeration over 2^{n} sign vectors is too large"),
                ));
            }
            true
        }
        Expectation::Auto => n <= MAX_ENUMERATION_N,
        Expectation::MonteCarlo => false,
    };
    if !enumerate && num_draws == 0 {
        return Err(QuadError::invalid("num_draws", "must be ≥ 1"));
    }
    let scale = frob_budget * frob_budget / n as f64;

    let samples: Vec<(f64, f64)> = if enumerate {
        (0u64..(1u64 << n))
            .into_par_iter()
            .map(|mask| {
                let signs: Vec<f64> = (0..n)
                    .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                    .collect();
                series_spectrum(data, &signs)
            })
            .collect()
    } else {
        (0..num_draws as u64)
            .into_par_iter()
            .map(|draw| {
                let mut r = rng::seeded(rng::derive_seed(seed, draw));
                let signs: Vec<f64> = (0..n)
                    .map(|_| if r.gen::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                series_spectrum(data, &signs)
            })
            .collect()
    };

    let count = samples.len() as f64;
    let mean_spec = samples.iter().map(|s| s.0).collect::<CompensatedSum>().value() / count;
    let mean_lmax = samples.iter().map(|s| s.1).collect::<CompensatedSum>().value() / count;
    let std_error = if enumerate || samples.len() < 2 {
        0.0
    } else {
        let var = samples
            .iter()
            .map(|s| (s.0 - mean_spec).powi(2))
            .collect::<CompensatedSum>()
            .value()
            / (count - 1.0);
        (var / count).sqrt()
    };
    Ok(McEstimate {
        mc_estimate_specnorm: scale * mean_spec,
        mc_estimate_lambdamax: scale * mean_lmax,
        mc_std_error: scale * std_error,
        num_draws: samples.len(),
        exact: enumerate,
    })
}

/// s = ‖Σᵢ ‖xᵢ‖² xᵢxᵢᵀ‖₂ = ‖Σᵢ (xᵢxᵢᵀ)²‖₂.
pub fn fourth_moment_s(data: &Dataset) -> f64 {
    let x = data.inputs();
    let weighted = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        x[(i, j)] * x.row(i).norm_squared()
    });
    linalg::sym_max_eig(&(x.transpose() * weighted)).max(0.0)
}

/// Closed-form bounds:
/// bounded-ball `√(2b⁴M⁴ ln d / n)`, fourth-moment `√(2M⁴ s ln d)/n`,
/// Gaussian `C√(M⁴d/n)` and its log variant `M²√(2C d ln d / n)`.
pub fn bounds(d: usize, n: usize, m: f64, b: f64, s: f64, c_gauss: f64) -> Result<RcBounds> {
    if d == 0 || n == 0 {
        return Err(QuadError::invalid("d, n", "must be ≥ 1"));
    }
    for (name, v) in [("M", m), ("b", b), ("s", s), ("C", c_gauss)] {
        if !(v > 0.0) {
            return Err(QuadError::InvalidArgument {
                name: "bounds",
                reason: format!("{name} = {v} must be > 0"),
            });
        }
    }
    let (df, nf) = (d as f64, n as f64);
    let ln_d = df.ln();
    let m2 = m * m;
    let m4 = m2 * m2;
    Ok(RcBounds {
        bound_bounded: (2.0 * b.powi(4) * m4 * ln_d / nf).sqrt(),
        bound_fourth: (2.0 * m4 * s * ln_d).sqrt() / nf,
        bound_gaussian_nolog: c_gauss * (m4 * df / nf).sqrt(),
        bound_gaussian_log: m2 * (2.0 * c_gauss * df * ln_d / nf).sqrt(),
        log_d_vacuous: d == 1,
    })
}

/// Monte-Carlo estimate plus every bound, with b = max‖xᵢ‖ and s measured on `data`.
pub fn report(
    data: &Dataset,
    frob_budget: f64,
    num_draws: usize,
    seed: u64,
    mode: Expectation,
    c_gauss: f64,
) -> Result<(RademacherReport, bool)> {
    let est = empirical_rc(data, frob_budget, num_draws, seed, mode)?;
    let s = fourth_moment_s(data);
    let b = data
        .inputs()
        .row_iter()
        .map(|r| r.norm())
        .fold(0.0f64, f64::max);
    let bd = bounds(
        data.d(),
        data.n(),
        frob_budget,
        b.max(f64::MIN_POSITIVE),
        s.max(f64::MIN_POSITIVE),
        c_gauss,
    )?;
    Ok((
        RademacherReport {
            mc_estimate_specnorm: est.mc_estimate_specnorm,
            mc_estimate_lambdamax: est.mc_estimate_lambdamax,
            mc_std_error: est.mc_std_error,
            num_draws: est.num_draws,
            exact: est.exact,
            s_fourth_moment: s,
            bound_bounded: bd.bound_bounded,
            bound_fourth: bd.bound_fourth,
            bound_gaussian_nolog: bd.bound_gaussian_nolog,
            bound_gaussian_log: bd.bound_gaussian_log,
            frob_budget_m: frob_budget,
            max_input_norm: b,
            n: data.n(),
            d: data.d(),
        },
        bd.log_d_vacuous,
    ))
}
