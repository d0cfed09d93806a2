//! Random PSD perturbation `C` for the smoothed objective `L(W) + ⟨C, WᵀW⟩`.
//!
//! Samples are `C = r · AAᵀ / ‖AAᵀ‖_F` with `A` a standard Gaussian `d × d`
//! matrix and `r ~ Uniform(0, δ]`, so the law is absolutely continuous on the
//! PSD cone and `‖C‖_F ≤ δ` always.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QuadError, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationC {
    matrix: DMatrix<f64>,
    delta: f64,
    seed: u64,
}

impl PerturbationC {
    /// Wrap an explicit matrix. No PSD check is made here; see [`validate`].
    pub fn from_matrix(matrix: DMatrix<f64>, delta: f64, seed: u64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QuadError::shape(
                "perturbation",
                "square matrix",
                format!("{}x{}", matrix.nrows(), matrix.ncols()),
            ));
        }
        Ok(PerturbationC {
            matrix,
            delta,
            seed,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn sample_psd(d: usize, delta: f64, seed: u64) -> Result<PerturbationC> {
    if d == 0 {
        return Err(QuadError::invalid("d", "dimension must be ≥ 1"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(QuadError::invalid("delta", format!("{delta} must be > 0")));
    }
    let mut rng = rng::seeded(seed);
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let gram = &a * a.transpose();
    let norm = gram.norm();
    // (0, 1]: reject the zero draw
    let u: f64 = 1.0 - rng.gen::<f64>();
    let radius = delta * u;
    let mut c = gram * (radius / norm);
    // exact symmetry
    for i in 0..d {
        for j in (i + 1)..d {
            c[(j, i)] = c[(i, j)];
        }
    }
    Ok(PerturbationC {
        matrix: c,
        delta,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub symmetry_defect: f64,
    pub frob_norm: f64,
    pub min_eig: f64,
    pub violations: Vec<String>,
}

impl PerturbationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(c: &PerturbationC) -> PerturbationReport {
    let m = c.matrix();
    let symmetry_defect = (m - m.transpose()).amax();
    let frob_norm = m.norm();
    let (min_eig, max_eig) = linalg::sym_extreme_eigs(m);
    let spectral = min_eig.abs().max(max_eig.abs());
    let mut violations = Vec::new();
    if symmetry_defect != 0.0 {
        violations.push(format!("not symmetric (defect {symmetry_defect:e})"));
    }
    if frob_norm > c.delta() {
        violations.push(format!(
            "Frobenius norm {frob_norm:e} exceeds budget {:e}",
            c.delta()
        ));
    }
    if min_eig < -1e-10 * spectral {
        violations.push(format!("not PSD (minimum eigenvalue {min_eig:e})"));
    }
    PerturbationReport {
        symmetry_defect,
        frob_norm,
        min_eig,
        violations,
    }
}
