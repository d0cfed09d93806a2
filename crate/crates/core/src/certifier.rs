//! Second-order stationarity and global-optimality certificates.
//!
//! A point `W` is certified globally optimal when the dual matrix
//! `Ŝ = (2/n) Σ ℓ′ᵢ xᵢxᵢᵀ + λI (+ 2C)` is PSD and complementary to `W`
//! (`WŜ = 0`). These are the KKT conditions of the trace-penalized convex
//! problem over `M = WᵀW`, which shares its optimal value with the
//! factorized objective.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QuadError, Result};
use crate::linalg;
use crate::model::{gradient, hessian_vector_product, Objective, Weights};
use crate::rng;

const MAX_RESTARTS: usize = 5;
const LANCZOS_SEED: u64 = 0x5EED_1A4C_205;

/// Smallest Hessian eigenpair. `direction` has unit Frobenius norm.
#[derive(Debug, Clone)]
pub struct HessianEig {
    pub value: f64,
    pub direction: DMatrix<f64>,
    /// Largest |Ritz value| seen, an estimate of ‖∇²L‖₂.
    pub norm_estimate: f64,
    pub iterations: usize,
}

/// Smallest eigenvalue of the Hessian as an operator on `k × d` matrices,
/// via Lanczos with full reorthogonalization on the Hessian-vector product.
pub fn min_hessian_eig(w: &Weights, obj: &Objective, tol: f64) -> Result<HessianEig> {
    let (k, d) = (w.k(), w.d());
    let dim = k * d;
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let u = DMatrix::from_column_slice(k, d, v);
        Ok(hessian_vector_product(w, obj, &u)?.as_slice().to_vec())
    };

    let mut rng = rng::seeded(LANCZOS_SEED);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim.min(512));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new(); // betas[j] couples basis j and j+1
    let mut restarts = 0;
    let mut norm_est = 0.0f64;

    let mut q = random_unit_orthogonal(&mut rng, dim, &basis)
        .ok_or(QuadError::LanczosBreakdown { restarts })?;

    loop {
        let mut r = apply(&q)?;
        let alpha = dot(&q, &r);
        axpy(-alpha, &q, &mut r);
        if let (Some(prev), Some(&beta)) = (basis.last(), betas.last()) {
            axpy(-beta, prev, &mut r);
        }
        basis.push(q);
        alphas.push(alpha);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &r);
                axpy(-c, b, &mut r);
            }
        }
        let beta = norm(&r);
        let m = basis.len();

        let check = m <= 32 || m % 8 == 0 || m == dim || beta <= 1e-12 * norm_est.max(1e-300);
        if check {
            let (theta, s_last, y) = smallest_ritz(&alphas, &betas);
            norm_est = norm_est.max(ritz_norm(&alphas, &betas));
            let residual = beta * s_last.abs();
            let scale = norm_est.max(f64::MIN_POSITIVE);
            if m == dim || residual <= tol * scale {
                let mut dir = vec![0.0; dim];
                for (coef, b) in y.iter().zip(&basis) {
                    axpy(*coef, b, &mut dir);
                }
                let nrm = norm(&dir);
                dir.iter_mut().for_each(|v| *v /= nrm);
                return Ok(HessianEig {
                    value: theta,
                    direction: DMatrix::from_column_slice(k, d, &dir),
                    norm_estimate: norm_est,
                    iterations: m,
                });
            }
        }

        if beta <= 1e-12 * norm_est.max(1e-300) {
            // invariant subspace found before convergence; restart in its complement
            if restarts >= MAX_RESTARTS {
                return Err(QuadError::LanczosBreakdown { restarts });
            }
            restarts += 1;
            betas.push(0.0);
            q = random_unit_orthogonal(&mut rng, dim, &basis)
                .ok_or(QuadError::LanczosBreakdown { restarts })?;
        } else {
            betas.push(beta);
            r.iter_mut().for_each(|v| *v /= beta);
            q = r;
        }
    }
}

fn random_unit_orthogonal(
    rng: &mut rng::SeededRng,
    dim: usize,
    basis: &[Vec<f64>],
) -> Option<Vec<f64>> {
    for _ in 0..4 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in basis {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return Some(v);
        }
    }
    None
}

fn tridiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t
}

/// Smallest Ritz value, last component of its eigenvector, and the eigenvector.
fn smallest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, f64, Vec<f64>) {
    let t = tridiagonal(alphas, betas);
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    let y: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
    (theta, *y.last().unwrap(), y)
}

fn ritz_norm(alphas: &[f64], betas: &[f64]) -> f64 {
    let (lo, hi) = linalg::sym_extreme_eigs(&tridiagonal(alphas, betas));
    lo.abs().max(hi.abs())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense `kd × kd` Hessian assembled column by column from Hessian-vector
/// products on the standard basis (column-major vectorization of `k × d`).
pub fn dense_hessian(w: &Weights, obj: &Objective) -> Result<DMatrix<f64>> {
    let (k, d) = (w.k(), w.d());
    let dim = k * d;
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = DMatrix::zeros(k, d);
        e.as_mut_slice()[j] = 1.0;
        let col = hessian_vector_product(w, obj, &e)?;
        h.set_column(j, &nalgebra::DVector::from_column_slice(col.as_slice()));
    }
    Ok(h)
}

/// Rank = #{σᵢ > rel_tol·σ₁}; ratio = σ_k/σ₁ with k the number of rows
/// (σ_k = 0 when k > d), and 0 when σ₁ = 0.
pub fn numerical_rank(w: &Weights, rel_tol: f64) -> (usize, f64) {
    let sv = linalg::singular_values_desc(w.matrix());
    let s1 = sv.first().copied().unwrap_or(0.0);
    if s1 == 0.0 {
        return (0, 0.0);
    }
    let rank = sv.iter().filter(|&&s| s > rel_tol * s1).count();
    let sk = if w.k() <= sv.len() { sv[w.k() - 1] } else { 0.0 };
    (rank, sk / s1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedGlobal,
    SecondOrderStationaryOnly,
    NotStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertTolerances {
    /// Dual feasibility and complementarity tolerance, scaled by (1+‖W‖_F).
    pub eps: f64,
    /// Gradient tolerance, scaled by (1+‖W‖_F).
    pub grad_tol: f64,
    /// Negative-curvature tolerance ε_H.
    pub hess_tol: f64,
    pub lanczos_tol: f64,
    pub rank_rel_tol: f64,
}

impl Default for CertTolerances {
    fn default() -> Self {
        CertTolerances {
            eps: 1e-6,
            grad_tol: 1e-6,
            hess_tol: 1e-6,
            lanczos_tol: 1e-10,
            rank_rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub grad_norm: f64,
    pub min_hess_eig: f64,
    pub numerical_rank_w: usize,
    pub sigma_ratio: f64,
    pub dual_min_eig: f64,
    pub complementarity: f64,
    pub objective_value: f64,
    pub verdict: Verdict,
}

pub fn dual_certificate(w: &Weights, obj: &Objective) -> Result<Certificate> {
    dual_certificate_with(w, obj, &CertTolerances::default())
}

pub fn dual_certificate_with(
    w: &Weights,
    obj: &Objective,
    tols: &CertTolerances,
) -> Result<Certificate> {
    let scale = 1.0 + w.frob_norm();
    let grad_norm = gradient(w, obj)?.norm();
    let s_hat = obj.dual_matrix(w)?;
    let dual_min_eig = linalg::sym_min_eig(&s_hat);
    let complementarity = (w.matrix() * &s_hat).norm();
    let hess = min_hessian_eig(w, obj, tols.lanczos_tol)?;
    let (numerical_rank_w, sigma_ratio) = numerical_rank(w, tols.rank_rel_tol);
    let objective_value = crate::model::objective_value(w, obj)?;

    let stationary = grad_norm <= tols.grad_tol * scale;
    let verdict = if stationary
        && dual_min_eig >= -tols.eps * scale
        && complementarity <= tols.eps * scale
    {
        Verdict::CertifiedGlobal
    } else if stationary && hess.value >= -tols.hess_tol {
        Verdict::SecondOrderStationaryOnly
    } else {
        Verdict::NotStationary
    };
    Ok(Certificate {
        grad_norm,
        min_hess_eig: hess.value,
        numerical_rank_w,
        sigma_ratio,
        dual_min_eig,
        complementarity,
        objective_value,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, LossKind, Task};
    use nalgebra::DVector;

    fn scalar_objective() -> Objective {
        let data = Dataset::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            Task::Regression,
        )
        .unwrap();
        Objective::new(data, LossKind::Squared, 0.0).unwrap()
    }

    #[test]
    fn scalar_saddle_curvature() {
        let w = Weights::zeros(1, 1);
        let eig = min_hessian_eig(&w, &scalar_objective(), 1e-12).unwrap();
        assert!((eig.value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn regularizer_only_curvature_at_origin() {
        let data = Dataset::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.7, 0.1]),
            DVector::zeros(3),
            Task::Regression,
        )
        .unwrap();
        let obj = Objective::new(data, LossKind::Squared, 0.7).unwrap();
        let eig = min_hessian_eig(&Weights::zeros(3, 2), &obj, 1e-12).unwrap();
        assert!((eig.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rank_examples() {
        let w = Weights::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(numerical_rank(&w, 1e-8), (1, 0.0));
        let eye = Weights::new(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(numerical_rank(&eye, 1e-8), (2, 1.0));
        assert_eq!(numerical_rank(&Weights::zeros(2, 3), 1e-8), (0, 0.0));
        let wide = Weights::new(DMatrix::from_element(3, 2, 1.0)).unwrap();
        assert_eq!(numerical_rank(&wide, 1e-8).1, 0.0);
    }

    #[test]
    fn scalar_certificates() {
        let obj = scalar_objective();
        let at_one = dual_certificate(&Weights::new(DMatrix::from_element(1, 1, 1.0)).unwrap(), &obj)
            .unwrap();
        assert_eq!(at_one.verdict, Verdict::CertifiedGlobal);
        assert_eq!(at_one.dual_min_eig, 0.0);
        let at_zero = dual_certificate(&Weights::zeros(1, 1), &obj).unwrap();
        assert_eq!(at_zero.grad_norm, 0.0);
        assert!((at_zero.dual_min_eig + 2.0).abs() < 1e-15);
        assert!((at_zero.min_hess_eig + 2.0).abs() < 1e-12);
        assert_eq!(at_zero.verdict, Verdict::NotStationary);
    }

    #[test]
    fn zero_labels_origin_is_certified() {
        let data = Dataset::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]),
            DVector::zeros(2),
            Task::Regression,
        )
        .unwrap();
        let obj = Objective::new(data, LossKind::Squared, 0.3).unwrap();
        let cert = dual_certificate(&Weights::zeros(2, 2), &obj).unwrap();
        assert_eq!(cert.verdict, Verdict::CertifiedGlobal);
    }
}
