//! Numerical laboratory for shallow networks with quadratic activation,
//! `f(x, W) = ‖W x‖²`, trained with weight decay.
//!
//! * [`model`]: network, losses, objective, gradient and Hessian-vector product
//! * [`perturb`]: random PSD perturbations for the smoothed objective
//! * [`optimizer`]: gradient descent and saddle-escaping perturbed descent
//! * [`certifier`]: Lanczos curvature, numerical rank, dual optimality certificate
//! * [`convex_oracle`]: trace-penalized convex problem over `M = WᵀW`
//! * [`rademacher`]: empirical Rademacher complexity and closed-form bounds
//! * [`experiments`]: synthetic data, landscape suites, generalization-gap runs

pub mod certifier;
pub mod convex_oracle;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod perturb;
pub mod rademacher;
pub mod rng;

pub use error::{QuadError, Result};
pub use model::{Dataset, LossKind, Objective, Task, Weights};
