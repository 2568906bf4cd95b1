//! Detection and exact solution of quadratic ODE systems
//! `ẋ_i = xᵀ A_i x + v_iᵀ x` that become linear under the generalized
//! inversion `y = x / (xᵀ B x)`.
//!
//! The pipeline: [`spectral`] enumerates symmetric eigenmatrices of `V`,
//! [`detector`] tests them against the quadratic kernels and emits verified
//! [`detector::LinearReduction`]s, [`closedform`] evaluates the resulting
//! closed-form trajectories, and [`oracle`] cross-checks everything against an
//! adaptive Runge–Kutta integrator.

pub mod closedform;
pub mod detector;
pub mod error;
pub mod expm;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod spectral;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use model::QdeSystem;
pub use closedform::ClosedFormSolution;
pub use detector::{detect, LinearReduction};
pub use trajectory::Trajectory;
