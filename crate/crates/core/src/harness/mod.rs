//! Convergence tables, truncation-error measurements and seeded fuzzing of
//! the kernel properties.

mod convergence;
mod fuzz;
mod truncation;

pub use convergence::*;
pub use fuzz::*;
pub use truncation::*;

use thiserror::Error;

use crate::dcckernels::DccError;
use crate::l1kernels::KernelError;
use crate::quadrature::QuadratureError;
use crate::spacegrid::GridError;
use crate::stepper::StepError;
use crate::timemesh::MeshError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dcc(#[from] DccError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid study configuration: {0}")]
    Config(String),
}

/// Predicted temporal order `min(gamma * sigma, 3 - beta)` on graded meshes.
pub fn expected_order(beta: f64, sigma: f64, gamma: f64) -> f64 {
    (gamma * sigma).min(3.0 - beta)
}

/// `log2(e(N) / e(2N))`.
pub fn pair_order(e_coarse: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).log2()
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
