//! Nonuniform L1 time stepping for the time-fractional diffusion-wave
//! equation `C D_t^beta u = Delta u + f`, `1 < beta < 2`, on a periodic
//! square.
//!
//! The equation is reduced to order `alpha = beta - 1` through `v = u_t`,
//! and the Caputo derivative of `v` is discretized by the L1 formula at the
//! half points `t_{n-1/2}` of a nonuniform (typically graded) mesh. The
//! crate also provides the complementary (DCC) kernels used in the error
//! analysis, an experimental BDF2 variant, manufactured problems and a
//! verification harness.
//!
//! ```
//! use fracwave::{problems, spacegrid::Grid2D, stepper, timemesh::TimeMesh};
//!
//! let problem = problems::constant_quadratic(1.5).unwrap();
//! let mesh = TimeMesh::graded(20, 1.0, 2.0).unwrap();
//! let grid = Grid2D::new(8, problem.length).unwrap();
//! let report = stepper::run(&problem, &mesh, &grid, &Default::default()).unwrap();
//! assert!((report.u_final.get(0, 0) - 0.5).abs() < 1e-10);
//! ```

pub mod bdf2variant;
pub mod dcckernels;
pub mod harness;
pub mod l1kernels;
pub mod problems;
pub mod quadrature;
pub mod spacegrid;
pub mod special;
pub mod stepper;
pub mod timemesh;

pub use l1kernels::FracOrder;
pub use spacegrid::{Field2D, Grid2D};
pub use timemesh::TimeMesh;
