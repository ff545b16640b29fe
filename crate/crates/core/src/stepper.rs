//! Time marching for the order-reduced L1 scheme.
//!
//! With `w_k = (u^k - u^{k-1}) / tau_k` the half-point velocity, each step
//! solves
//!
//! ```text
//! (c I - kappa/2 Delta_h) u^n = c u^{n-1} + kappa/2 Delta_h u^{n-1} + f^{n-1/2} - H^n - N^{n-1/2},
//! c = a^{(n)}_0 / tau_n,
//! ```
//!
//! where `H^n` collects the kernel-weighted history and `N` is the optional
//! cubic term evaluated at `(u^n + u^{n-1})/2`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::l1kernels::{l1_row, FracOrder, KernelError, L1KernelRow};
use crate::problems::{ForcingSampler, Nonlinearity, ProblemError, ProblemSpec};
use crate::spacegrid::{
    apply_helmholtz, laplacian, norm_l2, Field2D, Grid2D, GridError, HelmholtzSolver,
};
use crate::timemesh::TimeMesh;

/// Elements per work unit in the history reduction.
const HISTORY_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("kernel row is for step {got}, state expects step {expected}")]
    RowMismatch { expected: usize, got: usize },
    #[error("all {0} steps already taken")]
    Finished(usize),
    #[error("step {n}: fixed-point iteration stalled at relative change {residual:e} after {iterations} iterations")]
    PicardDiverged {
        n: usize,
        residual: f64,
        iterations: usize,
    },
    #[error("step {n}: linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    SolveResidual { n: usize, residual: f64, tol: f64 },
    #[error("step {n}: solution is no longer finite")]
    NonFinite { n: usize },
    #[error("problem T = {problem} does not match mesh T = {mesh}")]
    FinalTimeMismatch { problem: f64, mesh: f64 },
    #[error("problem L = {problem} does not match grid L = {grid}")]
    LengthMismatch { problem: f64, grid: f64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Fixed-point settings for the semilinear step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Evaluate the cubic term at `u^{n-1}` instead of iterating.
    pub lagged: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            lagged: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepperOptions {
    pub picard: PicardOptions,
    /// Relative residual allowed in each Helmholtz solve.
    pub solve_tol: f64,
    /// Steps whose solution is kept in the report (0 means the initial data).
    pub snapshot_steps: Vec<usize>,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            picard: PicardOptions::default(),
            solve_tol: 1e-10,
            snapshot_steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSolveStats {
    pub n: usize,
    pub t: f64,
    pub tau: f64,
    /// Zero for linear steps.
    pub picard_iterations: usize,
    /// Last relative Picard change, or the solve residual for linear steps.
    pub residual: f64,
    pub solve_residual: f64,
    pub wall_ms: f64,
}

impl StepSolveStats {
    pub const CSV_HEADER: &'static str = "n,t_n,tau_n,picard_iters,residual,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{},{:e},{:.3}",
            self.n, self.t, self.tau, self.picard_iterations, self.residual, self.wall_ms
        )
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub n: usize,
    pub t: f64,
    pub u: Field2D,
    /// `w_n` as carried in the history, `None` at `n = 0`.
    pub w: Option<Field2D>,
}

#[derive(Debug, Clone)]
pub struct SolutionReport {
    pub scheme: &'static str,
    pub final_time: f64,
    pub u_final: Field2D,
    pub snapshots: Vec<Snapshot>,
    pub stats: Vec<StepSolveStats>,
}

impl SolutionReport {
    pub fn stats_csv(&self) -> String {
        let mut out = String::from(StepSolveStats::CSV_HEADER);
        out.push('\n');
        for s in &self.stats {
            out.push_str(&s.csv_row());
            out.push('\n');
        }
        out
    }
}

/// March state: `u^{n-1}`, the initial velocity and the half-point
/// velocities `w_1..w_{n-1}`.
pub struct SchemeState {
    n: usize,
    u_prev: Field2D,
    v0: Field2D,
    w_hist: Vec<Field2D>,
    mesh: TimeMesh,
    grid: Grid2D,
    alpha: FracOrder,
    diffusion: f64,
    solver: HelmholtzSolver,
    solve_tol: f64,
}

impl SchemeState {
    /// State before step 1 from `u^0 = phi1` and `v^0 = phi2`.
    pub fn new(
        mesh: TimeMesh,
        grid: Grid2D,
        alpha: FracOrder,
        u0: Field2D,
        v0: Field2D,
    ) -> Result<Self, StepError> {
        for f in [&u0, &v0] {
            if f.m() != grid.m() {
                return Err(GridError::DimensionMismatch {
                    expected: grid.m(),
                    got: f.m(),
                }
                .into());
            }
        }
        Ok(Self {
            n: 1,
            u_prev: u0,
            v0,
            w_hist: Vec::new(),
            mesh,
            grid,
            alpha,
            diffusion: 1.0,
            solver: HelmholtzSolver::new(grid),
            solve_tol: StepperOptions::default().solve_tol,
        })
    }

    /// Rebuilds the state after `history.len()` steps from `u^m` and the
    /// stored half-point velocities `w_1..w_m`. Continuing from here is
    /// bitwise identical to an uninterrupted run.
    pub fn from_history(
        mesh: TimeMesh,
        grid: Grid2D,
        alpha: FracOrder,
        u_last: Field2D,
        v0: Field2D,
        history: Vec<Field2D>,
    ) -> Result<Self, StepError> {
        if let Some(w) = history.iter().find(|w| w.m() != grid.m()) {
            return Err(GridError::DimensionMismatch {
                expected: grid.m(),
                got: w.m(),
            }
            .into());
        }
        let mut state = Self::new(mesh, grid, alpha, u_last, v0)?;
        state.n = history.len() + 1;
        state.w_hist = history;
        Ok(state)
    }

    /// Rebuilds the state after `levels.len() - 1` steps from stored
    /// solutions `u^0..u^m`, differencing them for the velocities. The
    /// stepper itself keeps the solved increments, so this agrees with an
    /// uninterrupted run to round-off, not bitwise.
    pub fn from_levels(
        mesh: TimeMesh,
        grid: Grid2D,
        alpha: FracOrder,
        levels: &[Field2D],
        v0: Field2D,
    ) -> Result<Self, StepError> {
        let mut state = Self::new(mesh, grid, alpha, levels[0].clone(), v0)?;
        for (k, pair) in levels.windows(2).enumerate() {
            let tau = state.mesh.tau(k + 1);
            state.w_hist.push(velocity(&pair[1], &pair[0], tau));
        }
        state.u_prev = levels[levels.len() - 1].clone();
        state.n = levels.len();
        Ok(state)
    }

    pub fn with_diffusion(mut self, diffusion: f64) -> Self {
        self.diffusion = diffusion;
        self
    }

    pub fn with_solve_tol(mut self, tol: f64) -> Self {
        self.solve_tol = tol;
        self
    }

    /// Index of the next step.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u_prev(&self) -> &Field2D {
        &self.u_prev
    }

    pub fn history(&self) -> &[Field2D] {
        &self.w_hist
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    /// `v^{n-1}` from `v^k = 2 w_k - v^{k-1}`; for reporting only.
    pub fn velocity(&self) -> Field2D {
        let mut v = self.v0.clone();
        for w in &self.w_hist {
            v = w.lincomb(2.0, &v, -1.0);
        }
        v
    }

    /// Kernel row for the next step.
    pub fn kernel_row(&self) -> Result<L1KernelRow, StepError> {
        if self.n > self.mesh.len() {
            return Err(StepError::Finished(self.mesh.len()));
        }
        Ok(l1_row(&self.mesh, self.alpha, self.n)?)
    }

    /// `H^n = sum_{k=1}^{n-1} (a_{n-k} - a_{n-k-1}) w_k - a_{n-1} v^0`,
    /// the kernel sum with every term except `a_0 w_n`. Each grid value is
    /// accumulated in ascending `k`.
    pub fn assemble_history(&self, row: &L1KernelRow) -> Result<Field2D, StepError> {
        if row.n() != self.n {
            return Err(StepError::RowMismatch {
                expected: self.n,
                got: row.n(),
            });
        }
        Ok(kernel_history(row.as_slice(), &self.w_hist, &self.v0))
    }

    /// One linear step with the state's diffusion coefficient.
    pub fn step_linear(&mut self, f_half: &Field2D) -> Result<(Field2D, StepSolveStats), StepError> {
        let kappa = self.diffusion;
        self.advance(f_half, kappa, None)
    }

    /// One step of `C D^beta u - eps^2 Delta u + u^3 = f`.
    pub fn step_semilinear(
        &mut self,
        f_half: &Field2D,
        eps: f64,
        cubic: bool,
        picard: &PicardOptions,
    ) -> Result<(Field2D, StepSolveStats), StepError> {
        let kappa = eps * eps;
        self.advance(f_half, kappa, cubic.then_some(picard))
    }

    fn advance(
        &mut self,
        f_half: &Field2D,
        kappa: f64,
        picard: Option<&PicardOptions>,
    ) -> Result<(Field2D, StepSolveStats), StepError> {
        let start = Instant::now();
        let row = self.kernel_row()?;
        let n = self.n;
        let tau = self.mesh.tau(n);
        let c = row.lag(0) / tau;
        let history = self.assemble_history(&row)?;
        let lap_prev = laplacian(&self.grid, &self.u_prev)?;
        // Solved for the increment d = u^n - u^{n-1}:
        // (c - kappa/2 Delta_h) d = kappa Delta_h u^{n-1} + f - H - N.
        // Forming c u^{n-1} explicitly would cancel badly when tau_n is tiny.
        let mut base = lap_prev.map(|v| kappa * v);
        base.axpy(1.0, f_half);
        base.axpy(-1.0, &history);

        let (delta, iterations, picard_residual) = match picard {
            None => (self.solver.solve(c, 0.5 * kappa, &base)?, 0, None),
            Some(opts) if opts.lagged => {
                let rhs = base.lincomb(1.0, &self.u_prev.map(|v| v * v * v), -1.0);
                (self.solver.solve(c, 0.5 * kappa, &rhs)?, 1, Some(0.0))
            }
            Some(opts) => {
                let mut current = Field2D::zeros(&self.grid);
                let mut iterations = 0;
                let mut change = f64::INFINITY;
                while iterations < opts.max_iter {
                    let cube = self.u_prev.lincomb(1.0, &current, 0.5).map(|v| v * v * v);
                    let rhs = base.lincomb(1.0, &cube, -1.0);
                    let next = self.solver.solve(c, 0.5 * kappa, &rhs)?;
                    iterations += 1;
                    let diff = norm_l2(&self.grid, &next.sub(&current))?;
                    let size = norm_l2(&self.grid, &self.u_prev.add(&next))?;
                    change = if size > 0.0 { diff / size } else { diff };
                    current = next;
                    if diff <= opts.tol * size {
                        break;
                    }
                }
                if !(change <= opts.tol) {
                    return Err(StepError::PicardDiverged {
                        n,
                        residual: change,
                        iterations,
                    });
                }
                (current, iterations, Some(change))
            }
        };
        if !delta.is_finite() {
            return Err(StepError::NonFinite { n });
        }

        let solve_residual = if picard.is_none() {
            let r = apply_helmholtz(&self.grid, c, 0.5 * kappa, &delta)?.sub(&base);
            let scale = norm_l2(&self.grid, &base)?;
            let r = norm_l2(&self.grid, &r)?;
            let rel = if scale > 0.0 { r / scale } else { r };
            if rel > self.solve_tol {
                return Err(StepError::SolveResidual {
                    n,
                    residual: rel,
                    tol: self.solve_tol,
                });
            }
            rel
        } else {
            0.0
        };

        let u = self.u_prev.add(&delta);
        self.w_hist.push(delta.map(|d| d / tau));
        self.u_prev = u.clone();
        self.n += 1;
        let stats = StepSolveStats {
            n,
            t: self.mesh.t(n),
            tau,
            picard_iterations: iterations,
            residual: picard_residual.unwrap_or(solve_residual),
            solve_residual,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok((u, stats))
    }
}

/// `sum_{k=1}^{n-1} (c_{n-k} - c_{n-k-1}) z_k - c_{n-1} z_0` for a
/// lag-indexed kernel `c` of length `n` and history `z_1..z_{n-1}`. Each grid
/// value is accumulated in ascending `k`, independent of the thread count.
pub(crate) fn kernel_history(kernel: &[f64], hist: &[Field2D], z0: &Field2D) -> Field2D {
    let n = kernel.len();
    debug_assert_eq!(hist.len() + 1, n);
    let coefs: Vec<f64> = (1..n).map(|k| kernel[n - k] - kernel[n - k - 1]).collect();
    let z0_coef = -kernel[n - 1];
    let mut out = z0.clone();
    let z0 = z0.as_slice();
    out.as_mut_slice()
        .par_chunks_mut(HISTORY_CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let start = c * HISTORY_CHUNK;
            let end = start + chunk.len();
            for (o, &v) in chunk.iter_mut().zip(&z0[start..end]) {
                *o = z0_coef * v;
            }
            for (w, &coef) in hist.iter().zip(&coefs) {
                for (o, &x) in chunk.iter_mut().zip(&w.as_slice()[start..end]) {
                    *o += coef * x;
                }
            }
        });
    out
}

/// `(u^n - u^{n-1}) / tau_n`.
pub(crate) fn velocity(u: &Field2D, u_prev: &Field2D, tau: f64) -> Field2D {
    let inv = 1.0 / tau;
    u.lincomb(inv, u_prev, -inv)
}

pub(crate) fn check_problem(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    grid: &Grid2D,
) -> Result<(), StepError> {
    problem.validate()?;
    let t_rel = (problem.final_time - mesh.final_time()).abs() / problem.final_time;
    if t_rel > 1e-12 {
        return Err(StepError::FinalTimeMismatch {
            problem: problem.final_time,
            mesh: mesh.final_time(),
        });
    }
    if (problem.length - grid.length()).abs() > 1e-12 * problem.length {
        return Err(StepError::LengthMismatch {
            problem: problem.length,
            grid: grid.length(),
        });
    }
    Ok(())
}

/// Marches the problem over every step of the mesh. History storage is
/// `O(N M^2)`.
pub fn run(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    grid: &Grid2D,
    options: &StepperOptions,
) -> Result<SolutionReport, StepError> {
    check_problem(problem, mesh, grid)?;
    let alpha = FracOrder::from_beta(problem.beta)?;
    let u0 = problem.phi1.sample(grid)?;
    let v0 = problem.phi2.sample(grid)?;
    let mut state = SchemeState::new(mesh.clone(), *grid, alpha, u0.clone(), v0)?
        .with_diffusion(problem.diffusion)
        .with_solve_tol(options.solve_tol);
    let sampler = ForcingSampler::new(problem, grid);
    let eps = problem.diffusion.sqrt();
    let cubic = problem.nonlinearity == Nonlinearity::Cubic;

    let mut snapshots = Vec::new();
    if options.snapshot_steps.contains(&0) {
        snapshots.push(Snapshot { n: 0, t: 0.0, u: u0.clone(), w: None });
    }
    let mut stats = Vec::with_capacity(mesh.len());
    let mut u_final = u0;
    for n in 1..=mesh.len() {
        let f = sampler.sample(n, mesh.half_level(n))?;
        let (u, s) = if cubic {
            state.step_semilinear(&f, eps, true, &options.picard)?
        } else {
            state.step_linear(&f)?
        };
        if options.snapshot_steps.contains(&n) {
            snapshots.push(Snapshot {
                n,
                t: mesh.t(n),
                u: u.clone(),
                w: state.history().last().cloned(),
            });
        }
        stats.push(s);
        u_final = u;
    }
    Ok(SolutionReport {
        scheme: "l1",
        final_time: mesh.final_time(),
        u_final,
        snapshots,
        stats,
    })
}
