//! Experimental variable-step fractional BDF2 scheme on integer levels.
//!
//! The Caputo derivative of `v` at `t_n` is approximated by integrating
//! quadratic interpolants of `v` against `omega_{1-alpha}(t_n - s)`: forward
//! interpolation (`t_{k-1}, t_k, t_{k+1}`) on cells `k < n` and backward
//! interpolation (`t_{n-2}, t_{n-1}, t_n`) on the last cell. This gives
//! `D v^n = sum_k B^{(n)}_{n-k} (v^k - v^{k-1})`. There is no convergence
//! theorem for this scheme; it is validated empirically only.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::l1kernels::{FracOrder, KernelError, OmegaWeight};
use crate::problems::{ForcingSampler, Nonlinearity, ProblemSpec};
use crate::spacegrid::{apply_helmholtz, norm_l2, Field2D, Grid2D, HelmholtzSolver};
use crate::special::CompensatedSum;
use crate::stepper::{
    check_problem, kernel_history, SolutionReport, StepError, StepSolveStats,
    StepperOptions,
};
use crate::timemesh::TimeMesh;

/// Coefficients of step `n`, all lag-indexed (`j = n - k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bdf2KernelRow {
    pub n: usize,
    pub b: Vec<f64>,
    /// Integer-grid L1 kernels.
    pub abar: Vec<f64>,
    /// First-moment correction weights.
    pub varpi: Vec<f64>,
}

impl Bdf2KernelRow {
    pub fn lag(&self, j: usize) -> f64 {
        self.b[j]
    }
}

/// Step ratio `r_k = tau_k / tau_{k-1}`, with `r_1 = 0`.
pub fn step_ratio(mesh: &TimeMesh, k: usize) -> f64 {
    if k <= 1 {
        0.0
    } else {
        mesh.tau(k) / mesh.tau(k - 1)
    }
}

/// `abar^{(n)}_{n-k} = (1/tau_k) int_{t_{k-1}}^{t_k} omega_{1-alpha}(t_n - s) ds`.
pub fn abar_coefficient(mesh: &TimeMesh, alpha: FracOrder, n: usize, k: usize) -> f64 {
    let w = OmegaWeight::new(2.0 - alpha.alpha());
    let tau = mesh.tau(k);
    let x_lo = if k == n { 0.0 } else { mesh.t(n) - mesh.t(k) };
    w.increment(x_lo, tau) / tau
}

/// `varpi^{(n)}_{n-k} = (1/tau_k) int ((2s - t_k - t_{k-1})/tau_k) omega_{1-alpha}(t_n - s) ds`.
///
/// Near cells use the antiderivative in `omega_{2-alpha}` and
/// `omega_{3-alpha}`. Far cells, where that form cancels badly, expand
/// `omega_{1-alpha}` about the cell midpoint; only odd powers survive.
pub fn varpi_coefficient(mesh: &TimeMesh, alpha: FracOrder, n: usize, k: usize) -> f64 {
    let al = alpha.alpha();
    let tau = mesh.tau(k);
    let x_lo = if k == n { 0.0 } else { mesh.t(n) - mesh.t(k) };
    if x_lo < tau {
        let x_hi = x_lo + tau;
        let w2 = OmegaWeight::new(2.0 - al);
        let w3 = OmegaWeight::new(3.0 - al);
        let d2 = w2.increment(x_lo, tau);
        let d3 = w3.increment(x_lo, tau);
        ((x_hi + x_lo) * d2 - 2.0 * (1.0 - al) * d3) / (tau * tau)
    } else {
        let x_c = x_lo + 0.5 * tau;
        let g = x_c.powf(-al) / crate::special::gamma(1.0 - al);
        let half_rho = 0.5 * tau / x_c;
        // sum over odd m of C(-alpha, m) (rho/2)^m / (m + 2)
        let mut binom = 1.0;
        let mut power = 1.0;
        let mut acc = 0.0;
        for m in 1..400 {
            binom *= (-al - (m as f64 - 1.0)) / m as f64;
            power *= half_rho;
            if m % 2 == 1 {
                let term = binom * power / (m as f64 + 2.0);
                acc += term;
                if term.abs() <= 1e-18 * acc.abs() {
                    break;
                }
            }
        }
        -g * acc
    }
}

fn check_step(mesh: &TimeMesh, n: usize) -> Result<(), KernelError> {
    if n == 0 || n > mesh.len() {
        return Err(KernelError::StepOutOfRange { n, len: mesh.len() });
    }
    Ok(())
}

/// BDF2 row for step `n`. With `corrections = false` every `varpi` is taken
/// as zero and the row reduces to the integer-grid L1 kernels.
pub fn bdf2_row_with(
    mesh: &TimeMesh,
    alpha: FracOrder,
    n: usize,
    corrections: bool,
) -> Result<Bdf2KernelRow, KernelError> {
    check_step(mesh, n)?;
    let abar: Vec<f64> = (0..n).map(|j| abar_coefficient(mesh, alpha, n, n - j)).collect();
    let varpi: Vec<f64> = if corrections {
        (0..n).map(|j| varpi_coefficient(mesh, alpha, n, n - j)).collect()
    } else {
        vec![0.0; n]
    };
    let r = |k: usize| step_ratio(mesh, k);
    let mut b = abar.clone();
    if n >= 2 {
        let rn = r(n);
        let last = rn * rn * varpi[0] + varpi[1];
        b[0] += last / (rn * (1.0 + rn));
        b[1] -= last / (1.0 + rn);
        if n >= 3 {
            let rp = r(n - 1);
            b[1] += varpi[2] / (rp * (1.0 + rp));
            // lag j = n - k for 2 <= k <= n - 2
            for k in 2..=n - 2 {
                let j = n - k;
                let rk1 = r(k + 1);
                let rk = r(k);
                b[j] += -varpi[j] / (1.0 + rk1) + varpi[j + 1] / (rk * (1.0 + rk));
            }
            b[n - 1] -= varpi[n - 1] / (1.0 + r(2));
        }
    }
    Ok(Bdf2KernelRow { n, b, abar, varpi })
}

pub fn bdf2_row(mesh: &TimeMesh, alpha: FracOrder, n: usize) -> Result<Bdf2KernelRow, KernelError> {
    bdf2_row_with(mesh, alpha, n, true)
}

/// `sum_{k=1}^n B^{(n)}_{n-k} diffs[k-1]` with `diffs[k-1] = v^k - v^{k-1}`.
pub fn bdf2_caputo(row: &Bdf2KernelRow, diffs: &[f64]) -> Result<f64, KernelError> {
    if diffs.len() != row.n {
        return Err(KernelError::LengthMismatch {
            expected: row.n,
            got: diffs.len(),
        });
    }
    let mut acc = CompensatedSum::new();
    for (k, &d) in diffs.iter().enumerate() {
        acc.add(row.b[row.n - 1 - k] * d);
    }
    Ok(acc.value())
}

/// Marches `D v^n = kappa Delta_h u^n + f^n` with
/// `v^n = c1 (u^n - u^{n-1}) - c2 (u^{n-1} - u^{n-2})`,
/// `c1 = (1 + 2 r_n) / (tau_n (1 + r_n))`, `c2 = r_n^2 / (tau_n (1 + r_n))`.
/// Linear problems only.
pub fn bdf2_run(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    grid: &Grid2D,
    options: &StepperOptions,
) -> Result<SolutionReport, StepError> {
    check_problem(problem, mesh, grid)?;
    if problem.nonlinearity != Nonlinearity::None {
        return Err(StepError::Unsupported(
            "the BDF2 variant handles linear problems only".into(),
        ));
    }
    let alpha = FracOrder::from_beta(problem.beta)?;
    let kappa = problem.diffusion;
    let solver = HelmholtzSolver::new(*grid);
    let sampler = ForcingSampler::new(problem, grid);
    let u0 = problem.phi1.sample(grid)?;
    let v0 = problem.phi2.sample(grid)?;

    let mut u_prev = u0.clone();
    let mut du_prev = Field2D::zeros(grid);
    let mut v_hist: Vec<Field2D> = Vec::with_capacity(mesh.len());
    let mut stats = Vec::with_capacity(mesh.len());
    let mut snapshots = Vec::new();
    if options.snapshot_steps.contains(&0) {
        snapshots.push(crate::stepper::Snapshot { n: 0, t: 0.0, u: u0.clone(), w: None });
    }

    for n in 1..=mesh.len() {
        let start = Instant::now();
        let row = bdf2_row(mesh, alpha, n)?;
        let tau = mesh.tau(n);
        let rn = step_ratio(mesh, n);
        let c1 = (1.0 + 2.0 * rn) / (tau * (1.0 + rn));
        let c2 = rn * rn / (tau * (1.0 + rn));
        let b0 = row.b[0];
        let c = b0 * c1;
        let history = kernel_history(&row.b, &v_hist, &v0);
        let f = sampler.sample(n, mesh.t(n))?;
        // f + B0 c1 u^{n-1} + B0 c2 (u^{n-1} - u^{n-2}) - H
        let mut rhs = u_prev.lincomb(c, &du_prev, b0 * c2);
        rhs.axpy(1.0, &f);
        rhs.axpy(-1.0, &history);
        let u = solver.solve(c, kappa, &rhs)?;
        if !u.is_finite() {
            return Err(StepError::NonFinite { n });
        }
        let r = apply_helmholtz(grid, c, kappa, &u)?.sub(&rhs);
        let scale = norm_l2(grid, &rhs)?;
        let res = norm_l2(grid, &r)?;
        let rel = if scale > 0.0 { res / scale } else { res };
        if rel > options.solve_tol {
            return Err(StepError::SolveResidual {
                n,
                residual: rel,
                tol: options.solve_tol,
            });
        }
        let du = u.sub(&u_prev);
        let v = du.lincomb(c1, &du_prev, -c2);
        v_hist.push(v);
        du_prev = du;
        u_prev = u;
        if options.snapshot_steps.contains(&n) {
            snapshots.push(crate::stepper::Snapshot { n, t: mesh.t(n), u: u_prev.clone(), w: None });
        }
        stats.push(StepSolveStats {
            n,
            t: mesh.t(n),
            tau,
            picard_iterations: 0,
            residual: rel,
            solve_residual: rel,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(SolutionReport {
        scheme: "bdf2",
        final_time: mesh.final_time(),
        u_final: u_prev,
        snapshots,
        stats,
    })
}
