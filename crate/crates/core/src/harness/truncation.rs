use serde::{Deserialize, Serialize};

use super::{expected_order, ls_slope, HarnessError};
use crate::dcckernels::DccTable;
use crate::l1kernels::{discrete_caputo, sampled_half_differences, FracOrder, KernelTable};
use crate::problems::caputo_power;
use crate::quadrature::integrate;
use crate::timemesh::TimeMesh;

/// Local errors of the L1 formula for `v = t^mu` and the weighted sums that
/// the global bounds control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub n_steps: usize,
    pub alpha: f64,
    pub mu: f64,
    /// `R^j`, `j = 1..N`.
    pub local_errors: Vec<f64>,
    /// `sum_j p^{(n)}_{n-j} |R^j|`, `n = 1..N`.
    pub measured: Vec<f64>,
    /// `2 sum_j p^{(n)}_{n-j} a^{(j)}_0 G^j`.
    pub lemma_bound: Vec<f64>,
    /// `c_v (tau_1^mu + max_j (t_{j-1/2} - t_{1/2})^alpha t_{j-3/2}^{mu-2} tau_{j-1/2}^{2-alpha} / (1 - alpha))`.
    pub corollary_bound: Vec<f64>,
    /// `G^j = int_{t_{j-3/2}}^{t_{j-1/2}} (t - t_{j-3/2}) |v''(t)| dt`.
    pub g: Vec<f64>,
}

impl TruncationReport {
    /// Largest `measured / lemma_bound`.
    pub fn max_ratio(&self) -> f64 {
        self.measured
            .iter()
            .zip(&self.lemma_bound)
            .map(|(m, b)| if *b > 0.0 { m / b } else if *m > 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max)
    }

    /// Whether `measured <= bound (1 + rel_slack)` at every step.
    pub fn bound_holds(&self, rel_slack: f64) -> bool {
        self.measured
            .iter()
            .zip(&self.lemma_bound)
            .all(|(m, b)| *m <= b * (1.0 + rel_slack))
    }

    pub fn max_measured(&self) -> f64 {
        self.measured.iter().copied().fold(0.0, f64::max)
    }
}

/// `G^j` for `v = t^mu`, `|v''| = |mu (mu - 1)| t^{mu - 2}`. The first cell
/// `[0, tau_1/2]` is integrated in closed form, the rest adaptively.
pub fn g_integrals(mesh: &TimeMesh, mu: f64) -> Result<Vec<f64>, HarnessError> {
    let c = (mu * (mu - 1.0)).abs();
    (1..=mesh.len())
        .map(|j| {
            let lo = mesh.half_level(j - 1);
            let hi = mesh.half_level(j);
            if j == 1 {
                // int_0^h t * c t^{mu-2} dt = c h^mu / mu
                return Ok(c * hi.powf(mu) / mu);
            }
            let f = |t: f64| (t - lo) * c * t.powf(mu - 2.0);
            Ok(integrate(f, lo, hi, 1e-13, 1e-13)?)
        })
        .collect()
}

/// Local consistency errors and global bounds for `v = t^mu` on `mesh`.
pub fn truncation_study(
    mesh: &TimeMesh,
    alpha: FracOrder,
    mu: f64,
) -> Result<TruncationReport, HarnessError> {
    if !(mu > 0.0) {
        return Err(HarnessError::Config(format!("exponent must be positive, got {mu}")));
    }
    let al = alpha.alpha();
    let kernels = KernelTable::build(mesh, alpha);
    let dcc = DccTable::build(&kernels)?;
    let n_steps = mesh.len();

    let local_errors = (1..=n_steps)
        .map(|j| {
            let exact = caputo_power(al, mu, mesh.half_level(j))
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let diffs = sampled_half_differences(mesh, j, |t| t.powf(mu));
            Ok(exact - discrete_caputo(kernels.row(j), &diffs)?)
        })
        .collect::<Result<Vec<f64>, HarnessError>>()?;
    let g = g_integrals(mesh, mu)?;

    let mut measured = Vec::with_capacity(n_steps);
    let mut lemma_bound = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let p = dcc.row(n);
        let mut m = 0.0;
        let mut b = 0.0;
        for j in 1..=n {
            let w = p.lag(n - j);
            m += w * local_errors[j - 1].abs();
            b += w * kernels.row(j).lag(0) * g[j - 1];
        }
        measured.push(m);
        lemma_bound.push(2.0 * b);
    }

    let c_v = (mu * (mu - 1.0)).abs();
    let t_half = mesh.half_level(1);
    let mut running = 0.0f64;
    let corollary_bound = (1..=n_steps)
        .map(|n| {
            if n >= 2 {
                let term = (mesh.half_level(n) - t_half).powf(al)
                    * mesh.half_level(n - 1).powf(mu - 2.0)
                    * mesh.half_step(n).powf(2.0 - al);
                running = running.max(term);
            }
            c_v * (mesh.tau(1).powf(mu) + running / (1.0 - al))
        })
        .collect();

    Ok(TruncationReport {
        n_steps,
        alpha: al,
        mu,
        local_errors,
        measured,
        lemma_bound,
        corollary_bound,
        g,
    })
}

/// Decay of `max_n sum_j p |R^j|` over a family of graded meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSlope {
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
    pub n_list: Vec<usize>,
    pub max_measured: Vec<f64>,
    pub max_ratio: Vec<f64>,
    pub slope: f64,
    /// `-min(gamma mu, 2 - alpha)`.
    pub predicted_slope: f64,
}

pub fn truncation_slope(
    alpha: FracOrder,
    mu: f64,
    gamma: f64,
    n_list: &[usize],
    final_time: f64,
) -> Result<TruncationSlope, HarnessError> {
    let mut max_measured = Vec::new();
    let mut max_ratio = Vec::new();
    for &n in n_list {
        let mesh = TimeMesh::graded(n, final_time, gamma)?;
        let rep = truncation_study(&mesh, alpha, mu)?;
        max_measured.push(rep.max_measured());
        max_ratio.push(rep.max_ratio());
    }
    let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = max_measured.iter().map(|v| v.ln()).collect();
    Ok(TruncationSlope {
        alpha: alpha.alpha(),
        mu,
        gamma,
        n_list: n_list.to_vec(),
        slope: ls_slope(&x, &y),
        predicted_slope: -expected_order(1.0 + alpha.alpha(), mu, gamma),
        max_measured,
        max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_no_truncation_error() {
        let mesh = TimeMesh::graded(16, 1.0, 2.0).unwrap();
        let rep = truncation_study(&mesh, FracOrder::new(0.5).unwrap(), 1.0).unwrap();
        assert!(rep.local_errors.iter().all(|r| r.abs() < 1e-13));
        assert!(rep.g.iter().all(|&g| g == 0.0));
        assert!(rep.max_measured() < 1e-12);
    }

    #[test]
    fn lemma_bound_holds_for_sqrt() {
        let mesh = TimeMesh::graded(32, 1.0, 2.0).unwrap();
        let rep = truncation_study(&mesh, FracOrder::new(0.5).unwrap(), 0.5).unwrap();
        assert!(rep.bound_holds(1e-10), "ratio {}", rep.max_ratio());
        assert!(rep.max_ratio() > 0.0);
    }

    #[test]
    fn first_cell_closed_form() {
        let mesh = TimeMesh::uniform(4, 1.0).unwrap();
        let g = g_integrals(&mesh, 0.5).unwrap();
        // c = 1/4, h = 1/8: c h^mu / mu = 0.5 * 8^{-1/2}
        assert!((g[0] - 0.5 / 8f64.sqrt()).abs() < 1e-15);
    }
}
