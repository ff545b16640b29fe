use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{expected_order, pair_order, HarnessError};
use crate::bdf2variant::bdf2_run;
use crate::problems::ProblemSpec;
use crate::spacegrid::{norm_l2, norm_max, Field2D, Grid2D};
use crate::stepper::{run, StepperOptions};
use crate::timemesh::TimeMesh;

/// Errors below this are reported as exact and get no order.
pub const EXACT_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Max,
    L2,
}

impl NormKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::L2 => "l2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    L1,
    Bdf2,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Self::L1 => "l1",
            Self::Bdf2 => "bdf2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub e_max: f64,
    pub e_l2: f64,
    pub order_max: Option<f64>,
    pub order_l2: Option<f64>,
    pub expected_order: Option<f64>,
    pub wall_ms: f64,
    /// Error at round-off level.
    pub exact: bool,
    pub failure: Option<String>,
}

impl ConvergenceRow {
    pub fn error(&self, norm: NormKind) -> f64 {
        match norm {
            NormKind::Max => self.e_max,
            NormKind::L2 => self.e_l2,
        }
    }

    pub fn order(&self, norm: NormKind) -> Option<f64> {
        match norm {
            NormKind::Max => self.order_max,
            NormKind::L2 => self.order_l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub gamma: f64,
    pub n_list: Vec<usize>,
    pub m: usize,
    pub scheme: Scheme,
    pub options: StepperOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub problem: String,
    pub beta: f64,
    pub sigma: Option<f64>,
    pub gamma: f64,
    pub m: usize,
    pub scheme: Scheme,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn errors(&self, norm: NormKind) -> Vec<f64> {
        self.rows.iter().map(|r| r.error(norm)).collect()
    }

    /// Orders for rows after the first.
    pub fn orders(&self, norm: NormKind) -> Vec<Option<f64>> {
        self.rows.iter().skip(1).map(|r| r.order(norm)).collect()
    }

    pub const CSV_HEADER: &'static str =
        "beta,sigma,gamma,N,M,norm,error,order,expected_order,wall_ms,scheme";

    /// One line per `(N, norm)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            for norm in [NormKind::Max, NormKind::L2] {
                let order = if r.exact { "exact".to_string() } else { opt(r.order(norm)) };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:.6e},{},{},{:.1},{}",
                    self.beta,
                    opt(self.sigma),
                    self.gamma,
                    r.n,
                    self.m,
                    norm.label(),
                    r.error(norm),
                    order,
                    opt(r.expected_order),
                    r.wall_ms,
                    self.scheme.label()
                );
            }
        }
        out
    }
}

fn solve_once(
    problem: &ProblemSpec,
    mesh: &TimeMesh,
    grid: &Grid2D,
    scheme: Scheme,
    options: &StepperOptions,
) -> Result<Field2D, HarnessError> {
    let report = match scheme {
        Scheme::L1 => run(problem, mesh, grid, options)?,
        Scheme::Bdf2 => bdf2_run(problem, mesh, grid, options)?,
    };
    Ok(report.u_final)
}

/// Runs the problem on graded meshes `t_k = T (k/N)^gamma` for every `N`
/// and measures the error at `T` in both norms.
pub fn convergence_study(
    problem: &ProblemSpec,
    config: &ConvergenceConfig,
) -> Result<ConvergenceTable, HarnessError> {
    if config.n_list.is_empty() {
        return Err(HarnessError::Config("N list is empty".into()));
    }
    if config.n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(HarnessError::Config(
            "each N must double the previous one".into(),
        ));
    }
    if problem.exact.is_none() {
        return Err(HarnessError::Config(format!(
            "problem {} has no exact solution",
            problem.name
        )));
    }
    let grid = Grid2D::new(config.m, problem.length)?;
    let exact = problem
        .exact_field(&grid, problem.final_time)
        .expect("checked above");
    let expected = problem
        .sigma
        .map(|s| expected_order(problem.beta, s, config.gamma));

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(config.n_list.len());
    for &n in &config.n_list {
        let start = Instant::now();
        let mesh = TimeMesh::graded(n, problem.final_time, config.gamma)?;
        let outcome = solve_once(problem, &mesh, &grid, config.scheme, &config.options);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut row = match outcome {
            Ok(u) => {
                let err = u.sub(&exact);
                let e_max = norm_max(&err);
                ConvergenceRow {
                    n,
                    e_max,
                    e_l2: norm_l2(&grid, &err)?,
                    order_max: None,
                    order_l2: None,
                    expected_order: expected,
                    wall_ms,
                    exact: e_max < EXACT_THRESHOLD,
                    failure: None,
                }
            }
            Err(e) => ConvergenceRow {
                n,
                e_max: f64::NAN,
                e_l2: f64::NAN,
                order_max: None,
                order_l2: None,
                expected_order: expected,
                wall_ms,
                exact: false,
                failure: Some(e.to_string()),
            },
        };
        if let Some(prev) = rows.last() {
            if !row.exact && !prev.exact && row.failure.is_none() && prev.failure.is_none() {
                row.order_max = Some(pair_order(prev.e_max, row.e_max));
                row.order_l2 = Some(pair_order(prev.e_l2, row.e_l2));
            }
        }
        rows.push(row);
    }
    Ok(ConvergenceTable {
        problem: problem.name.clone(),
        beta: problem.beta,
        sigma: problem.sigma,
        gamma: config.gamma,
        m: config.m,
        scheme: config.scheme,
        rows,
    })
}

/// Spatial error estimate at fixed `N`: the difference between runs on `M`
/// and `2M` points, scaled by `4/3` for a second-order stencil. Returns
/// `(max-norm floor, L2 floor)`.
pub fn spatial_floor(
    problem: &ProblemSpec,
    gamma: f64,
    m: usize,
    n_probe: usize,
    scheme: Scheme,
) -> Result<(f64, f64), HarnessError> {
    let mesh = TimeMesh::graded(n_probe, problem.final_time, gamma)?;
    let coarse_grid = Grid2D::new(m, problem.length)?;
    let fine_grid = Grid2D::new(2 * m, problem.length)?;
    let options = StepperOptions::default();
    let coarse = solve_once(problem, &mesh, &coarse_grid, scheme, &options)?;
    let fine = solve_once(problem, &mesh, &fine_grid, scheme, &options)?;
    let restricted = Field2D::from_vec(
        m,
        (0..m * m)
            .map(|idx| fine.get(2 * (idx / m), 2 * (idx % m)))
            .collect(),
    )?;
    let diff = coarse.sub(&restricted);
    Ok((
        4.0 / 3.0 * norm_max(&diff),
        4.0 / 3.0 * norm_l2(&coarse_grid, &diff)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{constant_quadratic, example_51_grid_consistent};

    #[test]
    fn exact_class_is_flagged() {
        let p = constant_quadratic(1.5).unwrap();
        let cfg = ConvergenceConfig {
            gamma: 2.0,
            n_list: vec![8, 16],
            m: 8,
            scheme: Scheme::L1,
            options: StepperOptions::default(),
        };
        let t = convergence_study(&p, &cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.exact && r.order_max.is_none()));
        assert!(t.to_csv().contains("exact"));
    }

    #[test]
    fn rejects_non_doubling_lists() {
        let p = constant_quadratic(1.5).unwrap();
        let cfg = ConvergenceConfig {
            gamma: 2.0,
            n_list: vec![8, 12],
            m: 8,
            scheme: Scheme::L1,
            options: StepperOptions::default(),
        };
        assert!(matches!(convergence_study(&p, &cfg), Err(HarnessError::Config(_))));
    }

    #[test]
    fn errors_decay_on_graded_mesh() {
        let p = example_51_grid_consistent(1.5, 0.5, 8).unwrap();
        let cfg = ConvergenceConfig {
            gamma: 2.0,
            n_list: vec![10, 20, 40],
            m: 8,
            scheme: Scheme::L1,
            options: StepperOptions::default(),
        };
        let t = convergence_study(&p, &cfg).unwrap();
        let e = t.errors(NormKind::Max);
        assert!(e[0] > e[1] && e[1] > e[2]);
        for r in &t.rows {
            assert!(r.e_l2 <= 2.0 * std::f64::consts::PI * r.e_max * (1.0 + 1e-12));
        }
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
    }
}
