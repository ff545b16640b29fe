use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracwave::bdf2variant::bdf2_run;
use fracwave::dcckernels::{summarize, DccTable};
use fracwave::harness::{
    convergence_study, lemma_suite, truncation_slope, truncation_study, ConvergenceConfig,
    ConvergenceTable, HarnessError, NormKind, Scheme,
};
use fracwave::l1kernels::{
    check_kernel_lemma_with, lemma_instances, CheckStatus, FracOrder, KernelTable, LemmaProperty,
};
use fracwave::problems::{
    example_51, example_51_grid_consistent, example_52, Forcing, InitialData, Nonlinearity,
    ProblemError, ProblemSpec, StepForcingFn,
};
use fracwave::spacegrid::{norm_l2, norm_max, Field2D, Grid2D};
use fracwave::stepper::{run as run_l1, PicardOptions, SolutionReport, StepperOptions};
use fracwave::timemesh::TimeMesh;
use serde_json::json;

use crate::config::{ConfigError, NormChoice, ProblemName, RunConfig, SchemeChoice};
use crate::output::OutputDir;

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit code 2.
    Config(ConfigError),
    /// Exit code 1.
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Numerical(format!("output: {e}"))
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Self::Config(ConfigError {
                field: "study",
                message: m,
            }),
            HarnessError::Mesh(m) => Self::Config(ConfigError {
                field: "mesh",
                message: m.to_string(),
            }),
            other => Self::Numerical(other.to_string()),
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn config_err(field: &'static str, e: impl std::fmt::Display) -> Failure {
    Failure::Config(ConfigError {
        field,
        message: e.to_string(),
    })
}

const DOMAIN_LENGTH: f64 = 2.0 * PI;

fn stepper_options(cfg: &RunConfig) -> StepperOptions {
    StepperOptions {
        picard: PicardOptions {
            tol: cfg.picard_tol,
            max_iter: cfg.picard_max_iter,
            lagged: cfg.lagged,
        },
        solve_tol: cfg.solve_tol,
        snapshot_steps: cfg.snapshots.clone(),
    }
}

fn norm_kind(n: NormChoice) -> NormKind {
    match n {
        NormChoice::Max => NormKind::Max,
        NormChoice::L2 => NormKind::L2,
    }
}

fn read_field(path: &Path) -> Result<Field2D, String> {
    let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Field2D::read_binary(std::io::BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

/// Name of the forcing file for step `n` in a custom forcing directory.
pub fn forcing_file_name(n: usize) -> String {
    format!("f_{n:06}.bin")
}

fn build_problem(cfg: &RunConfig) -> Result<ProblemSpec, Failure> {
    let sigma = cfg.sigma_value();
    let p = match cfg.problem {
        ProblemName::Example51 if cfg.grid_consistent => {
            example_51_grid_consistent(cfg.beta, sigma, cfg.m)
        }
        ProblemName::Example51 => example_51(cfg.beta, sigma),
        ProblemName::Example52 => example_52(cfg.beta, cfg.eps),
        ProblemName::Custom => return custom_problem(cfg),
    };
    p.map_err(|e| config_err("problem", e))
}

fn custom_problem(cfg: &RunConfig) -> Result<ProblemSpec, Failure> {
    let dir: PathBuf = cfg
        .forcing_dir
        .clone()
        .ok_or_else(|| config_err("forcing_dir", "missing"))?;
    if !dir.is_dir() {
        return Err(config_err("forcing_dir", format!("{} is not a directory", dir.display())));
    }
    let initial = |name: &str| -> Result<InitialData, Failure> {
        let path = dir.join(name);
        if path.exists() {
            read_field(&path).map(InitialData::Field).map_err(|e| config_err("forcing_dir", e))
        } else {
            Ok(InitialData::zero())
        }
    };
    let phi1 = initial("phi1.bin")?;
    let phi2 = initial("phi2.bin")?;
    let sampled_dir = dir.clone();
    let forcing: StepForcingFn = Arc::new(move |n, _t| {
        read_field(&sampled_dir.join(forcing_file_name(n)))
            .map_err(|reason| ProblemError::ForcingUnavailable { n, reason })
    });
    let p = ProblemSpec {
        name: "custom".into(),
        beta: cfg.beta,
        sigma: cfg.sigma,
        length: DOMAIN_LENGTH,
        final_time: cfg.final_time,
        diffusion: cfg.eps * cfg.eps,
        nonlinearity: Nonlinearity::None,
        forcing: Forcing::Sampled(forcing),
        exact: None,
        phi1,
        phi2,
    };
    p.validate().map_err(|e| config_err("problem", e))?;
    Ok(p)
}

fn load_mesh(cfg: &RunConfig) -> Result<TimeMesh, Failure> {
    match &cfg.mesh_file {
        Some(path) => {
            let mesh = TimeMesh::from_file(path).map_err(|e| config_err("mesh_file", e))?;
            let t = mesh.final_time();
            if (t - cfg.final_time).abs() > 1e-12 * cfg.final_time {
                return Err(config_err(
                    "mesh_file",
                    format!("mesh ends at {t}, expected T = {}", cfg.final_time),
                ));
            }
            Ok(mesh)
        }
        None => TimeMesh::graded(cfg.n, cfg.final_time, cfg.gamma).map_err(|e| config_err("N", e)),
    }
}

fn timing(cfg: &RunConfig, ms: f64) -> f64 {
    if cfg.deterministic {
        0.0
    } else {
        ms
    }
}

pub fn run(cfg: &RunConfig, out: &OutputDir) -> Result<(), Failure> {
    let problem = build_problem(cfg)?;
    let mesh = load_mesh(cfg)?;
    if let Some(&bad) = cfg.snapshots.iter().find(|&&s| s > mesh.len()) {
        return Err(config_err("snapshots", format!("step {bad} exceeds N = {}", mesh.len())));
    }
    let grid = Grid2D::new(cfg.m, problem.length).map_err(|e| config_err("M", e))?;
    let options = stepper_options(cfg);
    let mut report: SolutionReport = match cfg.scheme {
        SchemeChoice::L1 => run_l1(&problem, &mesh, &grid, &options),
        SchemeChoice::Bdf2 => bdf2_run(&problem, &mesh, &grid, &options),
    }
    .map_err(numerical)?;
    if cfg.deterministic {
        report.stats.iter_mut().for_each(|s| s.wall_ms = 0.0);
    }
    out.write_text("stats.csv", &report.stats_csv())?;
    out.write_field("u_final.bin", &report.u_final)?;
    for s in &report.snapshots {
        out.write_field(&format!("snapshot_{:06}.bin", s.n), &s.u)?;
    }
    let errors = problem.exact_field(&grid, mesh.final_time()).map(|exact| {
        let e = report.u_final.sub(&exact);
        (norm_max(&e), norm_l2(&grid, &e).unwrap_or(f64::NAN))
    });
    let summary = json!({
        "problem": problem.name,
        "scheme": report.scheme,
        "N": mesh.len(),
        "M": cfg.m,
        "T": mesh.final_time(),
        "e_max": errors.map(|e| e.0),
        "e_l2": errors.map(|e| e.1),
        "max_picard_iterations": report.stats.iter().map(|s| s.picard_iterations).max(),
        "wall_ms": timing(cfg, report.stats.iter().map(|s| s.wall_ms).sum()),
    });
    out.write_json("summary.json", &summary)?;
    println!("{}", serde_json::to_string(&summary).unwrap_or_default());
    Ok(())
}

fn study(cfg: &RunConfig, problem: &ProblemSpec, scheme: Scheme) -> Result<ConvergenceTable, Failure> {
    let config = ConvergenceConfig {
        gamma: cfg.gamma,
        n_list: cfg.n_list.clone(),
        m: cfg.m,
        scheme,
        options: stepper_options(cfg),
    };
    let mut table = convergence_study(problem, &config)?;
    if cfg.deterministic {
        table.rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }
    if let Some(r) = table.rows.iter().find(|r| r.failure.is_some()) {
        return Err(Failure::Numerical(format!(
            "N = {}: {}",
            r.n,
            r.failure.as_deref().unwrap_or("")
        )));
    }
    Ok(table)
}

fn table_summary(t: &ConvergenceTable, norm: NormKind) -> serde_json::Value {
    json!({
        "scheme": t.scheme.label(),
        "norm": norm.label(),
        "N": t.rows.iter().map(|r| r.n).collect::<Vec<_>>(),
        "errors": t.errors(norm),
        "orders": t.orders(norm),
        "expected_order": t.rows.first().and_then(|r| r.expected_order),
    })
}

pub fn convergence(cfg: &RunConfig, out: &OutputDir) -> Result<(), Failure> {
    let problem = build_problem(cfg)?;
    let scheme = match cfg.scheme {
        SchemeChoice::L1 => Scheme::L1,
        SchemeChoice::Bdf2 => Scheme::Bdf2,
    };
    let table = study(cfg, &problem, scheme)?;
    out.write_text("convergence.csv", &table.to_csv())?;
    let summary = json!({
        "problem": problem.name,
        "beta": problem.beta,
        "sigma": problem.sigma,
        "gamma": cfg.gamma,
        "M": cfg.m,
        "table": table_summary(&table, norm_kind(cfg.norm)),
    });
    out.write_json("summary.json", &summary)?;
    print!("{}", table.to_csv());
    Ok(())
}

pub fn bdf2_compare(cfg: &RunConfig, out: &OutputDir) -> Result<(), Failure> {
    let problem = build_problem(cfg)?;
    let l1 = study(cfg, &problem, Scheme::L1)?;
    let bdf2 = study(cfg, &problem, Scheme::Bdf2)?;
    let mut csv = l1.to_csv();
    csv.extend(bdf2.to_csv().lines().skip(1).flat_map(|l| [l, "\n"]));
    out.write_text("compare.csv", &csv)?;
    let norm = norm_kind(cfg.norm);
    let last = |t: &ConvergenceTable| t.orders(norm).last().copied().flatten();
    let summary = json!({
        "problem": problem.name,
        "beta": problem.beta,
        "sigma": problem.sigma,
        "gamma": cfg.gamma,
        "M": cfg.m,
        "l1": table_summary(&l1, norm),
        "bdf2": table_summary(&bdf2, norm),
        "bdf2_order_exceeds_l1": match (last(&bdf2), last(&l1)) {
            (Some(b), Some(a)) => Some(b > a),
            _ => None,
        },
    });
    out.write_json("summary.json", &summary)?;
    print!("{csv}");
    Ok(())
}

fn frac_order(cfg: &RunConfig) -> Result<FracOrder, Failure> {
    FracOrder::new(cfg.alpha_value()).map_err(|e| config_err("alpha", e))
}

fn kernel_mesh(cfg: &RunConfig) -> Result<TimeMesh, Failure> {
    match &cfg.mesh_file {
        Some(path) => TimeMesh::from_file(path).map_err(|e| config_err("mesh_file", e)),
        None => TimeMesh::graded(cfg.n, cfg.final_time, cfg.gamma).map_err(|e| config_err("N", e)),
    }
}

/// Rows `n, lag, a_value` plus an `ok, margin` pair per property for the
/// instances anchored at that entry.
fn kernels_csv(table: &KernelTable, mesh: &TimeMesh, tol: f64) -> String {
    let mut out = String::from("n,lag,a_value");
    for p in LemmaProperty::ALL {
        let _ = write!(out, ",{0}_ok,{0}_margin", p.label());
    }
    out.push('\n');
    for n in 1..=table.len() {
        let instances = lemma_instances(table, mesh, n);
        let row = table.row(n);
        for lag in 0..n {
            let _ = write!(out, "{n},{lag},{:.17e}", row.lag(lag));
            for p in LemmaProperty::ALL {
                match instances.iter().find(|i| i.property == p && i.lag == lag) {
                    Some(i) => {
                        let _ = write!(out, ",{},{:.6e}", i.margin >= tol, i.margin);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn kernels_check(cfg: &RunConfig, out: &OutputDir) -> Result<(), Failure> {
    let alpha = frac_order(cfg)?;
    let mesh = kernel_mesh(cfg)?;
    let table = KernelTable::build(&mesh, alpha);
    out.write_text("kernels.csv", &kernels_csv(&table, &mesh, cfg.lemma_tol))?;

    let report = check_kernel_lemma_with(&table, &mesh, mesh.len(), cfg.lemma_tol);
    let failed = !report.all_passed();
    let properties: Vec<_> = report
        .checks
        .iter()
        .map(|c| {
            json!({
                "property": c.property.label(),
                "instances": c.instances,
                "worst_margin": c.worst_margin,
                "status": match &c.status {
                    CheckStatus::Pass => "pass".to_string(),
                    CheckStatus::Fail => "fail".to_string(),
                    CheckStatus::Vacuous => "vacuous".to_string(),
                    CheckStatus::Skipped(why) => format!("skipped: {why}"),
                },
            })
        })
        .collect();
    let mut summary = json!({
        "alpha": alpha.alpha(),
        "N": mesh.len(),
        "T": mesh.final_time(),
        "tolerance": cfg.lemma_tol,
        "all_passed": !failed,
        "properties": properties,
    });

    if cfg.dcc {
        let dcc = DccTable::build(&table).map_err(numerical)?;
        let mut csv = String::from("n,lag,p_value\n");
        for row in dcc.rows() {
            for (lag, p) in row.as_slice().iter().enumerate() {
                let _ = writeln!(csv, "{},{lag},{p:.17e}", row.n());
            }
        }
        out.write_text("dcc.csv", &csv)?;
        let s = summarize(&mesh, &table, &dcc);
        out.write_json("dcc_summary.json", &s)?;
        summary["dcc"] = serde_json::to_value(&s).unwrap_or_default();
    }
    if cfg.fuzz > 0 {
        let a = alpha.alpha();
        let range = if cfg.alpha.is_some() { (a, a) } else { (0.05, 0.95) };
        let r = lemma_suite(cfg.seed, cfg.fuzz, cfg.n.max(2), range)?;
        out.write_json("fuzz.json", &r)?;
        summary["fuzz"] = serde_json::to_value(&r).unwrap_or_default();
    }
    out.write_json("lemma.json", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    if failed {
        return Err(Failure::Numerical("kernel inequalities violated".into()));
    }
    Ok(())
}

pub fn truncation(cfg: &RunConfig, out: &OutputDir) -> Result<(), Failure> {
    let alpha = frac_order(cfg)?;
    let mu = cfg.mu.unwrap_or_else(|| cfg.sigma_value());
    let mesh = match (&cfg.mesh_file, cfg.n_list.last()) {
        (None, Some(&n)) => TimeMesh::graded(n, cfg.final_time, cfg.gamma).map_err(|e| config_err("N", e))?,
        _ => kernel_mesh(cfg)?,
    };
    let rep = truncation_study(&mesh, alpha, mu)?;
    let mut csv = String::from("n,t_half,local_error,measured,lemma_bound,corollary_bound,G\n");
    for n in 1..=rep.n_steps {
        let i = n - 1;
        let _ = writeln!(
            csv,
            "{n},{:.17e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            mesh.half_level(n),
            rep.local_errors[i],
            rep.measured[i],
            rep.lemma_bound[i],
            rep.corollary_bound[i],
            rep.g[i]
        );
    }
    out.write_text("truncation.csv", &csv)?;
    let mut summary = json!({
        "alpha": alpha.alpha(),
        "mu": mu,
        "N": mesh.len(),
        "max_ratio": rep.max_ratio(),
        "bound_holds": rep.bound_holds(1e-10),
        "max_measured": rep.max_measured(),
    });
    if cfg.mesh_file.is_none() && cfg.n_list.len() >= 2 {
        let s = truncation_slope(alpha, mu, cfg.gamma, &cfg.n_list, cfg.final_time)?;
        summary["slope"] = serde_json::to_value(&s).unwrap_or_default();
    }
    out.write_json("summary.json", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    if !rep.bound_holds(1e-10) {
        return Err(Failure::Numerical("truncation bound violated".into()));
    }
    Ok(())
}
