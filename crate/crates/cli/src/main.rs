//! `fracwave`: run the solver, convergence studies and kernel checks.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{Command, ConfigError, NormChoice, ProblemName, RunConfig, SchemeChoice};
use output::OutputDir;

/// Environment variable capping the worker thread count.
const THREADS_ENV: &str = "FRACWAVE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "fracwave",
    version,
    about = "Graded-mesh L1 solver for time-fractional wave equations on a periodic square",
    after_help = "Values are resolved as: flags, then the --config file, then built-in defaults.\n\
                  Exit codes: 0 success, 1 numerical failure, 2 configuration error."
)]
struct Cli {
    /// JSON config file; any subset of the keys written to config.json
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, capped by FRACWAVE_THREADS [default: all cores]
    #[arg(long, global = true, value_name = "COUNT")]
    threads: Option<usize>,
    /// Write 0 for every wall-clock column so outputs are reproducible bit for bit
    #[arg(long, global = true)]
    deterministic: bool,
    /// Seed for randomized checks [default: 24301 (0x5EED)]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// March one problem to the final time and write the solution
    Run(RunArgs),
    /// Error and observed order over a doubling list of step counts
    Convergence(StudyArgs),
    /// Check the L1 kernel inequalities, optionally the complementary kernels
    KernelsCheck(KernelArgs),
    /// Local truncation error of the L1 formula against its a priori bound
    Truncation(TruncationArgs),
    /// Compare the experimental BDF2-type variant with the L1 scheme
    Bdf2Compare(StudyArgs),
}

#[derive(Args, Debug, Default)]
struct ProblemArgs {
    /// Problem: example51, example52 or custom [default: example51]
    #[arg(long, value_parser = parse_problem)]
    problem: Option<ProblemName>,
    /// Fractional order beta in (1, 2) [default: 1.5]
    #[arg(long)]
    beta: Option<f64>,
    /// Regularity exponent sigma of the exact solution [default: beta - 1]
    #[arg(long)]
    sigma: Option<f64>,
    /// Mesh grading exponent gamma >= 1 [default: 2]
    #[arg(long)]
    gamma: Option<f64>,
    /// Grid points per direction, even [default: 512]
    #[arg(long = "M")]
    m: Option<usize>,
    /// Final time, dimensionless [default: 1]
    #[arg(long = "T")]
    final_time: Option<f64>,
    /// Diffusion scale eps; the Laplacian is multiplied by eps^2 [default: 1]
    #[arg(long)]
    eps: Option<f64>,
    /// Use the forcing that makes example51 exact for the discrete Laplacian
    #[arg(long)]
    grid_consistent: bool,
    /// Relative Picard tolerance, dimensionless [default: 1e-12]
    #[arg(long)]
    picard_tol: Option<f64>,
    /// Picard iteration cap per step [default: 50]
    #[arg(long)]
    picard_max_iter: Option<usize>,
    /// Evaluate the cubic term once per step instead of iterating
    #[arg(long)]
    lagged: bool,
    /// Relative residual allowed in each spatial solve [default: 1e-10]
    #[arg(long)]
    solve_tol: Option<f64>,
    /// Enable the BDF2-type variant
    #[arg(long)]
    experimental_bdf2: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Number of time steps [default: 40]
    #[arg(long = "N")]
    n: Option<usize>,
    /// Time discretization: l1 or bdf2 [default: l1]
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SchemeChoice>,
    /// Mesh file with one time level per line, starting at 0 and ending at T
    #[arg(long, value_name = "FILE")]
    mesh_file: Option<PathBuf>,
    /// Directory with f_NNNNNN.bin per step and optional phi1.bin, phi2.bin (custom problem)
    #[arg(long, value_name = "DIR")]
    forcing_dir: Option<PathBuf>,
    /// Steps whose solution is written, comma separated (0 is the initial data)
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Step counts, comma separated, each double the previous [default: 40,80,160,320]
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Error norm: max or l2 [default: max]
    #[arg(long, value_parser = parse_norm)]
    norm: Option<NormChoice>,
    /// Time discretization for convergence: l1 or bdf2 [default: l1]
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SchemeChoice>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    /// Order alpha in (0, 1) of the kernels [default: beta - 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Wave order beta in (1, 2), used when alpha is not given [default: 1.5]
    #[arg(long)]
    beta: Option<f64>,
    /// Number of time steps [default: 40]
    #[arg(long = "N")]
    n: Option<usize>,
    /// Mesh grading exponent gamma >= 1 [default: 2]
    #[arg(long)]
    gamma: Option<f64>,
    /// Final time, dimensionless [default: 1]
    #[arg(long = "T")]
    final_time: Option<f64>,
    /// Mesh file with one time level per line
    #[arg(long, value_name = "FILE")]
    mesh_file: Option<PathBuf>,
    /// Also build and check the complementary (DCC) kernels
    #[arg(long)]
    dcc: bool,
    /// Additionally check COUNT seeded random meshes with up to N steps
    #[arg(long, value_name = "COUNT")]
    fuzz: Option<usize>,
    /// Smallest accepted relative margin [default: -1e-13]
    #[arg(long, allow_hyphen_values = true)]
    lemma_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct TruncationArgs {
    /// Order alpha in (0, 1) [default: beta - 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Wave order beta in (1, 2), used when alpha is not given [default: 1.5]
    #[arg(long)]
    beta: Option<f64>,
    /// Exponent mu of the test function t^mu [default: sigma]
    #[arg(long)]
    mu: Option<f64>,
    /// Regularity exponent, the default for mu [default: beta - 1]
    #[arg(long)]
    sigma: Option<f64>,
    /// Step counts, comma separated; the last is studied in detail, two or more give a slope [default: 40,80,160,320]
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Mesh grading exponent gamma >= 1 [default: 2]
    #[arg(long)]
    gamma: Option<f64>,
    /// Final time, dimensionless [default: 1]
    #[arg(long = "T")]
    final_time: Option<f64>,
    /// Mesh file with one time level per line; disables the slope fit
    #[arg(long, value_name = "FILE")]
    mesh_file: Option<PathBuf>,
}

fn parse_problem(s: &str) -> Result<ProblemName, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown problem '{s}' (expected example51, example52 or custom)"))
}

fn parse_scheme(s: &str) -> Result<SchemeChoice, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown scheme '{s}' (expected l1 or bdf2)"))
}

fn parse_norm(s: &str) -> Result<NormChoice, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown norm '{s}' (expected max or l2)"))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ProblemArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.problem, self.problem);
        set(&mut c.beta, self.beta);
        if self.sigma.is_some() {
            c.sigma = self.sigma;
        }
        set(&mut c.gamma, self.gamma);
        set(&mut c.m, self.m);
        set(&mut c.final_time, self.final_time);
        set(&mut c.eps, self.eps);
        c.grid_consistent |= self.grid_consistent;
        set(&mut c.picard_tol, self.picard_tol);
        set(&mut c.picard_max_iter, self.picard_max_iter);
        c.lagged |= self.lagged;
        set(&mut c.solve_tol, self.solve_tol);
        c.experimental_bdf2 |= self.experimental_bdf2;
    }
}

/// Layers flags over the config file over defaults.
fn resolve(cli: Cli) -> Result<RunConfig, ConfigError> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    set(&mut c.out, cli.out);
    if cli.threads.is_some() {
        c.threads = cli.threads;
    }
    c.deterministic |= cli.deterministic;
    set(&mut c.seed, cli.seed);
    match cli.command {
        Sub::Run(a) => {
            c.command = Command::Run;
            a.problem.apply(&mut c);
            set(&mut c.n, a.n);
            set(&mut c.scheme, a.scheme);
            if a.mesh_file.is_some() {
                c.mesh_file = a.mesh_file;
            }
            if a.forcing_dir.is_some() {
                c.forcing_dir = a.forcing_dir;
            }
            set(&mut c.snapshots, a.snapshots);
        }
        Sub::Convergence(a) => {
            c.command = Command::Convergence;
            apply_study(a, &mut c);
        }
        Sub::Bdf2Compare(a) => {
            c.command = Command::Bdf2Compare;
            apply_study(a, &mut c);
        }
        Sub::KernelsCheck(a) => {
            c.command = Command::KernelsCheck;
            if a.alpha.is_some() {
                c.alpha = a.alpha;
            }
            set(&mut c.beta, a.beta);
            set(&mut c.n, a.n);
            set(&mut c.gamma, a.gamma);
            set(&mut c.final_time, a.final_time);
            if a.mesh_file.is_some() {
                c.mesh_file = a.mesh_file;
            }
            c.dcc |= a.dcc;
            set(&mut c.fuzz, a.fuzz);
            set(&mut c.lemma_tol, a.lemma_tol);
        }
        Sub::Truncation(a) => {
            c.command = Command::Truncation;
            if a.alpha.is_some() {
                c.alpha = a.alpha;
            }
            set(&mut c.beta, a.beta);
            if a.mu.is_some() {
                c.mu = a.mu;
            }
            if a.sigma.is_some() {
                c.sigma = a.sigma;
            }
            set(&mut c.n_list, a.n);
            set(&mut c.gamma, a.gamma);
            set(&mut c.final_time, a.final_time);
            if a.mesh_file.is_some() {
                c.mesh_file = a.mesh_file;
            }
        }
    }
    c.validate()?;
    Ok(c)
}

fn apply_study(a: StudyArgs, c: &mut RunConfig) {
    a.problem.apply(c);
    set(&mut c.n_list, a.n);
    set(&mut c.norm, a.norm);
    set(&mut c.scheme, a.scheme);
}

/// `min(requested or available, FRACWAVE_THREADS)`.
fn thread_count(requested: Option<usize>) -> Result<usize, ConfigError> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let wanted = requested.unwrap_or(available);
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(cap) if cap >= 1 => Ok(wanted.min(cap)),
            _ => Err(ConfigError {
                field: "threads",
                message: format!("{THREADS_ENV} must be a positive integer, got '{v}'"),
            }),
        },
        Err(_) => Ok(wanted),
    }
}

fn execute(cfg: &RunConfig) -> Result<(), Failure> {
    let threads = thread_count(cfg.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Numerical(format!("thread pool: {e}")))?;
    let out = OutputDir::create(&cfg.out)?;
    out.write_json("config.json", cfg)?;
    match cfg.command {
        Command::Run => commands::run(cfg, &out),
        Command::Convergence => commands::convergence(cfg, &out),
        Command::KernelsCheck => commands::kernels_check(cfg, &out),
        Command::Truncation => commands::truncation(cfg, &out),
        Command::Bdf2Compare => commands::bdf2_compare(cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("{} failed: {msg}", cfg.command.label());
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::parse_from(["fracwave", "run", "--N", "12", "--M", "16", "--beta", "1.3"]);
        let c = resolve(cli).unwrap();
        assert_eq!((c.n, c.m, c.beta), (12, 16, 1.3));
        assert_eq!(c.command, Command::Run);
    }

    #[test]
    fn convergence_takes_a_list() {
        let cli = Cli::parse_from(["fracwave", "convergence", "--N", "8,16,32"]);
        assert_eq!(resolve(cli).unwrap().n_list, vec![8, 16, 32]);
    }

    #[test]
    fn zero_steps_is_a_config_error() {
        let cli = Cli::parse_from(["fracwave", "run", "--N", "0"]);
        assert_eq!(resolve(cli).unwrap_err().field, "N");
    }
}
