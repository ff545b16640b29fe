//! Effective run configuration: defaults, overlaid by a JSON config file,
//! overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    Convergence,
    KernelsCheck,
    Truncation,
    Bdf2Compare,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::Convergence => "convergence",
            Self::KernelsCheck => "kernels-check",
            Self::Truncation => "truncation",
            Self::Bdf2Compare => "bdf2-compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemName {
    Example51,
    Example52,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    Max,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    L1,
    Bdf2,
}

/// Everything a subcommand may read. Unused fields are ignored by the
/// subcommands that do not need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemName,
    pub beta: f64,
    /// `None` means `beta - 1`.
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    /// Exponent of `v = t^mu` in the truncation study; `None` means `sigma`.
    pub mu: Option<f64>,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "T")]
    pub final_time: f64,
    pub eps: f64,
    pub norm: NormChoice,
    pub scheme: SchemeChoice,
    pub grid_consistent: bool,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub lagged: bool,
    pub solve_tol: f64,
    pub lemma_tol: f64,
    pub snapshots: Vec<usize>,
    pub mesh_file: Option<PathBuf>,
    pub forcing_dir: Option<PathBuf>,
    pub dcc: bool,
    pub fuzz: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub experimental_bdf2: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Run,
            problem: ProblemName::Example51,
            beta: 1.5,
            sigma: None,
            alpha: None,
            mu: None,
            gamma: 2.0,
            n: 40,
            n_list: vec![40, 80, 160, 320],
            m: 512,
            final_time: 1.0,
            eps: 1.0,
            norm: NormChoice::Max,
            scheme: SchemeChoice::L1,
            grid_consistent: false,
            picard_tol: 1e-12,
            picard_max_iter: 50,
            lagged: false,
            solve_tol: 1e-10,
            lemma_tol: -1e-13,
            snapshots: Vec::new(),
            mesh_file: None,
            forcing_dir: None,
            dcc: false,
            fuzz: 0,
            seed: 0x5EED,
            threads: None,
            deterministic: false,
            experimental_bdf2: false,
            out: PathBuf::from("out"),
        }
    }
}

/// A configuration problem; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field,
        message: message.into(),
    }
}

impl RunConfig {
    /// Reads a (possibly partial) JSON config file; missing keys take
    /// defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| bad("config", format!("{}: {e}", path.display())))
    }

    pub fn sigma_value(&self) -> f64 {
        self.sigma.unwrap_or(self.beta - 1.0)
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.unwrap_or(self.beta - 1.0)
    }

    /// Range checks, run before any work is dispatched.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let uses_problem = matches!(
            self.command,
            Command::Run | Command::Convergence | Command::Bdf2Compare
        );
        if uses_problem || self.alpha.is_none() {
            if !(self.beta > 1.0 && self.beta < 2.0) {
                return Err(bad("beta", format!("must lie in (1, 2), got {}", self.beta)));
            }
        }
        if let Some(s) = self.sigma {
            if !((s > 0.0 && s < 1.0) || (s > 1.0 && s < 2.0)) {
                return Err(bad("sigma", format!("must lie in (0, 1) or (1, 2), got {s}")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(bad("alpha", format!("must lie in (0, 1), got {a}")));
            }
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(bad("mu", format!("must be positive, got {mu}")));
            }
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(bad("gamma", format!("must be >= 1, got {}", self.gamma)));
        }
        if self.n == 0 {
            return Err(bad("N", "must be >= 1, got 0"));
        }
        if matches!(self.command, Command::Convergence | Command::Bdf2Compare)
            || (self.command == Command::Truncation && !self.n_list.is_empty())
        {
            if self.n_list.is_empty() || self.n_list.contains(&0) {
                return Err(bad("N_list", "needs positive step counts"));
            }
            if self.n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
                return Err(bad("N_list", "each entry must double the previous one"));
            }
        }
        if self.m < 4 || self.m % 2 != 0 {
            return Err(bad("M", format!("must be even and >= 4, got {}", self.m)));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(bad("T", format!("must be positive, got {}", self.final_time)));
        }
        if self.problem != ProblemName::Custom && self.final_time != 1.0 && uses_problem {
            return Err(bad("T", "the built-in examples are posed on [0, 1]"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(bad("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(bad("picard_tol", "must be positive"));
        }
        if self.picard_max_iter == 0 {
            return Err(bad("picard_max_iter", "must be >= 1"));
        }
        if !(self.solve_tol > 0.0) {
            return Err(bad("solve_tol", "must be positive"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be >= 1"));
        }
        if self.problem == ProblemName::Custom && uses_problem && self.forcing_dir.is_none() {
            return Err(bad("forcing_dir", "the custom problem needs sampled forcing fields"));
        }
        if self.problem == ProblemName::Custom && self.command != Command::Run && uses_problem {
            return Err(bad("problem", "the custom problem has no exact solution to measure against"));
        }
        if self.grid_consistent && self.problem != ProblemName::Example51 {
            return Err(bad("grid_consistent", "only applies to example51"));
        }
        let wants_bdf2 = self.command == Command::Bdf2Compare || self.scheme == SchemeChoice::Bdf2;
        if wants_bdf2 && !self.experimental_bdf2 {
            return Err(bad("scheme", "the BDF2 variant requires --experimental-bdf2"));
        }
        if wants_bdf2 && self.problem == ProblemName::Example52 {
            return Err(bad("problem", "the BDF2 variant handles linear problems only"));
        }
        if self.mesh_file.is_some() && matches!(self.command, Command::Convergence | Command::Bdf2Compare) {
            return Err(bad("mesh_file", "convergence studies use graded meshes"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = RunConfig::default();
        c.sigma = Some(0.75);
        c.mesh_file = Some("levels.txt".into());
        c.threads = Some(3);
        c.snapshots = vec![0, 5];
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"beta": 1.3, "N": 12}"#).unwrap();
        assert_eq!(c.beta, 1.3);
        assert_eq!(c.n, 12);
        assert_eq!(c.m, 512);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn zero_steps_names_the_field() {
        let c = RunConfig {
            n: 0,
            ..RunConfig::default()
        };
        let e = c.validate().unwrap_err();
        assert_eq!(e.field, "N");
        assert!(e.to_string().contains("N"));
    }

    #[test]
    fn bdf2_is_gated() {
        let c = RunConfig {
            command: Command::Bdf2Compare,
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "scheme");
        let c = RunConfig {
            experimental_bdf2: true,
            ..c
        };
        c.validate().unwrap();
    }

    #[test]
    fn non_doubling_list_rejected() {
        let c = RunConfig {
            command: Command::Convergence,
            n_list: vec![10, 30],
            ..RunConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().field, "N_list");
    }
}
