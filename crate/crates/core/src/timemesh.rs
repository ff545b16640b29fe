//! Nonuniform time meshes `0 = t_0 < t_1 < ... < t_N = T` together with the
//! half-index quantities used by the L1 formula.
//!
//! Index conventions follow the scheme: step sizes and half steps are indexed
//! from `n = 1`, half levels from `n = 0` where `t_{-1/2} = t_0`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meshes whose first step is below this multiple of `eps * T` are rejected:
/// `tau_{1/2}^{-alpha}` enters every kernel row.
const MIN_FIRST_STEP_FACTOR: f64 = 1.0e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh needs at least one step (N = 0)")]
    ZeroSteps,
    #[error("final time must be positive and finite, got {0}")]
    InvalidFinalTime(f64),
    #[error("grading exponent must be >= 1, got {0}")]
    GammaBelowOne(f64),
    #[error("mesh must start at t_0 = 0, got {0}")]
    NotStartingAtZero(f64),
    #[error("time levels must be finite and strictly increasing (level {index})")]
    NotIncreasing { index: usize },
    #[error("mesh-condition violation at n = {index}: tau_n = {tau} < tau_(n-1) = {tau_prev}")]
    StepDecrease {
        index: usize,
        tau_prev: f64,
        tau: f64,
    },
    #[error("first step {tau1:e} is below the minimum {min:e}")]
    FirstStepTooSmall { tau1: f64, min: f64 },
    #[error("cannot parse mesh levels: {0}")]
    Parse(String),
    #[error("cannot read mesh file: {0}")]
    Io(String),
}

/// A nonuniform time mesh. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    levels: Vec<f64>,
    steps: Vec<f64>,
    half_steps: Vec<f64>,
    /// `half_levels[n] = t_{n-1/2}`, with `half_levels[0] = t_0`.
    half_levels: Vec<f64>,
    steps_nondecreasing: bool,
}

impl TimeMesh {
    /// Graded mesh `t_k = T (k/N)^gamma`.
    pub fn graded(n_steps: usize, final_time: f64, gamma: f64) -> Result<Self, MeshError> {
        if n_steps == 0 {
            return Err(MeshError::ZeroSteps);
        }
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(MeshError::InvalidFinalTime(final_time));
        }
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(MeshError::GammaBelowOne(gamma));
        }
        let n = n_steps as f64;
        let mut levels: Vec<f64> = (0..=n_steps)
            .map(|k| {
                let ratio = k as f64 / n;
                if gamma == 1.0 {
                    final_time * ratio
                } else {
                    final_time * ratio.powf(gamma)
                }
            })
            .collect();
        levels[n_steps] = final_time;
        Self::validate(levels)
    }

    /// Uniform mesh with `N` equal steps.
    pub fn uniform(n_steps: usize, final_time: f64) -> Result<Self, MeshError> {
        Self::graded(n_steps, final_time, 1.0)
    }

    /// Builds a mesh from explicit levels and enforces `tau_{n-1} <= tau_n`.
    pub fn validate(levels: Vec<f64>) -> Result<Self, MeshError> {
        let mesh = Self::from_levels_unchecked(levels)?;
        if let Some((index, tau_prev, tau)) = mesh.first_step_decrease() {
            return Err(MeshError::StepDecrease {
                index,
                tau_prev,
                tau,
            });
        }
        Ok(mesh)
    }

    /// Builds a mesh without the step-monotonicity requirement. Used to probe
    /// what happens when the kernel lemma's hypothesis fails.
    pub fn from_levels_unchecked(levels: Vec<f64>) -> Result<Self, MeshError> {
        if levels.len() < 2 {
            return Err(MeshError::ZeroSteps);
        }
        if levels[0] != 0.0 {
            return Err(MeshError::NotStartingAtZero(levels[0]));
        }
        for (i, w) in levels.windows(2).enumerate() {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(MeshError::NotIncreasing { index: i + 1 });
            }
        }
        let final_time = levels[levels.len() - 1];
        let steps: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
        let min_first = MIN_FIRST_STEP_FACTOR * f64::EPSILON * final_time;
        if steps[0] < min_first {
            return Err(MeshError::FirstStepTooSmall {
                tau1: steps[0],
                min: min_first,
            });
        }
        let half_steps: Vec<f64> = steps
            .iter()
            .enumerate()
            .map(|(i, &tau)| if i == 0 { 0.5 * tau } else { 0.5 * (tau + steps[i - 1]) })
            .collect();
        let mut half_levels = Vec::with_capacity(levels.len());
        half_levels.push(levels[0]);
        half_levels.extend(levels.iter().zip(&steps).map(|(&t, &tau)| t + 0.5 * tau));

        let mut mesh = Self {
            levels,
            steps,
            half_steps,
            half_levels,
            steps_nondecreasing: true,
        };
        mesh.steps_nondecreasing = mesh.first_step_decrease().is_none();
        Ok(mesh)
    }

    /// Returns `(n, tau_{n-1}, tau_n)` for the first `n` with `tau_n < tau_{n-1}`.
    ///
    /// Steps computed by differencing levels carry round-off of a few ulps of
    /// `T`; differences below that are not counted as violations.
    fn first_step_decrease(&self) -> Option<(usize, f64, f64)> {
        let slack = 4.0 * f64::EPSILON * self.final_time();
        self.steps
            .windows(2)
            .enumerate()
            .find(|(_, w)| w[1] < w[0] - slack)
            .map(|(i, w)| (i + 2, w[0], w[1]))
    }

    /// Number of steps `N`.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// All levels `t_0..=t_N`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `t_n`, `0 <= n <= N`.
    pub fn t(&self, n: usize) -> f64 {
        self.levels[n]
    }

    /// `tau_n = t_n - t_{n-1}`, `1 <= n <= N`.
    pub fn tau(&self, n: usize) -> f64 {
        self.steps[n - 1]
    }

    /// `tau_{n-1/2}`, `1 <= n <= N`, with `tau_{1/2} = tau_1 / 2`.
    pub fn half_step(&self, n: usize) -> f64 {
        self.half_steps[n - 1]
    }

    /// `t_{n-1/2}`, `0 <= n <= N`, with `t_{-1/2} = t_0`.
    pub fn half_level(&self, n: usize) -> f64 {
        self.half_levels[n]
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Whether `tau_{n-1} <= tau_n` holds throughout.
    pub fn steps_nondecreasing(&self) -> bool {
        self.steps_nondecreasing
    }

    /// The mesh restricted to its first `n` steps.
    pub fn truncated(&self, n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroSteps);
        }
        Self::from_levels_unchecked(self.levels[..=n.min(self.len())].to_vec())
    }

    /// Parses levels given either as a JSON-style array `[0, 0.1, ...]` or as
    /// one number per line. Blank lines and `#` comments are ignored.
    pub fn parse_levels(text: &str) -> Result<Vec<f64>, MeshError> {
        let trimmed = text.trim();
        let body = if trimmed.starts_with('[') {
            trimmed
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| MeshError::Parse("unterminated array".into()))?
                .replace(',', "\n")
        } else {
            trimmed.to_string()
        };
        body.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| MeshError::Parse(format!("{l:?}: {e}")))
            })
            .collect()
    }

    pub fn from_file(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|e| MeshError::Io(e.to_string()))?;
        Self::validate(Self::parse_levels(&text)?)
    }

    /// One level per line, full round-trip precision.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.levels {
            let _ = writeln!(out, "{t:?}");
        }
        out
    }
}

/// Graded mesh `t_k = T (k/N)^gamma`; see [`TimeMesh::graded`].
pub fn graded_mesh(n_steps: usize, final_time: f64, gamma: f64) -> Result<TimeMesh, MeshError> {
    TimeMesh::graded(n_steps, final_time, gamma)
}

/// Mesh from explicit levels; see [`TimeMesh::validate`].
pub fn validate_mesh(levels: &[f64]) -> Result<TimeMesh, MeshError> {
    TimeMesh::validate(levels.to_vec())
}
