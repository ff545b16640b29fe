//! Manufactured test problems for `C D_t^beta u = kappa Delta u - N(u) + f`
//! on the periodic square, plus the closed-form Caputo derivative of powers.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::spacegrid::{Field2D, Grid2D};
use crate::special::gamma;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("beta must lie strictly in (1, 2), got {0}")]
    InvalidBeta(f64),
    #[error("sigma must lie in (0, 1) or (1, 2), got {0}")]
    InvalidSigma(f64),
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("Caputo derivative of order {nu} of t^{mu} is not classical")]
    NonClassicalPower { nu: f64, mu: f64 },
    #[error("Caputo derivative of order {nu} of t^{mu} is singular at t = 0")]
    SingularAtZero { nu: f64, mu: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("forcing for step {n} unavailable: {reason}")]
    ForcingUnavailable { n: usize, reason: String },
}

/// Caputo derivative of order `nu > 0` of `t^mu`:
/// `Gamma(mu+1)/Gamma(mu+1-nu) t^{mu-nu}`, and zero for integer
/// `mu < ceil(nu)`.
pub fn caputo_power(nu: f64, mu: f64, t: f64) -> Result<f64, ProblemError> {
    if !(nu > 0.0 && nu.is_finite() && mu >= 0.0 && mu.is_finite()) {
        return Err(ProblemError::InvalidArgument(format!("nu = {nu}, mu = {mu}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(ProblemError::InvalidArgument(format!("t = {t}")));
    }
    let m = nu.ceil();
    if mu.fract() == 0.0 && mu < m {
        return Ok(0.0);
    }
    if mu <= m - 1.0 {
        return Err(ProblemError::NonClassicalPower { nu, mu });
    }
    let coef = gamma(mu + 1.0) / gamma(mu + 1.0 - nu);
    if t == 0.0 {
        return match (mu - nu).partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => Ok(0.0),
            Some(std::cmp::Ordering::Equal) => Ok(coef),
            _ => Err(ProblemError::SingularAtZero { nu, mu }),
        };
    }
    Ok(coef * t.powf(mu - nu))
}

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Forcing supplied per step: `(n, t_{n-1/2}) -> f`.
pub type StepForcingFn = Arc<dyn Fn(usize, f64) -> Result<Field2D, ProblemError> + Send + Sync>;

/// `time(t) * space(x, y)`.
#[derive(Clone)]
pub struct SeparableTerm {
    pub time: TimeFn,
    pub space: SpaceFn,
}

#[derive(Clone)]
pub enum Forcing {
    Zero,
    /// Sum of separable terms; space factors are sampled once per grid.
    Separable(Vec<SeparableTerm>),
    Pointwise(SpaceTimeFn),
    /// Externally sampled fields, one per step.
    Sampled(StepForcingFn),
}

#[derive(Clone)]
pub enum InitialData {
    Function(SpaceFn),
    Field(Field2D),
}

impl InitialData {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(v: f64) -> Self {
        Self::Function(Arc::new(move |_, _| v))
    }

    pub fn sample(&self, grid: &Grid2D) -> Result<Field2D, ProblemError> {
        match self {
            Self::Function(f) => Ok(Field2D::from_fn(grid, |x, y| f(x, y))),
            Self::Field(u) if u.m() == grid.m() => Ok(u.clone()),
            Self::Field(u) => Err(ProblemError::InvalidArgument(format!(
                "initial field has M = {}, grid has M = {}",
                u.m(),
                grid.m()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    None,
    /// `+u^3` on the left-hand side.
    Cubic,
}

/// A complete initial-value problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub beta: f64,
    /// Regularity parameter, when the solution behaves like `t^{sigma+1}`.
    pub sigma: Option<f64>,
    pub length: f64,
    pub final_time: f64,
    /// Coefficient of the Laplacian (`eps^2`).
    pub diffusion: f64,
    pub nonlinearity: Nonlinearity,
    pub forcing: Forcing,
    pub exact: Option<SpaceTimeFn>,
    pub phi1: InitialData,
    pub phi2: InitialData,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .field("sigma", &self.sigma)
            .field("length", &self.length)
            .field("final_time", &self.final_time)
            .field("diffusion", &self.diffusion)
            .field("nonlinearity", &self.nonlinearity)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

fn check_beta(beta: f64) -> Result<(), ProblemError> {
    if beta > 1.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(ProblemError::InvalidBeta(beta))
    }
}

fn check_sigma(sigma: f64) -> Result<(), ProblemError> {
    if (sigma > 0.0 && sigma < 1.0) || (sigma > 1.0 && sigma < 2.0) {
        Ok(())
    } else {
        Err(ProblemError::InvalidSigma(sigma))
    }
}

fn sin_sin() -> SpaceFn {
    Arc::new(|x, y| x.sin() * y.sin())
}

/// The two regularity choices used in the convergence tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaRule {
    BetaMinusOne,
    HalfBeta,
}

impl SigmaRule {
    pub fn apply(self, beta: f64) -> f64 {
        match self {
            Self::BetaMinusOne => beta - 1.0,
            Self::HalfBeta => beta / 2.0,
        }
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ProblemError> {
        check_beta(self.beta)?;
        if let Some(s) = self.sigma {
            check_sigma(s)?;
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(ProblemError::InvalidArgument(format!("T = {}", self.final_time)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(ProblemError::InvalidArgument(format!("L = {}", self.length)));
        }
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(ProblemError::InvalidEpsilon(self.diffusion.sqrt()));
        }
        Ok(())
    }

    /// Exact solution sampled at time `t`, if known.
    pub fn exact_field(&self, grid: &Grid2D, t: f64) -> Option<Field2D> {
        self.exact
            .as_ref()
            .map(|u| Field2D::from_fn(grid, |x, y| u(x, y, t)))
    }

    /// Builds the problem with the Laplacian coefficient and the linear
    /// forcing from a caller-supplied spatial symbol.
    fn sin_mode(
        name: &str,
        beta: f64,
        sigma: f64,
        diffusion: f64,
        symbol: f64,
    ) -> Result<Self, ProblemError> {
        check_beta(beta)?;
        check_sigma(sigma)?;
        let mu = sigma + 1.0;
        let coef = caputo_power(beta, mu, 1.0)?;
        let time: TimeFn = Arc::new(move |t| {
            let caputo = if t > 0.0 { coef * t.powf(mu - beta) } else { 0.0 };
            diffusion * symbol * t.powf(mu) + caputo
        });
        Ok(Self {
            name: name.into(),
            beta,
            sigma: Some(sigma),
            length: 2.0 * PI,
            final_time: 1.0,
            diffusion,
            nonlinearity: Nonlinearity::None,
            forcing: Forcing::Separable(vec![SeparableTerm {
                time,
                space: sin_sin(),
            }]),
            exact: Some(Arc::new(move |x, y, t| t.powf(mu) * x.sin() * y.sin())),
            phi1: InitialData::zero(),
            phi2: InitialData::zero(),
        })
    }
}

/// `u = t^{sigma+1} sin x sin y` on `[0, 2 pi)^2`, `T = 1`.
pub fn example_51(beta: f64, sigma: f64) -> Result<ProblemSpec, ProblemError> {
    ProblemSpec::sin_mode("example51", beta, sigma, 1.0, 2.0)
}

/// Same exact solution, but the forcing uses the five-point symbol
/// `(8/h^2) sin^2(h/2)` of `sin x sin y` on an `M`-point grid instead of its
/// continuous value 2. The semi-discrete solution then equals the exact one
/// at grid points, so measured errors are purely temporal.
pub fn example_51_grid_consistent(
    beta: f64,
    sigma: f64,
    m: usize,
) -> Result<ProblemSpec, ProblemError> {
    let grid = Grid2D::new(m, 2.0 * PI)
        .map_err(|e| ProblemError::InvalidArgument(e.to_string()))?;
    // -Delta_h (sin x sin y) = symbol(1, 1) sin x sin y
    ProblemSpec::sin_mode("example51-grid", beta, sigma, 1.0, grid.symbol(1, 1))
}

/// `u = t^beta sin x sin y` for `C D^beta u - eps^2 Delta u + u^3 = f`.
pub fn example_52(beta: f64, eps: f64) -> Result<ProblemSpec, ProblemError> {
    check_beta(beta)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(ProblemError::InvalidEpsilon(eps));
    }
    let diffusion = eps * eps;
    let g = gamma(beta + 1.0);
    let linear: TimeFn = Arc::new(move |t| g + 2.0 * diffusion * t.powf(beta));
    let cubic: TimeFn = Arc::new(move |t| t.powf(3.0 * beta));
    Ok(ProblemSpec {
        name: "example52".into(),
        beta,
        sigma: Some(beta - 1.0),
        length: 2.0 * PI,
        final_time: 1.0,
        diffusion,
        nonlinearity: Nonlinearity::Cubic,
        forcing: Forcing::Separable(vec![
            SeparableTerm {
                time: linear,
                space: sin_sin(),
            },
            SeparableTerm {
                time: cubic,
                space: Arc::new(|x, y| (x.sin() * y.sin()).powi(3)),
            },
        ]),
        exact: Some(Arc::new(move |x, y, t| t.powf(beta) * x.sin() * y.sin())),
        phi1: InitialData::zero(),
        phi2: InitialData::zero(),
    })
}

/// Spatially constant `u = 1 + t` with `f = 0`.
pub fn constant_linear(beta: f64) -> Result<ProblemSpec, ProblemError> {
    check_beta(beta)?;
    Ok(ProblemSpec {
        name: "constant-linear".into(),
        beta,
        sigma: None,
        length: 2.0 * PI,
        final_time: 1.0,
        diffusion: 1.0,
        nonlinearity: Nonlinearity::None,
        forcing: Forcing::Zero,
        exact: Some(Arc::new(|_, _, t| 1.0 + t)),
        phi1: InitialData::constant(1.0),
        phi2: InitialData::constant(1.0),
    })
}

/// Spatially constant `u = t^2/2` with `f = t^{2-beta}/Gamma(3-beta)`.
pub fn constant_quadratic(beta: f64) -> Result<ProblemSpec, ProblemError> {
    check_beta(beta)?;
    let scale = 1.0 / gamma(3.0 - beta);
    let space: SpaceFn = Arc::new(|_, _| 1.0);
    let time: TimeFn = Arc::new(move |t| scale * t.powf(2.0 - beta));
    Ok(ProblemSpec {
        name: "constant-quadratic".into(),
        beta,
        sigma: None,
        length: 2.0 * PI,
        final_time: 1.0,
        diffusion: 1.0,
        nonlinearity: Nonlinearity::None,
        forcing: Forcing::Separable(vec![SeparableTerm { time, space }]),
        exact: Some(Arc::new(|_, _, t| 0.5 * t * t)),
        phi1: InitialData::zero(),
        phi2: InitialData::zero(),
    })
}

/// Evaluates a problem's forcing on one grid, caching separable space
/// factors.
pub struct ForcingSampler {
    grid: Grid2D,
    forcing: Forcing,
    space_fields: Vec<Field2D>,
}

impl ForcingSampler {
    pub fn new(problem: &ProblemSpec, grid: &Grid2D) -> Self {
        let space_fields = match &problem.forcing {
            Forcing::Separable(terms) => terms
                .iter()
                .map(|term| {
                    let s = term.space.clone();
                    Field2D::from_fn(grid, move |x, y| s(x, y))
                })
                .collect(),
            _ => Vec::new(),
        };
        Self {
            grid: *grid,
            forcing: problem.forcing.clone(),
            space_fields,
        }
    }

    /// Forcing for step `n` at time `t`.
    pub fn sample(&self, n: usize, t: f64) -> Result<Field2D, ProblemError> {
        match &self.forcing {
            Forcing::Zero => Ok(Field2D::zeros(&self.grid)),
            Forcing::Separable(terms) => {
                let mut out = Field2D::zeros(&self.grid);
                for (term, field) in terms.iter().zip(&self.space_fields) {
                    out.axpy((term.time)(t), field);
                }
                Ok(out)
            }
            Forcing::Pointwise(f) => Ok(Field2D::from_fn(&self.grid, |x, y| f(x, y, t))),
            Forcing::Sampled(f) => {
                let field = f(n, t)?;
                if field.m() != self.grid.m() {
                    return Err(ProblemError::ForcingUnavailable {
                        n,
                        reason: format!("field has M = {}, grid has {}", field.m(), self.grid.m()),
                    });
                }
                Ok(field)
            }
        }
    }
}
