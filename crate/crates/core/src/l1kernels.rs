//! L1 kernels on the half-point grid and the discrete Caputo operator.
//!
//! Row `n` holds `a^{(n)}_j` indexed by lag `j = n - k`:
//!
//! ```text
//! a^{(n)}_{n-k} = (1/tau_{k-1/2}) * int_{t_{k-3/2}}^{t_{k-1/2}} omega_{1-alpha}(t_{n-1/2} - s) ds
//! ```
//!
//! evaluated through the antiderivative `omega_{2-alpha}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{gamma, pow_increment, CompensatedSum};
use crate::timemesh::TimeMesh;

/// Default tolerance for the lemma checks (relative margins).
pub const LEMMA_TOLERANCE: f64 = -1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("fractional order alpha must lie strictly in (0, 1), got {0}")]
    InvalidOrder(f64),
    #[error("omega_{gamma} is singular at t = 0")]
    SingularOmega { gamma: f64 },
    #[error("omega argument must be nonnegative and finite, got {0}")]
    InvalidArgument(f64),
    #[error("step index {n} outside 1..={len}")]
    StepOutOfRange { n: usize, len: usize },
    #[error("expected {expected} differences, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Reduced order `alpha = beta - 1`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self, KernelError> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(KernelError::InvalidOrder(alpha))
        }
    }

    /// From the equation order `beta in (1, 2)`.
    pub fn from_beta(beta: f64) -> Result<Self, KernelError> {
        Self::new(beta - 1.0)
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    pub fn beta(self) -> f64 {
        1.0 + self.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = KernelError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FracOrder> for f64 {
    fn from(a: FracOrder) -> f64 {
        a.0
    }
}

/// `omega_gamma(t) = t^{gamma-1} / Gamma(gamma)` with the reciprocal gamma
/// value cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaWeight {
    gamma: f64,
    inv_gamma_fn: f64,
}

impl OmegaWeight {
    pub fn new(gamma_param: f64) -> Self {
        Self {
            gamma: gamma_param,
            inv_gamma_fn: 1.0 / gamma(gamma_param),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `1 / Gamma(gamma)`.
    pub fn scale(&self) -> f64 {
        self.inv_gamma_fn
    }

    pub fn eval(&self, t: f64) -> Result<f64, KernelError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(KernelError::InvalidArgument(t));
        }
        if t == 0.0 {
            if self.gamma <= 1.0 {
                return Err(KernelError::SingularOmega { gamma: self.gamma });
            }
            return Ok(0.0);
        }
        if self.gamma == 1.0 {
            return Ok(1.0);
        }
        Ok(t.powf(self.gamma - 1.0) * self.inv_gamma_fn)
    }

    /// `omega_gamma(y + d) - omega_gamma(y)` for `y >= 0`, `d > 0`, accurate
    /// when `d << y`.
    pub fn increment(&self, y: f64, d: f64) -> f64 {
        pow_increment(y, d, self.gamma - 1.0) * self.inv_gamma_fn
    }
}

/// `omega_gamma(t)`.
pub fn omega(gamma_param: f64, t: f64) -> Result<f64, KernelError> {
    OmegaWeight::new(gamma_param).eval(t)
}

/// Kernel row `a^{(n)}_j`, `j = 0..n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1KernelRow {
    n: usize,
    a: Vec<f64>,
}

impl L1KernelRow {
    /// Wraps precomputed coefficients (lag-indexed). Mostly for tests.
    pub fn from_lags(a: Vec<f64>) -> Self {
        Self { n: a.len(), a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `a^{(n)}_j`.
    pub fn lag(&self, j: usize) -> f64 {
        self.a[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }
}

fn check_step(mesh: &TimeMesh, n: usize) -> Result<(), KernelError> {
    if n == 0 || n > mesh.len() {
        return Err(KernelError::StepOutOfRange { n, len: mesh.len() });
    }
    Ok(())
}

/// Closed-form kernel row for step `n`.
pub fn l1_row(mesh: &TimeMesh, alpha: FracOrder, n: usize) -> Result<L1KernelRow, KernelError> {
    check_step(mesh, n)?;
    let w = OmegaWeight::new(2.0 - alpha.alpha());
    let t_n = mesh.half_level(n);
    let a = (1..=n)
        .rev()
        .map(|k| {
            let d = mesh.half_step(k);
            let y = if k == n { 0.0 } else { t_n - mesh.half_level(k) };
            w.increment(y, d) / d
        })
        .collect();
    Ok(L1KernelRow { n, a })
}

/// All kernel rows `1..=N` of a mesh. The harness and property checks need
/// every row; the steppers build rows on demand instead.
#[derive(Debug, Clone)]
pub struct KernelTable {
    alpha: FracOrder,
    rows: Vec<L1KernelRow>,
}

impl KernelTable {
    pub fn build(mesh: &TimeMesh, alpha: FracOrder) -> Self {
        let rows = (1..=mesh.len())
            .into_par_iter()
            .map(|n| l1_row(mesh, alpha, n).expect("n within mesh range"))
            .collect();
        Self { alpha, rows }
    }

    pub fn alpha(&self) -> FracOrder {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `n`, `1 <= n <= N`.
    pub fn row(&self, n: usize) -> &L1KernelRow {
        &self.rows[n - 1]
    }

    pub fn rows(&self) -> &[L1KernelRow] {
        &self.rows
    }
}

/// `sum_{k=1}^n a^{(n)}_{n-k} diffs[k-1]`, where `diffs[k-1]` is
/// `nabla_tau v^{k-1/2}`.
pub fn discrete_caputo(row: &L1KernelRow, diffs: &[f64]) -> Result<f64, KernelError> {
    if diffs.len() != row.n {
        return Err(KernelError::LengthMismatch {
            expected: row.n,
            got: diffs.len(),
        });
    }
    let n = row.n;
    let mut acc = CompensatedSum::new();
    for (k, &d) in diffs.iter().enumerate() {
        acc.add(row.a[n - 1 - k] * d);
    }
    Ok(acc.value())
}

/// Differences `v^{k-1/2} - v^{k-3/2}`, `k = 1..n`, from half values with
/// `half_values[k] = v^{k-1/2}` and `half_values[0] = v^0`.
pub fn half_differences(half_values: &[f64]) -> Vec<f64> {
    half_values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Half-point differences from a function sampled at `t_{k-1/2}`.
pub fn sampled_half_differences(mesh: &TimeMesh, n: usize, v: impl Fn(f64) -> f64) -> Vec<f64> {
    let half: Vec<f64> = (0..=n).map(|k| v(mesh.half_level(k))).collect();
    half_differences(&half)
}

/// Half-point differences from nodal values `v^0..v^n`, using
/// `v^{k-1/2} = (v^k + v^{k-1})/2`. The first difference is `(v^1 - v^0)/2`.
pub fn nodal_half_differences(nodal: &[f64]) -> Vec<f64> {
    let mut half = Vec::with_capacity(nodal.len());
    half.push(nodal[0]);
    half.extend(nodal.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    half_differences(&half)
}

/// The five kernel inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaProperty {
    I,
    II,
    III,
    IV,
    V,
}

impl LemmaProperty {
    pub const ALL: [LemmaProperty; 5] = [Self::I, Self::II, Self::III, Self::IV, Self::V];

    pub fn label(self) -> &'static str {
        match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::IV => "IV",
            Self::V => "V",
        }
    }
}

/// One evaluated inequality. `lag` locates it within row `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaInstance {
    pub property: LemmaProperty,
    pub n: usize,
    pub lag: usize,
    /// Relative slack; negative means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// No instance exists at this `n`.
    Vacuous,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub property: LemmaProperty,
    pub instances: usize,
    /// Smallest margin seen, `None` if no instance was evaluated.
    pub worst_margin: Option<f64>,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelLemmaReport {
    pub n: usize,
    pub alpha: f64,
    pub tolerance: f64,
    pub checks: Vec<PropertyCheck>,
}

impl KernelLemmaReport {
    /// True unless some property failed. Skipped properties do not count.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, property: LemmaProperty) -> &PropertyCheck {
        self.checks
            .iter()
            .find(|c| c.property == property)
            .expect("every property is reported")
    }
}

/// `(big - small) / scale`, the slack in `small <= big`.
fn slack(big: f64, small: f64, scale: f64) -> f64 {
    let s = scale.abs().max(f64::MIN_POSITIVE);
    (big - small) / s
}

/// Every inequality instance anchored at row `n`. Property (IV) contributes
/// its `k = n` instance, so collecting rows `2..=n` yields the full range.
pub fn lemma_instances(table: &KernelTable, mesh: &TimeMesh, n: usize) -> Vec<LemmaInstance> {
    let alpha = table.alpha().alpha();
    let row = table.row(n);
    let a = row.as_slice();
    let mut out = Vec::new();
    let inst = |property, lag, margin| LemmaInstance {
        property,
        n,
        lag,
        margin,
    };

    // (I) positive, non-increasing in lag.
    for j in 0..n {
        let positive: f64 = if a[j] > 0.0 { 1.0 } else { -1.0 };
        let margin = if j == 0 {
            positive
        } else {
            positive.min(slack(a[j - 1], a[j], a[j - 1]))
        };
        out.push(inst(LemmaProperty::I, j, margin));
    }

    if n >= 2 {
        let prev = table.row(n - 1).as_slice();
        // (II) for 1 <= k <= n-2.
        for k in 1..n.saturating_sub(1) {
            let m1 = slack(prev[k - 1], a[k], prev[k - 1]);
            let lhs = prev[k - 1] * a[k + 1];
            let rhs = prev[k] * a[k];
            let m2 = slack(lhs, rhs, lhs.max(rhs));
            out.push(inst(LemmaProperty::II, k, m1.min(m2)));
        }
        // (III) for 0 <= k <= n-2.
        for k in 0..n - 1 {
            out.push(inst(LemmaProperty::III, k, slack(prev[k], a[k], prev[k])));
        }
    }
    if n >= 2 {
        out.push(iv_instance(table, mesh, n));
    }

    // (V) for 2 <= k <= n-1, anchored at lag n-k.
    if n >= 3 {
        let w = OmegaWeight::new(1.0 - alpha);
        let t_n = mesh.half_level(n);
        for k in 2..n {
            let y = t_n - mesh.half_level(k);
            let d = mesh.half_step(k);
            let lo = y.powf(-alpha) * w.scale();
            // omega_{1-alpha}(y) - omega_{1-alpha}(y + d), positive.
            let diff = -w.increment(y, d);
            let lower = diff / lo;
            let gap = a[n - k - 1] - a[n - k];
            let upper = slack(gap, diff, a[n - k - 1]);
            out.push(inst(LemmaProperty::V, n - k, lower.min(upper)));
        }
    }
    out
}

fn steps_nondecreasing_through(mesh: &TimeMesh, n: usize) -> bool {
    let slack = 4.0 * f64::EPSILON * mesh.final_time();
    mesh.steps()[..n].windows(2).all(|w| w[1] >= w[0] - slack)
}

/// Checks all five inequalities at step `n` against a prebuilt table.
pub fn check_kernel_lemma_with(
    table: &KernelTable,
    mesh: &TimeMesh,
    n: usize,
    tolerance: f64,
) -> KernelLemmaReport {
    let mut instances = lemma_instances(table, mesh, n);
    instances.retain(|i| i.property != LemmaProperty::IV);
    instances.extend((2..=n).map(|m| iv_instance(table, mesh, m)));
    let graded_ok = steps_nondecreasing_through(mesh, n);
    let checks = LemmaProperty::ALL
        .iter()
        .map(|&property| {
            if property == LemmaProperty::III && !graded_ok {
                return PropertyCheck {
                    property,
                    instances: 0,
                    worst_margin: None,
                    status: CheckStatus::Skipped("precondition (2.1) violated".into()),
                };
            }
            let margins: Vec<f64> = instances
                .iter()
                .filter(|i| i.property == property)
                .map(|i| i.margin)
                .collect();
            let worst = margins.iter().copied().reduce(f64::min);
            let status = match worst {
                None => CheckStatus::Vacuous,
                Some(m) if m >= tolerance => CheckStatus::Pass,
                Some(_) => CheckStatus::Fail,
            };
            PropertyCheck {
                property,
                instances: margins.len(),
                worst_margin: worst,
                status,
            }
        })
        .collect();
    KernelLemmaReport {
        n,
        alpha: table.alpha().alpha(),
        tolerance,
        checks,
    }
}

fn iv_instance(table: &KernelTable, mesh: &TimeMesh, m: usize) -> LemmaInstance {
    let alpha = table.alpha().alpha();
    let a = table.row(m).as_slice();
    let lhs = a[0] / a[m - 2];
    let rhs = (mesh.half_level(m) - mesh.half_level(1)).powf(alpha)
        / ((1.0 - alpha) * mesh.half_step(m).powf(alpha));
    LemmaInstance {
        property: LemmaProperty::IV,
        n: m,
        lag: 0,
        margin: slack(rhs, lhs, rhs.max(lhs)),
    }
}

/// Checks all five inequalities at step `n` of `mesh`.
pub fn check_kernel_lemma(
    mesh: &TimeMesh,
    alpha: FracOrder,
    n: usize,
) -> Result<KernelLemmaReport, KernelError> {
    check_step(mesh, n)?;
    let sub = mesh.truncated(n).expect("prefix of a valid mesh");
    let table = KernelTable::build(&sub, alpha);
    Ok(check_kernel_lemma_with(&table, &sub, n, LEMMA_TOLERANCE))
}

/// Runs the lemma check at every step of the table; returns the per-step
/// reports.
pub fn check_kernel_lemma_all(table: &KernelTable, mesh: &TimeMesh) -> Vec<KernelLemmaReport> {
    // (IV) is cumulative, so only the per-row instances are recomputed here.
    let graded_ok: Vec<bool> = (1..=table.len())
        .map(|n| steps_nondecreasing_through(mesh, n))
        .collect();
    let mut worst_iv: Option<f64> = None;
    let mut count_iv = 0;
    (1..=table.len())
        .map(|n| {
            let inst = lemma_instances(table, mesh, n);
            for i in inst.iter().filter(|i| i.property == LemmaProperty::IV) {
                count_iv += 1;
                worst_iv = Some(worst_iv.map_or(i.margin, |w| w.min(i.margin)));
            }
            let checks = LemmaProperty::ALL
                .iter()
                .map(|&property| {
                    if property == LemmaProperty::III && !graded_ok[n - 1] {
                        return PropertyCheck {
                            property,
                            instances: 0,
                            worst_margin: None,
                            status: CheckStatus::Skipped("precondition (2.1) violated".into()),
                        };
                    }
                    let (instances, worst) = if property == LemmaProperty::IV {
                        (count_iv, worst_iv)
                    } else {
                        let m: Vec<f64> = inst
                            .iter()
                            .filter(|i| i.property == property)
                            .map(|i| i.margin)
                            .collect();
                        (m.len(), m.iter().copied().reduce(f64::min))
                    };
                    let status = match worst {
                        None => CheckStatus::Vacuous,
                        Some(m) if m >= LEMMA_TOLERANCE => CheckStatus::Pass,
                        Some(_) => CheckStatus::Fail,
                    };
                    PropertyCheck {
                        property,
                        instances,
                        worst_margin: worst,
                        status,
                    }
                })
                .collect();
            KernelLemmaReport {
                n,
                alpha: table.alpha().alpha(),
                tolerance: LEMMA_TOLERANCE,
                checks,
            }
        })
        .collect()
}
