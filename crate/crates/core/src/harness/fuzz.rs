use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dcckernels::{summarize, DccTable};
use crate::l1kernels::{
    check_kernel_lemma_all, CheckStatus, FracOrder, KernelTable, LemmaProperty,
};
use crate::timemesh::TimeMesh;

pub const DEFAULT_SEED: u64 = 0x5EED;

/// Mesh with `n` nondecreasing steps on `[0, final_time]`, drawn from `rng`.
pub fn random_admissible_mesh(
    rng: &mut impl Rng,
    n: usize,
    final_time: f64,
) -> Result<TimeMesh, HarnessError> {
    // Steps spread over three decades, sorted so they never shrink.
    let mut steps: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-3.0..0.0))).collect();
    steps.sort_by(f64::total_cmp);
    let total: f64 = steps.iter().sum();
    let mut levels = Vec::with_capacity(n + 1);
    let mut t = 0.0;
    levels.push(0.0);
    for s in &steps {
        t += s / total * final_time;
        levels.push(t);
    }
    levels[n] = final_time;
    Ok(TimeMesh::validate(levels)?)
}

/// Worst margins over a fuzz corpus of `(mesh, alpha)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuiteReport {
    pub seed: u64,
    pub meshes: usize,
    /// Worst relative margin per property, in `LemmaProperty::ALL` order.
    pub lemma_worst: Vec<(LemmaProperty, f64)>,
    pub lemma_failures: usize,
    pub identity_residual: f64,
    pub min_dcc_entry: f64,
    pub clamped: usize,
    pub sum_bound_margin: f64,
    pub pd_margin_dcc: f64,
    pub pd_margin_zeta: f64,
}

/// Seeded corpus: `count` meshes with `N` uniform in `2..=n_max` and
/// `alpha` uniform in `[alpha_lo, alpha_hi]`.
pub fn lemma_suite(
    seed: u64,
    count: usize,
    n_max: usize,
    alpha_range: (f64, f64),
) -> Result<LemmaSuiteReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [f64::INFINITY; 5];
    let mut failures = 0;
    let mut identity_residual: f64 = 0.0;
    let mut min_dcc_entry = f64::INFINITY;
    let mut clamped = 0;
    let mut sum_bound_margin = f64::INFINITY;
    let mut pd_dcc = f64::INFINITY;
    let mut pd_zeta = f64::INFINITY;
    for _ in 0..count {
        let n = rng.random_range(2..=n_max);
        let alpha = FracOrder::new(rng.random_range(alpha_range.0..=alpha_range.1))?;
        let mesh = random_admissible_mesh(&mut rng, n, 1.0)?;
        let kernels = KernelTable::build(&mesh, alpha);
        for report in check_kernel_lemma_all(&kernels, &mesh) {
            for (slot, check) in worst.iter_mut().zip(&report.checks) {
                if let Some(m) = check.worst_margin {
                    *slot = slot.min(m);
                }
                if check.status == CheckStatus::Fail {
                    failures += 1;
                }
            }
        }
        let dcc = DccTable::build(&kernels)?;
        let s = summarize(&mesh, &kernels, &dcc);
        identity_residual = identity_residual.max(s.identity_residual);
        min_dcc_entry = min_dcc_entry.min(s.min_entry);
        clamped += s.clamped;
        sum_bound_margin = sum_bound_margin.min(s.sum_bound_margin);
        pd_dcc = pd_dcc.min(s.pd_margin_dcc);
        pd_zeta = pd_zeta.min(s.pd_margin_zeta);
    }
    Ok(LemmaSuiteReport {
        seed,
        meshes: count,
        lemma_worst: LemmaProperty::ALL.iter().copied().zip(worst).collect(),
        lemma_failures: failures,
        identity_residual,
        min_dcc_entry,
        clamped,
        sum_bound_margin,
        pd_margin_dcc: pd_dcc,
        pd_margin_zeta: pd_zeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_meshes_are_admissible_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let m1 = random_admissible_mesh(&mut a, 30, 1.0).unwrap();
        let m2 = random_admissible_mesh(&mut b, 30, 1.0).unwrap();
        assert_eq!(m1, m2);
        assert!(m1.steps_nondecreasing());
        assert_eq!(m1.final_time(), 1.0);
    }

    #[test]
    fn small_suite_passes() {
        let r = lemma_suite(DEFAULT_SEED, 5, 20, (0.05, 0.95)).unwrap();
        assert_eq!(r.lemma_failures, 0, "{r:?}");
        assert!(r.identity_residual < 1e-11);
        assert!(r.min_dcc_entry >= 0.0);
    }
}
