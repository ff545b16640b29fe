//! Scalar special functions shared by the kernel modules.

/// Euler gamma function at double precision.
#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `(y + d)^p - y^p` for `y >= 0`, `d > 0`, without cancellation when
/// `d << y`.
pub fn pow_increment(y: f64, d: f64, p: f64) -> f64 {
    if y == 0.0 {
        return d.powf(p);
    }
    y.powf(p) * (p * (d / y).ln_1p()).exp_m1()
}

/// Compensated (Kahan–Babuška/Neumaier) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Pairwise sum with a fixed reduction tree, so results only depend on the
/// input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_known_values() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((gamma(0.5) - sqrt_pi).abs() < 1e-15);
        assert!((gamma(1.5) - 0.5 * sqrt_pi).abs() < 1e-15);
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
        for &x in &[0.1, 0.37, 0.9, 1.3, 2.2, 2.95] {
            let rel = (gamma(x + 1.0) - x * gamma(x)).abs() / gamma(x + 1.0);
            assert!(rel < 1e-14, "recurrence at {x}: {rel}");
        }
    }

    #[test]
    fn pow_increment_matches_direct_form() {
        let direct = 2.5f64.powf(0.3) - 2.0f64.powf(0.3);
        assert!((pow_increment(2.0, 0.5, 0.3) - direct).abs() < 1e-15);
        assert_eq!(pow_increment(0.0, 0.25, 0.5), 0.5);
        // d/y = 1e-12: the direct difference keeps only ~4 digits here
        let v = pow_increment(1.0, 1e-12, 0.5);
        assert!((v / 0.5e-12 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..1000 {
            acc.add(1e-17);
        }
        acc.add(-1.0);
        assert!((acc.value() - 1e-14).abs() < 1e-20);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }
}
