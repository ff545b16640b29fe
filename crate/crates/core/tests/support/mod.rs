//! Oracles shared by the integration tests. Nothing here calls into the
//! library's numerics.

#![allow(dead_code)]

use std::f64::consts::PI;

use proptest::prelude::*;

/// Lanczos approximation (g = 7, 9 terms) with reflection.
pub fn lanczos_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * lanczos_gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Tanh-sinh quadrature of `f` over `[a, b]`. Abscissae are formed from the
/// distance to the nearer endpoint, so integrable endpoint singularities at
/// `a` are resolved as long as `f` is evaluated in a coordinate where `a`
/// is represented exactly.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    assert!(b > a);
    let half = 0.5 * (b - a);
    let t_max = 6.1;
    let eval = |t: f64| -> f64 {
        let u = 0.5 * PI * t.sinh();
        let w = 0.5 * PI * t.cosh() / u.cosh().powi(2);
        if !(w > 0.0) || !w.is_finite() {
            return 0.0;
        }
        // 1 - tanh|u| without cancellation.
        let gap = 2.0 / (1.0 + (2.0 * u.abs()).exp());
        let dist = half * gap;
        if dist == 0.0 {
            return 0.0;
        }
        let x = if u < 0.0 { a + dist } else { b - dist };
        half * w * f(x)
    };
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= t_max {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut estimate = h * sum;
    for _ in 0..10 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= t_max {
            sum += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        let next = h * sum;
        let done = (next - estimate).abs() <= 1e-15 * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// `t^{g-1} / Gamma(g)` with the oracle gamma.
pub fn omega_oracle(g: f64, t: f64) -> f64 {
    t.powf(g - 1.0) / lanczos_gamma(g)
}

/// Levels of a mesh with non-decreasing steps built from raw positive
/// weights.
pub fn levels_from_weights(mut w: Vec<f64>, final_time: f64) -> Vec<f64> {
    w.sort_by(f64::total_cmp);
    let total: f64 = w.iter().sum();
    let mut levels = vec![0.0];
    let mut t = 0.0;
    for s in &w {
        t += s / total * final_time;
        levels.push(t);
    }
    let n = w.len();
    levels[n] = final_time;
    levels
}

/// Admissible meshes with `n_lo..=n_hi` steps spread over three decades.
pub fn admissible_levels(n_lo: usize, n_hi: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..0.0, n_lo..=n_hi)
        .prop_map(|e| levels_from_weights(e.into_iter().map(|x| 10f64.powf(x)).collect(), 1.0))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
