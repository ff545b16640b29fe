mod support;

use fracwave::dcckernels::{
    dcc_row, positive_definiteness_margin, quadratic_form, summarize, sum_bound_margin,
    verify_identity, zeta_orthogonality_residual, DccTable, KernelMatrix,
};
use fracwave::l1kernels::{FracOrder, KernelTable};
use fracwave::timemesh::TimeMesh;
use nalgebra::DMatrix;
use proptest::prelude::*;
use support::{admissible_levels, omega_oracle};

/// `P = L A^{-1}` with `A[j][k] = a^{(j)}_{j-k}` and `L` the lower ones
/// matrix, by dense LU.
fn dcc_by_dense_inverse(kernels: &KernelTable) -> DMatrix<f64> {
    let n = kernels.len();
    let a = DMatrix::from_fn(n, n, |j, k| if k <= j { kernels.row(j + 1).lag(j - k) } else { 0.0 });
    let ones = DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 });
    let at = a.transpose();
    let pt = at.lu().solve(&ones.transpose()).expect("A is triangular with positive diagonal");
    pt.transpose()
}

proptest! {
    #[test]
    fn recursion_matches_dense_inverse(levels in admissible_levels(1, 40), alpha in 0.05f64..0.95) {
        let mesh = TimeMesh::validate(levels).unwrap();
        let kernels = KernelTable::build(&mesh, FracOrder::new(alpha).unwrap());
        let dcc = DccTable::build(&kernels).unwrap();
        let dense = dcc_by_dense_inverse(&kernels);
        for n in 1..=mesh.len() {
            let row = dcc.row(n);
            let scale = row.as_slice().iter().copied().fold(0.0, f64::max);
            for k in 1..=n {
                let d = (row.lag(n - k) - dense[(n - 1, k - 1)]).abs();
                prop_assert!(d <= 1e-10 * scale, "n={} k={} rec={} dense={}", n, k, row.lag(n - k), dense[(n - 1, k - 1)]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn invariants_on_random_meshes(levels in admissible_levels(1, 60), alpha in 0.05f64..0.95) {
        let mesh = TimeMesh::validate(levels).unwrap();
        let kernels = KernelTable::build(&mesh, FracOrder::new(alpha).unwrap());
        let dcc = DccTable::build(&kernels).unwrap();
        for row in dcc.rows() {
            prop_assert!(row.as_slice().iter().all(|&p| p >= 0.0));
            prop_assert!(verify_identity(row, kernels.rows()) < 1e-11);
            // Sum bound against an independently evaluated omega_{1+alpha}.
            let bound = omega_oracle(1.0 + alpha, mesh.half_level(row.n()));
            let sum: f64 = row.as_slice().iter().sum();
            prop_assert!(sum <= bound + 1e-12, "n={} sum={} bound={}", row.n(), sum, bound);
            prop_assert!(sum_bound_margin(row, &mesh, alpha) >= -1e-12);
        }
        prop_assert!(positive_definiteness_margin(dcc.rows(), kernels.rows(), KernelMatrix::Zeta) >= -1e-10);
        prop_assert!(positive_definiteness_margin(dcc.rows(), kernels.rows(), KernelMatrix::Dcc) >= -1e-10);
        prop_assert!(zeta_orthogonality_residual(dcc.rows(), kernels.rows()) < 1e-10);
    }

    #[test]
    fn quadratic_form_nonnegative(
        levels in admissible_levels(1, 40),
        alpha in 0.05f64..0.95,
        w in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let mesh = TimeMesh::validate(levels).unwrap();
        let kernels = KernelTable::build(&mesh, FracOrder::new(alpha).unwrap());
        let dcc = DccTable::build(&kernels).unwrap();
        let w = &w[..mesh.len()];
        let norm2: f64 = w.iter().map(|x| x * x).sum();
        prop_assert!(quadratic_form(dcc.rows(), w) >= -1e-10 * norm2);
    }
}

#[test]
fn identity_residual_on_long_graded_meshes() {
    for &(gamma, alpha) in &[(1.0, 0.1), (3.0, 0.5), (5.0, 0.9), (2.0, 0.95)] {
        let mesh = TimeMesh::graded(200, 1.0, gamma).unwrap();
        let kernels = KernelTable::build(&mesh, FracOrder::new(alpha).unwrap());
        let dcc = DccTable::build(&kernels).unwrap();
        let s = summarize(&mesh, &kernels, &dcc);
        assert!(s.identity_residual < 1e-11, "{s:?}");
        assert!(s.min_entry >= 0.0);
        assert!(s.pd_margin_zeta >= -1e-10);
        assert!(s.pd_margin_dcc >= -1e-10);
    }
}

#[test]
fn single_step_row() {
    let mesh = TimeMesh::uniform(1, 1.0).unwrap();
    let kernels = KernelTable::build(&mesh, FracOrder::new(0.5).unwrap());
    let p = dcc_row(kernels.rows(), 1).unwrap();
    assert_eq!(p.lag(0), 1.0 / kernels.row(1).lag(0));
}
