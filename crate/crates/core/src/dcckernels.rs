//! Discrete complementary convolution (DCC) kernels `p^{(n)}_{n-k}`: the
//! discrete inverse of the L1 kernels, with
//! `sum_{j=k}^n p^{(n)}_{n-j} a^{(j)}_{j-k} = 1` for every `k`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::l1kernels::{KernelTable, L1KernelRow, OmegaWeight};
use crate::special::CompensatedSum;
use crate::timemesh::TimeMesh;

/// Entries above this (negative) value are rounded to zero.
pub const CLAMP_TOLERANCE: f64 = -1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DccError {
    #[error("need kernel rows 1..={needed}, only {available} supplied")]
    MissingRows { needed: usize, available: usize },
    #[error("a^({k})_0 = {value} is not positive; kernel rows are corrupt")]
    NonPositiveDiagonal { k: usize, value: f64 },
    #[error("p^({n})_{lag} = {value:e} is negative beyond round-off")]
    Negative { n: usize, lag: usize, value: f64 },
}

/// `p^{(n)}_j`, `j = 0..n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccKernelRow {
    n: usize,
    p: Vec<f64>,
    clamped: usize,
}

impl DccKernelRow {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lag(&self, j: usize) -> f64 {
        self.p[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Number of slightly negative entries that were set to zero.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// `sum_{j=1}^n p^{(n)}_{n-j}`.
    pub fn sum(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        self.p.iter().for_each(|&v| acc.add(v));
        acc.value()
    }
}

/// DCC row `n` from the kernel rows `1..=n` (`rows[k-1]` is row `k`).
pub fn dcc_row(rows: &[L1KernelRow], n: usize) -> Result<DccKernelRow, DccError> {
    if rows.len() < n || n == 0 {
        return Err(DccError::MissingRows {
            needed: n,
            available: rows.len(),
        });
    }
    let a = |j: usize, lag: usize| rows[j - 1].lag(lag);
    for k in 1..=n {
        let d = a(k, 0);
        if !(d > 0.0) {
            return Err(DccError::NonPositiveDiagonal { k, value: d });
        }
    }
    let mut p = vec![0.0; n];
    p[0] = 1.0 / a(n, 0);
    let mut clamped = 0;
    for k in (1..n).rev() {
        let mut acc = CompensatedSum::new();
        for j in k + 1..=n {
            acc.add((a(j, j - k - 1) - a(j, j - k)) * p[n - j]);
        }
        let mut value = acc.value() / a(k, 0);
        if value < 0.0 {
            if value >= CLAMP_TOLERANCE {
                value = 0.0;
                clamped += 1;
            } else {
                return Err(DccError::Negative {
                    n,
                    lag: n - k,
                    value,
                });
            }
        }
        p[n - k] = value;
    }
    Ok(DccKernelRow { n, p, clamped })
}

/// DCC rows `1..=N` for a whole kernel table.
#[derive(Debug, Clone)]
pub struct DccTable {
    rows: Vec<DccKernelRow>,
}

impl DccTable {
    pub fn build(kernels: &KernelTable) -> Result<Self, DccError> {
        let rows = (1..=kernels.len())
            .into_par_iter()
            .map(|n| dcc_row(kernels.rows(), n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, n: usize) -> &DccKernelRow {
        &self.rows[n - 1]
    }

    pub fn rows(&self) -> &[DccKernelRow] {
        &self.rows
    }

    pub fn clamped(&self) -> usize {
        self.rows.iter().map(|r| r.clamped).sum()
    }
}

/// `max_k |sum_{j=k}^n p^{(n)}_{n-j} a^{(j)}_{j-k} - 1|`.
pub fn verify_identity(p_row: &DccKernelRow, a_rows: &[L1KernelRow]) -> f64 {
    let n = p_row.n;
    (1..=n)
        .map(|k| {
            let mut acc = CompensatedSum::new();
            for j in k..=n {
                acc.add(p_row.lag(n - j) * a_rows[j - 1].lag(j - k));
            }
            (acc.value() - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// `omega_{1+alpha}(t_{n-1/2}) - sum_j p^{(n)}_{n-j}`; nonnegative when the
/// sum bound holds.
pub fn sum_bound_margin(p_row: &DccKernelRow, mesh: &TimeMesh, alpha: f64) -> f64 {
    let bound = OmegaWeight::new(1.0 + alpha)
        .eval(mesh.half_level(p_row.n))
        .expect("half levels are positive");
    bound - p_row.sum()
}

/// Which triangular kernel matrix to test for positive definiteness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMatrix {
    /// `P[n][k] = p^{(n)}_{n-k}`.
    Dcc,
    /// `Z[n][k] = zeta^{(n)}_{n-k}`.
    Zeta,
}

/// Lower-triangular `P` with `P[n-1][k-1] = p^{(n)}_{n-k}`.
pub fn dcc_matrix(p_rows: &[DccKernelRow]) -> DMatrix<f64> {
    let size = p_rows.len();
    DMatrix::from_fn(size, size, |i, j| {
        if j <= i {
            p_rows[i].lag(i - j)
        } else {
            0.0
        }
    })
}

/// `zeta^{(n)}_0 = a^{(n)}_0`, `zeta^{(n)}_{n-k} = a^{(n)}_{n-k} - a^{(n)}_{n-k-1}`.
pub fn zeta_matrix(a_rows: &[L1KernelRow]) -> DMatrix<f64> {
    let size = a_rows.len();
    DMatrix::from_fn(size, size, |i, j| {
        if j == i {
            a_rows[i].lag(0)
        } else if j < i {
            a_rows[i].lag(i - j) - a_rows[i].lag(i - j - 1)
        } else {
            0.0
        }
    })
}

/// Smallest eigenvalue of `(K + K^T)/2`.
pub fn symmetric_part_min_eigenvalue(k: &DMatrix<f64>) -> f64 {
    if k.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (k + k.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// `lambda_min` of the symmetrized DCC matrix (or of the zeta matrix).
pub fn positive_definiteness_margin(
    p_rows: &[DccKernelRow],
    a_rows: &[L1KernelRow],
    which: KernelMatrix,
) -> f64 {
    let m = match which {
        KernelMatrix::Dcc => dcc_matrix(p_rows),
        KernelMatrix::Zeta => zeta_matrix(a_rows),
    };
    symmetric_part_min_eigenvalue(&m)
}

/// `sum_n w_n sum_{k<=n} p^{(n)}_{n-k} w_k`.
pub fn quadratic_form(p_rows: &[DccKernelRow], w: &[f64]) -> f64 {
    let mut outer = CompensatedSum::new();
    for (i, row) in p_rows.iter().enumerate().take(w.len()) {
        let n = i + 1;
        let mut inner = CompensatedSum::new();
        for k in 1..=n {
            inner.add(row.lag(n - k) * w[k - 1]);
        }
        outer.add(w[i] * inner.value());
    }
    outer.value()
}

/// `max |P Z - I|` entrywise; `P Z = I` is the orthogonality of p and zeta.
pub fn zeta_orthogonality_residual(p_rows: &[DccKernelRow], a_rows: &[L1KernelRow]) -> f64 {
    let p = dcc_matrix(p_rows);
    let z = zeta_matrix(a_rows);
    let prod = p * z;
    let size = prod.nrows();
    (prod - DMatrix::<f64>::identity(size, size)).amax()
}

/// Aggregate DCC diagnostics for one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccSummary {
    pub n_max: usize,
    pub alpha: f64,
    pub identity_residual: f64,
    pub min_entry: f64,
    pub clamped: usize,
    pub sum_bound_margin: f64,
    pub pd_margin_dcc: f64,
    pub pd_margin_zeta: f64,
}

pub fn summarize(mesh: &TimeMesh, kernels: &KernelTable, dcc: &DccTable) -> DccSummary {
    let a_rows = kernels.rows();
    let identity_residual = dcc
        .rows()
        .par_iter()
        .map(|r| verify_identity(r, a_rows))
        .reduce(|| 0.0, f64::max);
    let min_entry = dcc
        .rows()
        .iter()
        .flat_map(|r| r.as_slice().iter().copied())
        .fold(f64::INFINITY, f64::min);
    let alpha = kernels.alpha().alpha();
    let sum_bound_margin = dcc
        .rows()
        .iter()
        .map(|r| sum_bound_margin(r, mesh, alpha))
        .fold(f64::INFINITY, f64::min);
    DccSummary {
        n_max: dcc.len(),
        alpha,
        identity_residual,
        min_entry,
        clamped: dcc.clamped(),
        sum_bound_margin,
        pd_margin_dcc: positive_definiteness_margin(dcc.rows(), a_rows, KernelMatrix::Dcc),
        pd_margin_zeta: positive_definiteness_margin(dcc.rows(), a_rows, KernelMatrix::Zeta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::l1kernels::FracOrder;

    fn tables(mesh: &TimeMesh, alpha: f64) -> (KernelTable, DccTable) {
        let k = KernelTable::build(mesh, FracOrder::new(alpha).unwrap());
        let d = DccTable::build(&k).unwrap();
        (k, d)
    }

    #[test]
    fn first_row_is_reciprocal() {
        let mesh = TimeMesh::uniform(3, 1.0).unwrap();
        let (k, d) = tables(&mesh, 0.5);
        assert_eq!(d.row(1).lag(0), 1.0 / k.row(1).lag(0));
        assert_eq!(verify_identity(d.row(1), k.rows()), 0.0);
    }

    #[test]
    fn identity_and_sum_bound_uniform() {
        let mesh = TimeMesh::uniform(4, 1.0).unwrap();
        let (k, d) = tables(&mesh, 0.5);
        for r in d.rows() {
            assert!(verify_identity(r, k.rows()) < 1e-14);
        }
        let row = d.row(4);
        let bound = mesh.half_level(4).sqrt() / crate::special::gamma(1.5);
        assert!(row.sum() <= bound, "{} > {}", row.sum(), bound);
        assert!(sum_bound_margin(row, &mesh, 0.5) >= 0.0);
    }

    #[test]
    fn graded_small_alpha_identity() {
        let mesh = TimeMesh::graded(100, 1.0, 3.0).unwrap();
        let (k, d) = tables(&mesh, 0.1);
        let res = d
            .rows()
            .iter()
            .map(|r| verify_identity(r, k.rows()))
            .fold(0.0, f64::max);
        assert!(res < 1e-11, "{res}");
    }

    #[test]
    fn positive_definite_graded() {
        let mesh = TimeMesh::graded(40, 1.0, 2.0).unwrap();
        let (k, d) = tables(&mesh, 0.5);
        let s = summarize(&mesh, &k, &d);
        assert!(s.pd_margin_dcc >= -1e-10, "{s:?}");
        assert!(s.pd_margin_zeta >= -1e-10, "{s:?}");
        assert!(s.min_entry >= 0.0);
        assert!(zeta_orthogonality_residual(d.rows(), k.rows()) < 1e-11);
    }

    #[test]
    fn single_step_margin_is_p0() {
        let mesh = TimeMesh::uniform(1, 1.0).unwrap();
        let (k, d) = tables(&mesh, 0.5);
        let m = positive_definiteness_margin(d.rows(), k.rows(), KernelMatrix::Dcc);
        assert!((m - d.row(1).lag(0)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_form_matches_matrix() {
        let mesh = TimeMesh::graded(6, 1.0, 2.0).unwrap();
        let (_, d) = tables(&mesh, 0.3);
        let w = [1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
        let p = dcc_matrix(d.rows());
        let wv = nalgebra::DVector::from_row_slice(&w);
        let direct = wv.dot(&(&p * &wv));
        assert!((quadratic_form(d.rows(), &w) - direct).abs() < 1e-12);
    }

    #[test]
    fn missing_rows_error() {
        let mesh = TimeMesh::uniform(3, 1.0).unwrap();
        let k = KernelTable::build(&mesh, FracOrder::new(0.5).unwrap());
        assert!(matches!(
            dcc_row(&k.rows()[..2], 3),
            Err(DccError::MissingRows { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn corrupt_kernel_detected() {
        let rows = vec![L1KernelRow::from_lags(vec![-1.0])];
        assert!(matches!(dcc_row(&rows, 1), Err(DccError::NonPositiveDiagonal { .. })));
    }
}
