//! Periodic uniform grid on `[0, L)^2`, grid functions, the five-point
//! Laplacian and the modified-Helmholtz solve `(c I - kappa Delta_h) u = g`.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::pairwise_sum;

const MAGIC: &[u8; 4] = b"F2D1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size M must be even and >= 4, got {0}")]
    InvalidSize(usize),
    #[error("domain length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("field has {got} points per side, grid has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shift c = {0} must be positive (operator would be indefinite)")]
    IndefiniteOperator(f64),
    #[error("diffusion coefficient must be positive, got {0}")]
    InvalidCoefficient(f64),
    #[error("conjugate gradients stalled at relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("field format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `M x M` grid with spacing `h = L / M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    m: usize,
    length: f64,
    h: f64,
}

impl Grid2D {
    pub fn new(m: usize, length: f64) -> Result<Self, GridError> {
        if m < 4 || m % 2 != 0 {
            return Err(GridError::InvalidSize(m));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::InvalidLength(length));
        }
        Ok(Self {
            m,
            length,
            h: length / m as f64,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    fn check(&self, u: &Field2D) -> Result<(), GridError> {
        if u.m != self.m {
            return Err(GridError::DimensionMismatch {
                expected: self.m,
                got: u.m,
            });
        }
        Ok(())
    }

    /// Eigenvalue of `-Delta_h` for the Fourier mode `(p, q)`.
    pub fn symbol(&self, p: usize, q: usize) -> f64 {
        let m = self.m as f64;
        let sp = (std::f64::consts::PI * p as f64 / m).sin();
        let sq = (std::f64::consts::PI * q as f64 / m).sin();
        4.0 / (self.h * self.h) * (sp * sp + sq * sq)
    }
}

/// Row-major `M x M` values, `v[i][j] = v(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    m: usize,
    data: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: &Grid2D) -> Self {
        Self {
            m: grid.m,
            data: vec![0.0; grid.m * grid.m],
        }
    }

    pub fn constant(grid: &Grid2D, value: f64) -> Self {
        Self {
            m: grid.m,
            data: vec![value; grid.m * grid.m],
        }
    }

    pub fn from_vec(m: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != m * m {
            return Err(GridError::Format(format!(
                "expected {} values, got {}",
                m * m,
                data.len()
            )));
        }
        Ok(Self { m, data })
    }

    /// Samples `f(x_i, y_j)`.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let m = grid.m;
        let mut data = vec![0.0; m * m];
        data.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let x = grid.coord(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(x, grid.coord(j));
            }
        });
        Self { m, data }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.m + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Field2D) {
        debug_assert_eq!(self.m, other.m);
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(a, &b)| *a += s * b);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.par_iter_mut().for_each(|a| *a *= s);
    }

    /// `a * self + b * other`, new field.
    pub fn lincomb(&self, a: f64, other: &Field2D, b: f64) -> Field2D {
        debug_assert_eq!(self.m, other.m);
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Field2D { m: self.m, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Field2D {
        Field2D {
            m: self.m,
            data: self.data.par_iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sub(&self, other: &Field2D) -> Field2D {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Field2D) -> Field2D {
        self.lincomb(1.0, other, 1.0)
    }

    /// Binary dump: 16-byte header (`F2D1`, `u32` M, two reserved `u32`),
    /// then `M^2` little-endian `f64` in row-major order.
    pub fn write_binary(&self, mut w: impl Write) -> Result<(), GridError> {
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(MAGIC);
        let m = u32::try_from(self.m).map_err(|_| GridError::Format("M exceeds u32".into()))?;
        header[4..8].copy_from_slice(&m.to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self, GridError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..4] != MAGIC {
            return Err(GridError::Format("bad magic, expected F2D1".into()));
        }
        let m = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != m * m * 8 {
            return Err(GridError::Format(format!(
                "expected {} payload bytes, got {}",
                m * m * 8,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { m, data })
    }

    /// One grid row per line, comma separated, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.data.chunks(self.m) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut data = Vec::new();
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            rows += 1;
            for tok in line.split(',') {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|e| GridError::Format(format!("{tok:?}: {e}")))?;
                data.push(v);
            }
        }
        if data.len() != rows * rows {
            return Err(GridError::Format("CSV field is not square".into()));
        }
        Self::from_vec(rows, data)
    }
}

/// Five-point periodic Laplacian.
pub fn laplacian(grid: &Grid2D, u: &Field2D) -> Result<Field2D, GridError> {
    grid.check(u)?;
    let m = grid.m;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let src = &u.data;
    let mut out = vec![0.0; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let up = ((i + m - 1) % m) * m;
        let down = ((i + 1) % m) * m;
        let cur = i * m;
        for j in 0..m {
            let left = (j + m - 1) % m;
            let right = (j + 1) % m;
            row[j] = (src[up + j] + src[down + j] + src[cur + left] + src[cur + right]
                - 4.0 * src[cur + j])
                * inv_h2;
        }
    });
    Ok(Field2D { m, data: out })
}

/// `(u, v) = h^2 sum u v`, summed pairwise in a fixed order.
pub fn inner(grid: &Grid2D, u: &Field2D, v: &Field2D) -> Result<f64, GridError> {
    grid.check(u)?;
    grid.check(v)?;
    let prod: Vec<f64> = u.data.iter().zip(&v.data).map(|(a, b)| a * b).collect();
    Ok(grid.h * grid.h * pairwise_sum(&prod))
}

pub fn norm_l2(grid: &Grid2D, u: &Field2D) -> Result<f64, GridError> {
    Ok(inner(grid, u, u)?.sqrt())
}

pub fn norm_max(u: &Field2D) -> f64 {
    u.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `c u - kappa Delta_h u`.
pub fn apply_helmholtz(grid: &Grid2D, c: f64, kappa: f64, u: &Field2D) -> Result<Field2D, GridError> {
    let lap = laplacian(grid, u)?;
    Ok(u.lincomb(c, &lap, -kappa))
}

/// Spectral solver for `(c I - kappa Delta_h) u = g`. Holds the FFT plans
/// for one grid size.
pub struct HelmholtzSolver {
    grid: Grid2D,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `symbol[p * M + q]`: eigenvalue of `-Delta_h`.
    symbol: Vec<f64>,
}

impl std::fmt::Debug for HelmholtzSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzSolver").field("grid", &self.grid).finish()
    }
}

impl HelmholtzSolver {
    pub fn new(grid: Grid2D) -> Self {
        let mut planner = FftPlanner::new();
        let m = grid.m;
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut symbol = vec![0.0; m * m];
        for p in 0..m {
            for q in 0..m {
                symbol[p * m + q] = grid.symbol(p, q);
            }
        }
        Self {
            grid,
            forward,
            inverse,
            symbol,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn rows_fft(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.grid.m;
        let scratch_len = fft.get_inplace_scratch_len();
        buf.par_chunks_mut(m).for_each_init(
            || vec![Complex64::default(); scratch_len],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    }

    fn transpose(&self, src: &[Complex64], dst: &mut [Complex64]) {
        let m = self.grid.m;
        dst.par_chunks_mut(m).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = src[i * m + j];
            }
        });
    }

    /// Solves `(c I - kappa Delta_h) u = rhs` mode by mode.
    pub fn solve(&self, c: f64, kappa: f64, rhs: &Field2D) -> Result<Field2D, GridError> {
        self.grid.check(rhs)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(GridError::IndefiniteOperator(c));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(GridError::InvalidCoefficient(kappa));
        }
        let m = self.grid.m;
        let mut a: Vec<Complex64> = rhs.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut b = vec![Complex64::default(); m * m];
        self.rows_fft(&mut a, &self.forward);
        self.transpose(&a, &mut b);
        self.rows_fft(&mut b, &self.forward);
        // b is indexed [q][p]; the symbol is symmetric in (p, q).
        let scale = 1.0 / (m * m) as f64;
        b.par_iter_mut()
            .zip(self.symbol.par_iter())
            .for_each(|(v, &s)| *v *= scale / (c + kappa * s));
        self.rows_fft(&mut b, &self.inverse);
        self.transpose(&b, &mut a);
        self.rows_fft(&mut a, &self.inverse);
        Ok(Field2D {
            m,
            data: a.iter().map(|z| z.re).collect(),
        })
    }

    /// `(c I - 1/2 Delta_h) u = rhs`.
    pub fn solve_half(&self, c: f64, rhs: &Field2D) -> Result<Field2D, GridError> {
        self.solve(c, 0.5, rhs)
    }
}

/// One-shot `(c I - 1/2 Delta_h) u = rhs`.
pub fn helmholtz_solve(grid: &Grid2D, c: f64, rhs: &Field2D) -> Result<Field2D, GridError> {
    HelmholtzSolver::new(*grid).solve_half(c, rhs)
}

/// Conjugate gradients for `(c I - kappa Delta_h) u = rhs`; the operator is
/// symmetric positive definite for `c > 0`.
pub fn cg_solve(
    grid: &Grid2D,
    c: f64,
    kappa: f64,
    rhs: &Field2D,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Field2D, GridError> {
    grid.check(rhs)?;
    if !(c > 0.0) {
        return Err(GridError::IndefiniteOperator(c));
    }
    let rhs_norm = norm_l2(grid, rhs)?;
    let mut x = Field2D::zeros(grid);
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = inner(grid, &r, &r)?;
    for it in 0..max_iter {
        if rr.sqrt() <= rel_tol * rhs_norm {
            return Ok(x);
        }
        let ap = apply_helmholtz(grid, c, kappa, &p)?;
        let step = rr / inner(grid, &p, &ap)?;
        x.axpy(step, &p);
        r.axpy(-step, &ap);
        let rr_new = inner(grid, &r, &r)?;
        p = r.lincomb(1.0, &p, rr_new / rr);
        rr = rr_new;
        if it + 1 == max_iter {
            break;
        }
    }
    if rr.sqrt() <= rel_tol * rhs_norm {
        Ok(x)
    } else {
        Err(GridError::NotConverged {
            residual: rr.sqrt() / rhs_norm,
            iterations: max_iter,
        })
    }
}
