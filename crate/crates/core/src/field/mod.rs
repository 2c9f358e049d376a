//! Gridded scalar and vector fields on the doubly periodic square `[0, L)^2`.
//!
//! Samples live at the vertices `x = (i h, j h)` with `h = L / n`, stored
//! row-major with the first index running along `x1`. Spectral coefficients
//! use the unnormalized forward DFT; the inverse carries the `1/n^2` factor.

mod biot_savart;
mod initial;
mod io;
mod loglip;
mod norms;
pub mod spectral;

pub use biot_savart::{biot_savart, velocity_from_spectrum};
pub use initial::{make_initial_data, random_band_limited, InitialData, InitialDataKind, InitialDataMeta};
pub use io::{read_field, write_field, FieldSidecar, FIELD_MAGIC, FIELD_VERSION};
pub use loglip::{log_lipschitz_modulus, log_lipschitz_ratio, log_lipschitz_ratio_grid};
pub use norms::{hm1_norm, l2_spectral, norms, NormReport};
pub use spectral::{transform_forward, transform_inverse};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid with `n` points per axis on a square of side `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    n: usize,
    length: f64,
}

impl Grid2D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length = {length} must be positive")));
        }
        Ok(Self { n, length })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Area of one quadrature cell.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [i as f64 * h, j as f64 * h]
    }

    /// Angular wavenumber for DFT index `i` (negative frequencies above `n/2`).
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.n as isize;
        let signed = if (i as isize) < n / 2 {
            i as isize
        } else {
            i as isize - n
        };
        2.0 * std::f64::consts::PI / self.length * signed as f64
    }

    /// Wavenumber used for odd derivatives; the Nyquist mode has no real
    /// derivative on the grid and is mapped to zero.
    #[inline]
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    /// Signed integer frequency for DFT index `i`.
    #[inline]
    pub fn frequency(&self, i: usize) -> isize {
        let n = self.n as isize;
        if (i as isize) < n / 2 {
            i as isize
        } else {
            i as isize - n
        }
    }

    /// Wrap a coordinate into `[0, L)`.
    #[inline]
    pub fn wrap(&self, x: f64) -> f64 {
        let r = x.rem_euclid(self.length);
        if r >= self.length {
            0.0
        } else {
            r
        }
    }

    /// Shortest periodic displacement `b - a` per axis.
    #[inline]
    pub fn torus_delta(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let l = self.length;
        let mut d = [b[0] - a[0], b[1] - a[1]];
        for c in d.iter_mut() {
            *c -= l * (*c / l).round();
        }
        d
    }

    #[inline]
    pub fn torus_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = self.torus_delta(a, b);
        d[0].hypot(d[1])
    }
}

/// Periodic torus metric for a square of side `length`.
#[inline]
pub fn torus_distance(length: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    let mut dx = b[0] - a[0];
    let mut dy = b[1] - a[1];
    dx -= length * (dx / length).round();
    dy -= length * (dy / length).round();
    dx.hypot(dy)
}

/// Real scalar field with an optional cached spectrum.
#[derive(Debug, Clone)]
pub struct ScalarField2D {
    grid: Grid2D,
    values: Vec<f64>,
    spectral: Option<Vec<Complex64>>,
    mean_zero: bool,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(Self {
            grid,
            values,
            spectral: None,
            mean_zero: false,
        })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            spectral: None,
            mean_zero: true,
        }
    }

    /// Sample `f(x1, x2)` at the grid vertices.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                let [x, y] = grid.point(i, j);
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    pub(crate) fn from_parts(grid: Grid2D, values: Vec<f64>, spectral: Option<Vec<Complex64>>) -> Self {
        Self {
            grid,
            values,
            spectral,
            mean_zero: false,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn spectral(&self) -> Option<&[Complex64]> {
        self.spectral.as_deref()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `|mean| <= 1e-12 * max|f|`, or the field vanishes.
    pub fn is_mean_zero(&self) -> bool {
        let max_abs = self.max_abs();
        max_abs == 0.0 || self.mean().abs() <= 1e-12 * max_abs
    }

    #[inline]
    pub fn mean_zero(&self) -> bool {
        self.mean_zero
    }

    /// Set the mean-zero flag after verifying it.
    pub fn mark_mean_zero(mut self) -> Result<Self> {
        self.require_mean_zero()?;
        self.mean_zero = true;
        Ok(self)
    }

    pub fn require_mean_zero(&self) -> Result<()> {
        if self.is_mean_zero() {
            Ok(())
        } else {
            Err(Error::NotMeanZero {
                mean: self.mean(),
                max_abs: self.max_abs(),
            })
        }
    }

    /// Subtract the mean and flag the result as mean-zero.
    pub fn remove_mean(mut self) -> Self {
        let mean = self.mean();
        for v in &mut self.values {
            *v -= mean;
        }
        self.spectral = None;
        self.mean_zero = true;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
            spectral: self
                .spectral
                .as_ref()
                .map(|s| s.iter().map(|c| c * a).collect()),
            mean_zero: self.mean_zero,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            grid: self.grid,
            values,
            spectral: None,
            mean_zero: self.mean_zero && other.mean_zero,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    /// Periodic shift by whole cells: `g(i, j) = f(i - di, j - dj)`.
    pub fn translate_cells(&self, di: isize, dj: isize) -> Self {
        let n = self.grid.n() as isize;
        let mut values = vec![0.0; self.values.len()];
        for i in 0..n {
            for j in 0..n {
                let si = (i - di).rem_euclid(n) as usize;
                let sj = (j - dj).rem_euclid(n) as usize;
                values[self.grid.index(i as usize, j as usize)] = self.values[self.grid.index(si, sj)];
            }
        }
        Self {
            grid: self.grid,
            values,
            spectral: None,
            mean_zero: self.mean_zero,
        }
    }

    /// Block-average onto a grid `factor` times coarser. Mass (`h^2 sum f`)
    /// is preserved; block centres sit at a common offset of
    /// `(factor - 1) h / 2` from the coarse vertices.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.grid.n();
        if factor == 0 || !factor.is_power_of_two() || n / factor < 8 {
            return Err(Error::InvalidParameter(format!(
                "coarsening factor {factor} invalid for n = {n}"
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let m = n / factor;
        let coarse = Grid2D::new(m, self.grid.length())?;
        let inv = 1.0 / (factor * factor) as f64;
        let mut values = vec![0.0; m * m];
        for ci in 0..m {
            for cj in 0..m {
                let mut s = 0.0;
                for a in 0..factor {
                    let row = (ci * factor + a) * n + cj * factor;
                    s += self.values[row..row + factor].iter().sum::<f64>();
                }
                values[ci * m + cj] = s * inv;
            }
        }
        Ok(Self {
            grid: coarse,
            values,
            spectral: None,
            mean_zero: self.mean_zero,
        })
    }

    /// Value at an arbitrary point by periodic bilinear interpolation.
    pub fn interpolate(&self, x: [f64; 2]) -> f64 {
        bilinear(&self.grid, &self.values, x)
    }

    pub(crate) fn set_spectral(&mut self, s: Vec<Complex64>) {
        self.spectral = Some(s);
    }

    pub(crate) fn set_mean_zero_flag(&mut self, flag: bool) {
        self.mean_zero = flag;
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

/// Two-component field, typically a velocity produced by [`biot_savart`].
#[derive(Debug, Clone)]
pub struct VectorField2D {
    grid: Grid2D,
    u1: Vec<f64>,
    u2: Vec<f64>,
}

impl VectorField2D {
    pub fn new(grid: Grid2D, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        if u1.len() != grid.len() || u2.len() != grid.len() {
            return Err(Error::GridMismatch("velocity component length".into()));
        }
        check_finite(&u1, "velocity u1")?;
        check_finite(&u2, "velocity u2")?;
        Ok(Self { grid, u1, u2 })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            u1: vec![0.0; grid.len()],
            u2: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        let n = grid.n();
        let mut u1 = Vec::with_capacity(grid.len());
        let mut u2 = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                let [x, y] = grid.point(i, j);
                let v = f(x, y);
                u1.push(v[0]);
                u2.push(v[1]);
            }
        }
        Self::new(grid, u1, u2)
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    #[inline]
    pub fn u2(&self) -> &[f64] {
        &self.u2
    }

    pub fn max_speed(&self) -> f64 {
        self.u1
            .iter()
            .zip(&self.u2)
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// `h^2 sum |u|^2`, square-rooted.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self
            .u1
            .iter()
            .zip(&self.u2)
            .map(|(a, b)| a * a + b * b)
            .sum();
        (self.grid.cell_area() * s).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            u1: self.u1.iter().map(|v| a * v).collect(),
            u2: self.u2.iter().map(|v| a * v).collect(),
        }
    }

    /// `a * self + b * other`, used for time interpolation between snapshots.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("velocity grids differ".into()));
        }
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        Ok(Self {
            grid: self.grid,
            u1: mix(&self.u1, &other.u1),
            u2: mix(&self.u2, &other.u2),
        })
    }

    /// Periodic bilinear interpolation of both components.
    #[inline]
    pub fn interpolate(&self, x: [f64; 2]) -> [f64; 2] {
        let (idx, w) = bilinear_stencil(&self.grid, x);
        let mut out = [0.0; 2];
        for k in 0..4 {
            out[0] += w[k] * self.u1[idx[k]];
            out[1] += w[k] * self.u2[idx[k]];
        }
        out
    }

    /// Spectral divergence `i k . u_hat`, as a relative residual
    /// `max|k . u_hat| / max(|k| |u_hat|)`.
    pub fn spectral_divergence(&self) -> f64 {
        let n = self.grid.n();
        let a = spectral::fft2_real(&self.grid, &self.u1);
        let b = spectral::fft2_real(&self.grid, &self.u2);
        let mut num = 0.0_f64;
        let mut den = 0.0_f64;
        for i in 0..n {
            let k1 = self.grid.derivative_wavenumber(i);
            for j in 0..n {
                let k2 = self.grid.derivative_wavenumber(j);
                let idx = i * n + j;
                let div = a[idx] * k1 + b[idx] * k2;
                num = num.max(div.norm());
                den = den.max((k1 * k1 + k2 * k2).sqrt() * (a[idx].norm() + b[idx].norm()));
            }
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Spectral curl `d1 u2 - d2 u1`.
    pub fn curl(&self) -> ScalarField2D {
        let n = self.grid.n();
        let a = spectral::fft2_real(&self.grid, &self.u1);
        let b = spectral::fft2_real(&self.grid, &self.u2);
        let mut c = vec![Complex64::new(0.0, 0.0); n * n];
        let i_unit = Complex64::new(0.0, 1.0);
        for i in 0..n {
            let k1 = self.grid.derivative_wavenumber(i);
            for j in 0..n {
                let k2 = self.grid.derivative_wavenumber(j);
                let idx = i * n + j;
                c[idx] = i_unit * (b[idx] * k1 - a[idx] * k2);
            }
        }
        let values = spectral::ifft2_real(&self.grid, c.clone());
        ScalarField2D::from_parts(self.grid, values, Some(c))
    }
}

/// Corner indices and weights of the periodic bilinear stencil at `x`.
#[inline]
pub(crate) fn bilinear_stencil(grid: &Grid2D, x: [f64; 2]) -> ([usize; 4], [f64; 4]) {
    let n = grid.n();
    let h = grid.spacing();
    let s = grid.wrap(x[0]) / h;
    let t = grid.wrap(x[1]) / h;
    let i0 = (s.floor() as usize).min(n - 1);
    let j0 = (t.floor() as usize).min(n - 1);
    let fx = s - i0 as f64;
    let fy = t - j0 as f64;
    let i1 = (i0 + 1) % n;
    let j1 = (j0 + 1) % n;
    (
        [i0 * n + j0, i1 * n + j0, i0 * n + j1, i1 * n + j1],
        [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ],
    )
}

#[inline]
pub(crate) fn bilinear(grid: &Grid2D, values: &[f64], x: [f64; 2]) -> f64 {
    let (idx, w) = bilinear_stencil(grid, x);
    (0..4).map(|k| w[k] * values[idx[k]]).sum()
}

pub(crate) fn check_finite(values: &[f64], context: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index, context }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid2D::new(4, 1.0).is_err());
        assert!(Grid2D::new(48, 1.0).is_err());
        assert!(Grid2D::new(16, 0.0).is_err());
        let g = Grid2D::new(64, 2.0).unwrap();
        assert_eq!(g.spacing() * g.n() as f64, g.length());
    }

    #[test]
    fn torus_distance_wraps() {
        let g = Grid2D::new(16, 1.0).unwrap();
        let d = g.torus_distance([0.05, 0.5], [0.95, 0.5]);
        assert!((d - 0.1).abs() < 1e-12);
        assert!((torus_distance(1.0, [0.9, 0.9], [0.1, 0.1]) - 0.2_f64.hypot(0.2)).abs() < 1e-12);
    }

    #[test]
    fn bilinear_reproduces_linear_functions_inside_cells() {
        let g = Grid2D::new(16, 1.0).unwrap();
        let f = ScalarField2D::from_fn(g, |x, y| 2.0 * x - y).unwrap();
        let v = f.interpolate([0.31, 0.47]);
        assert!((v - (0.62 - 0.47)).abs() < 1e-12);
    }

    #[test]
    fn coarsen_preserves_mass() {
        let g = Grid2D::new(32, 1.0).unwrap();
        let f = ScalarField2D::from_fn(g, |x, y| (x * 7.0).sin().abs() + y).unwrap();
        let c = f.coarsen(4).unwrap();
        let m_f: f64 = f.values().iter().sum::<f64>() * g.cell_area();
        let m_c: f64 = c.values().iter().sum::<f64>() * c.grid().cell_area();
        assert!((m_f - m_c).abs() < 1e-12 * m_f);
        assert_eq!(c.grid().n(), 8);
    }

    #[test]
    fn non_finite_samples_are_rejected() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let mut v = vec![0.0; 64];
        v[5] = f64::NAN;
        assert!(matches!(
            ScalarField2D::new(g, v),
            Err(Error::NonFinite { index: 5, .. })
        ));
    }
}
