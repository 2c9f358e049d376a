//! 2D discrete Fourier transforms on square grids.
//!
//! Forward transforms are unnormalized, inverse transforms divide by `n^2`.
//! Rows are transformed in parallel; each row is an independent 1D FFT, so
//! results do not depend on the number of worker threads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{check_finite, Grid2D, ScalarField2D};
use crate::error::{Error, Result};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], n: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(n).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

fn transpose(data: &[Complex64], out: &mut [Complex64], n: usize) {
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, v) in row.iter_mut().enumerate() {
            *v = data[i * n + j];
        }
    });
}

/// In-place 2D transform of an `n x n` row-major array. No normalization.
pub fn fft2_inplace(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    rows(fft, data, n);
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(data, &mut t, n);
    rows(fft, &mut t, n);
    transpose(&t, data, n);
}

/// Unnormalized forward transform of real samples.
pub fn fft2_real(grid: &Grid2D, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut data, grid.n(), false);
    data
}

/// Inverse transform with `1/n^2` normalization, returning the real part.
pub fn ifft2_real(grid: &Grid2D, mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = grid.n();
    fft2_inplace(&mut spectrum, n, true);
    let inv = 1.0 / (n * n) as f64;
    spectrum.into_iter().map(|c| c.re * inv).collect()
}

/// Populate the spectral representation of `f`.
pub fn transform_forward(f: &ScalarField2D) -> Result<ScalarField2D> {
    check_finite(f.values(), "transform input")?;
    let spec = fft2_real(f.grid(), f.values());
    let mut out = f.clone();
    out.set_spectral(spec);
    Ok(out)
}

/// Rebuild physical samples from the cached spectrum.
pub fn transform_inverse(f: &ScalarField2D) -> Result<ScalarField2D> {
    let spec = f
        .spectral()
        .ok_or_else(|| Error::InvalidParameter("field has no spectral representation".into()))?
        .to_vec();
    if spec.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite {
            index: spec.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()).unwrap_or(0),
            context: "spectral coefficients",
        });
    }
    let values = ifft2_real(f.grid(), spec.clone());
    let mut out = ScalarField2D::from_parts(*f.grid(), values, Some(spec));
    out.set_mean_zero_flag(f.mean_zero());
    Ok(out)
}

/// 2/3-rule mask: keep modes with `3 |freq| < n` along both axes.
pub fn dealias_mask(grid: &Grid2D) -> Vec<bool> {
    let n = grid.n();
    let keep = |i: usize| 3 * grid.frequency(i).unsigned_abs() < n;
    let mut mask = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            mask.push(keep(i) && keep(j));
        }
    }
    mask
}

/// `|k|^2` for every mode in row-major order.
pub fn wavenumber_squared(grid: &Grid2D) -> Vec<f64> {
    let n = grid.n();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let k1 = grid.wavenumber(i);
        for j in 0..n {
            let k2 = grid.wavenumber(j);
            out.push(k1 * k1 + k2 * k2);
        }
    }
    out
}
