use serde::{Deserialize, Serialize};

use super::spectral::fft2_real;
use super::{check_finite, ScalarField2D};
use crate::error::Result;

/// Midpoint-rule norms of a gridded field. `hm1` is `None` unless the field
/// has zero mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub hm1: Option<f64>,
}

pub fn norms(f: &ScalarField2D) -> Result<NormReport> {
    check_finite(f.values(), "norm input")?;
    let area = f.grid().cell_area();
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut linf = 0.0_f64;
    for &v in f.values() {
        l1 += v.abs();
        l2 += v * v;
        linf = linf.max(v.abs());
    }
    let hm1 = if f.is_mean_zero() { Some(hm1_norm(f)?) } else { None };
    Ok(NormReport {
        l1: area * l1,
        l2: (area * l2).sqrt(),
        linf,
        hm1,
    })
}

/// `(L^2 sum_{k != 0} |c_k|^2 / |k|^2)^{1/2}` with `c_k = F_k / n^2`; the
/// same normalization gives `l2^2 = L^2 sum |c_k|^2`.
pub fn hm1_norm(f: &ScalarField2D) -> Result<f64> {
    f.require_mean_zero()?;
    let grid = f.grid();
    let n = grid.n();
    let spec = match f.spectral() {
        Some(s) => s.to_vec(),
        None => fft2_real(grid, f.values()),
    };
    let norm = 1.0 / (n * n) as f64;
    let mut s = 0.0;
    for i in 0..n {
        let k1 = grid.wavenumber(i);
        for j in 0..n {
            let k2 = grid.wavenumber(j);
            let k_sq = k1 * k1 + k2 * k2;
            if k_sq > 0.0 {
                s += (spec[i * n + j] * norm).norm_sqr() / k_sq;
            }
        }
    }
    Ok(grid.length() * s.sqrt())
}

/// `l2` evaluated from spectral coefficients (Parseval check).
pub fn l2_spectral(f: &ScalarField2D) -> f64 {
    let grid = f.grid();
    let n = grid.n();
    let spec = fft2_real(grid, f.values());
    let norm = 1.0 / (n * n) as f64;
    let s: f64 = spec.iter().map(|c| (c * norm).norm_sqr()).sum();
    grid.length() * s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{random_band_limited, Grid2D};
    use std::f64::consts::PI;

    #[test]
    fn quarter_patch_quadrature() {
        let g = Grid2D::new(32, 3.0).unwrap();
        let f = ScalarField2D::from_fn(g, |x, y| if x < 1.5 && y < 1.5 { 1.0 } else { 0.0 }).unwrap();
        let r = norms(&f).unwrap();
        assert!((r.l1 - 9.0 / 4.0).abs() < 1e-12);
        assert_eq!(r.linf, 1.0);
        assert!(r.hm1.is_none());
    }

    #[test]
    fn sine_norms_match_direct_fourier_sum() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let f = ScalarField2D::from_fn(g, |x, _| x.sin()).unwrap();
        let r = norms(&f).unwrap();
        // Direct sum over the two modes k = (+-1, 0), |c| = 1/2.
        let direct = (2.0 * PI) * (2.0 * 0.25_f64).sqrt();
        assert!((r.l2 - direct).abs() < 1e-12);
        assert!((r.l2 - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!((r.hm1.unwrap() - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn translation_leaves_norms_unchanged() {
        let g = Grid2D::new(32, 1.0).unwrap();
        let f = random_band_limited(g, 3, 5);
        let a = norms(&f).unwrap();
        let b = norms(&f.translate_cells(5, -3)).unwrap();
        assert!((a.l1 - b.l1).abs() < 1e-12);
        assert!((a.l2 - b.l2).abs() < 1e-12);
        assert_eq!(a.linf, b.linf);
        assert!((a.hm1.unwrap() - b.hm1.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn parseval_agrees_with_quadrature() {
        let g = Grid2D::new(32, 1.7).unwrap();
        let f = random_band_limited(g, 8, 9);
        assert!((norms(&f).unwrap().l2 - l2_spectral(&f)).abs() < 1e-12);
    }

    #[test]
    fn hm1_requires_mean_zero() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let f = ScalarField2D::from_fn(g, |_, _| 1.0).unwrap();
        assert!(hm1_norm(&f).is_err());
    }
}
