use num_complex::Complex64;

use super::spectral::{fft2_real, ifft2_real};
use super::{Grid2D, ScalarField2D, VectorField2D};
use crate::error::Result;

/// Spectral velocity `u_hat = i (k2, -k1) w_hat / |k|^2`, i.e. `u = grad^perp psi`
/// with `lap psi = w`. The zero mode and the Nyquist lines are dropped.
pub fn velocity_from_spectrum(grid: &Grid2D, w_hat: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = grid.n();
    let zero = Complex64::new(0.0, 0.0);
    let mut u1 = vec![zero; n * n];
    let mut u2 = vec![zero; n * n];
    for i in 0..n {
        let k1 = grid.derivative_wavenumber(i);
        let k1_full = grid.wavenumber(i);
        for j in 0..n {
            let k2 = grid.derivative_wavenumber(j);
            let k2_full = grid.wavenumber(j);
            let k_sq = k1_full * k1_full + k2_full * k2_full;
            if k_sq == 0.0 {
                continue;
            }
            let idx = i * n + j;
            // i * w / |k|^2
            let iw = Complex64::new(-w_hat[idx].im, w_hat[idx].re) / k_sq;
            u1[idx] = iw * k2;
            u2[idx] = -iw * k1;
        }
    }
    (u1, u2)
}

/// Velocity of a mean-zero vorticity on the torus.
pub fn biot_savart(omega: &ScalarField2D) -> Result<VectorField2D> {
    omega.require_mean_zero()?;
    let grid = *omega.grid();
    let w_hat = match omega.spectral() {
        Some(s) => s.to_vec(),
        None => fft2_real(&grid, omega.values()),
    };
    let (a, b) = velocity_from_spectrum(&grid, &w_hat);
    VectorField2D::new(grid, ifft2_real(&grid, a), ifft2_real(&grid, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::field::random_band_limited;
    use std::f64::consts::PI;

    #[test]
    fn zero_vorticity_gives_zero_velocity() {
        let g = Grid2D::new(16, 1.0).unwrap();
        let u = biot_savart(&ScalarField2D::zeros(g)).unwrap();
        assert_eq!(u.max_speed(), 0.0);
    }

    #[test]
    fn single_mode_matches_analytic_inverse() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let w = ScalarField2D::from_fn(g, |x, _| x.sin()).unwrap();
        let u = biot_savart(&w).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let [x, _] = g.point(i, j);
                let idx = g.index(i, j);
                assert!(u.u1()[idx].abs() < 1e-13);
                assert!((u.u2()[idx] + x.cos()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn curl_reproduces_vorticity() {
        let g = Grid2D::new(32, 1.0).unwrap();
        let w = random_band_limited(g, 11, 6);
        let u = biot_savart(&w).unwrap();
        let c = u.curl();
        let err = w
            .values()
            .iter()
            .zip(c.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-10 * w.max_abs(), "curl error {err}");
        assert!(u.spectral_divergence() <= 1e-10);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let w = ScalarField2D::from_fn(g, |_, _| 1.0).unwrap();
        let err = biot_savart(&w).unwrap_err();
        assert!(matches!(err, Error::NotMeanZero { .. }));
        assert!(err.to_string().contains("zero mean"));
    }
}
