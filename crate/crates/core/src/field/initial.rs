//! Library of mean-zero, integrable and bounded initial vorticities.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spectral::ifft2_real;
use super::{norms, Grid2D, ScalarField2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDataKind {
    /// `A cos(kx1) cos(kx2)` with `k = 2 pi / L`; a steady Euler state.
    TaylorGreen { amplitude: f64 },
    /// Two mollified discs of opposite sign centred on the line `x2 = L/2`,
    /// symmetric about `x1 = L/2`. The edge profile is
    /// `(1 - tanh((|x - c| - radius) / edge_width)) / 2`.
    PatchPair {
        radius: f64,
        separation: f64,
        strengths: [f64; 2],
        edge_width: f64,
    },
    /// Band-limited Gaussian field (modes with `|freq| <= kmax`), scaled to
    /// standard deviation `gain`, clipped to `[-1, 1]` and mean-corrected.
    RandomYudovich { kmax: usize, gain: f64, seed: u64 },
}

impl InitialDataKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TaylorGreen { .. } => "taylor_green",
            Self::PatchPair { .. } => "patch_pair",
            Self::RandomYudovich { .. } => "random_yudovich",
        }
    }

    /// Default patch pair on a box of side `length`: radius `0.1 L`,
    /// centres `0.4 L` apart, unit strengths, edges over two cells.
    pub fn default_patch_pair(grid: &Grid2D) -> Self {
        let l = grid.length();
        Self::PatchPair {
            radius: 0.1 * l,
            separation: 0.4 * l,
            strengths: [1.0, -1.0],
            edge_width: 2.0 * grid.spacing(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataMeta {
    pub kind: String,
    pub params: InitialDataKind,
    pub l1: f64,
    pub linf: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub field: ScalarField2D,
    pub meta: InitialDataMeta,
}

pub fn make_initial_data(grid: Grid2D, kind: &InitialDataKind) -> Result<InitialData> {
    let (field, seed) = match *kind {
        InitialDataKind::TaylorGreen { amplitude } => {
            if !amplitude.is_finite() {
                return Err(Error::InvalidParameter("taylor_green amplitude must be finite".into()));
            }
            let k = std::f64::consts::TAU / grid.length();
            let f = ScalarField2D::from_fn(grid, |x, y| amplitude * (k * x).cos() * (k * y).cos())?;
            (f.remove_mean(), None)
        }
        InitialDataKind::PatchPair {
            radius,
            separation,
            strengths,
            edge_width,
        } => (patch_pair(grid, radius, separation, strengths, edge_width)?, None),
        InitialDataKind::RandomYudovich { kmax, gain, seed } => {
            if kmax == 0 || 2 * kmax >= grid.n() {
                return Err(Error::InvalidParameter(format!(
                    "random_yudovich kmax = {kmax} must lie in [1, n/2)"
                )));
            }
            if !(gain.is_finite() && gain > 0.0) {
                return Err(Error::InvalidParameter("random_yudovich gain must be positive".into()));
            }
            let base = random_band_limited(grid, seed, kmax);
            let clipped = base.map(|v| (gain * v).clamp(-1.0, 1.0))?;
            (clipped.remove_mean(), Some(seed))
        }
    };
    let r = norms(&field)?;
    Ok(InitialData {
        field,
        meta: InitialDataMeta {
            kind: kind.name().to_string(),
            params: kind.clone(),
            l1: r.l1,
            linf: r.linf,
            seed,
        },
    })
}

fn patch_pair(
    grid: Grid2D,
    radius: f64,
    separation: f64,
    strengths: [f64; 2],
    edge_width: f64,
) -> Result<ScalarField2D> {
    let l = grid.length();
    if !(radius > 0.0 && edge_width >= 0.0 && strengths.iter().all(|s| s.is_finite())) {
        return Err(Error::InvalidParameter("patch_pair needs radius > 0 and edge_width >= 0".into()));
    }
    let margin = 2.0 * radius + 4.0 * edge_width;
    if separation <= margin || l - separation <= margin {
        return Err(Error::InvalidParameter(format!(
            "patch_pair discs overlap: separation {separation} vs required > {margin} (and L - separation > {margin})"
        )));
    }
    let c1 = [0.5 * l - 0.5 * separation, 0.5 * l];
    let c2 = [0.5 * l + 0.5 * separation, 0.5 * l];
    let profile = |d: f64| {
        if edge_width == 0.0 {
            if d <= radius {
                1.0
            } else {
                0.0
            }
        } else {
            0.5 * (1.0 - ((d - radius) / edge_width).tanh())
        }
    };
    let f = ScalarField2D::from_fn(grid, |x, y| {
        strengths[0] * profile(grid.torus_distance(c1, [x, y]))
            + strengths[1] * profile(grid.torus_distance(c2, [x, y]))
    })?;
    let total: f64 = f.values().iter().sum();
    let abs_total: f64 = f.values().iter().map(|v| v.abs()).sum();
    if total.abs() > 1e-9 * abs_total {
        return Err(Error::InvalidParameter(format!(
            "patch_pair strengths {strengths:?} do not cancel: net circulation {:e}",
            total * grid.cell_area()
        )));
    }
    Ok(f.remove_mean())
}

/// Real Gaussian random field with modes `0 < |freq| <= kmax`, normalized to
/// unit standard deviation and zero mean.
pub fn random_band_limited(grid: Grid2D, seed: u64, kmax: usize) -> ScalarField2D {
    let n = grid.n();
    let kmax_sq = (kmax * kmax) as isize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let a = grid.frequency(i);
        for j in 0..n {
            let b = grid.frequency(j);
            let r = a * a + b * b;
            let (re, im): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            if r > 0 && r <= kmax_sq && 2 * a.unsigned_abs() < n && 2 * b.unsigned_abs() < n {
                spec[i * n + j] = Complex64::new(re, im);
            }
        }
    }
    let mut values = ifft2_real(&grid, spec);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let std = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    if std > 0.0 {
        values.iter_mut().for_each(|v| *v /= std);
    }
    let mut f = ScalarField2D::from_parts(grid, values, None);
    f.set_mean_zero_flag(true);
    f
}
