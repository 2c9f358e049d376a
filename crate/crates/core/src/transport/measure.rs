use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{torus_distance, ScalarField2D};

/// Weighted point cloud on the torus of side `length`. Weights are not
/// normalized: the total mass is part of the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    length: f64,
    total_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<[f64; 2]>, weights: Vec<f64>, length: f64) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidParameter(format!("torus length {length} must be positive")));
        }
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::NegativeMass { min: w });
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite atom location".into()));
        }
        let points = points
            .into_iter()
            .map(|[x, y]| [x.rem_euclid(length), y.rem_euclid(length)])
            .collect();
        let total_mass = weights.iter().sum();
        Ok(Self {
            points,
            weights,
            length,
            total_mass,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Support size after dropping zero weights.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn translate(&self, v: [f64; 2]) -> Self {
        let points = self.points.iter().map(|p| [p[0] + v[0], p[1] + v[1]]).collect();
        Self::new(points, self.weights.clone(), self.length).expect("translation keeps validity")
    }

    pub fn scale_mass(&self, c: f64) -> Result<Self> {
        Self::new(self.points.clone(), self.weights.iter().map(|w| w * c).collect(), self.length)
    }

    /// Torus distance between atom `i` of `self` and atom `j` of `other`.
    pub fn distance_to(&self, i: usize, other: &Self, j: usize) -> f64 {
        torus_distance(self.length, self.points[i], other.points[j])
    }
}

/// Pointwise split `w = plus - minus` into nonnegative parts.
#[derive(Debug, Clone)]
pub struct SignedSplit {
    pub plus: ScalarField2D,
    pub minus: ScalarField2D,
}

impl SignedSplit {
    pub fn reconstruct(&self) -> Result<ScalarField2D> {
        self.plus.sub(&self.minus)
    }
}

pub fn split_signed(w: &ScalarField2D) -> Result<SignedSplit> {
    Ok(SignedSplit {
        plus: w.map(|v| v.max(0.0))?,
        minus: w.map(|v| (-v).max(0.0))?,
    })
}

/// Cells lighter than this fraction of the total mass are dropped.
pub const MASS_FLOOR: f64 = 1e-12;

/// Result of discretizing a density: the measure plus the mass that was
/// removed by pruning before redistribution.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub measure: DiscreteMeasure,
    pub pruned_mass: f64,
    /// Upper bound on the W2 perturbation caused by pruning, `diam * sqrt(pruned)`.
    pub w2_bound: f64,
}

/// One atom per grid vertex with weight `h^2 f`, see [`discretize`].
pub fn field_to_measure(f: &ScalarField2D, max_support: usize) -> Result<DiscreteMeasure> {
    Ok(discretize(f, max_support)?.measure)
}

/// Discretize a nonnegative density. Atoms below the mass floor are pruned,
/// then only the `max_support` heaviest atoms are kept; the pruned mass is
/// given back to the survivors in proportion to their weight so that the
/// total equals the L1 norm of `f`.
pub fn discretize(f: &ScalarField2D, max_support: usize) -> Result<Discretization> {
    let min = f.min();
    if min < 0.0 {
        return Err(Error::NegativeMass { min });
    }
    if max_support == 0 {
        return Err(Error::InvalidParameter("max_support must be >= 1".into()));
    }
    let grid = f.grid();
    let n = grid.n();
    let area = grid.cell_area();
    let mut atoms: Vec<(usize, f64)> = f
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| (k, area * v))
        .collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.retain(|a| a.1 > 0.0 && a.1 >= MASS_FLOOR * total);
    if atoms.len() > max_support {
        // Stable order: heavier first, ties by cell index.
        atoms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        atoms.truncate(max_support);
        atoms.sort_by_key(|a| a.0);
    }
    let kept: f64 = atoms.iter().map(|a| a.1).sum();
    let pruned_mass = (total - kept).max(0.0);
    let factor = if kept > 0.0 { total / kept } else { 0.0 };
    let points = atoms.iter().map(|&(k, _)| grid.point(k / n, k % n)).collect();
    let weights = atoms.iter().map(|&(_, w)| w * factor).collect();
    let measure = DiscreteMeasure::new(points, weights, grid.length())?;
    let diam = grid.length() / std::f64::consts::SQRT_2;
    Ok(Discretization {
        measure,
        pruned_mass,
        w2_bound: diam * pruned_mass.sqrt(),
    })
}

/// Zero out negative samples of a nominally nonnegative field (spectral
/// undershoot) and rescale so the total is unchanged. Returns the field and
/// the clipped mass.
pub fn clip_nonnegative(f: &ScalarField2D) -> Result<(ScalarField2D, f64)> {
    let area = f.grid().cell_area();
    let total: f64 = f.values().iter().sum::<f64>() * area;
    let clipped = f.map(|v| v.max(0.0))?;
    let positive: f64 = clipped.values().iter().sum::<f64>() * area;
    let removed = positive - total;
    if total <= 0.0 || positive <= 0.0 {
        return Ok((ScalarField2D::zeros(*f.grid()), removed.max(0.0)));
    }
    Ok((clipped.scale(total / positive), removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid2D;
    use std::f64::consts::PI;

    #[test]
    fn split_of_sine_is_balanced() {
        let g = Grid2D::new(32, 2.0 * PI).unwrap();
        let w = ScalarField2D::from_fn(g, |x, _| x.sin()).unwrap();
        let s = split_signed(&w).unwrap();
        let a: f64 = s.plus.values().iter().sum();
        let b: f64 = s.minus.values().iter().sum();
        assert!((a - b).abs() < 1e-12 * a);
        assert_eq!(s.reconstruct().unwrap().values(), w.values());
    }

    #[test]
    fn nonnegative_split_has_empty_minus() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let w = ScalarField2D::from_fn(g, |x, y| x * y).unwrap();
        assert_eq!(split_signed(&w).unwrap().minus.max_abs(), 0.0);
    }

    #[test]
    fn spike_becomes_one_atom() {
        let g = Grid2D::new(8, 2.0).unwrap();
        let mut v = vec![0.0; 64];
        v[19] = 3.0;
        let m = field_to_measure(&ScalarField2D::new(g, v).unwrap(), 100).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.weights()[0] - 3.0 * 0.0625).abs() < 1e-15);
        assert_eq!(m.points()[0], g.point(2, 3));
    }

    #[test]
    fn uniform_field_gives_equal_weights() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let m = field_to_measure(&ScalarField2D::from_fn(g, |_, _| 2.0).unwrap(), 1000).unwrap();
        assert_eq!(m.len(), 64);
        assert!(m.weights().iter().all(|&w| (w - 2.0 / 64.0).abs() < 1e-15));
        assert!((m.total_mass() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_density_is_rejected() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let f = ScalarField2D::from_fn(g, |x, _| x - 0.5).unwrap();
        assert!(matches!(field_to_measure(&f, 10), Err(Error::NegativeMass { .. })));
    }

    #[test]
    fn truncation_preserves_total_mass() {
        let g = Grid2D::new(16, 1.0).unwrap();
        let f = ScalarField2D::from_fn(g, |x, y| 1.0 + (6.0 * x).sin() * (4.0 * y).cos()).unwrap();
        let full = discretize(&f, 10_000).unwrap();
        let cut = discretize(&f, 40).unwrap();
        assert_eq!(cut.measure.len(), 40);
        assert!((cut.measure.total_mass() - full.measure.total_mass()).abs() < 1e-10);
        assert!(cut.pruned_mass > 0.0);
    }

    #[test]
    fn clipping_keeps_total() {
        let g = Grid2D::new(8, 1.0).unwrap();
        let f = ScalarField2D::from_fn(g, |x, _| if x < 0.5 { 1.0 } else { -0.01 }).unwrap();
        let (c, removed) = clip_nonnegative(&f).unwrap();
        assert!(c.min() >= 0.0);
        let a: f64 = f.values().iter().sum();
        let b: f64 = c.values().iter().sum();
        assert!((a - b).abs() < 1e-12);
        assert!((removed - 0.01 * 32.0 / 64.0).abs() < 1e-12);
    }
}
