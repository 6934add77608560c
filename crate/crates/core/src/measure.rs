//! Finite weighted atomic measures on `R^d` and flows of them over a time grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::simulate::TimeGrid;

/// Tolerance for calling a measure a probability measure.
pub const PROBABILITY_MASS_TOLERANCE: f64 = 1e-12;

/// A finite measure `Σ_i w_i δ_{x_i}` on `R^d`.
///
/// Atoms are stored row-major (`atoms[i * dim..(i + 1) * dim]`). Mass and
/// barycenter are computed once at construction; the measure is immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
    mass: f64,
    first_moment: Vec<f64>,
}

impl EmpiricalMeasure {
    /// General constructor; weights must be finite and nonnegative.
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if atoms.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                found: atoms.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid(
                "weights",
                alloc::format!("weights must be finite and nonnegative, found {w}"),
            ));
        }
        Ok(Self::from_parts(dim, atoms, weights))
    }

    pub(crate) fn from_parts(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut first_moment = vec![0.0; dim];
        // Compensated summation keeps the mass exact to rounding for large n.
        let (mut mass, mut carry) = (0.0f64, 0.0f64);
        for (x, &w) in atoms.chunks_exact(dim).zip(&weights) {
            let t = mass + w;
            carry += if mass.abs() >= w.abs() { (mass - t) + w } else { (w - t) + mass };
            mass = t;
            for (m, xi) in first_moment.iter_mut().zip(x) {
                *m += w * xi;
            }
        }
        Self {
            dim,
            atoms,
            weights,
            mass: mass + carry,
            first_moment,
        }
    }

    /// The empirical probability measure `(1/n) Σ δ_{x_i}`.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        if dim == 0 || !atoms.len().is_multiple_of(dim) || atoms.is_empty() {
            return Err(invalid("atoms", "need a positive multiple of dim coordinates"));
        }
        let n = atoms.len() / dim;
        Ok(Self::from_parts(dim, atoms, vec![1.0 / n as f64; n]))
    }

    /// `mass · δ_point`.
    pub fn dirac(point: &[f64], mass: f64) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![mass])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.atoms
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_probability(&self) -> bool {
        (self.mass - 1.0).abs() <= PROBABILITY_MASS_TOLERANCE
    }

    /// `∫ x μ(dx)` (not normalized by the mass).
    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    /// `∫ x μ(dx) / μ(R^d)`; zero for the null measure.
    pub fn barycenter(&self) -> Vec<f64> {
        if self.mass > 0.0 {
            self.first_moment.iter().map(|m| m / self.mass).collect()
        } else {
            vec![0.0; self.dim]
        }
    }

    /// Barycenter coordinate `k` without allocating.
    pub fn barycenter_coord(&self, k: usize) -> f64 {
        if self.mass > 0.0 {
            self.first_moment[k] / self.mass
        } else {
            0.0
        }
    }

    /// Mass-normalized variance of coordinate `k`.
    pub fn variance_coord(&self, k: usize) -> f64 {
        if self.mass <= 0.0 {
            return 0.0;
        }
        let mean = self.barycenter_coord(k);
        self.iter()
            .map(|(x, w)| w * (x[k] - mean) * (x[k] - mean))
            .sum::<f64>()
            / self.mass
    }

    /// `⟨f, μ⟩`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// A measure per grid point: a discretized flow `t ↦ ν(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    grid: TimeGrid,
    measures: Vec<EmpiricalMeasure>,
}

impl MeasureFlow {
    pub fn new(grid: TimeGrid, measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        if measures.len() != grid.steps() + 1 {
            return Err(Error::DimensionMismatch {
                expected: grid.steps() + 1,
                found: measures.len(),
            });
        }
        Ok(Self { grid, measures })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    pub fn at(&self, step: usize) -> &EmpiricalMeasure {
        &self.measures[step]
    }

    pub fn terminal(&self) -> &EmpiricalMeasure {
        self.measures.last().expect("flows are never empty")
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Whether every measure has unit mass within tolerance.
    pub fn is_probability_flow(&self) -> bool {
        self.measures.iter().all(EmpiricalMeasure::is_probability)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_weights() {
        assert!(EmpiricalMeasure::new(1, vec![0.0, 1.0], vec![0.5, -0.1]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![0.0, 1.0, 2.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_measure_is_probability() {
        let mu = EmpiricalMeasure::uniform(1, vec![0.1; 7]).unwrap();
        assert!(mu.is_probability());
        assert!((mu.barycenter_coord(0) - 0.1).abs() < 1e-15);
        assert!(mu.variance_coord(0).abs() < 1e-15);
    }

    #[test]
    fn barycenter_is_mass_normalized() {
        let mu = EmpiricalMeasure::new(2, vec![0.0, 0.0, 2.0, 4.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(mu.mass(), 4.0);
        assert_eq!(mu.first_moment(), &[6.0, 12.0]);
        assert_eq!(mu.barycenter(), vec![1.5, 3.0]);
    }
}
