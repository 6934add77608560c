//! Parametric controls: feedback `u` for each particle and a deterministic
//! common control `v`, both piecewise constant in time.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Result};
use crate::measure::EmpiricalMeasure;
use crate::model::ModelDims;
use crate::simulate::TimeGrid;

/// Signature of a user-supplied feedback: `(t, x, μ, particle, out)`.
pub type FeedbackFn = dyn Fn(f64, &[f64], &EmpiricalMeasure, usize, &mut [f64]) + Send + Sync;

/// Feedback map for the individual control `u`.
#[derive(Clone)]
pub enum Feedback {
    Zero,
    /// `pieces × m` table; `u` is constant on each time piece.
    PiecewiseConstant(Vec<f64>),
    /// `u = offset + gain · x` per piece; offsets are `pieces × m`, gains `pieces × m × d`.
    Affine { offsets: Vec<f64>, gains: Vec<f64> },
    Custom(Arc<FeedbackFn>),
}

impl fmt::Debug for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feedback::Zero => f.write_str("Zero"),
            Feedback::PiecewiseConstant(v) => f.debug_tuple("PiecewiseConstant").field(v).finish(),
            Feedback::Affine { offsets, gains } => f
                .debug_struct("Affine")
                .field("offsets", offsets)
                .field("gains", gains)
                .finish(),
            Feedback::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A control pair `(u, v)` on `pieces` equal time pieces.
#[derive(Debug, Clone)]
pub struct ControlPolicy {
    dims: ModelDims,
    pieces: usize,
    feedback: Feedback,
    common: Vec<f64>,
    radius: Option<f64>,
}

impl ControlPolicy {
    /// `u ≡ 0`, `v ≡ 0`.
    pub fn zero(dims: ModelDims) -> Self {
        Self {
            dims,
            pieces: 1,
            feedback: Feedback::Zero,
            common: vec![0.0; dims.k],
            radius: None,
        }
    }

    /// `common` holds `pieces × k` values of `v`.
    pub fn new(dims: ModelDims, pieces: usize, feedback: Feedback, common: Vec<f64>) -> Result<Self> {
        if pieces == 0 {
            return Err(invalid("pieces", "a control needs at least one time piece"));
        }
        if common.len() != pieces * dims.k {
            return Err(invalid("common", "expected pieces × k values"));
        }
        match &feedback {
            Feedback::PiecewiseConstant(table) if table.len() != pieces * dims.m => {
                return Err(invalid("feedback", "expected pieces × m values"));
            }
            Feedback::Affine { offsets, gains }
                if offsets.len() != pieces * dims.m || gains.len() != pieces * dims.m * dims.d =>
            {
                return Err(invalid("feedback", "expected pieces × m offsets and pieces × m × d gains"));
            }
            _ => {}
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let table_ok = match &feedback {
            Feedback::PiecewiseConstant(t) => finite(t),
            Feedback::Affine { offsets, gains } => finite(offsets) && finite(gains),
            _ => true,
        };
        if !table_ok || !finite(&common) {
            return Err(invalid("control", "parameters must be finite"));
        }
        Ok(Self {
            dims,
            pieces,
            feedback,
            common,
            radius: None,
        })
    }

    /// Time-constant `u` (length `m`) and `v` (length `k`).
    pub fn constant(dims: ModelDims, u: &[f64], v: &[f64]) -> Result<Self> {
        let feedback = if u.iter().all(|x| *x == 0.0) {
            Feedback::Zero
        } else {
            Feedback::PiecewiseConstant(u.to_vec())
        };
        Self::new(dims, 1, feedback, v.to_vec())
    }

    /// Declares the admissible radius `M` for `∫‖v‖² dt`.
    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn pieces(&self) -> usize {
        self.pieces
    }

    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    pub fn common(&self) -> &[f64] {
        &self.common
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    /// Time piece containing grid step `step` out of `steps`.
    #[inline]
    pub fn piece_of(&self, step: usize, steps: usize) -> usize {
        (step * self.pieces / steps).min(self.pieces - 1)
    }

    pub fn common_at(&self, piece: usize) -> &[f64] {
        &self.common[piece * self.dims.k..(piece + 1) * self.dims.k]
    }

    pub fn has_common(&self) -> bool {
        self.common.iter().any(|v| *v != 0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.feedback, Feedback::Zero) && !self.has_common()
    }

    /// `∫‖v‖² dt` on the grid.
    pub fn common_energy(&self, grid: &TimeGrid) -> f64 {
        let dt = grid.dt();
        (0..grid.steps())
            .map(|j| {
                let v = self.common_at(self.piece_of(j, grid.steps()));
                v.iter().map(|x| x * x).sum::<f64>() * dt
            })
            .sum()
    }

    /// Checks `∫‖v‖² dt ≤ M` when a radius is declared.
    pub fn check_radius(&self, grid: &TimeGrid) -> Result<()> {
        if let Some(radius) = self.radius {
            let energy = self.common_energy(grid);
            if energy > radius {
                return Err(crate::Error::ControlRadius { energy, radius });
            }
        }
        Ok(())
    }

    /// Evaluates `u` for one particle into `out` (length `m`).
    #[inline]
    pub fn individual(&self, piece: usize, t: f64, x: &[f64], mu: &EmpiricalMeasure, particle: usize, out: &mut [f64]) {
        let m = self.dims.m;
        match &self.feedback {
            Feedback::Zero => out.fill(0.0),
            Feedback::PiecewiseConstant(table) => out.copy_from_slice(&table[piece * m..(piece + 1) * m]),
            Feedback::Affine { offsets, gains } => {
                let d = self.dims.d;
                for (r, o) in out.iter_mut().enumerate() {
                    let row = &gains[(piece * m + r) * d..(piece * m + r + 1) * d];
                    *o = offsets[piece * m + r] + row.iter().zip(x).map(|(g, xi)| g * xi).sum::<f64>();
                }
            }
            Feedback::Custom(f) => f(t, x, mu, particle, out),
        }
    }
}

/// Shape of a parametric control family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyShape {
    PiecewiseConstant,
    Affine,
}

/// A finite-dimensional family of controls searched by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlFamily {
    pub shape: FamilyShape,
    pub pieces: usize,
    /// Whether the individual control `u` is free.
    pub individual: bool,
    /// Whether the common control `v` is free.
    pub common: bool,
}

impl ControlFamily {
    /// Time-constant `u` and `v`.
    pub fn constant() -> Self {
        Self {
            shape: FamilyShape::PiecewiseConstant,
            pieces: 1,
            individual: true,
            common: true,
        }
    }

    pub fn piecewise(pieces: usize) -> Self {
        Self {
            pieces,
            ..Self::constant()
        }
    }

    fn individual_dim(&self, dims: ModelDims) -> usize {
        if !self.individual {
            return 0;
        }
        match self.shape {
            FamilyShape::PiecewiseConstant => self.pieces * dims.m,
            FamilyShape::Affine => self.pieces * dims.m * (1 + dims.d),
        }
    }

    /// Number of free parameters of the common control.
    pub fn common_dim(&self, dims: ModelDims) -> usize {
        if self.common {
            self.pieces * dims.k
        } else {
            0
        }
    }

    /// Number of free parameters.
    pub fn dim(&self, dims: ModelDims) -> usize {
        self.individual_dim(dims) + self.common_dim(dims)
    }

    /// Builds the policy for a parameter vector of length [`dim`](Self::dim).
    ///
    /// Layout: the `u` part first (per piece: `m` offsets, then `m × d` gains
    /// for the affine shape), then `v` as `pieces × k`.
    pub fn policy(&self, dims: ModelDims, params: &[f64]) -> Result<ControlPolicy> {
        if self.pieces == 0 {
            return Err(invalid("pieces", "a control family needs at least one time piece"));
        }
        if params.len() != self.dim(dims) {
            return Err(crate::Error::DimensionMismatch {
                expected: self.dim(dims),
                found: params.len(),
            });
        }
        let (u_part, v_part) = params.split_at(self.individual_dim(dims));
        let feedback = if !self.individual {
            Feedback::Zero
        } else {
            match self.shape {
                FamilyShape::PiecewiseConstant => Feedback::PiecewiseConstant(u_part.to_vec()),
                FamilyShape::Affine => {
                    let (m, d) = (dims.m, dims.d);
                    let mut offsets = Vec::with_capacity(self.pieces * m);
                    let mut gains = Vec::with_capacity(self.pieces * m * d);
                    for chunk in u_part.chunks(m * (1 + d)) {
                        offsets.extend_from_slice(&chunk[..m]);
                        gains.extend_from_slice(&chunk[m..]);
                    }
                    Feedback::Affine { offsets, gains }
                }
            }
        };
        let common = if self.common {
            v_part.to_vec()
        } else {
            vec![0.0; self.pieces * dims.k]
        };
        ControlPolicy::new(dims, self.pieces, feedback, common)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piece_lookup_covers_grid() {
        let dims = ModelDims::scalar();
        let policy = ControlPolicy::new(
            dims,
            3,
            Feedback::PiecewiseConstant(vec![1.0, 2.0, 3.0]),
            vec![0.0; 3],
        )
        .unwrap();
        let pieces: Vec<usize> = (0..9).map(|j| policy.piece_of(j, 9)).collect();
        assert_eq!(pieces, [0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(policy.piece_of(0, 2), 0);
        assert_eq!(policy.piece_of(1, 2), 1);
    }

    #[test]
    fn common_energy_of_constant_v() {
        let dims = ModelDims::scalar();
        let policy = ControlPolicy::constant(dims, &[0.0], &[2.0]).unwrap().with_radius(3.0);
        let grid = TimeGrid::new(0.5, 5).unwrap();
        assert!((policy.common_energy(&grid) - 2.0).abs() < 1e-12);
        assert!(policy.check_radius(&grid).is_ok());
        let grid = TimeGrid::new(1.0, 5).unwrap();
        assert!(policy.check_radius(&grid).is_err());
    }

    #[test]
    fn affine_family_layout() {
        let dims = ModelDims::new(2, 1, 1).unwrap();
        let family = ControlFamily {
            shape: FamilyShape::Affine,
            pieces: 1,
            individual: true,
            common: true,
        };
        assert_eq!(family.dim(dims), 4);
        let policy = family.policy(dims, &[0.5, 1.0, -1.0, 0.25]).unwrap();
        let mu = EmpiricalMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        let mut u = [0.0];
        policy.individual(0, 0.0, &[2.0, 3.0], &mu, 0, &mut u);
        assert_eq!(u[0], 0.5 + 2.0 - 3.0);
        assert_eq!(policy.common_at(0), &[0.25]);
    }

    #[test]
    fn rejects_bad_lengths() {
        let dims = ModelDims::scalar();
        assert!(ControlPolicy::new(dims, 2, Feedback::Zero, vec![0.0]).is_err());
        assert!(ControlFamily::constant().policy(dims, &[1.0]).is_err());
    }
}
