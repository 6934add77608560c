//! Coefficient sets, initial data and structural conditions.
//!
//! A particle `i` evolves as
//!
//! ```text
//! dX_i = b(X_i, μ) dt + σ(X_i, μ) dW_i + κ α(X_i, μ) dB
//! dA_i = A_i c(X_i, μ) dt + A_i γ(X_i, μ)ᵀ dW_i + κ A_i β(X_i, μ)ᵀ dB
//! ```
//!
//! where `μ` is the (possibly weighted) empirical measure. [`CoefficientSet`]
//! supplies the maps `b, σ, α, c, γ, β` and the weight transform `θ`.

mod families;
mod validate;

pub use families::{BuiltinFamily, BuiltinModel, WeightCoefficients};
pub use validate::{validate_model, CoefficientReport, ValidationReport};

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::rng::{NoisePlan, INITIAL_POSITION_STEP, INITIAL_WEIGHT_STEP};
use crate::measure::EmpiricalMeasure;

/// State, individual-noise and common-noise dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub d: usize,
    pub m: usize,
    pub k: usize,
}

impl ModelDims {
    pub fn new(d: usize, m: usize, k: usize) -> Result<Self> {
        if d == 0 || m == 0 || k == 0 {
            return Err(invalid("dims", "d, m and k must all be at least 1"));
        }
        Ok(Self { d, m, k })
    }

    pub fn scalar() -> Self {
        Self { d: 1, m: 1, k: 1 }
    }
}

/// Declared structural properties of a coefficient set, checked by probing.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StructureFlags {
    /// `σ(x, μ)` does not depend on `x`.
    pub sigma_measure_only: bool,
    /// `γ(x, μ)` does not depend on `x`.
    pub gamma_measure_only: bool,
    /// `γ ≡ 0`.
    pub gamma_zero: bool,
    /// `θ` is globally Lipschitz.
    pub theta_lipschitz: bool,
    /// `sup |θ'(x) x| + sup |θ''(x) x²| < ∞`.
    pub theta_log_growth: bool,
    /// Declared bound `K` on `‖σ‖, ‖α‖, |c|, ‖γ‖, ‖β‖`.
    pub bound: Option<f64>,
}

/// Weight transform applied to `A_i` in the weighted empirical measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    /// `θ(a) = a`; Lipschitz.
    Identity,
    /// `θ(a) = scale · ln(1 + a)`; logarithmic growth.
    Log1p { scale: f64 },
}

impl Theta {
    #[inline]
    pub fn apply(&self, a: f64) -> f64 {
        match *self {
            Theta::Identity => a,
            Theta::Log1p { scale } => scale * libm::log1p(a),
        }
    }

    pub fn is_lipschitz(&self) -> bool {
        true
    }

    pub fn has_log_growth(&self) -> bool {
        matches!(self, Theta::Log1p { .. })
    }
}

/// The coefficient maps of the interacting system.
///
/// Matrices are written row-major: `diffusion` fills `d × m` entries and
/// `common_diffusion` fills `d × k`. Every map receives the full current
/// measure; structure such as "σ depends on μ only" is declared through
/// [`StructureFlags`] and verified by [`validate_model`].
pub trait CoefficientSet: Send + Sync {
    fn dims(&self) -> ModelDims;

    fn flags(&self) -> StructureFlags {
        StructureFlags::default()
    }

    /// `b(x, μ)`.
    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    /// `σ(x, μ)`.
    fn diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    /// `α(x, μ)`.
    fn common_diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    /// `c(x, μ)`.
    fn weight_rate(&self, _x: &[f64], _mu: &EmpiricalMeasure) -> f64 {
        0.0
    }

    /// `γ(x, μ)`.
    fn weight_loading(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        out.fill(0.0);
    }

    /// `β(x, μ)`.
    fn weight_common_loading(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn theta(&self) -> Theta {
        Theta::Identity
    }
}

impl core::fmt::Debug for dyn CoefficientSet + '_ {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoefficientSet").field("dims", &self.dims()).finish()
    }
}

/// Law of the initial positions.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Dirac { point: Vec<f64> },
    /// Independent coordinates `N(mean_k, std²)`.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Independent coordinates uniform on `[low, high]`.
    Uniform { dim: usize, low: f64, high: f64 },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Dirac { point } => point.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Uniform { dim, .. } => *dim,
        }
    }
}

/// Law of the initial weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightLaw {
    Constant(f64),
    /// `exp(N(log_mean, log_std²))`.
    LogNormal { log_mean: f64, log_std: f64 },
}

/// Initial positions `x_i` and (optional) initial weights `a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    dim: usize,
    positions: Vec<f64>,
    weights: Option<Vec<f64>>,
}

/// Moment bounds on initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialMoments {
    /// `(1/n) Σ ‖x_i‖²`.
    pub position_second_moment: f64,
    /// `(1/n) Σ a_i²`.
    pub weight_second_moment: f64,
    /// `(1/n) Σ (log a_i)⁻`.
    pub weight_log_deficit: f64,
}

impl InitialData {
    pub fn new(dim: usize, positions: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(invalid("positions", "need n >= 1 points of the state dimension"));
        }
        let n = positions.len() / dim;
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(invalid("positions", "must be finite"));
        }
        if let Some(w) = &weights {
            if w.len() != n {
                return Err(invalid("weights", "one weight per particle"));
            }
            if w.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(invalid("weights", "initial weights must be strictly positive"));
            }
        }
        Ok(Self {
            dim,
            positions,
            weights,
        })
    }

    /// `n` copies of one point with unit weights.
    pub fn replicated(point: &[f64], n: usize) -> Result<Self> {
        let mut positions = Vec::with_capacity(point.len() * n);
        for _ in 0..n {
            positions.extend_from_slice(point);
        }
        Self::new(point.len(), positions, None)
    }

    /// Draws `n` iid positions (and weights) for one replica.
    pub fn sample(
        law: &InitialLaw,
        weights: Option<WeightLaw>,
        n: usize,
        noise: &NoisePlan,
        replica: u32,
    ) -> Result<Self> {
        let dim = law.dim();
        let mut positions = alloc::vec![0.0; n * dim];
        for i in 0..n {
            let x = &mut positions[i * dim..(i + 1) * dim];
            match law {
                InitialLaw::Dirac { point } => x.copy_from_slice(point),
                InitialLaw::Gaussian { mean, std } => {
                    noise.standard_normals(replica, i as u32, INITIAL_POSITION_STEP, x);
                    for (xk, mk) in x.iter_mut().zip(mean) {
                        *xk = mk + std * *xk;
                    }
                }
                InitialLaw::Uniform { low, high, .. } => {
                    let mut rng = noise.sequence(replica, i as u32);
                    for xk in x.iter_mut() {
                        *xk = rng.uniform_in(*low, *high);
                    }
                }
            }
        }
        let weights = weights.map(|law| match law {
            WeightLaw::Constant(a) => alloc::vec![a; n],
            WeightLaw::LogNormal { log_mean, log_std } => (0..n)
                .map(|i| {
                    let mut z = [0.0];
                    noise.standard_normals(replica, i as u32, INITIAL_WEIGHT_STEP, &mut z);
                    libm::exp(log_mean + log_std * z[0])
                })
                .collect(),
        });
        Self::new(dim, positions, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Initial weights, defaulting to 1.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn moments(&self) -> InitialMoments {
        let n = self.len() as f64;
        let position_second_moment = self.positions.iter().map(|x| x * x).sum::<f64>() / n;
        let (mut sq, mut deficit) = (0.0, 0.0);
        for i in 0..self.len() {
            let a = self.weight(i);
            sq += a * a;
            deficit += (-libm::log(a)).max(0.0);
        }
        InitialMoments {
            position_second_moment,
            weight_second_moment: sq / n,
            weight_log_deficit: deficit / n,
        }
    }

    /// Checks the moment bounds; returns the names of violated bounds.
    pub fn check_moments(&self, position_bound: f64, weight_bound: f64, log_bound: f64) -> Vec<&'static str> {
        let m = self.moments();
        let mut violated = Vec::new();
        if m.position_second_moment > position_bound {
            violated.push("position_second_moment");
        }
        if m.weight_second_moment > weight_bound {
            violated.push("weight_second_moment");
        }
        if m.weight_log_deficit > log_bound {
            violated.push("weight_log_deficit");
        }
        violated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_must_be_positive() {
        assert!(ModelDims::new(0, 1, 1).is_err());
        assert!(ModelDims::new(2, 1, 3).is_ok());
    }

    #[test]
    fn initial_weights_must_be_positive() {
        assert!(InitialData::new(1, alloc::vec![0.0, 1.0], Some(alloc::vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn sampled_initial_data_is_reproducible() {
        let law = InitialLaw::Gaussian {
            mean: alloc::vec![1.0],
            std: 2.0,
        };
        let noise = NoisePlan::new(4);
        let a = InitialData::sample(&law, Some(WeightLaw::LogNormal { log_mean: 0.0, log_std: 0.5 }), 50, &noise, 3).unwrap();
        let b = InitialData::sample(&law, Some(WeightLaw::LogNormal { log_mean: 0.0, log_std: 0.5 }), 50, &noise, 3).unwrap();
        assert_eq!(a, b);
        let c = InitialData::sample(&law, None, 50, &noise, 4).unwrap();
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn moment_checks_flag_heavy_data() {
        let data = InitialData::new(1, alloc::vec![10.0, -10.0], Some(alloc::vec![1e-3, 5.0])).unwrap();
        let violated = data.check_moments(50.0, 10.0, 1.0);
        assert_eq!(violated, alloc::vec!["position_second_moment", "weight_second_moment", "weight_log_deficit"]);
    }

    #[test]
    fn log_theta_has_bounded_elasticity() {
        let theta = Theta::Log1p { scale: 1.0 };
        for &a in &[0.0, 1e-3, 1.0, 1e3, 1e9] {
            let h = 1e-6 * (1.0 + a);
            let derivative = (theta.apply(a + h) - theta.apply((a - h).max(0.0))) / (a + h - (a - h).max(0.0));
            assert!(derivative * a <= 1.0 + 1e-6);
        }
    }
}
