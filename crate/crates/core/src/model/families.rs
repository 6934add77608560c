use crate::error::{invalid, Result};
use crate::measure::EmpiricalMeasure;

use super::{CoefficientSet, ModelDims, StructureFlags, Theta};

/// Built-in drift/diffusion families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinFamily {
    /// `b(x, μ) = −reversion·x + coupling·bary(μ)`, constant diagonal σ and α.
    LinearMeanField {
        reversion: f64,
        coupling: f64,
        sigma: f64,
        alpha: f64,
    },
    /// `b(x, μ) = reversion·(level − x)`, constant diagonal σ and α.
    OrnsteinUhlenbeck {
        reversion: f64,
        level: f64,
        sigma: f64,
        alpha: f64,
    },
    /// `b ≡ drift` in every coordinate, constant diagonal σ and α.
    Constant { drift: f64, sigma: f64, alpha: f64 },
    /// `b ≡ 0`, `σ = α = I`.
    PureBrownian,
}

/// Weight dynamics shared by all built-in families:
/// `c(x) = rate + slope·tanh(x₁)`, `γ ≡ loading`, `β ≡ common_loading`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightCoefficients {
    pub rate: f64,
    pub slope: f64,
    pub loading: f64,
    pub common_loading: f64,
}

/// A built-in family with its dimensions, weight dynamics and θ.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinModel {
    pub family: BuiltinFamily,
    pub dims: ModelDims,
    pub weights: WeightCoefficients,
    pub theta: Theta,
    /// Declared bound `K`, if any.
    pub bound: Option<f64>,
}

impl BuiltinModel {
    pub fn new(family: BuiltinFamily, dims: ModelDims) -> Result<Self> {
        if matches!(family, BuiltinFamily::PureBrownian) && (dims.d != dims.m || dims.d != dims.k) {
            return Err(invalid("dims", "pure_brownian needs d = m = k"));
        }
        let params: &[f64] = match &family {
            BuiltinFamily::LinearMeanField {
                reversion,
                coupling,
                sigma,
                alpha,
            } => &[*reversion, *coupling, *sigma, *alpha],
            BuiltinFamily::OrnsteinUhlenbeck {
                reversion,
                level,
                sigma,
                alpha,
            } => &[*reversion, *level, *sigma, *alpha],
            BuiltinFamily::Constant { drift, sigma, alpha } => &[*drift, *sigma, *alpha],
            BuiltinFamily::PureBrownian => &[],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("family", "parameters must be finite"));
        }
        Ok(Self {
            family,
            dims,
            weights: WeightCoefficients::default(),
            theta: Theta::Identity,
            bound: None,
        })
    }

    pub fn with_weights(mut self, weights: WeightCoefficients) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_theta(mut self, theta: Theta) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    fn sigma_alpha(&self) -> (f64, f64) {
        match self.family {
            BuiltinFamily::LinearMeanField { sigma, alpha, .. }
            | BuiltinFamily::OrnsteinUhlenbeck { sigma, alpha, .. }
            | BuiltinFamily::Constant { sigma, alpha, .. } => (sigma, alpha),
            BuiltinFamily::PureBrownian => (1.0, 1.0),
        }
    }
}

fn diagonal(value: f64, rows: usize, cols: usize, out: &mut [f64]) {
    out.fill(0.0);
    for r in 0..rows.min(cols) {
        out[r * cols + r] = value;
    }
}

impl CoefficientSet for BuiltinModel {
    fn dims(&self) -> ModelDims {
        self.dims
    }

    fn flags(&self) -> StructureFlags {
        StructureFlags {
            sigma_measure_only: true,
            gamma_measure_only: true,
            gamma_zero: self.weights.loading == 0.0,
            theta_lipschitz: self.theta.is_lipschitz(),
            theta_log_growth: self.theta.has_log_growth(),
            bound: self.bound,
        }
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        match self.family {
            BuiltinFamily::LinearMeanField {
                reversion,
                coupling,
                ..
            } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = -reversion * x[k] + coupling * mu.barycenter_coord(k);
                }
            }
            BuiltinFamily::OrnsteinUhlenbeck {
                reversion, level, ..
            } => {
                for (o, xk) in out.iter_mut().zip(x) {
                    *o = reversion * (level - xk);
                }
            }
            BuiltinFamily::Constant { drift, .. } => out.fill(drift),
            BuiltinFamily::PureBrownian => out.fill(0.0),
        }
    }

    fn diffusion(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        diagonal(self.sigma_alpha().0, self.dims.d, self.dims.m, out);
    }

    fn common_diffusion(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        diagonal(self.sigma_alpha().1, self.dims.d, self.dims.k, out);
    }

    fn weight_rate(&self, x: &[f64], _mu: &EmpiricalMeasure) -> f64 {
        if self.weights.slope == 0.0 {
            self.weights.rate
        } else {
            self.weights.rate + self.weights.slope * libm::tanh(x[0])
        }
    }

    fn weight_loading(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        out.fill(self.weights.loading);
    }

    fn weight_common_loading(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
        out.fill(self.weights.common_loading);
    }

    fn theta(&self) -> Theta {
        self.theta
    }
}
