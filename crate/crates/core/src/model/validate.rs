//! Probing-based checks of boundedness, Lipschitz behaviour and declared flags.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{distance, norm};
use crate::measure::EmpiricalMeasure;
use crate::metric::dbl_distance;
use crate::rng::{CounterRng, NoisePlan};

use super::{CoefficientSet, ModelDims};

/// Observed behaviour of one coefficient map over the probes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientReport {
    pub name: &'static str,
    /// Largest `‖f(x, μ)‖` seen.
    pub max_norm: f64,
    /// Largest `‖f(x, μ) − f(y, μ)‖ / ‖x − y‖`.
    pub state_lipschitz: f64,
    /// Largest `‖f(x, μ) − f(x, ν)‖ / d_BL(μ, ν)`.
    pub measure_lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub probes: usize,
    pub coefficients: Vec<CoefficientReport>,
    /// Largest observed `|θ(a) − θ(b)| / |a − b|`.
    pub theta_lipschitz: f64,
    /// Largest observed `|θ'(a)| a`.
    pub theta_elasticity: f64,
    /// Declared flags or bounds contradicted by a probe.
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn coefficient(&self, name: &str) -> Option<&CoefficientReport> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

const NAMES: [&str; 6] = [
    "drift",
    "diffusion",
    "common_diffusion",
    "weight_rate",
    "weight_loading",
    "weight_common_loading",
];

fn evaluate_all(coeffs: &dyn CoefficientSet, dims: ModelDims, x: &[f64], mu: &EmpiricalMeasure) -> [Vec<f64>; 6] {
    let mut b = vec![0.0; dims.d];
    let mut s = vec![0.0; dims.d * dims.m];
    let mut a = vec![0.0; dims.d * dims.k];
    let mut g = vec![0.0; dims.m];
    let mut be = vec![0.0; dims.k];
    coeffs.drift(x, mu, &mut b);
    coeffs.diffusion(x, mu, &mut s);
    coeffs.common_diffusion(x, mu, &mut a);
    let c = vec![coeffs.weight_rate(x, mu)];
    coeffs.weight_loading(x, mu, &mut g);
    coeffs.weight_common_loading(x, mu, &mut be);
    [b, s, a, c, g, be]
}

fn random_measure(rng: &mut CounterRng, dim: usize, atoms: usize) -> EmpiricalMeasure {
    let positions: Vec<f64> = (0..atoms * dim).map(|_| 2.0 * rng.normal()).collect();
    let mut weights: Vec<f64> = (0..atoms).map(|_| rng.uniform_in(0.1, 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mass = if rng.uniform() < 0.5 {
        1.0
    } else {
        rng.uniform_in(0.5, 1.5)
    };
    for w in weights.iter_mut() {
        *w *= mass / total;
    }
    EmpiricalMeasure::from_parts(dim, positions, weights)
}

fn perturb(rng: &mut CounterRng, mu: &EmpiricalMeasure) -> EmpiricalMeasure {
    let scale = libm::pow(10.0, rng.uniform_in(-3.0, 0.0));
    let atoms: Vec<f64> = mu.atoms().iter().map(|x| x + scale * rng.normal()).collect();
    let weights: Vec<f64> = mu
        .weights()
        .iter()
        .map(|w| w * (1.0 + 0.1 * scale * rng.uniform_in(-1.0, 1.0)))
        .collect();
    EmpiricalMeasure::from_parts(mu.dim(), atoms, weights)
}

/// Probes the coefficient maps at random `(x, μ)` pairs.
///
/// Reports the largest observed norms and local Lipschitz ratios (in the
/// state and, through the exact bounded-Lipschitz distance, in the measure),
/// and records violations of the declared flags and bound.
pub fn validate_model(coeffs: &dyn CoefficientSet, dims: ModelDims, probes: usize, seed: u64) -> ValidationReport {
    let flags = coeffs.flags();
    let mut rng = NoisePlan::new(seed).derive(0x7A11D).sequence(0, 0);
    let mut reports: Vec<CoefficientReport> = NAMES
        .iter()
        .map(|name| CoefficientReport {
            name,
            ..Default::default()
        })
        .collect();
    let mut violations: Vec<String> = Vec::new();
    let mut note = |msg: String| {
        if !violations.contains(&msg) {
            violations.push(msg);
        }
    };
    let probes = probes.max(1);
    for _ in 0..probes {
        let mu = random_measure(&mut rng, dims.d, 4);
        let nu = perturb(&mut rng, &mu);
        let x: Vec<f64> = (0..dims.d).map(|_| 2.0 * rng.normal()).collect();
        let step = libm::pow(10.0, rng.uniform_in(-3.0, 0.0));
        let y: Vec<f64> = x.iter().map(|xi| xi + step * rng.normal()).collect();

        let at_x = evaluate_all(coeffs, dims, &x, &mu);
        let at_y = evaluate_all(coeffs, dims, &y, &mu);
        let at_nu = evaluate_all(coeffs, dims, &x, &nu);
        let dx = distance(&x, &y);
        let dmu = dbl_distance(&mu, &nu).unwrap_or(0.0);

        for (idx, report) in reports.iter_mut().enumerate() {
            let value_norm = norm(&at_x[idx]);
            report.max_norm = report.max_norm.max(value_norm);
            if dx > 0.0 {
                report.state_lipschitz = report.state_lipschitz.max(distance(&at_x[idx], &at_y[idx]) / dx);
            }
            if dmu > 0.0 {
                report.measure_lipschitz = report.measure_lipschitz.max(distance(&at_x[idx], &at_nu[idx]) / dmu);
            }
            // σ, α, c, γ, β must respect the declared bound; b need not.
            if let Some(bound) = flags.bound {
                if idx > 0 && value_norm > bound * (1.0 + 1e-12) {
                    note(format!("{} exceeds declared bound {}", NAMES[idx], bound));
                }
            }
        }

        let tol = |v: &[f64]| 1e-12 * (1.0 + norm(v));
        if flags.sigma_measure_only && distance(&at_x[1], &at_y[1]) > tol(&at_x[1]) {
            note(String::from("diffusion depends on the state but sigma_measure_only is declared"));
        }
        if flags.gamma_measure_only && distance(&at_x[4], &at_y[4]) > tol(&at_x[4]) {
            note(String::from("weight_loading depends on the state but gamma_measure_only is declared"));
        }
        if flags.gamma_zero && norm(&at_x[4]) > 0.0 {
            note(String::from("weight_loading is nonzero but gamma_zero is declared"));
        }
    }

    // θ on a log-spaced ladder of weights.
    let theta = coeffs.theta();
    let mut theta_lipschitz: f64 = 0.0;
    let mut theta_elasticity: f64 = 0.0;
    for e in -12..=24 {
        let a = libm::pow(10.0, e as f64 * 0.5);
        let h = a * 1e-6;
        let (lo, hi) = (theta.apply(a - h), theta.apply(a + h));
        let slope = (hi - lo) / (2.0 * h);
        theta_lipschitz = theta_lipschitz.max(slope.abs());
        theta_elasticity = theta_elasticity.max((slope * a).abs());
    }
    if flags.theta_lipschitz && theta_lipschitz > 1e6 {
        violations.push(format!("theta slope {theta_lipschitz} contradicts theta_lipschitz"));
    }
    if flags.theta_log_growth && theta_elasticity > 1e3 {
        violations.push(format!("theta elasticity {theta_elasticity} contradicts theta_log_growth"));
    }

    let mut warnings = Vec::new();
    if reports[0].measure_lipschitz > 1e3 {
        warnings.push(format!(
            "drift measure-Lipschitz ratio {:.3e} is large; the drift may not be Lipschitz in d_BL",
            reports[0].measure_lipschitz
        ));
    }
    ValidationReport {
        probes,
        coefficients: reports,
        theta_lipschitz,
        theta_elasticity,
        violations,
        warnings,
    }
}
