//! Noise-intensity regimes, the quadratic rate oracle and decay-rate fitting.
//!
//! With `√n κ(n) → λ ∈ (0, ∞)` (critical) or `→ 0` deviations occur at speed
//! `n`; with `√n κ(n) → ∞` they occur at the slower speed `κ(n)⁻²`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::control::{ControlFamily, ControlPolicy};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::functional::Event;
use crate::laplace::{importance_sampling_probability, optimize_controls, LaplaceSetup, OptimizeSettings, Speed};
use crate::model::{CoefficientSet, InitialData};
use crate::rng::NoisePlan;
use crate::simulate::{SystemKind, TimeGrid};

/// How the common-noise intensity scales with `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaRule {
    /// `κ ≡ 0`.
    Zero,
    /// `κ(n) = λ n^{−1/2}`.
    Critical { lambda: f64 },
    /// `κ(n) = c n^{−p}` with `p > 1/2`.
    Subcritical { c: f64, p: f64 },
    /// `κ(n) = c n^{−p}` with `0 < p < 1/2`.
    Supercritical { c: f64, p: f64 },
}

impl KappaRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KappaRule::Zero => Ok(()),
            KappaRule::Critical { lambda } if lambda > 0.0 && lambda.is_finite() => Ok(()),
            KappaRule::Critical { .. } => Err(invalid("lambda", "must be positive and finite")),
            KappaRule::Subcritical { c, p } if c > 0.0 && c.is_finite() && p > 0.5 && p.is_finite() => Ok(()),
            KappaRule::Subcritical { .. } => Err(invalid("kappa_rule", "subcritical rules need c > 0 and p > 1/2")),
            KappaRule::Supercritical { c, p } if c > 0.0 && c.is_finite() && p > 0.0 && p < 0.5 => Ok(()),
            KappaRule::Supercritical { .. } => Err(invalid("kappa_rule", "supercritical rules need c > 0 and 0 < p < 1/2")),
        }
    }

    pub fn kappa(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            KappaRule::Zero => 0.0,
            KappaRule::Critical { lambda } => lambda / libm::sqrt(n),
            KappaRule::Subcritical { c, p } | KappaRule::Supercritical { c, p } => c * libm::pow(n, -p),
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            KappaRule::Zero => String::from("kappa=0"),
            KappaRule::Critical { lambda } => alloc::format!("kappa={lambda}*n^-0.5"),
            KappaRule::Subcritical { c, p } | KappaRule::Supercritical { c, p } => alloc::format!("kappa={c}*n^-{p}"),
        }
    }
}

/// Speed of the large-deviation principle and the limit of `√n κ(n)` when finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpeed {
    pub speed: Speed,
    pub lambda: Option<f64>,
}

pub fn regime_speed(rule: &KappaRule) -> RegimeSpeed {
    match *rule {
        KappaRule::Zero | KappaRule::Subcritical { .. } => RegimeSpeed {
            speed: Speed::Particles,
            lambda: Some(0.0),
        },
        KappaRule::Critical { lambda } => RegimeSpeed {
            speed: Speed::Particles,
            lambda: Some(lambda),
        },
        KappaRule::Supercritical { .. } => RegimeSpeed {
            speed: Speed::InverseKappaSquared,
            lambda: None,
        },
    }
}

/// Which controls enter the quadratic problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleRegime {
    /// Individual control with unit weight and common control with weight `1/λ²`.
    Critical,
    /// Individual control only (`λ → 0`).
    IndividualOnly,
    /// Common control only, unit weight (speed `κ⁻²`).
    CommonOnly,
}

/// Rate of `{endpoint mean ≥ a}` for the scalar pure-Brownian model:
/// `min ½∫ū² + (1/(2λ²))∫φ²` subject to `∫(ū + φ) dt = a`.
pub fn quadratic_rate_oracle(a: f64, horizon: f64, lambda: f64, regime: OracleRegime) -> Result<f64> {
    check_oracle(a, horizon, lambda, regime)?;
    let base = a * a / (2.0 * horizon);
    Ok(match regime {
        OracleRegime::Critical => base / (1.0 + lambda * lambda),
        OracleRegime::IndividualOnly | OracleRegime::CommonOnly => base,
    })
}

fn check_oracle(a: f64, horizon: f64, lambda: f64, regime: OracleRegime) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", "must be positive"));
    }
    if !a.is_finite() {
        return Err(invalid("a", "must be finite"));
    }
    if regime == OracleRegime::Critical && !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "the critical regime needs λ > 0"));
    }
    Ok(())
}

/// The same quadratic problem minimized numerically over `pieces` piecewise
/// constant values of each control, by conjugate gradients after eliminating
/// the constraint.
pub fn quadratic_rate_numerical(a: f64, horizon: f64, lambda: f64, regime: OracleRegime, pieces: usize) -> Result<f64> {
    check_oracle(a, horizon, lambda, regime)?;
    if pieces == 0 {
        return Err(invalid("pieces", "must be at least 1"));
    }
    let h = horizon / pieces as f64;
    // Cost ½ h Σ_k w_k c_k², constraint h Σ_k c_k = a.
    let weights: Vec<f64> = match regime {
        OracleRegime::Critical => {
            let mut w = vec![1.0; pieces];
            w.extend(core::iter::repeat_n(1.0 / (lambda * lambda), pieces));
            w
        }
        OracleRegime::IndividualOnly | OracleRegime::CommonOnly => vec![1.0; pieces],
    };
    let total = weights.len();
    let free = total - 1;
    let last = |z: &[f64]| a / h - z.iter().sum::<f64>();
    let cost = |z: &[f64]| {
        let cl = last(z);
        0.5 * h * (z.iter().zip(&weights).map(|(c, w)| w * c * c).sum::<f64>() + weights[free] * cl * cl)
    };
    let gradient = |z: &[f64], g: &mut [f64]| {
        let cl = last(z);
        for k in 0..free {
            g[k] = h * (weights[k] * z[k] - weights[free] * cl);
        }
    };
    if free == 0 {
        return Ok(cost(&[]));
    }
    let mut z = vec![0.0; free];
    let mut g = vec![0.0; free];
    let mut g0 = vec![0.0; free];
    gradient(&vec![0.0; free], &mut g0);
    gradient(&z, &mut g);
    let mut dir: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut hd = vec![0.0; free];
    let mut rr: f64 = g.iter().map(|x| x * x).sum();
    let start_norm = libm::sqrt(rr).max(f64::MIN_POSITIVE);
    for _ in 0..(4 * free + 8) {
        if libm::sqrt(rr) <= 1e-15 * start_norm {
            break;
        }
        // The objective is quadratic, so H·d is the gradient at d minus the gradient at 0.
        gradient(&dir, &mut hd);
        for k in 0..free {
            hd[k] -= g0[k];
        }
        let curvature: f64 = dir.iter().zip(&hd).map(|(d, q)| d * q).sum();
        if curvature <= 0.0 {
            break;
        }
        let step = rr / curvature;
        for k in 0..free {
            z[k] += step * dir[k];
            g[k] += step * hd[k];
        }
        let rr_next: f64 = g.iter().map(|x| x * x).sum();
        let beta = rr_next / rr;
        for k in 0..free {
            dir[k] = -g[k] + beta * dir[k];
        }
        rr = rr_next;
    }
    Ok(cost(&z))
}

/// How importance-sampling controls are obtained at each `n`.
#[derive(Debug, Clone)]
pub enum Tilt {
    /// Plain Monte Carlo.
    None,
    /// The same control at every `n`.
    Fixed(ControlPolicy),
    /// Optimize the control cost of the smoothed event penalty
    /// `min(cap, slope · shortfall)` at each `n`.
    Optimized {
        family: ControlFamily,
        settings: OptimizeSettings,
        slope: f64,
        cap: f64,
    },
}

/// Inputs of a decay-rate experiment.
#[derive(Debug, Clone)]
pub struct RateExperiment<'a> {
    pub coeffs: &'a dyn CoefficientSet,
    /// Common starting point of every particle.
    pub start: &'a [f64],
    pub event: &'a Event,
    pub rule: KappaRule,
    pub grid: TimeGrid,
    pub kind: SystemKind,
    pub replicas: usize,
    pub tilt: Tilt,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    pub kappa: f64,
    /// `a(n)` for the rule's speed.
    pub speed_value: f64,
    pub probability: f64,
    pub stderr: f64,
    pub hits: usize,
    /// `−(1/a(n)) log p̂_n`.
    pub rate: f64,
    pub rate_stderr: f64,
    /// Plain-MC variance divided by the IS variance (1 without a tilt).
    pub variance_reduction: f64,
    /// Control parameters used for the tilt, if optimized.
    pub control_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub event: String,
    pub speed: Speed,
    pub points: Vec<RatePoint>,
    /// Secant through the two largest `n` in the variable `1/a(n)`, evaluated at 0.
    pub extrapolated: f64,
    pub extrapolated_stderr: f64,
}

/// Estimates `p_n` for each `n` and the limit of `−(1/a(n)) log p_n`.
pub fn estimate_decay_rate<E: Executor>(exec: &E, exp: &RateExperiment<'_>, n_list: &[usize]) -> Result<RateEstimate> {
    exp.rule.validate()?;
    if n_list.is_empty() {
        return Err(invalid("n_list", "need at least one particle count"));
    }
    let speed = regime_speed(&exp.rule).speed;
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        points.push(rate_point(exec, exp, speed, n)?);
    }
    let (extrapolated, extrapolated_stderr) = extrapolate(&points);
    Ok(RateEstimate {
        event: exp.event.describe(),
        speed,
        points,
        extrapolated,
        extrapolated_stderr,
    })
}

fn rate_point<E: Executor>(exec: &E, exp: &RateExperiment<'_>, speed: Speed, n: usize) -> Result<RatePoint> {
    let kappa = exp.rule.kappa(n);
    let a = speed.value(n, kappa)?;
    let init = InitialData::replicated(exp.start, n)?;
    let seed = NoisePlan::new(exp.seed).derive(n as u64).seed();
    let zero = ControlPolicy::zero(exp.coeffs.dims());
    let (control, params) = match &exp.tilt {
        Tilt::None => (zero, Vec::new()),
        Tilt::Fixed(policy) => (policy.clone(), Vec::new()),
        Tilt::Optimized {
            family,
            settings,
            slope,
            cap,
        } => {
            let penalty = exp.event.smoothed(*slope, *cap)?;
            let setup = LaplaceSetup {
                coeffs: exp.coeffs,
                init: &init,
                grid: exp.grid,
                kappa,
                functional: &penalty,
                kind: exp.kind,
                speed,
            };
            let mut settings = settings.clone();
            settings.seed = seed;
            let best = optimize_controls(exec, &setup, family, &settings)?;
            (best.policy, best.params)
        }
    };
    let placeholder = crate::functional::Functional::constant(0.0);
    let setup = LaplaceSetup {
        coeffs: exp.coeffs,
        init: &init,
        grid: exp.grid,
        kappa,
        functional: &placeholder,
        kind: exp.kind,
        speed,
    };
    let est = match importance_sampling_probability(exec, &setup, exp.event, &control, exp.replicas, seed) {
        Err(Error::NoHits { .. }) => return Err(Error::ZeroProbability { n }),
        other => other?,
    };
    let tilted = !matches!(exp.tilt, Tilt::None);
    let (p, s, hits, reduction) = if tilted {
        (est.probability, est.stderr, est.hits, est.variance_reduction)
    } else {
        (est.plain_probability, est.plain_stderr, est.plain_hits, 1.0)
    };
    if !(p > 0.0) {
        return Err(Error::ZeroProbability { n });
    }
    Ok(RatePoint {
        n,
        kappa,
        speed_value: a,
        probability: p,
        stderr: s,
        hits,
        rate: -libm::log(p) / a,
        rate_stderr: s / (p * a),
        variance_reduction: reduction,
        control_params: params,
    })
}

fn extrapolate(points: &[RatePoint]) -> (f64, f64) {
    match points {
        [] => (f64::NAN, f64::NAN),
        [only] => (only.rate, only.rate_stderr),
        [.., p1, p2] => {
            let (x1, x2) = (1.0 / p1.speed_value, 1.0 / p2.speed_value);
            if x1 == x2 {
                return (p2.rate, p2.rate_stderr);
            }
            let value = (x1 * p2.rate - x2 * p1.rate) / (x1 - x2);
            let var = (x1 * x1 * p2.rate_stderr * p2.rate_stderr + x2 * x2 * p1.rate_stderr * p1.rate_stderr) / ((x1 - x2) * (x1 - x2));
            (value, libm::sqrt(var))
        }
    }
}

/// One `n` of a regime comparison, normalized under both speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastRow {
    pub n: usize,
    pub kappa: f64,
    /// `−log p̂_n`.
    pub neg_log_probability: f64,
    pub stderr: f64,
    /// `−(1/n) log p̂_n`.
    pub by_particles: f64,
    /// `−κ² log p̂_n`.
    pub by_inverse_kappa_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSummary {
    pub rule: KappaRule,
    pub speed: Speed,
    pub rows: Vec<ContrastRow>,
    pub estimate: RateEstimate,
    /// Relative change of the correctly normalized rate over the last two `n`.
    pub correct_last_change: f64,
    /// Relative change of the other normalization from first to last `n`.
    pub wrong_total_change: f64,
    /// Whether the other normalization moves in one direction across all `n`.
    pub wrong_monotone: bool,
}

/// Runs [`estimate_decay_rate`] per rule and tabulates both normalizations.
pub fn regime_contrast<E: Executor>(
    exec: &E,
    exp: &RateExperiment<'_>,
    rules: &[KappaRule],
    n_list: &[usize],
) -> Result<Vec<RegimeSummary>> {
    let mut out = Vec::with_capacity(rules.len());
    for rule in rules {
        let per_rule = RateExperiment {
            rule: *rule,
            ..exp.clone()
        };
        let estimate = estimate_decay_rate(exec, &per_rule, n_list)?;
        let rows: Vec<ContrastRow> = estimate
            .points
            .iter()
            .map(|p| {
                let nlp = -libm::log(p.probability);
                ContrastRow {
                    n: p.n,
                    kappa: p.kappa,
                    neg_log_probability: nlp,
                    stderr: p.stderr / p.probability,
                    by_particles: nlp / p.n as f64,
                    by_inverse_kappa_squared: if p.kappa > 0.0 { nlp * p.kappa * p.kappa } else { f64::NAN },
                }
            })
            .collect();
        let speed = estimate.speed;
        let pick = |r: &ContrastRow, correct: bool| -> f64 {
            match (speed, correct) {
                (Speed::Particles, true) | (Speed::InverseKappaSquared, false) => r.by_particles,
                _ => r.by_inverse_kappa_squared,
            }
        };
        let rel = |a: f64, b: f64| (b - a) / a.abs();
        let k = rows.len();
        let correct_last_change = if k >= 2 {
            rel(pick(&rows[k - 2], true), pick(&rows[k - 1], true))
        } else {
            0.0
        };
        let wrong: Vec<f64> = rows.iter().map(|r| pick(r, false)).collect();
        let wrong_total_change = if k >= 2 { rel(wrong[0], wrong[k - 1]) } else { 0.0 };
        let increasing = wrong.windows(2).all(|w| w[1] > w[0]);
        let decreasing = wrong.windows(2).all(|w| w[1] < w[0]);
        out.push(RegimeSummary {
            rule: *rule,
            speed,
            rows,
            estimate,
            correct_last_change,
            wrong_total_change,
            wrong_monotone: k >= 2 && (increasing || decreasing),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speeds_follow_the_regime() {
        let r = regime_speed(&KappaRule::Critical { lambda: 2.0 });
        assert_eq!(r.speed, Speed::Particles);
        assert_eq!(r.lambda, Some(2.0));
        assert_eq!(regime_speed(&KappaRule::Subcritical { c: 1.0, p: 1.0 }).speed, Speed::Particles);
        let s = regime_speed(&KappaRule::Supercritical { c: 1.0, p: 0.25 });
        assert_eq!(s.speed, Speed::InverseKappaSquared);
        assert_eq!(s.speed.value(16, KappaRule::Supercritical { c: 1.0, p: 0.25 }.kappa(16)).unwrap(), 4.0);
    }

    #[test]
    fn rules_are_validated() {
        assert!(KappaRule::Subcritical { c: 1.0, p: 0.4 }.validate().is_err());
        assert!(KappaRule::Supercritical { c: 1.0, p: 0.6 }.validate().is_err());
        assert!(KappaRule::Critical { lambda: 0.0 }.validate().is_err());
    }

    #[test]
    fn oracle_values() {
        assert_eq!(quadratic_rate_oracle(0.0, 1.0, 1.0, OracleRegime::Critical).unwrap(), 0.0);
        assert!((quadratic_rate_oracle(1.0, 1.0, 1.0, OracleRegime::Critical).unwrap() - 0.25).abs() < 1e-15);
        assert!(quadratic_rate_oracle(1.0, 0.0, 1.0, OracleRegime::Critical).is_err());
    }

    #[test]
    fn numerical_minimization_matches() {
        for &(a, t, l) in &[(1.0, 1.0, 1.0), (0.8, 2.0, 0.3), (-1.5, 0.5, 3.0)] {
            let exact = quadratic_rate_oracle(a, t, l, OracleRegime::Critical).unwrap();
            let num = quadratic_rate_numerical(a, t, l, OracleRegime::Critical, 64).unwrap();
            assert!((num - exact).abs() <= 1e-9 * exact, "{a} {t} {l}: {num} vs {exact}");
        }
    }

    #[test]
    fn secant_extrapolation_is_exact_for_linear_trends() {
        let point = |n: usize, rate: f64| RatePoint {
            n,
            kappa: 0.0,
            speed_value: n as f64,
            probability: 0.1,
            stderr: 0.0,
            hits: 1,
            rate,
            rate_stderr: 0.0,
            variance_reduction: 1.0,
            control_params: Vec::new(),
        };
        // rate(n) = 0.3 + 2/n
        let pts = [point(100, 0.32), point(200, 0.31)];
        let (value, _) = extrapolate(&pts);
        assert!((value - 0.3).abs() < 1e-12);
    }
}
