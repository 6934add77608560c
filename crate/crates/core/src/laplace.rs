//! Laplace functionals, their control representation, control optimization
//! and importance sampling.
//!
//! For a speed `a` the Laplace functional is `−(1/a) log E[exp(−a F(μ^n))]`.
//! The control cost of a pair `(u, v)` is
//!
//! ```text
//! E[ (1/(2a)) Σ_i ∫‖u_i‖² dt + (1/(2aκ²)) ∫‖v‖² dt + F(μ̄^n) ]
//! ```
//!
//! with `μ̄^n` the controlled flow. With `a = n` these are the prefactors
//! `1/(2n)` and `1/(2nκ²)`; with `a = κ⁻²` they become `κ²/2` and `1/2`.

use alloc::vec::Vec;

use crate::control::{ControlFamily, ControlPolicy};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::functional::{Event, Functional, Smoothness};
use crate::math::{log_mean_exp, mean_estimate, solve_spd, MeanEstimate};
use crate::model::{CoefficientSet, InitialData};
use crate::optimize::{minimize, Evaluation, SearchSettings, TraceRow};
use crate::rng::NoisePlan;
use crate::simulate::{Simulation, SystemKind, TimeGrid};

/// Large-deviation speed `a(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speed {
    /// `a(n) = n`.
    Particles,
    /// `a(n) = κ(n)⁻²`.
    InverseKappaSquared,
}

impl Speed {
    pub fn value(&self, n: usize, kappa: f64) -> Result<f64> {
        match self {
            Speed::Particles => Ok(n as f64),
            Speed::InverseKappaSquared => {
                if kappa > 0.0 && kappa.is_finite() {
                    Ok(1.0 / (kappa * kappa))
                } else {
                    Err(invalid("kappa", "speed κ⁻² needs κ > 0"))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Speed::Particles => "n",
            Speed::InverseKappaSquared => "kappa^-2",
        }
    }
}

/// Everything that defines a Laplace experiment at one `n`.
#[derive(Debug, Clone)]
pub struct LaplaceSetup<'a> {
    pub coeffs: &'a dyn CoefficientSet,
    /// Initial data; its length is `n`.
    pub init: &'a InitialData,
    pub grid: TimeGrid,
    pub kappa: f64,
    pub functional: &'a Functional,
    pub kind: SystemKind,
    pub speed: Speed,
}

impl LaplaceSetup<'_> {
    pub fn n(&self) -> usize {
        self.init.len()
    }

    pub fn speed_value(&self) -> Result<f64> {
        self.speed.value(self.n(), self.kappa)
    }

    fn simulation<'s>(&'s self, noise: NoisePlan, control: Option<&'s ControlPolicy>) -> Simulation<'s> {
        Simulation::new(self.coeffs, self.init, self.grid, self.kappa, noise)
            .with_kind(self.kind)
            .with_control(control)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceEstimate {
    pub value: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub speed: Speed,
    pub speed_value: f64,
    /// Largest exponent `−a F` over replicas.
    pub max_exponent: f64,
    pub effective_sample_size: f64,
    /// Effective sample size below 10.
    pub degenerate: bool,
    /// Plain mean of `F` over the same replicas.
    pub functional_mean: MeanEstimate,
}

/// Direct Monte Carlo estimate of `−(1/a) log E[exp(−a F(μ^n))]`.
pub fn estimate_laplace_direct<E: Executor>(exec: &E, setup: &LaplaceSetup<'_>, replicas: usize, seed: u64) -> Result<LaplaceEstimate> {
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2 replicas"));
    }
    let a = setup.speed_value()?;
    let sim = setup.simulation(NoisePlan::new(seed), None);
    let values: Vec<f64> = sim
        .ensemble(exec, replicas, |b| setup.functional.eval(&b.flow))?
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(laplace_from_values(&values, a, setup.speed))
}

/// Laplace estimate from per-replica functional values.
pub fn laplace_from_values(values: &[f64], a: f64, speed: Speed) -> LaplaceEstimate {
    // Shift by the smallest value so identical inputs reproduce it exactly.
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    let exponents: Vec<f64> = values.iter().map(|f| -a * (f - low)).collect();
    let lme = log_mean_exp(&exponents);
    LaplaceEstimate {
        value: low - lme.value / a,
        stderr: lme.stderr / a,
        replicas: values.len(),
        speed,
        speed_value: a,
        max_exponent: -a * low,
        effective_sample_size: lme.effective_sample_size,
        degenerate: lme.effective_sample_size < 10.0,
        functional_mean: mean_estimate(values),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCostEstimate {
    /// `E[(1/(2a)) Σ_i ∫‖u_i‖²]`.
    pub individual_cost: f64,
    /// `E[(1/(2aκ²)) ∫‖v‖²]`.
    pub common_cost: f64,
    /// `E[F(μ̄^n)]`.
    pub functional: f64,
    pub total: f64,
    pub stderr: f64,
    pub replicas: usize,
    /// Mean of the Girsanov density `exp(log dP/dQ)` over the same replicas.
    pub likelihood_mass: MeanEstimate,
}

/// Monte Carlo estimate of the control cost of `control`.
pub fn control_cost<E: Executor>(
    exec: &E,
    setup: &LaplaceSetup<'_>,
    control: &ControlPolicy,
    replicas: usize,
    seed: u64,
) -> Result<ControlCostEstimate> {
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2 replicas"));
    }
    let a = setup.speed_value()?;
    let kappa = setup.kappa;
    let sim = setup.simulation(NoisePlan::new(seed), Some(control));
    let rows: Vec<[f64; 4]> = sim
        .ensemble(exec, replicas, |b| -> Result<[f64; 4]> {
            let individual = b.individual_energy / (2.0 * a);
            let common = if b.common_energy == 0.0 {
                0.0
            } else {
                b.common_energy / (2.0 * a * kappa * kappa)
            };
            let f = setup.functional.eval(&b.flow)?;
            Ok([individual, common, f, libm::exp(b.log_likelihood)])
        })?
        .into_iter()
        .collect::<Result<_>>()?;
    let column = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let totals: Vec<f64> = rows.iter().map(|r| r[0] + r[1] + r[2]).collect();
    let total = mean_estimate(&totals);
    Ok(ControlCostEstimate {
        individual_cost: mean_estimate(&column(0)).mean,
        common_cost: mean_estimate(&column(1)).mean,
        functional: mean_estimate(&column(2)).mean,
        total: total.mean,
        stderr: total.stderr,
        replicas,
        likelihood_mass: mean_estimate(&column(3)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSettings {
    /// Maximum control-cost evaluations during the search.
    pub budget: usize,
    /// Replicas per search evaluation (common random numbers).
    pub search_replicas: usize,
    /// Replicas for the final, independent re-evaluation.
    pub final_replicas: usize,
    /// Starting parameters; zero when absent.
    pub start: Option<Vec<f64>>,
    /// Target size of the first search step.
    pub initial_step: f64,
    pub perturbation: f64,
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self {
            budget: 200,
            search_replicas: 400,
            final_replicas: 4000,
            start: None,
            initial_step: 0.5,
            perturbation: 0.2,
            max_dim: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizedControl {
    pub policy: ControlPolicy,
    pub params: Vec<f64>,
    /// Cost on the independent final seed.
    pub cost: ControlCostEstimate,
    /// Zero-control cost on the same final seed.
    pub zero_cost: ControlCostEstimate,
    /// The search result was not better than zero control, which is returned instead.
    pub fell_back_to_zero: bool,
    pub budget_exhausted: bool,
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

/// Minimizes the control cost over a parametric family.
///
/// The search uses common random numbers; the winner is then re-evaluated on
/// an independent seed next to the zero control, and the cheaper of the two
/// is returned.
pub fn optimize_controls<E: Executor>(
    exec: &E,
    setup: &LaplaceSetup<'_>,
    family: &ControlFamily,
    settings: &OptimizeSettings,
) -> Result<OptimizedControl> {
    let dims = setup.coeffs.dims();
    let dim = family.dim(dims);
    if dim == 0 {
        return Err(invalid("family", "the control family has no free parameters"));
    }
    let search_seed = NoisePlan::new(settings.seed).derive(1).seed();
    let final_seed = NoisePlan::new(settings.seed).derive(2).seed();
    // Search in coordinates where both running costs read ½‖z‖²:
    // u = z √(a/n) and v = z κ √a.
    let a = setup.speed_value()?;
    let individual_scale = libm::sqrt(a / setup.n() as f64);
    let common_scale = setup.kappa * libm::sqrt(a);
    let split = dim - family.common_dim(dims);
    let to_natural = |z: &[f64]| -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| v * if i < split { individual_scale } else { common_scale })
            .collect()
    };
    let objective = |z: &[f64]| -> Result<Evaluation> {
        let policy = family.policy(dims, &to_natural(z))?;
        let c = control_cost(exec, setup, &policy, settings.search_replicas, search_seed)?;
        Ok(Evaluation {
            value: c.total,
            stderr: c.stderr,
        })
    };
    let start = settings.start.clone().unwrap_or_else(|| alloc::vec![0.0; dim]);
    if start.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: start.len(),
        });
    }
    let search = SearchSettings {
        budget: settings.budget,
        max_dim: settings.max_dim,
        initial_step: settings.initial_step,
        perturbation: settings.perturbation,
        simplex_only: setup.functional.smoothness() == Smoothness::Discontinuous,
        seed: settings.seed,
        ..SearchSettings::default()
    };
    let start: Vec<f64> = start
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let scale = if i < split { individual_scale } else { common_scale };
            if scale > 0.0 {
                p / scale
            } else {
                0.0
            }
        })
        .collect();
    let result = minimize(&objective, &start, &search)?;
    let best = to_natural(&result.best);
    let best_policy = family.policy(dims, &best)?;
    let cost = control_cost(exec, setup, &best_policy, settings.final_replicas, final_seed)?;
    let zero_policy = ControlPolicy::zero(dims);
    let zero_cost = control_cost(exec, setup, &zero_policy, settings.final_replicas, final_seed)?;
    let fell_back = zero_cost.total <= cost.total;
    let (policy, params, cost) = if fell_back {
        (zero_policy, alloc::vec![0.0; dim], zero_cost.clone())
    } else {
        (best_policy, best, cost)
    };
    Ok(OptimizedControl {
        policy,
        params,
        cost,
        zero_cost,
        fell_back_to_zero: fell_back,
        budget_exhausted: result.budget_exhausted,
        evaluations: result.evaluations,
        trace: result.trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate {
    /// Importance-sampling estimate `Ê[1_event · exp(log dP/dQ)]`.
    pub probability: f64,
    pub stderr: f64,
    pub hits: usize,
    /// Plain Monte Carlo at the same budget on an independent seed.
    pub plain_probability: f64,
    pub plain_stderr: f64,
    pub plain_hits: usize,
    /// Per-sample variance of plain MC divided by that of importance sampling;
    /// NaN when plain MC has no hits.
    pub variance_reduction: f64,
    pub replicas: usize,
}

/// Probability of `event` under the uncontrolled system, by importance
/// sampling with `control` and by plain Monte Carlo.
pub fn importance_sampling_probability<E: Executor>(
    exec: &E,
    setup: &LaplaceSetup<'_>,
    event: &Event,
    control: &ControlPolicy,
    replicas: usize,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2 replicas"));
    }
    let tilted = setup.simulation(NoisePlan::new(seed), Some(control));
    let samples: Vec<f64> = tilted
        .ensemble(exec, replicas, |b| -> Result<f64> {
            Ok(if event.occurs(&b.flow)? {
                libm::exp(b.log_likelihood)
            } else {
                0.0
            })
        })?
        .into_iter()
        .collect::<Result<_>>()?;
    let plain = setup.simulation(NoisePlan::new(seed).derive(0x9A1), None);
    let indicators: Vec<f64> = plain
        .ensemble(exec, replicas, |b| -> Result<f64> { Ok(if event.occurs(&b.flow)? { 1.0 } else { 0.0 }) })?
        .into_iter()
        .collect::<Result<_>>()?;
    let hits = samples.iter().filter(|s| **s > 0.0).count();
    let plain_hits = indicators.iter().filter(|s| **s > 0.0).count();
    if hits == 0 && plain_hits == 0 {
        return Err(Error::NoHits { replicas });
    }
    let is = mean_estimate(&samples);
    let mc = mean_estimate(&indicators);
    Ok(ProbabilityEstimate {
        probability: is.mean,
        stderr: is.stderr,
        hits,
        plain_probability: mc.mean,
        plain_stderr: mc.stderr,
        plain_hits,
        variance_reduction: if plain_hits == 0 {
            f64::NAN
        } else if is.variance > 0.0 {
            mc.variance / is.variance
        } else {
            f64::INFINITY
        },
        replicas,
    })
}

/// Variance of `⟨f, μ^n(T)⟩` at one `(n, κ)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCell {
    pub n: usize,
    pub kappa: f64,
    pub variance: f64,
    /// Normal-theory standard error of the sample variance.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFit {
    /// Coefficient of `1/n`.
    pub individual: f64,
    /// Coefficient of `κ²`.
    pub common: f64,
    /// Root-mean-square relative residual of the fit.
    pub residual: f64,
    pub cells: Vec<VarianceCell>,
}

/// Inputs of a variance decomposition.
#[derive(Clone, Copy)]
pub struct VarianceExperiment<'a> {
    pub coeffs: &'a dyn CoefficientSet,
    /// Common starting point of every particle.
    pub start: &'a [f64],
    pub grid: TimeGrid,
    pub observable: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub replicas: usize,
    pub seed: u64,
}

impl core::fmt::Debug for VarianceExperiment<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("VarianceExperiment")
            .field("start", &self.start)
            .field("grid", &self.grid)
            .field("replicas", &self.replicas)
            .finish()
    }
}

/// Fits `Var⟨f, μ^n(T)⟩ ≈ A/n + B κ²` over the `(n, κ)` grid.
pub fn variance_decomposition<E: Executor>(
    exec: &E,
    exp: &VarianceExperiment<'_>,
    n_list: &[usize],
    kappa_list: &[f64],
) -> Result<VarianceFit> {
    let distinct = |v: &[f64]| {
        let mut s: Vec<f64> = v.to_vec();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s.len()
    };
    let ns: Vec<f64> = n_list.iter().map(|n| *n as f64).collect();
    if distinct(&ns) < 3 || distinct(kappa_list) < 3 {
        return Err(Error::SingularDesign("need at least three distinct values of n and of κ".into()));
    }
    if exp.replicas < 3 {
        return Err(invalid("replicas", "need at least 3 replicas"));
    }
    let mut cells = Vec::with_capacity(n_list.len() * kappa_list.len());
    for (ni, &n) in n_list.iter().enumerate() {
        let init = InitialData::replicated(exp.start, n)?;
        for (ki, &kappa) in kappa_list.iter().enumerate() {
            let noise = NoisePlan::new(exp.seed).derive(((ni as u64) << 32) | ki as u64);
            let sim = Simulation::new(exp.coeffs, &init, exp.grid, kappa, noise);
            let values = sim.ensemble(exec, exp.replicas, |b| b.flow.terminal().integrate(exp.observable))?;
            let est = mean_estimate(&values);
            let r = exp.replicas as f64;
            cells.push(VarianceCell {
                n,
                kappa,
                variance: est.variance,
                stderr: est.variance * libm::sqrt(2.0 / (r - 1.0)),
            });
        }
    }
    // Relative least squares: minimize Σ ((v − A/n − Bκ²) / v)².
    let mut normal = [0.0; 4];
    let mut rhs = [0.0; 2];
    for c in &cells {
        let w = if c.variance > 0.0 { 1.0 / (c.variance * c.variance) } else { 0.0 };
        let x = [1.0 / c.n as f64, c.kappa * c.kappa];
        for i in 0..2 {
            rhs[i] += w * x[i] * c.variance;
            for j in 0..2 {
                normal[i * 2 + j] += w * x[i] * x[j];
            }
        }
    }
    let coef = solve_spd(&normal, &rhs, 2, 1e-12)
        .ok_or_else(|| Error::SingularDesign("normal equations are singular".into()))?;
    let mut sq = 0.0;
    for c in &cells {
        let fit = coef[0] / c.n as f64 + coef[1] * c.kappa * c.kappa;
        let scale = if c.variance > 0.0 { c.variance } else { fit.abs().max(f64::MIN_POSITIVE) };
        let r = (c.variance - fit) / scale;
        sq += r * r;
    }
    Ok(VarianceFit {
        individual: coef[0],
        common: coef[1],
        residual: libm::sqrt(sq / cells.len() as f64),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::model::{BuiltinFamily, BuiltinModel, ModelDims};

    fn brownian() -> BuiltinModel {
        BuiltinModel::new(BuiltinFamily::PureBrownian, ModelDims::scalar()).unwrap()
    }

    #[test]
    fn constant_functional_is_reproduced_exactly() {
        let model = brownian();
        let init = InitialData::replicated(&[0.0], 5).unwrap();
        let f = Functional::constant(0.3);
        let setup = LaplaceSetup {
            coeffs: &model,
            init: &init,
            grid: TimeGrid::new(1.0, 2).unwrap(),
            kappa: 0.2,
            functional: &f,
            kind: SystemKind::Unweighted,
            speed: Speed::Particles,
        };
        let est = estimate_laplace_direct(&Sequential, &setup, 20, 1).unwrap();
        assert_eq!(est.value, 0.3);
        let zero = ControlPolicy::zero(model.dims);
        let cost = control_cost(&Sequential, &setup, &zero, 20, 1).unwrap();
        assert_eq!(cost.total, 0.3);
        assert_eq!(cost.individual_cost + cost.common_cost, 0.0);
    }

    #[test]
    fn speed_needs_positive_kappa() {
        assert!(Speed::InverseKappaSquared.value(10, 0.0).is_err());
        assert_eq!(Speed::InverseKappaSquared.value(10, 0.5).unwrap(), 4.0);
        assert_eq!(Speed::Particles.value(10, 0.0).unwrap(), 10.0);
    }

    #[test]
    fn laplace_lies_between_extremes() {
        let values = [0.1, 0.4, 0.2, 0.9];
        let est = laplace_from_values(&values, 3.0, Speed::Particles);
        assert!(est.value >= 0.1 && est.value <= 0.9);
        assert!(est.value <= est.functional_mean.mean);
    }

    #[test]
    fn variance_fit_needs_three_values() {
        let model = brownian();
        let id = |x: &[f64]| x[0];
        let exp = VarianceExperiment {
            coeffs: &model,
            start: &[0.0],
            grid: TimeGrid::new(1.0, 1).unwrap(),
            observable: &id,
            replicas: 10,
            seed: 1,
        };
        let err = variance_decomposition(&Sequential, &exp, &[10, 20], &[0.1, 0.2, 0.3]).unwrap_err();
        assert!(matches!(err, Error::SingularDesign(_)));
    }
}
