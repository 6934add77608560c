//! Law-of-large-numbers limits by Picard iteration over measure flows.
//!
//! Given a flow `ν`, a reference cloud of `N_ref` independent particles is
//! advanced through `dX = b(X, ν(t)) dt + σ(X, ν(t)) dW` (and, for the weighted
//! limit, `dA = A c dt + A γᵀ dW`); its time marginals form the next flow. The
//! same Brownian increments are reused in every iteration, so the distance
//! between successive flows measures contraction rather than sampling noise.
//! The limit does not see the common noise, which vanishes as `n → ∞`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::exec::Executor;
use crate::math::mean_estimate;
use crate::measure::MeasureFlow;
use crate::metric::{flow_distance, Dictionary};
use crate::model::{CoefficientSet, InitialData, InitialLaw, WeightLaw};
use crate::rate::KappaRule;
use crate::rng::NoisePlan;
use crate::simulate::{build_measure, Kernel, Simulation, TimeGrid};

/// Particles per work unit when advancing the reference cloud.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSettings {
    pub n_ref: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Dictionary size for distances between clouds above the exact cap.
    pub dictionary_size: usize,
    pub seed: u64,
}

impl Default for FixedPointSettings {
    fn default() -> Self {
        Self {
            n_ref: 20_000,
            max_iters: 30,
            tolerance: 5e-3,
            dictionary_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    /// Picard maps applied.
    pub iterations: usize,
    /// `sup_j d(ν^{(k)}(t_j), ν^{(k−1)}(t_j))` for `k = 1, 2, …`.
    pub distances: Vec<f64>,
    pub converged: bool,
    pub n_ref: usize,
    pub tolerance: f64,
}

/// Picard solver for one model and reference cloud.
#[derive(Debug)]
pub struct PicardSolver<'a> {
    coeffs: &'a dyn CoefficientSet,
    grid: TimeGrid,
    cloud: InitialData,
    weighted: bool,
    noise: NoisePlan,
}

impl<'a> PicardSolver<'a> {
    /// Samples the reference cloud from the initial law (and weight law for
    /// the weighted limit).
    pub fn new(
        coeffs: &'a dyn CoefficientSet,
        law: &InitialLaw,
        weights: Option<WeightLaw>,
        grid: TimeGrid,
        n_ref: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_ref == 0 {
            return Err(invalid("n_ref", "must be at least 1"));
        }
        if law.dim() != coeffs.dims().d {
            return Err(crate::Error::DimensionMismatch {
                expected: coeffs.dims().d,
                found: law.dim(),
            });
        }
        let noise = NoisePlan::new(seed).derive(0x11A1);
        let cloud = InitialData::sample(law, weights, n_ref, &noise, 0)?;
        Ok(Self {
            coeffs,
            grid,
            cloud,
            weighted: weights.is_some(),
            noise,
        })
    }

    pub fn cloud(&self) -> &InitialData {
        &self.cloud
    }

    /// The flow that stays at the initial cloud.
    pub fn initial_flow(&self) -> Result<MeasureFlow> {
        let d = self.cloud.dim();
        let log_a = self.initial_log_weights();
        let mu = build_measure(d, self.cloud.positions(), log_a.as_deref(), self.coeffs.theta());
        MeasureFlow::new(self.grid, alloc::vec![mu; self.grid.steps() + 1])
    }

    fn initial_log_weights(&self) -> Option<Vec<f64>> {
        self.weighted
            .then(|| (0..self.cloud.len()).map(|i| libm::log(self.cloud.weight(i))).collect())
    }

    /// One Picard map `ν ↦ Law(X^ν)`.
    pub fn step<E: Executor>(&self, exec: &E, flow: &MeasureFlow) -> Result<MeasureFlow> {
        let d = self.cloud.dim();
        let n = self.cloud.len();
        let steps = self.grid.steps();
        let log_a = self.initial_log_weights();
        let chunks = n.div_ceil(CHUNK);
        let parts = exec.map(chunks, |c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            let kernel = Kernel::new(self.coeffs, self.grid, 0.0, &self.noise, 0, None);
            kernel.run_frozen(
                flow,
                start,
                &self.cloud.positions()[start * d..end * d],
                log_a.as_ref().map(|l| &l[start..end]),
            )
        });
        let parts: Vec<(Vec<f64>, Option<Vec<f64>>)> = parts.into_iter().collect::<Result<_>>()?;
        let mut measures = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let mut x = Vec::with_capacity(n * d);
            let mut la = self.weighted.then(|| Vec::with_capacity(n));
            for (c, (hx, ha)) in parts.iter().enumerate() {
                let len = (n - c * CHUNK).min(CHUNK);
                x.extend_from_slice(&hx[j * len * d..(j + 1) * len * d]);
                if let (Some(la), Some(ha)) = (la.as_mut(), ha.as_ref()) {
                    la.extend_from_slice(&ha[j * len..(j + 1) * len]);
                }
            }
            measures.push(build_measure(d, &x, la.as_deref(), self.coeffs.theta()));
        }
        MeasureFlow::new(self.grid, measures)
    }

    /// Iterates until successive flows are within `tolerance` at every grid time.
    pub fn solve<E: Executor>(&self, exec: &E, settings: &FixedPointSettings) -> Result<(MeasureFlow, FixedPointReport)> {
        if !(settings.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if settings.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        let mut flow = self.initial_flow()?;
        let mut distances = Vec::new();
        let mut dictionary: Option<Dictionary> = None;
        let mut converged = false;
        for _ in 0..settings.max_iters {
            let next = self.step(exec, &flow)?;
            if dictionary.is_none() {
                dictionary = Some(
                    Dictionary::covering(next.measures(), settings.dictionary_size, settings.seed)
                        .ok_or(invalid("flow", "empty reference cloud"))?,
                );
            }
            let dist = sup_distance(&next, &flow, dictionary.as_ref().expect("set above"))?;
            distances.push(dist);
            flow = next;
            if dist <= settings.tolerance {
                converged = true;
                break;
            }
        }
        Ok((
            flow,
            FixedPointReport {
                iterations: distances.len(),
                distances,
                converged,
                n_ref: self.cloud.len(),
                tolerance: settings.tolerance,
            },
        ))
    }
}

/// `sup_j d(μ(t_j), ν(t_j))`, exact below the LP cap and on the dictionary above it.
pub fn sup_distance(mu: &MeasureFlow, nu: &MeasureFlow, dictionary: &Dictionary) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (a, b) in mu.measures().iter().zip(nu.measures()) {
        worst = worst.max(flow_distance(a, b, dictionary)?);
    }
    Ok(worst)
}

/// McKean–Vlasov flow `μ*` started from `law`.
pub fn solve_mckean_vlasov<E: Executor>(
    exec: &E,
    coeffs: &dyn CoefficientSet,
    law: &InitialLaw,
    grid: TimeGrid,
    settings: &FixedPointSettings,
) -> Result<(MeasureFlow, FixedPointReport)> {
    PicardSolver::new(coeffs, law, None, grid, settings.n_ref, settings.seed)?.solve(exec, settings)
}

/// Weighted limit flow started from the joint law of positions and weights.
pub fn solve_weighted_limit<E: Executor>(
    exec: &E,
    coeffs: &dyn CoefficientSet,
    law: &InitialLaw,
    weights: WeightLaw,
    grid: TimeGrid,
    settings: &FixedPointSettings,
) -> Result<(MeasureFlow, FixedPointReport)> {
    PicardSolver::new(coeffs, law, Some(weights), grid, settings.n_ref, settings.seed)?.solve(exec, settings)
}

/// Expected sup-over-grid distance between `μ^n` and the limit at one `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub n: usize,
    pub kappa: f64,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

/// Inputs of an LLN gap experiment.
#[derive(Debug, Clone)]
pub struct GapExperiment<'a> {
    pub coeffs: &'a dyn CoefficientSet,
    pub law: &'a InitialLaw,
    /// Present for the weighted system.
    pub weights: Option<WeightLaw>,
    pub grid: TimeGrid,
    pub kappa: KappaRule,
    pub replicas: usize,
    pub dictionary_size: usize,
    pub seed: u64,
}

/// Monte Carlo estimate of `E sup_j d(μ^n(t_j), μ*(t_j))` for each `n`.
///
/// Distances use one dictionary adapted to the limit flow for every `n`, so
/// rows are comparable.
pub fn lln_gap<E: Executor>(exec: &E, exp: &GapExperiment<'_>, limit: &MeasureFlow, n_list: &[usize]) -> Result<Vec<GapRow>> {
    if exp.replicas < 2 {
        return Err(invalid("replicas", "need at least 2 replicas"));
    }
    if limit.grid() != &exp.grid {
        return Err(invalid("limit", "limit flow is on a different grid"));
    }
    let dictionary = Dictionary::covering(limit.measures(), exp.dictionary_size, exp.seed ^ 0xD1)
        .ok_or(invalid("limit", "empty limit flow"))?;
    let reference: Vec<Vec<f64>> = limit
        .measures()
        .iter()
        .map(|mu| dictionary.integrals(mu))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(invalid("n_list", "particle counts must be positive"));
        }
        let kappa = exp.kappa.kappa(n);
        let noise = NoisePlan::new(exp.seed).derive(n as u64);
        let gaps = exec.map(exp.replicas, |r| -> Result<f64> {
            let init = InitialData::sample(exp.law, exp.weights, n, &noise, r as u32)?;
            let mut sim = Simulation::new(exp.coeffs, &init, exp.grid, kappa, noise);
            if exp.weights.is_some() {
                sim = sim.weighted();
            }
            let bundle = sim.run(r as u32)?;
            let mut worst: f64 = 0.0;
            for (mu, target) in bundle.flow.measures().iter().zip(&reference) {
                worst = worst.max(Dictionary::distance_from_integrals(&dictionary.integrals(mu)?, target));
            }
            Ok(worst)
        });
        let gaps: Vec<f64> = gaps.into_iter().collect::<Result<_>>()?;
        let est = mean_estimate(&gaps);
        rows.push(GapRow {
            n,
            kappa,
            mean: est.mean,
            stderr: est.stderr,
            replicas: exp.replicas,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::model::{BuiltinFamily, BuiltinModel, ModelDims, WeightCoefficients};

    fn settings(n_ref: usize) -> FixedPointSettings {
        FixedPointSettings {
            n_ref,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_mean_field_stays_at_start() {
        let model = BuiltinModel::new(
            BuiltinFamily::LinearMeanField {
                reversion: 1.0,
                coupling: 1.0,
                sigma: 0.0,
                alpha: 0.0,
            },
            ModelDims::scalar(),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let law = InitialLaw::Dirac { point: alloc::vec![0.7] };
        let (flow, report) = solve_mckean_vlasov(&Sequential, &model, &law, grid, &settings(50)).unwrap();
        assert!(report.converged);
        for mu in flow.measures() {
            assert!(mu.iter().all(|(x, _)| (x[0] - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn measure_free_model_is_fixed_after_one_map() {
        let model = BuiltinModel::new(
            BuiltinFamily::OrnsteinUhlenbeck {
                reversion: 1.0,
                level: 0.0,
                sigma: 1.0,
                alpha: 0.0,
            },
            ModelDims::scalar(),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let law = InitialLaw::Dirac { point: alloc::vec![0.0] };
        let (_, report) = solve_mckean_vlasov(&Sequential, &model, &law, grid, &settings(600)).unwrap();
        assert_eq!(report.iterations, 2);
        assert_eq!(report.distances[1], 0.0);
    }

    #[test]
    fn weighted_limit_reduces_without_weight_dynamics() {
        let model = BuiltinModel::new(
            BuiltinFamily::LinearMeanField {
                reversion: 1.0,
                coupling: 0.5,
                sigma: 1.0,
                alpha: 1.0,
            },
            ModelDims::scalar(),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let law = InitialLaw::Gaussian {
            mean: alloc::vec![0.0],
            std: 1.0,
        };
        let s = settings(300);
        let (plain, _) = solve_mckean_vlasov(&Sequential, &model, &law, grid, &s).unwrap();
        let (weighted, _) = solve_weighted_limit(&Sequential, &model, &law, WeightLaw::Constant(1.0), grid, &s).unwrap();
        for (a, b) in plain.measures().iter().zip(weighted.measures()) {
            assert_eq!(a.atoms(), b.atoms());
        }
    }

    #[test]
    fn constant_rate_limit_mass() {
        let model = BuiltinModel::new(BuiltinFamily::PureBrownian, ModelDims::scalar())
            .unwrap()
            .with_weights(WeightCoefficients {
                rate: -0.4,
                ..Default::default()
            });
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let law = InitialLaw::Dirac { point: alloc::vec![0.0] };
        let (flow, _) = solve_weighted_limit(&Sequential, &model, &law, WeightLaw::Constant(1.0), grid, &settings(100)).unwrap();
        for (j, mu) in flow.measures().iter().enumerate() {
            assert!((mu.mass() - libm::exp(-0.4 * grid.time(j))).abs() < 1e-12);
        }
    }
}
