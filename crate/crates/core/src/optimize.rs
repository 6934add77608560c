//! Noisy minimization over a parameter vector.
//!
//! The objective is assumed to be evaluated with common random numbers, so two
//! calls with the same parameters return the same value. The search runs
//! simultaneous-perturbation gradient steps and switches to Nelder–Mead once
//! the best value stops improving. The sequence of evaluated points never
//! depends on the budget, so a larger budget can only improve the best value.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::rng::NoisePlan;

/// One objective evaluation: estimated value and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Start,
    Gradient,
    Simplex,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::Gradient => "spsa",
            Phase::Simplex => "nelder_mead",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub evaluation: usize,
    pub phase: Phase,
    pub value: f64,
    pub stderr: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Largest admissible parameter dimension.
    pub max_dim: usize,
    /// Target size of the first gradient step.
    pub initial_step: f64,
    /// Perturbation size of the first gradient estimate.
    pub perturbation: f64,
    /// Gradient iterations without improvement before switching to the simplex.
    pub patience: usize,
    /// Skip the gradient phase (for discontinuous objectives).
    pub simplex_only: bool,
    /// Simplex convergence tolerance on values.
    pub value_tolerance: f64,
    /// Simplex convergence tolerance on parameters.
    pub param_tolerance: f64,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            budget: 400,
            max_dim: 64,
            initial_step: 0.5,
            perturbation: 0.2,
            patience: 8,
            simplex_only: false,
            value_tolerance: 1e-7,
            param_tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Vec<f64>,
    pub best_value: Evaluation,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    pub trace: Vec<TraceRow>,
}

struct Budgeted<'f, F> {
    objective: &'f F,
    budget: usize,
    used: usize,
    best: Vec<f64>,
    best_value: Evaluation,
    trace: Vec<TraceRow>,
}

/// Signals that the budget ran out mid-phase.
struct OutOfBudget;

impl<'f, F> Budgeted<'f, F>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    fn eval(&mut self, x: &[f64], phase: Phase) -> core::result::Result<Result<f64>, OutOfBudget> {
        if self.used >= self.budget {
            return Err(OutOfBudget);
        }
        self.used += 1;
        let e = match (self.objective)(x) {
            Ok(e) => e,
            // Infeasible or unstable parameters count as infinitely costly.
            Err(Error::ControlRadius { .. }) | Err(Error::NonFinite { .. }) | Err(Error::WeightOverflow { .. }) => Evaluation {
                value: f64::INFINITY,
                stderr: 0.0,
            },
            Err(other) => return Ok(Err(other)),
        };
        let value = if e.value.is_nan() { f64::INFINITY } else { e.value };
        if value < self.best_value.value {
            self.best_value = Evaluation { value, stderr: e.stderr };
            self.best.clear();
            self.best.extend_from_slice(x);
        }
        self.trace.push(TraceRow {
            evaluation: self.used,
            phase,
            value,
            stderr: e.stderr,
            best: self.best_value.value,
        });
        Ok(Ok(value))
    }
}

macro_rules! eval_or_stop {
    ($state:expr, $x:expr, $phase:expr) => {
        match $state.eval($x, $phase) {
            Ok(r) => r?,
            Err(OutOfBudget) => return Ok(true),
        }
    };
}

/// Minimizes `objective` starting from `start`.
pub fn minimize<F>(objective: &F, start: &[f64], settings: &SearchSettings) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    let dim = start.len();
    if dim == 0 {
        return Err(invalid("start", "parameter vector is empty"));
    }
    if dim > settings.max_dim {
        return Err(invalid("family", alloc::format!("dimension {dim} exceeds the cap {}", settings.max_dim)));
    }
    if settings.budget == 0 {
        return Err(invalid("budget", "must be at least 1"));
    }
    let mut state = Budgeted {
        objective,
        budget: settings.budget,
        used: 0,
        best: start.to_vec(),
        best_value: Evaluation {
            value: f64::INFINITY,
            stderr: 0.0,
        },
        trace: Vec::new(),
    };
    let exhausted = run_phases(&mut state, start, settings)?;
    Ok(SearchResult {
        best: state.best,
        best_value: state.best_value,
        evaluations: state.used,
        budget_exhausted: exhausted,
        trace: state.trace,
    })
}

/// Returns whether the budget ran out.
fn run_phases<F>(state: &mut Budgeted<'_, F>, start: &[f64], settings: &SearchSettings) -> Result<bool>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    let dim = start.len();
    eval_or_stop!(state, start, Phase::Start);
    let mut scale = settings.perturbation;
    if !settings.simplex_only && spsa(state, start, settings, &mut scale)? {
        return Ok(true);
    }
    let origin = state.best.clone();
    nelder_mead(state, &origin, scale.max(settings.param_tolerance * 10.0), dim, settings)
}

fn spsa<F>(state: &mut Budgeted<'_, F>, start: &[f64], settings: &SearchSettings, scale: &mut f64) -> Result<bool>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    const ALPHA: f64 = 0.602;
    const GAMMA: f64 = 0.101;
    let dim = start.len();
    let mut rng = NoisePlan::new(settings.seed).derive(0x5B5A).sequence(0, 0);
    let stability = 10.0;
    let mut theta = start.to_vec();
    let mut delta = vec![0.0; dim];
    let mut plus = vec![0.0; dim];
    let mut minus = vec![0.0; dim];
    let mut gain: Option<f64> = None;
    let mut since_improvement = 0usize;
    let mut k = 0usize;
    loop {
        let ck = settings.perturbation / libm::pow(k as f64 + 1.0, GAMMA);
        *scale = ck;
        for i in 0..dim {
            delta[i] = rng.sign();
            plus[i] = theta[i] + ck * delta[i];
            minus[i] = theta[i] - ck * delta[i];
        }
        let before = state.best_value.value;
        let yp = eval_or_stop!(state, &plus, Phase::Gradient);
        let ym = eval_or_stop!(state, &minus, Phase::Gradient);
        let slope = if yp.is_finite() && ym.is_finite() {
            (yp - ym) / (2.0 * ck)
        } else if yp.is_finite() {
            // Only the plus side is feasible: move toward it.
            -1.0
        } else if ym.is_finite() {
            1.0
        } else {
            0.0
        };
        // Calibrate the gain so the first step has the requested size.
        let a = *gain.get_or_insert_with(|| {
            let magnitude = slope.abs() * libm::sqrt(dim as f64);
            if magnitude > 0.0 {
                settings.initial_step * libm::pow(stability + 1.0, ALPHA) / magnitude
            } else {
                settings.initial_step
            }
        });
        let ak = a / libm::pow(k as f64 + 1.0 + stability, ALPHA);
        // Cap the step to a few initial step sizes.
        let limit = 4.0 * settings.initial_step;
        let step = (ak * slope.abs() * libm::sqrt(dim as f64)).min(limit);
        let sign = if slope > 0.0 { 1.0 } else { -1.0 };
        if slope != 0.0 {
            for i in 0..dim {
                theta[i] -= sign * step / libm::sqrt(dim as f64) * delta[i];
            }
        }
        if state.best_value.value < before {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if since_improvement >= settings.patience {
            return Ok(false);
        }
        k += 1;
    }
}

fn nelder_mead<F>(state: &mut Budgeted<'_, F>, origin: &[f64], step: f64, dim: usize, settings: &SearchSettings) -> Result<bool>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    // Adaptive coefficients for moderate dimensions.
    let n = dim as f64;
    let (reflect, expand, contract, shrink) = (1.0, 1.0 + 2.0 / n, 0.75 - 0.5 / n, 1.0 - 1.0 / n);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    let mut values: Vec<f64> = Vec::with_capacity(dim + 1);
    simplex.push(origin.to_vec());
    values.push(eval_or_stop!(state, origin, Phase::Simplex));
    for i in 0..dim {
        let mut p = origin.to_vec();
        p[i] += step;
        values.push(eval_or_stop!(state, &p, Phase::Simplex));
        simplex.push(p);
    }
    let mut centroid = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread <= settings.value_tolerance) && size <= settings.param_tolerance {
            return Ok(false);
        }
        if size <= settings.param_tolerance * 1e-3 {
            return Ok(false);
        }

        centroid.fill(0.0);
        for p in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n;
            }
        }
        let worst = simplex[dim].clone();
        for i in 0..dim {
            trial[i] = centroid[i] + reflect * (centroid[i] - worst[i]);
        }
        let fr = eval_or_stop!(state, &trial, Phase::Simplex);
        if fr < values[0] {
            for i in 0..dim {
                second[i] = centroid[i] + expand * (trial[i] - centroid[i]);
            }
            let fe = eval_or_stop!(state, &second, Phase::Simplex);
            if fe < fr {
                simplex[dim].copy_from_slice(&second);
                values[dim] = fe;
            } else {
                simplex[dim].copy_from_slice(&trial);
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim].copy_from_slice(&trial);
            values[dim] = fr;
            continue;
        }
        let outside = fr < values[dim];
        for i in 0..dim {
            second[i] = if outside {
                centroid[i] + contract * (trial[i] - centroid[i])
            } else {
                centroid[i] - contract * (centroid[i] - worst[i])
            };
        }
        let fc = eval_or_stop!(state, &second, Phase::Simplex);
        if fc < values[dim].min(fr) {
            simplex[dim].copy_from_slice(&second);
            values[dim] = fc;
            continue;
        }
        for j in 1..=dim {
            let best = simplex[0].clone();
            for (x, b) in simplex[j].iter_mut().zip(&best) {
                *x = b + shrink * (*x - b);
            }
            let p = simplex[j].clone();
            values[j] = eval_or_stop!(state, &p, Phase::Simplex);
        }
    }
}
