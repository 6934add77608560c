//! Euler–Maruyama simulation of the interacting systems.
//!
//! Coefficients at step `j` see the empirical measure of step `j` (explicit
//! scheme). A controlled particle moves as
//!
//! ```text
//! X ← X + b dt + σ (u dt + ΔW) + α (v dt + κ ΔB)
//! ```
//!
//! and, for the weighted system, its weight moves in log-space as
//!
//! ```text
//! log A ← log A + (c − ½‖γ‖² − ½κ²‖β‖² + γᵀu + βᵀv) dt + γᵀΔW + κ βᵀΔB.
//! ```
//!
//! The uncontrolled system is the same recursion with `u = 0` and `v = 0`,
//! so the two agree bit for bit under a shared [`NoisePlan`].

use alloc::vec;
use alloc::vec::Vec;

use crate::control::{ControlPolicy, Feedback};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::math::dot;
use crate::measure::{EmpiricalMeasure, MeasureFlow};
use crate::model::{CoefficientSet, InitialData, ModelDims, Theta};
use crate::rng::{NoisePlan, COMMON_STREAM};

/// Largest admissible log-weight before the weight is treated as overflowed.
const LOG_WEIGHT_LIMIT: f64 = 700.0;

/// Uniform grid `t_j = j·T/steps` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("horizon", "must be positive and finite"));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_j`; the last point is exactly `T`.
    pub fn time(&self, j: usize) -> f64 {
        if j == self.steps {
            self.horizon
        } else {
            j as f64 * self.dt()
        }
    }
}

/// Unweighted system or Feynman–Kac weighted system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Unweighted,
    Weighted,
}

/// Particle positions (and log-weights) at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub step: usize,
    pub dim: usize,
    pub positions: Vec<f64>,
    /// `log A_i`, present for the weighted system.
    pub log_weights: Option<Vec<f64>>,
}

impl EnsembleState {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// `A_i`, or 1 for the unweighted system.
    pub fn weight(&self, i: usize) -> f64 {
        self.log_weights.as_ref().map_or(1.0, |lw| libm::exp(lw[i]))
    }

    /// The empirical measure with atom weights `θ(A_i)/n` (or `1/n`).
    pub fn measure(&self, theta: Theta) -> EmpiricalMeasure {
        build_measure(self.dim, &self.positions, self.log_weights.as_deref(), theta)
    }
}

pub(crate) fn build_measure(dim: usize, positions: &[f64], log_weights: Option<&[f64]>, theta: Theta) -> EmpiricalMeasure {
    let n = positions.len() / dim;
    let inv = 1.0 / n as f64;
    let weights = match log_weights {
        None => vec![inv; n],
        Some(lw) => lw.iter().map(|l| theta.apply(libm::exp(*l)) * inv).collect(),
    };
    EmpiricalMeasure::from_parts(dim, positions.to_vec(), weights)
}

/// Retained particle trajectories, `(steps + 1) × n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePaths {
    pub dim: usize,
    pub particles: usize,
    pub positions: Vec<f64>,
    pub log_weights: Option<Vec<f64>>,
}

impl ParticlePaths {
    pub fn position(&self, step: usize, i: usize) -> &[f64] {
        let start = (step * self.particles + i) * self.dim;
        &self.positions[start..start + self.dim]
    }

    pub fn log_weight(&self, step: usize, i: usize) -> Option<f64> {
        self.log_weights.as_ref().map(|lw| lw[step * self.particles + i])
    }
}

/// Output of one simulated replica.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub replica: u32,
    pub kind: SystemKind,
    pub flow: MeasureFlow,
    pub terminal: EnsembleState,
    pub paths: Option<ParticlePaths>,
    /// `log dP/dQ` of the control tilt, accumulated along the path; 0 without control.
    pub log_likelihood: f64,
    /// `Σ_i ∫‖u_i‖² dt`.
    pub individual_energy: f64,
    /// `∫‖v‖² dt`.
    pub common_energy: f64,
}

/// Configuration of an ensemble simulation; [`run`](Self::run) simulates one replica.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub coeffs: &'a dyn CoefficientSet,
    pub init: &'a InitialData,
    pub grid: TimeGrid,
    pub kappa: f64,
    pub noise: NoisePlan,
    pub control: Option<&'a ControlPolicy>,
    pub kind: SystemKind,
    pub keep_paths: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(coeffs: &'a dyn CoefficientSet, init: &'a InitialData, grid: TimeGrid, kappa: f64, noise: NoisePlan) -> Self {
        Self {
            coeffs,
            init,
            grid,
            kappa,
            noise,
            control: None,
            kind: SystemKind::Unweighted,
            keep_paths: false,
        }
    }

    pub fn with_control(mut self, control: Option<&'a ControlPolicy>) -> Self {
        self.control = control;
        self
    }

    pub fn with_kind(mut self, kind: SystemKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn weighted(self) -> Self {
        self.with_kind(SystemKind::Weighted)
    }

    pub fn keep_paths(mut self, keep: bool) -> Self {
        self.keep_paths = keep;
        self
    }

    /// Checks dimensions, κ and the control against the model.
    pub fn validate(&self) -> Result<()> {
        let dims = self.coeffs.dims();
        if self.init.dim() != dims.d {
            return Err(Error::DimensionMismatch {
                expected: dims.d,
                found: self.init.dim(),
            });
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(invalid("kappa", "must be finite and nonnegative"));
        }
        if let Some(control) = self.control {
            if control.dims() != dims {
                return Err(invalid("control", "control dimensions differ from the model"));
            }
            if self.kappa == 0.0 && control.has_common() {
                return Err(Error::CommonControlWithoutNoise);
            }
            control.check_radius(&self.grid)?;
        }
        Ok(())
    }

    /// Simulates replica `replica`.
    pub fn run(&self, replica: u32) -> Result<PathBundle> {
        self.validate()?;
        let dims = self.coeffs.dims();
        let (n, d) = (self.init.len(), dims.d);
        let steps = self.grid.steps();
        let theta = self.coeffs.theta();
        let weighted = self.kind == SystemKind::Weighted;
        let kernel = Kernel::new(self.coeffs, self.grid, self.kappa, &self.noise, replica, self.control);

        let mut positions = self.init.positions().to_vec();
        let mut log_weights: Option<Vec<f64>> =
            weighted.then(|| (0..n).map(|i| libm::log(self.init.weight(i))).collect());
        let mut kept_x = self.keep_paths.then(|| Vec::with_capacity((steps + 1) * n * d));
        let mut kept_a = (self.keep_paths && weighted).then(|| Vec::with_capacity((steps + 1) * n));
        let mut measures = Vec::with_capacity(steps + 1);
        let mut scratch = Scratch::new(dims);
        let mut common = CommonStep::new(dims);
        let mut tally = Tally::default();

        for j in 0..steps {
            let mu = build_measure(d, &positions, log_weights.as_deref(), theta);
            if let Some(kx) = kept_x.as_mut() {
                kx.extend_from_slice(&positions);
            }
            if let (Some(ka), Some(lw)) = (kept_a.as_mut(), log_weights.as_ref()) {
                ka.extend_from_slice(lw);
            }
            kernel.prepare_common(j, &mut common, &mut tally);
            for i in 0..n {
                let x = &mut positions[i * d..(i + 1) * d];
                let la = log_weights.as_mut().map(|lw| &mut lw[i]);
                kernel.step_particle(j, i, x, la, &mu, &common, &mut scratch, &mut tally)?;
            }
            measures.push(mu);
        }
        measures.push(build_measure(d, &positions, log_weights.as_deref(), theta));
        if let Some(kx) = kept_x.as_mut() {
            kx.extend_from_slice(&positions);
        }
        if let (Some(ka), Some(lw)) = (kept_a.as_mut(), log_weights.as_ref()) {
            ka.extend_from_slice(lw);
        }
        let paths = kept_x.map(|positions| ParticlePaths {
            dim: d,
            particles: n,
            positions,
            log_weights: kept_a,
        });
        Ok(PathBundle {
            replica,
            kind: self.kind,
            flow: MeasureFlow::new(self.grid, measures)?,
            terminal: EnsembleState {
                step: steps,
                dim: d,
                positions,
                log_weights,
            },
            paths,
            log_likelihood: tally.log_likelihood,
            individual_energy: tally.individual_energy,
            common_energy: tally.common_energy,
        })
    }

    /// Runs `replicas` replicas and maps each bundle through `reduce`, in replica order.
    pub fn ensemble<E, T, R>(&self, exec: &E, replicas: usize, reduce: R) -> Result<Vec<T>>
    where
        E: Executor,
        T: Send,
        R: Fn(&PathBundle) -> T + Sync + Send,
    {
        self.validate()?;
        exec.map(replicas, |r| self.run(r as u32).map(|b| reduce(&b)))
            .into_iter()
            .collect()
    }
}

/// Uncontrolled or controlled unweighted system, one replica.
pub fn simulate_unweighted(
    coeffs: &dyn CoefficientSet,
    init: &InitialData,
    grid: TimeGrid,
    kappa: f64,
    noise: &NoisePlan,
    replica: u32,
    control: Option<&ControlPolicy>,
) -> Result<PathBundle> {
    Simulation::new(coeffs, init, grid, kappa, *noise)
        .with_control(control)
        .run(replica)
}

/// Uncontrolled or controlled weighted system, one replica.
pub fn simulate_weighted(
    coeffs: &dyn CoefficientSet,
    init: &InitialData,
    grid: TimeGrid,
    kappa: f64,
    noise: &NoisePlan,
    replica: u32,
    control: Option<&ControlPolicy>,
) -> Result<PathBundle> {
    Simulation::new(coeffs, init, grid, kappa, *noise)
        .with_control(control)
        .weighted()
        .run(replica)
}

/// Recomputes `log dP/dQ` for a bundle from its retained paths and the noise plan.
///
/// The tilt is `W_i ↦ W_i + ∫u_i dt`, `B ↦ B + (1/κ)∫v dt`, giving
/// `−Σ_i(∫u_iᵀdW_i + ½∫‖u_i‖²dt) − (1/κ)∫vᵀdB − (1/(2κ²))∫‖v‖²dt` on the grid.
pub fn girsanov_log_weight(
    bundle: &PathBundle,
    control: Option<&ControlPolicy>,
    kappa: f64,
    noise: &NoisePlan,
) -> Result<f64> {
    let Some(control) = control else {
        return Ok(0.0);
    };
    if kappa == 0.0 && control.has_common() {
        return Err(Error::CommonControlWithoutNoise);
    }
    let grid = *bundle.flow.grid();
    let (dt, steps) = (grid.dt(), grid.steps());
    let dims = control.dims();
    let needs_paths = !matches!(control.feedback(), Feedback::Zero);
    let paths = match (&bundle.paths, needs_paths) {
        (Some(p), _) => Some(p),
        (None, false) => None,
        (None, true) => return Err(invalid("bundle", "particle paths must be retained to recompute the weight")),
    };
    let n = bundle.terminal.len();
    let mut u = vec![0.0; dims.m];
    let mut dw = vec![0.0; dims.m];
    let mut db = vec![0.0; dims.k];
    let mut total = 0.0;
    for j in 0..steps {
        let piece = control.piece_of(j, steps);
        let v = control.common_at(piece);
        if v.iter().any(|x| *x != 0.0) {
            noise.increments(bundle.replica, COMMON_STREAM, j as u32, dt, &mut db);
            let vv = dot(v, v);
            total -= dot(v, &db) / kappa + vv * dt / (2.0 * kappa * kappa);
        }
        if let Some(paths) = paths {
            let mu = bundle.flow.at(j);
            for i in 0..n {
                control.individual(piece, grid.time(j), paths.position(j, i), mu, i, &mut u);
                noise.increments(bundle.replica, i as u32, j as u32, dt, &mut dw);
                total -= dot(&u, &dw) + 0.5 * dot(&u, &u) * dt;
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Default)]
struct Tally {
    log_likelihood: f64,
    individual_energy: f64,
    common_energy: f64,
}

struct Scratch {
    drift: Vec<f64>,
    sigma: Vec<f64>,
    alpha: Vec<f64>,
    u: Vec<f64>,
    dw: Vec<f64>,
    shock: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

impl Scratch {
    fn new(dims: ModelDims) -> Self {
        Self {
            drift: vec![0.0; dims.d],
            sigma: vec![0.0; dims.d * dims.m],
            alpha: vec![0.0; dims.d * dims.k],
            u: vec![0.0; dims.m],
            dw: vec![0.0; dims.m],
            shock: vec![0.0; dims.m],
            gamma: vec![0.0; dims.m],
            beta: vec![0.0; dims.k],
        }
    }
}

/// Per-step quantities shared by all particles.
struct CommonStep {
    piece: usize,
    v: Vec<f64>,
    db: Vec<f64>,
    /// `v dt + κ ΔB`.
    shock: Vec<f64>,
}

impl CommonStep {
    fn new(dims: ModelDims) -> Self {
        Self {
            piece: 0,
            v: vec![0.0; dims.k],
            db: vec![0.0; dims.k],
            shock: vec![0.0; dims.k],
        }
    }
}

/// One Euler step for one particle. Shared by the interacting simulator and
/// the frozen-flow solver of the limit module.
pub(crate) struct Kernel<'a> {
    coeffs: &'a dyn CoefficientSet,
    dims: ModelDims,
    grid: TimeGrid,
    dt: f64,
    kappa: f64,
    noise: &'a NoisePlan,
    replica: u32,
    control: Option<&'a ControlPolicy>,
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(
        coeffs: &'a dyn CoefficientSet,
        grid: TimeGrid,
        kappa: f64,
        noise: &'a NoisePlan,
        replica: u32,
        control: Option<&'a ControlPolicy>,
    ) -> Self {
        Self {
            coeffs,
            dims: coeffs.dims(),
            grid,
            dt: grid.dt(),
            kappa,
            noise,
            replica,
            control,
        }
    }

    fn prepare_common(&self, j: usize, common: &mut CommonStep, tally: &mut Tally) {
        let dt = self.dt;
        match self.control {
            Some(control) => {
                common.piece = control.piece_of(j, self.grid.steps());
                common.v.copy_from_slice(control.common_at(common.piece));
            }
            None => {
                common.piece = 0;
                common.v.fill(0.0);
            }
        }
        if self.kappa > 0.0 {
            self.noise
                .increments(self.replica, COMMON_STREAM, j as u32, dt, &mut common.db);
        } else {
            common.db.fill(0.0);
        }
        for c in 0..self.dims.k {
            common.shock[c] = common.v[c] * dt + self.kappa * common.db[c];
        }
        if common.v.iter().any(|x| *x != 0.0) {
            let vv = dot(&common.v, &common.v);
            tally.common_energy += vv * dt;
            tally.log_likelihood -=
                dot(&common.v, &common.db) / self.kappa + vv * dt / (2.0 * self.kappa * self.kappa);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn step_particle(
        &self,
        j: usize,
        i: usize,
        x: &mut [f64],
        log_weight: Option<&mut f64>,
        mu: &EmpiricalMeasure,
        common: &CommonStep,
        s: &mut Scratch,
        tally: &mut Tally,
    ) -> Result<()> {
        let ModelDims { d, m, k } = self.dims;
        let dt = self.dt;
        self.coeffs.drift(x, mu, &mut s.drift);
        self.coeffs.diffusion(x, mu, &mut s.sigma);
        self.coeffs.common_diffusion(x, mu, &mut s.alpha);
        match self.control {
            Some(control) => control.individual(common.piece, self.grid.time(j), x, mu, i, &mut s.u),
            None => s.u.fill(0.0),
        }
        if s.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Control {
                step: j,
                particle: i,
                reason: "non-finite control value".into(),
            });
        }
        self.noise.increments(self.replica, i as u32, j as u32, dt, &mut s.dw);
        for c in 0..m {
            s.shock[c] = s.u[c] * dt + s.dw[c];
        }
        if self.control.is_some() {
            let uu = dot(&s.u, &s.u);
            if uu != 0.0 {
                tally.individual_energy += uu * dt;
                tally.log_likelihood -= dot(&s.u, &s.dw) + 0.5 * uu * dt;
            }
        }

        if let Some(la) = log_weight {
            let c = self.coeffs.weight_rate(x, mu);
            self.coeffs.weight_loading(x, mu, &mut s.gamma);
            self.coeffs.weight_common_loading(x, mu, &mut s.beta);
            let gg = dot(&s.gamma, &s.gamma);
            let bb = dot(&s.beta, &s.beta);
            let rate = c - 0.5 * gg - 0.5 * self.kappa * self.kappa * bb + dot(&s.gamma, &s.u) + dot(&s.beta, &common.v);
            *la += rate * dt + dot(&s.gamma, &s.dw) + self.kappa * dot(&s.beta, &common.db);
            if !la.is_finite() || *la > LOG_WEIGHT_LIMIT {
                return Err(Error::WeightOverflow { step: j, particle: i });
            }
        }

        for (r, xr) in x.iter_mut().enumerate().take(d) {
            let sig = &s.sigma[r * m..(r + 1) * m];
            let alp = &s.alpha[r * k..(r + 1) * k];
            *xr += s.drift[r] * dt + dot(sig, &s.shock) + dot(alp, &common.shock);
            if !xr.is_finite() {
                return Err(Error::NonFinite { step: j, particle: i });
            }
        }
        Ok(())
    }

    /// Advances independent particles through a frozen flow; returns the
    /// positions (and log-weights) at every grid point, `(steps + 1) × len`.
    pub(crate) fn run_frozen(
        &self,
        flow: &MeasureFlow,
        first_particle: usize,
        positions: &[f64],
        log_weights: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let d = self.dims.d;
        let count = positions.len() / d;
        let steps = self.grid.steps();
        let mut x = positions.to_vec();
        let mut la = log_weights.map(|l| l.to_vec());
        let mut hist_x = Vec::with_capacity((steps + 1) * x.len());
        let mut hist_a = la.as_ref().map(|l| Vec::with_capacity((steps + 1) * l.len()));
        let mut scratch = Scratch::new(self.dims);
        let mut common = CommonStep::new(self.dims);
        let mut tally = Tally::default();
        for j in 0..steps {
            hist_x.extend_from_slice(&x);
            if let (Some(h), Some(l)) = (hist_a.as_mut(), la.as_ref()) {
                h.extend_from_slice(l);
            }
            self.prepare_common(j, &mut common, &mut tally);
            let mu = flow.at(j);
            for p in 0..count {
                let xi = &mut x[p * d..(p + 1) * d];
                let a = la.as_mut().map(|l| &mut l[p]);
                self.step_particle(j, first_particle + p, xi, a, mu, &common, &mut scratch, &mut tally)?;
            }
        }
        hist_x.extend_from_slice(&x);
        if let (Some(h), Some(l)) = (hist_a.as_mut(), la.as_ref()) {
            h.extend_from_slice(l);
        }
        Ok((hist_x, hist_a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BuiltinFamily, BuiltinModel, WeightCoefficients};

    fn ou(reversion: f64, sigma: f64, alpha: f64) -> BuiltinModel {
        BuiltinModel::new(
            BuiltinFamily::OrnsteinUhlenbeck {
                reversion,
                level: 0.0,
                sigma,
                alpha,
            },
            ModelDims::scalar(),
        )
        .unwrap()
    }

    #[test]
    fn grid_ends_exactly_at_horizon() {
        let grid = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(grid.time(7), 0.3);
        assert_eq!(grid.time(0), 0.0);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn one_explicit_step() {
        let model = ou(1.0, 0.0, 0.0);
        let init = InitialData::replicated(&[1.0], 1).unwrap();
        let grid = TimeGrid::new(0.1, 1).unwrap();
        let b = simulate_unweighted(&model, &init, grid, 0.0, &NoisePlan::new(1), 0, None).unwrap();
        assert!((b.terminal.positions[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn constant_rate_mass_is_exponential() {
        let model = ou(1.0, 1.0, 1.0).with_weights(WeightCoefficients {
            rate: 0.5,
            ..Default::default()
        });
        let init = InitialData::replicated(&[0.0], 30).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let b = simulate_weighted(&model, &init, grid, 0.1, &NoisePlan::new(2), 0, None).unwrap();
        for (j, mu) in b.flow.measures().iter().enumerate() {
            let expected = libm::exp(0.5 * grid.time(j));
            assert!((mu.mass() - expected).abs() < 1e-12, "{j}: {}", mu.mass());
        }
    }

    #[test]
    fn zero_control_is_bit_identical() {
        let model = ou(0.7, 1.0, 0.5);
        let init = InitialData::replicated(&[0.3], 10).unwrap();
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let noise = NoisePlan::new(9);
        let zero = ControlPolicy::zero(model.dims);
        let a = simulate_unweighted(&model, &init, grid, 0.2, &noise, 3, None).unwrap();
        let b = simulate_unweighted(&model, &init, grid, 0.2, &noise, 3, Some(&zero)).unwrap();
        assert_eq!(a.flow, b.flow);
        assert_eq!(b.log_likelihood, 0.0);
    }

    #[test]
    fn recomputed_weight_matches_accumulated() {
        let model = ou(0.5, 1.0, 1.0);
        let init = InitialData::replicated(&[0.0], 4).unwrap();
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let noise = NoisePlan::new(5);
        let control = ControlPolicy::new(
            model.dims,
            2,
            Feedback::Affine {
                offsets: vec![0.3, -0.2],
                gains: vec![0.5, -1.0],
            },
            vec![0.1, 0.4],
        )
        .unwrap();
        let b = Simulation::new(&model, &init, grid, 0.3, noise)
            .with_control(Some(&control))
            .keep_paths(true)
            .run(2)
            .unwrap();
        let again = girsanov_log_weight(&b, Some(&control), 0.3, &noise).unwrap();
        assert!((again - b.log_likelihood).abs() < 1e-12);
    }

    #[test]
    fn common_control_needs_noise() {
        let model = ou(0.5, 1.0, 1.0);
        let init = InitialData::replicated(&[0.0], 2).unwrap();
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let control = ControlPolicy::constant(model.dims, &[0.0], &[1.0]).unwrap();
        let err = simulate_unweighted(&model, &init, grid, 0.0, &NoisePlan::new(1), 0, Some(&control));
        assert_eq!(err.unwrap_err(), Error::CommonControlWithoutNoise);
    }

    #[test]
    fn blow_up_reports_step_and_particle() {
        let model = ou(-1e300, 0.0, 0.0);
        let init = InitialData::new(1, vec![0.0, 1e10], None).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let err = simulate_unweighted(&model, &init, grid, 0.0, &NoisePlan::new(1), 0, None).unwrap_err();
        assert_eq!(err, Error::NonFinite { step: 0, particle: 1 });
    }
}
