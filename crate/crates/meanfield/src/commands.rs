//! One function per experiment; each returns its tables and artifacts.

use meanfield_core::control::ControlPolicy;
use meanfield_core::exec::Executor;
use meanfield_core::functional::{Event, Functional};
use meanfield_core::laplace::{
    control_cost, estimate_laplace_direct, importance_sampling_probability, optimize_controls, variance_decomposition,
    LaplaceSetup, Speed, VarianceExperiment,
};
use meanfield_core::limit::{lln_gap, solve_mckean_vlasov, solve_weighted_limit, GapExperiment};
use meanfield_core::math::mean_estimate;
use meanfield_core::model::{validate_model, BuiltinModel, CoefficientSet, InitialData, InitialLaw};
use meanfield_core::rate::{
    estimate_decay_rate, quadratic_rate_oracle, regime_contrast, KappaRule, OracleRegime, RateExperiment, Tilt,
};
use meanfield_core::rng::NoisePlan;
use meanfield_core::simulate::{Simulation, SystemKind};
use meanfield_core::{Error, Result};

use crate::config::{
    Command, EventName, ExperimentConfig, FamilyName, ObservableName, SpeedName, SystemName, TiltName,
};
use crate::control_file::write_control;
use crate::output::{fmt_f64, Artifact, Outputs, Table};
use crate::row;

/// Seed tags separating the random streams of one run.
mod tag {
    pub const INITIAL: u64 = 0x1A17;
    pub const DIRECT: u64 = 0xD1EC;
    pub const CONTROLS: u64 = 0xC0A7;
    pub const OPTIMIZE: u64 = 0x0917;
    pub const IMPORTANCE: u64 = 0x1395;
    pub const LIMIT: u64 = 0x7111;
    pub const GAP: u64 = 0x6A9;
}

/// Inputs that do not live in the config itself.
#[derive(Debug, Clone, Default)]
pub struct Context {
    /// Policy loaded from `control.file`.
    pub control: Option<ControlPolicy>,
}

pub fn execute<E: Executor>(exec: &E, command: Command, cfg: &ExperimentConfig, ctx: &Context) -> Result<Outputs> {
    match command {
        Command::Validate => validate(cfg),
        Command::Lln => lln(exec, cfg),
        Command::FeynmanKac => feynman_kac(exec, cfg),
        Command::Variance => variance(exec, cfg),
        Command::Laplace => laplace(exec, cfg, ctx),
        Command::Optimize => optimize(exec, cfg),
        Command::RareEvent => rare_event(exec, cfg, ctx),
        Command::Rate => rate(exec, cfg),
        Command::Regimes => regimes(exec, cfg),
    }
}

fn derived(cfg: &ExperimentConfig, tag: u64) -> NoisePlan {
    NoisePlan::new(cfg.seed).derive(tag)
}

fn n_of(cfg: &ExperimentConfig) -> usize {
    cfg.n.expect("validated: n present")
}

fn replicas_of(cfg: &ExperimentConfig) -> usize {
    cfg.replicas.expect("validated: replicas present")
}

fn system_of(cfg: &ExperimentConfig) -> SystemName {
    cfg.laplace.as_ref().and_then(|l| l.system).unwrap_or(SystemName::Unweighted)
}

/// The initial cloud shared by every replica of a fixed-`n` experiment.
fn initial_cloud(cfg: &ExperimentConfig, n: usize, system: SystemName) -> Result<InitialData> {
    let weights = (system == SystemName::Weighted).then(|| cfg.weight_law());
    InitialData::sample(&cfg.initial_law(), weights, n, &derived(cfg, tag::INITIAL), 0)
}

fn validate(cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.build_model();
    let probes = cfg.validate.as_ref().and_then(|v| v.probes).unwrap_or(200);
    let report = validate_model(&model, cfg.dims(), probes, cfg.seed);
    let mut table = Table::new(
        "validation.csv",
        &["coefficient", "max_norm", "state_lipschitz", "measure_lipschitz"],
    );
    for c in &report.coefficients {
        table.push(row![c.name, c.max_norm, c.state_lipschitz, c.measure_lipschitz]);
    }
    table.push(row!["theta", f64::NAN, report.theta_lipschitz, f64::NAN]);
    let mut findings = Table::new("findings.csv", &["kind", "message"]);
    for v in &report.violations {
        findings.push(row!["violation", v.clone()]);
    }
    for w in &report.warnings {
        findings.push(row!["warning", w.clone()]);
    }
    let mut summary = Table::new("summary.csv", &["probes", "violations", "warnings", "theta_elasticity", "clean"]);
    summary.push(row![
        report.probes,
        report.violations.len(),
        report.warnings.len(),
        report.theta_elasticity,
        report.is_clean()
    ]);
    Ok(Outputs {
        tables: vec![table, findings, summary],
        artifacts: Vec::new(),
    })
}

fn lln<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.build_model();
    let law = cfg.initial_law();
    let grid = cfg.grid();
    let mut settings = cfg.fixed_point_settings();
    settings.seed = derived(cfg, tag::LIMIT).seed();
    let n_list = cfg.n_list.clone().unwrap_or_default();
    let systems = cfg
        .limit
        .as_ref()
        .and_then(|l| l.systems.clone())
        .unwrap_or_else(|| vec![SystemName::Unweighted]);
    let export = cfg.output.as_ref().and_then(|o| o.export_flow).unwrap_or(false);
    let mut out = Outputs::default();
    let mut gap = Table::new("gap.csv", &["system", "n", "kappa", "gap", "stderr", "replicas"]);
    for system in systems {
        let name = system.name();
        let weights = (system == SystemName::Weighted).then(|| cfg.weight_law());
        let (flow, report) = match weights {
            None => solve_mckean_vlasov(exec, &model, &law, grid, &settings)?,
            Some(w) => solve_weighted_limit(exec, &model, &law, w, grid, &settings)?,
        };
        let mut fp = Table::new(
            format!("fixed_point_{name}.csv"),
            &["iteration", "distance", "tolerance", "n_ref", "converged"],
        );
        for (k, d) in report.distances.iter().enumerate() {
            fp.push(row![k + 1, *d, report.tolerance, report.n_ref, report.converged]);
        }
        let mut summary = Table::new(
            format!("limit_summary_{name}.csv"),
            &["step", "time", "coord", "mean", "variance", "mass"],
        );
        for (j, mu) in flow.measures().iter().enumerate() {
            for k in 0..mu.dim() {
                summary.push(row![j, grid.time(j), k, mu.barycenter_coord(k), mu.variance_coord(k), mu.mass()]);
            }
        }
        out.tables.push(fp);
        out.tables.push(summary);
        if export {
            let d = cfg.dims().d;
            let mut columns = vec!["step", "time", "atom"];
            let coords: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
            columns.extend(coords.iter().map(String::as_str));
            columns.push("weight");
            let mut t = Table::new(format!("flow_{name}.csv"), &columns);
            for (j, mu) in flow.measures().iter().enumerate() {
                for (i, (x, w)) in mu.iter().enumerate() {
                    let mut r = row![j, grid.time(j), i];
                    r.extend(x.iter().map(|v| fmt_f64(*v)));
                    r.push(fmt_f64(w));
                    t.push(r);
                }
            }
            out.tables.push(t);
        }
        let exp = GapExperiment {
            coeffs: &model,
            law: &law,
            weights,
            grid,
            kappa: cfg.kappa_rule(),
            replicas: replicas_of(cfg),
            dictionary_size: settings.dictionary_size,
            seed: derived(cfg, tag::GAP).seed(),
        };
        for r in lln_gap(exec, &exp, &flow, &n_list)? {
            gap.push(row![name, r.n, r.kappa, r.mean, r.stderr, r.replicas]);
        }
    }
    out.tables.push(gap);
    Ok(out)
}

fn feynman_kac<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.build_model();
    let n = n_of(cfg);
    let replicas = replicas_of(cfg);
    let grid = cfg.grid();
    let kappa = cfg.kappa_rule().kappa(n);
    let spec = cfg.feynman_kac.clone().unwrap_or_default();
    let observable = spec.observable.unwrap_or(ObservableName::X2);
    let dump = cfg.output.as_ref().and_then(|o| o.dump_paths).unwrap_or(false);
    let law = cfg.initial_law();
    let weights = cfg.weight_law();
    let noise = NoisePlan::new(cfg.seed);
    let init_noise = derived(cfg, tag::INITIAL);
    // Per replica: (mass, ⟨g, ν⟩) at every step, and the raw path dump.
    type ReplicaRun = (Vec<(f64, f64)>, Vec<u8>);
    let runs = exec.map(replicas, |r| -> Result<ReplicaRun> {
        let init = InitialData::sample(&law, Some(weights), n, &init_noise, r as u32)?;
        let bundle = Simulation::new(&model, &init, grid, kappa, noise)
            .weighted()
            .keep_paths(dump)
            .run(r as u32)?;
        let stats = bundle
            .flow
            .measures()
            .iter()
            .map(|mu| (mu.mass(), mu.integrate(|x| observable.eval(x))))
            .collect();
        let mut bytes = Vec::new();
        if let Some(paths) = &bundle.paths {
            for x in &paths.positions {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            for w in paths.log_weights.iter().flatten() {
                bytes.extend_from_slice(&w.to_le_bytes());
            }
        }
        Ok((stats, bytes))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let stat_name = format!("integral_{}", observable.name());
    let mut out = Outputs::default();
    if spec.trajectories.unwrap_or(true) {
        let mut t = Table::new("trajectory.csv", &["replica", "step", "time", "statistic", "value"]);
        for (r, (stats, _)) in runs.iter().enumerate() {
            for (j, (mass, value)) in stats.iter().enumerate() {
                t.push(row![r, j, grid.time(j), "mass", *mass]);
                t.push(row![r, j, grid.time(j), stat_name.clone(), *value]);
            }
        }
        out.tables.push(t);
    }
    let mut summary = Table::new("summary.csv", &["step", "time", "statistic", "mean", "stderr", "replicas"]);
    for j in 0..=grid.steps() {
        let masses: Vec<f64> = runs.iter().map(|(s, _)| s[j].0).collect();
        let values: Vec<f64> = runs.iter().map(|(s, _)| s[j].1).collect();
        for (name, column) in [("mass", &masses), (stat_name.as_str(), &values)] {
            let est = mean_estimate(column);
            summary.push(row![j, grid.time(j), name, est.mean, est.stderr, replicas]);
        }
    }
    out.tables.push(summary);
    if dump {
        out.artifacts.push(Artifact {
            name: "paths.bin".into(),
            bytes: runs.into_iter().flat_map(|(_, b)| b).collect(),
        });
    }
    Ok(out)
}

fn variance<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.build_model();
    let spec = cfg.variance.clone().unwrap_or_default();
    let observable = spec.observable.unwrap_or(ObservableName::X);
    let eval = move |x: &[f64]| observable.eval(x);
    let start = cfg.start_point();
    let exp = VarianceExperiment {
        coeffs: &model,
        start: &start,
        grid: cfg.grid(),
        observable: &eval,
        replicas: replicas_of(cfg),
        seed: cfg.seed,
    };
    let n_list = cfg.n_list.clone().unwrap_or_default();
    let fit = variance_decomposition(exec, &exp, &n_list, &spec.kappa_list.unwrap_or_default())?;
    let mut cells = Table::new("cells.csv", &["n", "kappa", "variance", "stderr", "replicas"]);
    for c in &fit.cells {
        cells.push(row![c.n, c.kappa, c.variance, c.stderr, exp.replicas]);
    }
    let mut table = Table::new("fit.csv", &["observable", "individual", "common", "residual"]);
    table.push(row![observable.name(), fit.individual, fit.common, fit.residual]);
    Ok(Outputs {
        tables: vec![cells, table],
        artifacts: Vec::new(),
    })
}

struct FixedN {
    model: BuiltinModel,
    init: InitialData,
    kappa: f64,
    kind: SystemKind,
    speed: Speed,
}

impl FixedN {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let n = n_of(cfg);
        let system = system_of(cfg);
        Ok(Self {
            model: cfg.build_model(),
            init: initial_cloud(cfg, n, system)?,
            kappa: cfg.kappa_rule().kappa(n),
            kind: system.kind(),
            speed: cfg.laplace.as_ref().and_then(|l| l.speed).unwrap_or(SpeedName::N).speed(),
        })
    }

    fn setup<'a>(&'a self, cfg: &ExperimentConfig, functional: &'a Functional) -> LaplaceSetup<'a> {
        LaplaceSetup {
            coeffs: &self.model,
            init: &self.init,
            grid: cfg.grid(),
            kappa: self.kappa,
            functional,
            kind: self.kind,
            speed: self.speed,
        }
    }
}

fn with_radius(cfg: &ExperimentConfig, policy: ControlPolicy) -> ControlPolicy {
    match cfg.control.as_ref().and_then(|c| c.radius) {
        Some(r) => policy.with_radius(r),
        None => policy,
    }
}

fn join(params: &[f64]) -> String {
    params.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

fn laplace<E: Executor>(exec: &E, cfg: &ExperimentConfig, ctx: &Context) -> Result<Outputs> {
    let fixed = FixedN::new(cfg)?;
    let functional = cfg.functional().expect("validated: functional present");
    let setup = fixed.setup(cfg, &functional);
    let replicas = replicas_of(cfg);
    let direct = estimate_laplace_direct(exec, &setup, replicas, derived(cfg, tag::DIRECT).seed())?;
    let mut table = Table::new(
        "laplace.csv",
        &[
            "n",
            "kappa",
            "speed",
            "speed_value",
            "value",
            "stderr",
            "effective_sample_size",
            "degenerate",
            "functional_mean",
            "functional_stderr",
            "functional_bound",
            "replicas",
        ],
    );
    table.push(row![
        setup.n(),
        setup.kappa,
        direct.speed.name(),
        direct.speed_value,
        direct.value,
        direct.stderr,
        direct.effective_sample_size,
        direct.degenerate,
        direct.functional_mean.mean,
        direct.functional_mean.stderr,
        functional.bound(),
        direct.replicas
    ]);

    let spec = cfg.laplace.clone().unwrap_or_default();
    let count = spec.random_controls.unwrap_or(0);
    let control_replicas = spec.control_replicas.unwrap_or(replicas);
    let scale = spec.control_scale.unwrap_or(0.5);
    let family = cfg.control_family();
    let dims = cfg.dims();
    let mut rng = derived(cfg, tag::CONTROLS).sequence(0, 0);
    let mut policies = Vec::new();
    for i in 0..count {
        let params: Vec<f64> = (0..family.dim(dims)).map(|_| rng.uniform_in(-scale, scale)).collect();
        policies.push((format!("random_{i}"), join(&params), family.policy(dims, &params)?));
    }
    if let Some(p) = &ctx.control {
        policies.push(("file".into(), String::new(), p.clone()));
    }
    let mut controls = Table::new(
        "controls.csv",
        &[
            "control",
            "params",
            "individual_cost",
            "common_cost",
            "functional",
            "total",
            "stderr",
            "likelihood_mean",
            "likelihood_stderr",
            "replicas",
        ],
    );
    for (i, (label, params, policy)) in policies.into_iter().enumerate() {
        let policy = with_radius(cfg, policy);
        let seed = derived(cfg, tag::CONTROLS).derive(i as u64).seed();
        let c = control_cost(exec, &setup, &policy, control_replicas, seed)?;
        controls.push(row![
            label,
            params,
            c.individual_cost,
            c.common_cost,
            c.functional,
            c.total,
            c.stderr,
            c.likelihood_mass.mean,
            c.likelihood_mass.stderr,
            c.replicas
        ]);
    }
    Ok(Outputs {
        tables: vec![table, controls],
        artifacts: Vec::new(),
    })
}

fn optimize<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> Result<Outputs> {
    let fixed = FixedN::new(cfg)?;
    let functional = cfg.functional().expect("validated: functional present");
    let setup = fixed.setup(cfg, &functional);
    let family = cfg.control_family();
    let mut settings = cfg.optimize_settings();
    settings.seed = derived(cfg, tag::OPTIMIZE).seed();
    let result = optimize_controls(exec, &setup, &family, &settings)?;
    let mut trace = Table::new("trace.csv", &["evaluation", "phase", "value", "stderr", "best"]);
    for r in &result.trace {
        trace.push(row![r.evaluation, r.phase.name(), r.value, r.stderr, r.best]);
    }
    let direct_replicas = cfg.optimize.as_ref().and_then(|o| o.direct_replicas).unwrap_or(0);
    let direct = if direct_replicas >= 2 {
        Some(estimate_laplace_direct(exec, &setup, direct_replicas, derived(cfg, tag::DIRECT).seed())?)
    } else {
        None
    };
    let c = &result.cost;
    let gap = direct.as_ref().map(|d| c.total - d.value);
    let gap_stderr = direct.as_ref().map(|d| (c.stderr * c.stderr + d.stderr * d.stderr).sqrt());
    let mut table = Table::new(
        "result.csv",
        &[
            "n",
            "kappa",
            "speed_value",
            "params",
            "cost",
            "cost_stderr",
            "individual_cost",
            "common_cost",
            "functional",
            "zero_cost",
            "zero_stderr",
            "fell_back_to_zero",
            "budget_exhausted",
            "evaluations",
            "direct",
            "direct_stderr",
            "gap",
            "gap_stderr",
            "functional_bound",
        ],
    );
    table.push(row![
        setup.n(),
        setup.kappa,
        setup.speed_value()?,
        join(&result.params),
        c.total,
        c.stderr,
        c.individual_cost,
        c.common_cost,
        c.functional,
        result.zero_cost.total,
        result.zero_cost.stderr,
        result.fell_back_to_zero,
        result.budget_exhausted,
        result.evaluations,
        direct.as_ref().map(|d| d.value),
        direct.as_ref().map(|d| d.stderr),
        gap,
        gap_stderr,
        functional.bound()
    ]);
    let control = write_control(&result.policy).map_err(|e| Error::InvalidArgument {
        name: "control",
        reason: e.to_string(),
    })?;
    Ok(Outputs {
        tables: vec![trace, table],
        artifacts: vec![Artifact {
            name: "control.txt".into(),
            bytes: control.into_bytes(),
        }],
    })
}

fn smoothing(cfg: &ExperimentConfig) -> (f64, f64) {
    let spec = cfg.rate.clone().unwrap_or_default();
    (spec.slope.unwrap_or(10.0), spec.cap.unwrap_or(20.0))
}

fn tilt_of(cfg: &ExperimentConfig) -> TiltName {
    cfg.rate.as_ref().and_then(|r| r.tilt).unwrap_or(TiltName::Optimized)
}

fn rare_event<E: Executor>(exec: &E, cfg: &ExperimentConfig, ctx: &Context) -> Result<Outputs> {
    let fixed = FixedN::new(cfg)?;
    let event = cfg.event().expect("validated: event present");
    let mut artifacts = Vec::new();
    let (source, policy) = match (tilt_of(cfg), &ctx.control) {
        (TiltName::None, _) => ("none", ControlPolicy::zero(cfg.dims())),
        (TiltName::File, Some(p)) | (TiltName::Optimized, Some(p)) => ("file", p.clone()),
        (_, None) => {
            let (slope, cap) = smoothing(cfg);
            let penalty = event.smoothed(slope, cap)?;
            let setup = fixed.setup(cfg, &penalty);
            let mut settings = cfg.optimize_settings();
            settings.seed = derived(cfg, tag::OPTIMIZE).seed();
            let result = optimize_controls(exec, &setup, &cfg.control_family(), &settings)?;
            let text = write_control(&result.policy).map_err(|e| Error::InvalidArgument {
                name: "control",
                reason: e.to_string(),
            })?;
            artifacts.push(Artifact {
                name: "control.txt".into(),
                bytes: text.into_bytes(),
            });
            ("optimized", result.policy)
        }
    };
    let policy = with_radius(cfg, policy);
    let placeholder = Functional::constant(0.0);
    let setup = fixed.setup(cfg, &placeholder);
    let est = importance_sampling_probability(
        exec,
        &setup,
        &event,
        &policy,
        replicas_of(cfg),
        derived(cfg, tag::IMPORTANCE).seed(),
    )?;
    let mut table = Table::new(
        "probability.csv",
        &[
            "event",
            "n",
            "kappa",
            "control",
            "probability",
            "stderr",
            "hits",
            "plain_probability",
            "plain_stderr",
            "plain_hits",
            "variance_reduction",
            "replicas",
        ],
    );
    table.push(row![
        event.describe(),
        setup.n(),
        setup.kappa,
        source,
        est.probability,
        est.stderr,
        est.hits,
        est.plain_probability,
        est.plain_stderr,
        est.plain_hits,
        est.variance_reduction,
        est.replicas
    ]);
    Ok(Outputs {
        tables: vec![table],
        artifacts,
    })
}

fn rate_experiment<'a>(
    cfg: &ExperimentConfig,
    model: &'a dyn CoefficientSet,
    start: &'a [f64],
    event: &'a Event,
    rule: KappaRule,
) -> RateExperiment<'a> {
    let tilt = match tilt_of(cfg) {
        TiltName::None => Tilt::None,
        _ => {
            let (slope, cap) = smoothing(cfg);
            Tilt::Optimized {
                family: cfg.control_family(),
                settings: cfg.optimize_settings(),
                slope,
                cap,
            }
        }
    };
    RateExperiment {
        coeffs: model,
        start,
        event,
        rule,
        grid: cfg.grid(),
        kind: SystemKind::Unweighted,
        replicas: replicas_of(cfg),
        tilt,
        seed: cfg.seed,
    }
}

/// Closed-form rate when the experiment is the scalar pure-Brownian
/// endpoint-mean event started from a point.
fn oracle(cfg: &ExperimentConfig, rule: &KappaRule) -> Option<f64> {
    let d = cfg.dims();
    if cfg.model.family != FamilyName::PureBrownian || d.d != 1 {
        return None;
    }
    let event = cfg.event.as_ref()?;
    if event.kind != EventName::EndpointMeanAtLeast {
        return None;
    }
    let InitialLaw::Dirac { point } = cfg.initial_law() else {
        return None;
    };
    let a = event.threshold? - point[0];
    if a <= 0.0 {
        return Some(0.0);
    }
    let (regime, lambda) = match *rule {
        KappaRule::Zero | KappaRule::Subcritical { .. } => (OracleRegime::IndividualOnly, 0.0),
        KappaRule::Critical { lambda } => (OracleRegime::Critical, lambda),
        KappaRule::Supercritical { .. } => (OracleRegime::CommonOnly, 0.0),
    };
    quadratic_rate_oracle(a, cfg.grid.horizon, lambda, regime).ok()
}

fn rate<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.build_model();
    let start = cfg.start_point();
    let event = cfg.event().expect("validated: event present");
    let rule = cfg.kappa_rule();
    let exp = rate_experiment(cfg, &model, &start, &event, rule);
    let est = estimate_decay_rate(exec, &exp, &cfg.n_list.clone().unwrap_or_default())?;
    let mut table = Table::new(
        "rate.csv",
        &[
            "n",
            "kappa",
            "speed_value",
            "probability",
            "stderr",
            "hits",
            "rate",
            "rate_stderr",
            "variance_reduction",
            "control_params",
        ],
    );
    for p in &est.points {
        table.push(row![
            p.n,
            p.kappa,
            p.speed_value,
            p.probability,
            p.stderr,
            p.hits,
            p.rate,
            p.rate_stderr,
            p.variance_reduction,
            join(&p.control_params)
        ]);
    }
    let truth = oracle(cfg, &rule);
    let mut summary = Table::new(
        "summary.csv",
        &["event", "rule", "speed", "extrapolated", "extrapolated_stderr", "oracle", "relative_error"],
    );
    summary.push(row![
        est.event.clone(),
        rule.describe(),
        est.speed.name(),
        est.extrapolated,
        est.extrapolated_stderr,
        truth,
        truth.map(|o| (est.extrapolated - o).abs() / o)
    ]);
    Ok(Outputs {
        tables: vec![table, summary],
        artifacts: Vec::new(),
    })
}

fn regimes<E: Executor>(exec: &E, cfg: &ExperimentConfig) -> Result<Outputs> {
    let model = cfg.build_model();
    let start = cfg.start_point();
    let event = cfg.event().expect("validated: event present");
    let rules = cfg.rules();
    let exp = rate_experiment(cfg, &model, &start, &event, rules[0]);
    let results = regime_contrast(exec, &exp, &rules, &cfg.n_list.clone().unwrap_or_default())?;
    let mut out = Outputs::default();
    let mut summary = Table::new(
        "summary.csv",
        &[
            "rule",
            "speed",
            "correct_last_change",
            "wrong_total_change",
            "wrong_monotone",
            "extrapolated",
            "extrapolated_stderr",
            "oracle",
        ],
    );
    for (i, s) in results.iter().enumerate() {
        let mut t = Table::new(
            format!("regime_{i}.csv"),
            &[
                "rule",
                "n",
                "kappa",
                "neg_log_probability",
                "stderr",
                "by_particles",
                "by_inverse_kappa_squared",
            ],
        );
        for r in &s.rows {
            t.push(row![
                s.rule.describe(),
                r.n,
                r.kappa,
                r.neg_log_probability,
                r.stderr,
                r.by_particles,
                r.by_inverse_kappa_squared
            ]);
        }
        out.tables.push(t);
        summary.push(row![
            s.rule.describe(),
            s.speed.name(),
            s.correct_last_change,
            s.wrong_total_change,
            s.wrong_monotone,
            s.estimate.extrapolated,
            s.estimate.extrapolated_stderr,
            oracle(cfg, &s.rule)
        ]);
    }
    out.tables.push(summary);
    Ok(out)
}
