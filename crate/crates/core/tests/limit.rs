mod common;

use common::Threads;
use meanfield_core::limit::{solve_mckean_vlasov, solve_weighted_limit, FixedPointSettings, PicardSolver};
use meanfield_core::metric::dbl_distance;
use meanfield_core::model::{BuiltinFamily, BuiltinModel, InitialLaw, ModelDims, WeightCoefficients, WeightLaw};
use meanfield_core::simulate::TimeGrid;

fn scalar(family: BuiltinFamily) -> BuiltinModel {
    BuiltinModel::new(family, ModelDims::scalar()).unwrap()
}

fn settings(n_ref: usize) -> FixedPointSettings {
    FixedPointSettings {
        n_ref,
        seed: 17,
        ..Default::default()
    }
}

#[test]
fn ou_variance_matches_closed_form() {
    let model = scalar(BuiltinFamily::OrnsteinUhlenbeck {
        reversion: 1.0,
        level: 0.0,
        sigma: 1.0,
        alpha: 0.0,
    });
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let law = InitialLaw::Dirac { point: vec![0.0] };
    let (flow, report) = solve_mckean_vlasov(&Threads(8), &model, &law, grid, &settings(20_000)).unwrap();
    assert!(report.converged);
    assert_eq!(report.distances[1], 0.0);
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let observed = flow.terminal().variance_coord(0);
    assert!((observed / exact - 1.0).abs() < 0.05, "{observed} vs {exact}");
}

#[test]
fn linear_mean_field_limit_keeps_zero_mean() {
    let model = scalar(BuiltinFamily::LinearMeanField {
        reversion: 1.0,
        coupling: 1.0,
        sigma: 1.0,
        alpha: 0.0,
    });
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let law = InitialLaw::Dirac { point: vec![0.0] };
    let n_ref = 20_000;
    let (flow, report) = solve_mckean_vlasov(&Threads(8), &model, &law, grid, &settings(n_ref)).unwrap();
    assert!(report.converged, "{report:?}");
    for (j, mu) in flow.measures().iter().enumerate() {
        let se = (mu.variance_coord(0) / n_ref as f64).sqrt();
        assert!(mu.barycenter_coord(0).abs() <= 3.0 * se + 1e-15, "step {j}");
    }
}

#[test]
fn converged_flow_is_stable_under_one_more_map() {
    let model = scalar(BuiltinFamily::LinearMeanField {
        reversion: 1.0,
        coupling: 0.5,
        sigma: 0.8,
        alpha: 0.0,
    });
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let law = InitialLaw::Gaussian { mean: vec![1.0], std: 0.5 };
    let s = settings(200);
    let solver = PicardSolver::new(&model, &law, None, grid, s.n_ref, s.seed).unwrap();
    let (flow, report) = solver.solve(&Threads(4), &s).unwrap();
    assert!(report.converged);
    let next = solver.step(&Threads(4), &flow).unwrap();
    let moved = flow
        .measures()
        .iter()
        .zip(next.measures())
        .map(|(a, b)| dbl_distance(a, b).unwrap())
        .fold(0.0, f64::max);
    assert!(moved <= 2.0 * s.tolerance, "{moved}");
}

#[test]
fn weighted_limit_first_moment() {
    let c0 = 0.5;
    let x0 = 0.8;
    let model = scalar(BuiltinFamily::Constant {
        drift: 0.0,
        sigma: 1.0,
        alpha: 0.0,
    })
    .with_weights(WeightCoefficients {
        rate: c0,
        ..Default::default()
    });
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let law = InitialLaw::Dirac { point: vec![x0] };
    let n_ref = 20_000;
    let (flow, _) = solve_weighted_limit(&Threads(8), &model, &law, WeightLaw::Constant(1.0), grid, &settings(n_ref)).unwrap();
    let terminal = flow.terminal();
    assert!((terminal.mass() - c0.exp()).abs() < 1e-12);
    let value = terminal.integrate(|x| x[0]);
    let se = c0.exp() * (1.0 / n_ref as f64).sqrt();
    assert!((value - c0.exp() * x0).abs() <= 3.0 * se, "{value}");
}

#[test]
fn weighted_limit_without_weight_dynamics_reduces() {
    let model = scalar(BuiltinFamily::LinearMeanField {
        reversion: 1.0,
        coupling: 0.5,
        sigma: 1.0,
        alpha: 0.0,
    });
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let law = InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 };
    let s = settings(300);
    let (plain, _) = solve_mckean_vlasov(&Threads(3), &model, &law, grid, &s).unwrap();
    let (weighted, _) = solve_weighted_limit(&Threads(3), &model, &law, WeightLaw::Constant(1.0), grid, &s).unwrap();
    for (a, b) in plain.measures().iter().zip(weighted.measures()) {
        assert_eq!(a.atoms(), b.atoms());
    }
}
