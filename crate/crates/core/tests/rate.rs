mod common;

use common::Threads;
use meanfield_core::functional::Event;
use meanfield_core::laplace::Speed;
use meanfield_core::math::normal_sf;
use meanfield_core::model::{BuiltinFamily, BuiltinModel, ModelDims};
use meanfield_core::rate::{
    estimate_decay_rate, quadratic_rate_numerical, quadratic_rate_oracle, regime_speed, KappaRule, OracleRegime,
    RateExperiment, Tilt,
};
use meanfield_core::simulate::{SystemKind, TimeGrid};
use meanfield_core::Error;
use proptest::prelude::*;

#[test]
fn regime_examples() {
    let r = regime_speed(&KappaRule::Critical { lambda: 2.0 });
    assert_eq!((r.speed, r.lambda), (Speed::Particles, Some(2.0)));
    assert_eq!(regime_speed(&KappaRule::Subcritical { c: 1.0, p: 1.0 }).speed, Speed::Particles);
    let rule = KappaRule::Supercritical { c: 1.0, p: 0.25 };
    assert_eq!(regime_speed(&rule).speed, Speed::InverseKappaSquared);
    let a = Speed::InverseKappaSquared.value(100, rule.kappa(100)).unwrap();
    assert!((a - 10.0).abs() < 1e-12);
}

#[test]
fn oracle_limits() {
    assert!((quadratic_rate_oracle(1.0, 1.0, 1.0, OracleRegime::Critical).unwrap() - 0.25).abs() < 1e-15);
    assert!((quadratic_rate_oracle(0.8, 1.0, 1.0, OracleRegime::Critical).unwrap() - 0.16).abs() < 1e-15);
    let tiny = quadratic_rate_numerical(1.0, 1.0, 1e-4, OracleRegime::Critical, 64).unwrap();
    assert!((tiny - 0.5).abs() < 1e-6);
    let no_common = quadratic_rate_numerical(1.0, 1.0, 0.0, OracleRegime::IndividualOnly, 64).unwrap();
    assert!((no_common - 0.5).abs() < 1e-12);
    assert!(matches!(quadratic_rate_oracle(1.0, 0.0, 1.0, OracleRegime::Critical), Err(Error::InvalidArgument { .. })));
}

#[test]
fn whole_space_has_zero_rate() {
    let model = BuiltinModel::new(BuiltinFamily::PureBrownian, ModelDims::scalar()).unwrap();
    let exp = RateExperiment {
        coeffs: &model,
        start: &[0.0],
        event: &Event::WholeSpace,
        rule: KappaRule::Critical { lambda: 1.0 },
        grid: TimeGrid::new(1.0, 2).unwrap(),
        kind: SystemKind::Unweighted,
        replicas: 20,
        tilt: Tilt::None,
        seed: 0,
    };
    let est = estimate_decay_rate(&Threads(2), &exp, &[10, 20]).unwrap();
    assert!(est.points.iter().all(|p| p.rate == 0.0 && p.probability == 1.0));
    assert_eq!(est.extrapolated, 0.0);
}

#[test]
fn plain_estimates_match_the_gaussian_tail() {
    let model = BuiltinModel::new(BuiltinFamily::PureBrownian, ModelDims::scalar()).unwrap();
    let a = 0.3;
    let event = Event::EndpointMeanAtLeast { coord: 0, threshold: a };
    let exp = RateExperiment {
        coeffs: &model,
        start: &[0.0],
        event: &event,
        rule: KappaRule::Critical { lambda: 1.0 },
        grid: TimeGrid::new(1.0, 2).unwrap(),
        kind: SystemKind::Unweighted,
        replicas: 4000,
        tilt: Tilt::None,
        seed: 1,
    };
    let est = estimate_decay_rate(&Threads(8), &exp, &[10, 20]).unwrap();
    for p in &est.points {
        let exact = normal_sf(a / (2.0 / p.n as f64).sqrt());
        assert!((p.probability - exact).abs() <= 3.0 * p.stderr, "{p:?} vs {exact}");
    }
}

#[test]
fn unreachable_event_without_tilt_is_an_error() {
    let model = BuiltinModel::new(BuiltinFamily::PureBrownian, ModelDims::scalar()).unwrap();
    let event = Event::EndpointMeanAtLeast { coord: 0, threshold: 5.0 };
    let exp = RateExperiment {
        coeffs: &model,
        start: &[0.0],
        event: &event,
        rule: KappaRule::Critical { lambda: 1.0 },
        grid: TimeGrid::new(1.0, 2).unwrap(),
        kind: SystemKind::Unweighted,
        replicas: 100,
        tilt: Tilt::None,
        seed: 1,
    };
    assert!(matches!(estimate_decay_rate(&Threads(2), &exp, &[50]), Err(Error::ZeroProbability { n: 50 })));
}

proptest! {
    #[test]
    fn oracle_monotonicity(a in 0.01f64..3.0, t in 0.1f64..5.0, l in 0.1f64..5.0, scale in 1.01f64..2.0) {
        let base = quadratic_rate_oracle(a, t, l, OracleRegime::Critical).unwrap();
        prop_assert!(quadratic_rate_oracle(a * scale, t, l, OracleRegime::Critical).unwrap() > base);
        prop_assert!(quadratic_rate_oracle(-a * scale, t, l, OracleRegime::Critical).unwrap() > base);
        prop_assert!(quadratic_rate_oracle(a, t * scale, l, OracleRegime::Critical).unwrap() < base);
        prop_assert!(quadratic_rate_oracle(a, t, l * scale, OracleRegime::Critical).unwrap() < base);
        prop_assert!(base <= quadratic_rate_oracle(a, t, 0.0, OracleRegime::IndividualOnly).unwrap());
    }

    #[test]
    fn oracle_agrees_with_numerical_minimum(a in -3.0f64..3.0, t in 0.1f64..5.0, l in 0.1f64..5.0) {
        let exact = quadratic_rate_oracle(a, t, l, OracleRegime::Critical).unwrap();
        let num = quadratic_rate_numerical(a, t, l, OracleRegime::Critical, 64).unwrap();
        prop_assert!((num - exact).abs() <= 1e-6 * exact.max(1e-300));
    }
}
