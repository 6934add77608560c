use meanfield_core::measure::EmpiricalMeasure;
use meanfield_core::metric::{dbl_distance, dbl_distance_approx, dbl_distance_capped, Dictionary, TestFunction};
use meanfield_core::rng::NoisePlan;
use meanfield_core::Error;
use proptest::prelude::*;

/// Primal LP for d_BL solved by a dense tableau simplex with Bland's rule.
///
/// Variables `g_j = f(x_j) + 1 ∈ [0, 2]`; constraints `g_j ≤ 2` and
/// `g_j − g_l ≤ ‖x_j − x_l‖`. All right-hand sides are nonnegative so the
/// slack basis is feasible at the origin.
fn primal_dbl(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut signed: Vec<f64> = Vec::new();
    for (measure, sign) in [(mu, 1.0), (nu, -1.0)] {
        for (x, w) in measure.iter() {
            points.push(x.to_vec());
            signed.push(sign * w);
        }
    }
    let s = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..s {
        let mut r = vec![0.0; s];
        r[j] = 1.0;
        rows.push((r, 2.0));
    }
    for j in 0..s {
        for l in 0..s {
            if j != l {
                let mut r = vec![0.0; s];
                r[j] = 1.0;
                r[l] = -1.0;
                rows.push((r, dist(&points[j], &points[l])));
            }
        }
    }
    let m = rows.len();
    let width = s + m + 1;
    let mut tab = vec![vec![0.0; width]; m + 1];
    for (i, (r, rhs)) in rows.iter().enumerate() {
        tab[i][..s].copy_from_slice(r);
        tab[i][s + i] = 1.0;
        tab[i][width - 1] = *rhs;
    }
    // Objective row holds reduced costs of maximize Σ w_j g_j.
    for j in 0..s {
        tab[m][j] = -signed[j];
    }
    let mut basis: Vec<usize> = (s..s + m).collect();
    while let Some(col) = (0..width - 1).find(|&c| tab[m][c] < -1e-12) {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            if tab[i][col] > 1e-12 {
                let ratio = tab[i][width - 1] / tab[i][col];
                match best {
                    Some((r, b)) if ratio > r + 1e-15 || (ratio >= r - 1e-15 && basis[i] > basis[b]) => {}
                    _ => best = Some((ratio, i)),
                }
            }
        }
        let (_, row) = best.expect("bounded program");
        let p = tab[row][col];
        for v in tab[row].iter_mut() {
            *v /= p;
        }
        let pivot = tab[row].clone();
        for (i, line) in tab.iter_mut().enumerate() {
            if i != row && line[col] != 0.0 {
                let f = line[col];
                for (v, q) in line.iter_mut().zip(&pivot) {
                    *v -= f * q;
                }
            }
        }
        basis[row] = col;
    }
    // max Σ w (g − 1); the constant part is −Σ w_j.
    let value = tab[m][width - 1] - signed.iter().sum::<f64>();
    // d_BL is the sup of |·|; f ↦ −f is also admissible so the max is already nonnegative.
    value.max(0.0)
}

fn random_measure(seed: u64, atoms: usize, dim: usize, spread: f64) -> EmpiricalMeasure {
    let mut rng = NoisePlan::new(seed).sequence(0, 0);
    let points: Vec<f64> = (0..atoms * dim).map(|_| spread * rng.normal()).collect();
    let weights: Vec<f64> = (0..atoms).map(|_| rng.uniform_in(0.0, 0.5)).collect();
    EmpiricalMeasure::new(dim, points, weights).unwrap()
}

fn dirac(x: &[f64], m: f64) -> EmpiricalMeasure {
    EmpiricalMeasure::dirac(x, m).unwrap()
}

#[test]
fn unit_dirac_examples() {
    assert_eq!(dbl_distance(&dirac(&[0.0], 1.0), &dirac(&[0.0], 1.0)).unwrap(), 0.0);
    assert!((dbl_distance(&dirac(&[0.0], 1.0), &dirac(&[1.0], 1.0)).unwrap() - 1.0).abs() < 1e-12);
    assert!((dbl_distance(&dirac(&[0.0], 1.0), &dirac(&[5.0], 1.0)).unwrap() - 2.0).abs() < 1e-12);
    assert!((dbl_distance(&dirac(&[0.0], 1.0), &dirac(&[0.0], 0.5)).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn eight_atom_pairs_match_primal_program() {
    for seed in 0..12 {
        let mu = random_measure(2 * seed, 8, 2, 1.0);
        let nu = random_measure(2 * seed + 1, 8, 2, 1.0);
        let exact = dbl_distance(&mu, &nu).unwrap();
        let oracle = primal_dbl(&mu, &nu);
        assert!((exact - oracle).abs() <= 1e-6, "seed {seed}: {exact} vs {oracle}");
    }
}

#[test]
fn three_atom_pair_matches_grid_search() {
    // Discretized f on a 0.01 grid: the feasible maximum is within one grid cell
    // of the LP value, which bounds the grid error by the total variation.
    let mu = EmpiricalMeasure::new(1, vec![0.0, 0.7], vec![0.6, 0.3]).unwrap();
    let nu = dirac(&[0.3], 0.8);
    let pts: [f64; 3] = [0.0, 0.7, 0.3];
    let w: [f64; 3] = [0.6, 0.3, -0.8];
    let grid: Vec<f64> = (0..=200).map(|i| -1.0 + 0.01 * i as f64).collect();
    let mut best: f64 = 0.0;
    for &a in &grid {
        for &b in &grid {
            if (a - b).abs() > (pts[0] - pts[1]).abs() + 1e-12 {
                continue;
            }
            for &c in &grid {
                if (a - c).abs() > (pts[0] - pts[2]).abs() + 1e-12 || (b - c).abs() > (pts[1] - pts[2]).abs() + 1e-12 {
                    continue;
                }
                best = best.max((w[0] * a + w[1] * b + w[2] * c).abs());
            }
        }
    }
    let exact = dbl_distance(&mu, &nu).unwrap();
    assert!(exact + 1e-12 >= best);
    assert!(exact - best <= 0.02, "{exact} vs {best}");
    assert!((exact - primal_dbl(&mu, &nu)).abs() < 1e-9);
}

#[test]
fn cap_error_points_to_the_dictionary_bound() {
    let mu = random_measure(1, 10, 1, 1.0);
    let nu = random_measure(2, 10, 1, 1.0);
    assert!(matches!(dbl_distance_capped(&mu, &nu, 8), Err(Error::SupportTooLarge { .. })));
    let msg = dbl_distance_capped(&mu, &nu, 8).unwrap_err().to_string();
    assert!(msg.contains("dbl_distance_approx"), "{msg}");
}

#[test]
fn dimension_mismatch() {
    assert!(dbl_distance(&dirac(&[0.0], 1.0), &dirac(&[0.0, 0.0], 1.0)).is_err());
    assert!(dbl_distance_approx(&dirac(&[0.0], 1.0), &dirac(&[0.0, 0.0], 1.0), 8, 0).is_err());
}

#[test]
fn clip_member_attains_unit_dirac_value() {
    let dict = Dictionary::from_functions(
        1,
        vec![TestFunction::Affine {
            direction: vec![1.0],
            offset: 0.0,
        }],
    );
    let d = dict.distance(&dirac(&[0.0], 1.0), &dirac(&[1.0], 1.0)).unwrap();
    assert!(d >= 1.0 - 1e-9);
    assert!(dbl_distance_approx(&dirac(&[0.0], 1.0), &dirac(&[1.0], 1.0), 16, 3).unwrap() >= 1.0 - 1e-9);
}

fn measure_strategy(dim: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec((prop::collection::vec(-3.0f64..3.0, dim), 0.0f64..1.0), 1..7).prop_map(move |atoms| {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (x, w) in atoms {
            points.extend(x);
            weights.push(w);
        }
        EmpiricalMeasure::new(dim, points, weights).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_axioms(a in measure_strategy(2), b in measure_strategy(2), c in measure_strategy(2)) {
        let ab = dbl_distance(&a, &b).unwrap();
        let ba = dbl_distance(&b, &a).unwrap();
        let ac = dbl_distance(&a, &c).unwrap();
        let cb = dbl_distance(&c, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= ac + cb + 1e-9);
        prop_assert!(ab <= a.mass() + b.mass() + 1e-12);
        prop_assert!(dbl_distance(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn dictionary_never_exceeds_exact(a in measure_strategy(2), b in measure_strategy(2), seed in 0u64..1000) {
        let exact = dbl_distance(&a, &b).unwrap();
        let approx = dbl_distance_approx(&a, &b, 64, seed).unwrap();
        prop_assert!(approx <= exact + 1e-9, "{} > {}", approx, exact);
    }

    #[test]
    fn same_point_different_mass(x in -5.0f64..5.0, a in 0.0f64..2.0, b in 0.0f64..2.0) {
        let d = dbl_distance(&dirac(&[x], a), &dirac(&[x], b)).unwrap();
        prop_assert!((d - (a - b).abs()).abs() <= 1e-12);
    }

    #[test]
    fn matches_primal_program(a in measure_strategy(1), b in measure_strategy(1)) {
        let exact = dbl_distance(&a, &b).unwrap();
        prop_assert!((exact - primal_dbl(&a, &b)).abs() <= 1e-7);
    }
}
