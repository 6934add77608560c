//! The bounded-Lipschitz distance
//! `d_BL(μ, ν) = sup { |⟨f, μ⟩ − ⟨f, ν⟩| : ‖f‖∞ ≤ 1, Lip(f) ≤ 1 }`.
//!
//! For finite atomic measures the supremum is a linear program over the values
//! of `f` on the joint support. Its dual is a transport problem: the signed
//! excess `μ − ν` is moved between atoms at cost `min(‖x − y‖, 2)`, and any
//! excess may also be created or destroyed at unit cost. [`dbl_distance`]
//! solves that transport exactly; [`Dictionary`] gives a cheap lower bound by
//! maximizing over a fixed family of admissible test functions.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math::{clamp, distance};
use crate::measure::EmpiricalMeasure;
use crate::rng::NoisePlan;
use crate::transport::Transport;

/// Default cap on the merged support size for the exact solver.
pub const DEFAULT_LP_CAP: usize = 512;

fn check_dims(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    Ok(())
}

/// Exact `d_BL(μ, ν)` with the default support cap.
pub fn dbl_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    dbl_distance_capped(mu, nu, DEFAULT_LP_CAP)
}

/// Exact `d_BL(μ, ν)`; fails when the merged support exceeds `cap` atoms.
pub fn dbl_distance_capped(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cap: usize) -> Result<f64> {
    check_dims(mu, nu)?;
    let raw = mu.len() + nu.len();
    // Cheap rejection before sorting anything huge.
    if raw > 4 * cap.max(1) {
        return Err(Error::SupportTooLarge { size: raw, cap });
    }

    // Merge coincident atoms into signed excess w = μ − ν.
    let mut entries: Vec<(&[f64], f64)> = mu
        .iter()
        .chain(nu.iter().map(|(x, w)| (x, -w)))
        .collect();
    entries.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    let mut points: Vec<&[f64]> = Vec::new();
    let mut excess: Vec<f64> = Vec::new();
    for (x, w) in entries {
        match points.last() {
            Some(last) if *last == x => *excess.last_mut().unwrap() += w,
            _ => {
                points.push(x);
                excess.push(w);
            }
        }
    }
    if points.len() > cap {
        return Err(Error::SupportTooLarge {
            size: points.len(),
            cap,
        });
    }

    let positive: Vec<usize> = (0..points.len()).filter(|&i| excess[i] > 0.0).collect();
    let negative: Vec<usize> = (0..points.len()).filter(|&i| excess[i] < 0.0).collect();
    let surplus: f64 = positive.iter().map(|&i| excess[i]).sum();
    let deficit: f64 = negative.iter().map(|&i| -excess[i]).sum();
    if surplus == 0.0 && deficit == 0.0 {
        return Ok(0.0);
    }

    // Sources: positive atoms plus a ground node supplying the deficit.
    // Sinks: negative atoms plus a ground node absorbing the surplus.
    let ns = positive.len() + 1;
    let nt = negative.len() + 1;
    let mut cost = vec![0.0; ns * nt];
    for (a, &i) in positive.iter().enumerate() {
        for (b, &j) in negative.iter().enumerate() {
            cost[a * nt + b] = distance(points[i], points[j]).min(2.0);
        }
        cost[a * nt + nt - 1] = 1.0;
    }
    for b in 0..negative.len() {
        cost[(ns - 1) * nt + b] = 1.0;
    }
    cost[(ns - 1) * nt + nt - 1] = 0.0;

    let mut supply: Vec<f64> = positive.iter().map(|&i| excess[i]).collect();
    supply.push(deficit);
    let mut demand: Vec<f64> = negative.iter().map(|&j| -excess[j]).collect();
    demand.push(surplus);

    let value = Transport::new(ns, nt, cost).solve(&supply, &demand);
    Ok(value.max(0.0))
}

/// A bounded, 1-Lipschitz test function.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `f ≡ 1`.
    Constant,
    /// `clamp(⟨w, x⟩ + offset, −1, 1)` with `‖w‖ ≤ 1`.
    Affine { direction: Vec<f64>, offset: f64 },
    /// `clamp(height − ‖x − center‖, −1, 1)`.
    Radial { center: Vec<f64>, height: f64 },
}

impl TestFunction {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant => 1.0,
            TestFunction::Affine { direction, offset } => {
                clamp(crate::math::dot(direction, x) + offset, -1.0, 1.0)
            }
            TestFunction::Radial { center, height } => clamp(height - distance(x, center), -1.0, 1.0),
        }
    }
}

/// A fixed family of admissible test functions.
///
/// `distance(μ, ν) = max_f |⟨f, μ⟩ − ⟨f, ν⟩|` is a lower bound on `d_BL(μ, ν)`.
/// Keeping the dictionary fixed makes distances comparable across ensembles of
/// different sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    dim: usize,
    functions: Vec<TestFunction>,
}

impl Dictionary {
    pub fn from_functions(dim: usize, functions: Vec<TestFunction>) -> Self {
        Self { dim, functions }
    }

    /// Seeded dictionary adapted to the box `center ± scale`.
    ///
    /// Always contains the constant and the coordinate clips
    /// `clamp(x_k − center_k, −1, 1)`; the rest alternates random clipped
    /// ramps (random unit direction, slope in (0, 1]) and radial bumps.
    pub fn generate(center: &[f64], scale: f64, size: usize, seed: u64) -> Self {
        let dim = center.len();
        let scale = scale.max(1e-9);
        let mut functions = Vec::with_capacity(size.max(1 + dim));
        functions.push(TestFunction::Constant);
        for k in 0..dim {
            let mut direction = vec![0.0; dim];
            direction[k] = 1.0;
            functions.push(TestFunction::Affine {
                direction,
                offset: -center[k],
            });
        }
        let mut rng = NoisePlan::new(seed).derive(0xD1C7).sequence(0, 0);
        let mut flip = false;
        while functions.len() < size {
            flip = !flip;
            if flip {
                let mut direction: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let norm = crate::math::norm(&direction).max(1e-300);
                let slope = if rng.uniform() < 0.5 {
                    1.0
                } else {
                    rng.uniform_in(0.1, 1.0)
                };
                for w in direction.iter_mut() {
                    *w *= slope / norm;
                }
                let shift = rng.uniform_in(-scale - 1.0, scale + 1.0);
                let offset = -crate::math::dot(&direction, center) + shift * slope;
                functions.push(TestFunction::Affine { direction, offset });
            } else {
                let c: Vec<f64> = center
                    .iter()
                    .map(|m| m + scale * rng.uniform_in(-1.0, 1.0))
                    .collect();
                let height = rng.uniform_in(-0.5, 1.0 + scale);
                functions.push(TestFunction::Radial { center: c, height });
            }
        }
        Self { dim, functions }
    }

    /// Dictionary adapted to the joint bounding box of a set of measures.
    pub fn covering<'a>(
        measures: impl IntoIterator<Item = &'a EmpiricalMeasure>,
        size: usize,
        seed: u64,
    ) -> Option<Self> {
        let mut low: Vec<f64> = Vec::new();
        let mut high: Vec<f64> = Vec::new();
        for mu in measures {
            if low.is_empty() {
                low = vec![f64::INFINITY; mu.dim()];
                high = vec![f64::NEG_INFINITY; mu.dim()];
            }
            for (x, _) in mu.iter() {
                for k in 0..x.len() {
                    low[k] = low[k].min(x[k]);
                    high[k] = high[k].max(x[k]);
                }
            }
        }
        if low.is_empty() || low.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let center: Vec<f64> = low.iter().zip(&high).map(|(l, h)| 0.5 * (l + h)).collect();
        let scale = low
            .iter()
            .zip(&high)
            .map(|(l, h)| 0.5 * (h - l))
            .fold(0.0, f64::max)
            .max(1.0);
        Some(Self::generate(&center, scale, size, seed))
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[TestFunction] {
        &self.functions
    }

    /// `⟨f, μ⟩` for every dictionary member.
    pub fn integrals(&self, mu: &EmpiricalMeasure) -> Result<Vec<f64>> {
        if mu.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: mu.dim(),
            });
        }
        Ok(self.functions.iter().map(|f| mu.integrate(|x| f.eval(x))).collect())
    }

    /// `max_f |a_f − b_f|` for precomputed integrals.
    pub fn distance_from_integrals(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn distance(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
        check_dims(mu, nu)?;
        Ok(Self::distance_from_integrals(&self.integrals(mu)?, &self.integrals(nu)?))
    }
}

/// Seeded dictionary lower bound on `d_BL(μ, ν)`, never above the exact value.
pub fn dbl_distance_approx(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    dictionary_size: usize,
    seed: u64,
) -> Result<f64> {
    check_dims(mu, nu)?;
    let dictionary = Dictionary::covering([mu, nu], dictionary_size.max(1), seed)
        .ok_or(crate::error::invalid("measures", "empty support"))?;
    dictionary.distance(mu, nu)
}

/// Distance used where clouds may exceed the exact cap: exact when both fit,
/// otherwise the supplied dictionary bound.
pub fn flow_distance(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    dictionary: &Dictionary,
) -> Result<f64> {
    if mu.len() + nu.len() <= DEFAULT_LP_CAP {
        dbl_distance(mu, nu)
    } else {
        dictionary.distance(mu, nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac(x: f64, m: f64) -> EmpiricalMeasure {
        EmpiricalMeasure::dirac(&[x], m).unwrap()
    }

    #[test]
    fn unit_dirac_distances() {
        assert_eq!(dbl_distance(&dirac(0.0, 1.0), &dirac(0.0, 1.0)).unwrap(), 0.0);
        assert!((dbl_distance(&dirac(0.0, 1.0), &dirac(1.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((dbl_distance(&dirac(0.0, 1.0), &dirac(5.0, 1.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((dbl_distance(&dirac(0.0, 1.0), &dirac(0.0, 0.5)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = EmpiricalMeasure::dirac(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(
            dbl_distance(&a, &dirac(0.0, 1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cap_is_enforced() {
        let atoms: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let mu = EmpiricalMeasure::uniform(1, atoms.clone()).unwrap();
        let nu = EmpiricalMeasure::uniform(1, atoms.iter().map(|x| x + 0.5).collect()).unwrap();
        assert!(matches!(
            dbl_distance(&mu, &nu),
            Err(Error::SupportTooLarge { size: 600, cap: 512 })
        ));
        assert!(dbl_distance_capped(&mu, &nu, 600).is_ok());
    }

    #[test]
    fn approx_attains_exact_for_two_diracs() {
        let approx = dbl_distance_approx(&dirac(0.0, 1.0), &dirac(1.0, 1.0), 8, 1).unwrap();
        assert!(approx >= 1.0 - 1e-9);
        let dict = Dictionary::from_functions(
            1,
            vec![TestFunction::Affine {
                direction: vec![1.0],
                offset: 0.0,
            }],
        );
        let d = dict.distance(&dirac(0.0, 1.0), &dirac(1.0, 1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dictionary_members_are_admissible() {
        let dict = Dictionary::generate(&[0.3, -1.0], 4.0, 64, 5);
        let mut rng = NoisePlan::new(2).sequence(0, 0);
        for f in dict.functions() {
            for _ in 0..50 {
                let x = [rng.normal() * 5.0, rng.normal() * 5.0];
                let y = [x[0] + rng.normal(), x[1] + rng.normal()];
                let (fx, fy) = (f.eval(&x), f.eval(&y));
                assert!(fx.abs() <= 1.0);
                assert!((fx - fy).abs() <= distance(&x, &y) * (1.0 + 1e-12));
            }
        }
    }
}
