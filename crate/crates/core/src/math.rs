//! Small numerical helpers shared across modules.

use alloc::vec::Vec;

/// Upper tail of the standard normal distribution, `P(Z >= z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[inline]
pub fn clamp(x: f64, low: f64, high: f64) -> f64 {
    x.max(low).min(high)
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Mean, unbiased sample variance and standard error, accumulated in order.
pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let count = values.len();
    if count == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            variance: f64::NAN,
            stderr: f64::NAN,
            count,
        };
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let variance = if count > 1 {
        m2 / (count - 1) as f64
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        variance,
        stderr: libm::sqrt(variance / count as f64),
        count,
    }
}

/// Sample covariance of two equally long sequences.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean_estimate(a).mean;
    let mb = mean_estimate(b).mean;
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Log-mean-exp of `exponents` with max subtraction, plus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMeanExp {
    /// `log((1/R) Σ exp(z_r))`.
    pub value: f64,
    /// Standard error of `value` by the delta method.
    pub stderr: f64,
    pub max_exponent: f64,
    /// `(Σ w)^2 / Σ w^2` with `w_r = exp(z_r - max)`.
    pub effective_sample_size: f64,
}

pub fn log_mean_exp(exponents: &[f64]) -> LogMeanExp {
    let count = exponents.len();
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if count == 0 || max == f64::NEG_INFINITY {
        return LogMeanExp {
            value: f64::NEG_INFINITY,
            stderr: f64::INFINITY,
            max_exponent: max,
            effective_sample_size: 0.0,
        };
    }
    let weights: Vec<f64> = exponents.iter().map(|z| libm::exp(z - max)).collect();
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    let stats = mean_estimate(&weights);
    LogMeanExp {
        value: max + libm::log(sum / count as f64),
        stderr: if stats.mean > 0.0 {
            stats.stderr / stats.mean
        } else {
            f64::INFINITY
        },
        max_exponent: max,
        effective_sample_size: sum * sum / sum_sq,
    }
}

/// Solves the symmetric positive (semi)definite system `a x = b` by Cholesky.
/// Returns `None` when a pivot falls below `tol` relative to the diagonal scale.
pub fn solve_spd(a: &[f64], b: &[f64], size: usize, tol: f64) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; size * size];
    let scale = (0..size).map(|i| a[i * size + i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for i in 0..size {
        for j in 0..=i {
            let mut s = a[i * size + j];
            for k in 0..j {
                s -= l[i * size + k] * l[j * size + k];
            }
            if i == j {
                if s <= tol * scale {
                    return None;
                }
                l[i * size + i] = libm::sqrt(s);
            } else {
                l[i * size + j] = s / l[j * size + j];
            }
        }
    }
    let mut y = alloc::vec![0.0; size];
    for i in 0..size {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * size + k] * y[k];
        }
        y[i] = s / l[i * size + i];
    }
    let mut x = alloc::vec![0.0; size];
    for i in (0..size).rev() {
        let mut s = y[i];
        for k in i + 1..size {
            s -= l[k * size + i] * x[k];
        }
        x[i] = s / l[i * size + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tail_values() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_sf(1.959_963_984_540_054) - 0.025).abs() < 1e-12);
        // Deep tail stays accurate in relative terms.
        let tail = normal_sf(10.0);
        assert!((tail / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn log_mean_exp_of_constants_is_exact() {
        let z = [3.25; 17];
        let lme = log_mean_exp(&z);
        assert_eq!(lme.value, 3.25);
        assert_eq!(lme.stderr, 0.0);
        assert!((lme.effective_sample_size - 17.0).abs() < 1e-12);
    }

    #[test]
    fn log_mean_exp_survives_huge_exponents() {
        let z = [1000.0, 1000.0 + libm::log(3.0)];
        let lme = log_mean_exp(&z);
        assert!((lme.value - (1000.0 + libm::log(2.0))).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = solve_spd(&a, &[2.0, 1.0], 2, 1e-14).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(solve_spd(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0], 2, 1e-12).is_none());
    }

    #[test]
    fn mean_estimate_matches_two_pass() {
        let v = [1.0, 2.0, 4.0, 8.0];
        let est = mean_estimate(&v);
        assert!((est.mean - 3.75).abs() < 1e-15);
        let var = v.iter().map(|x| (x - 3.75) * (x - 3.75)).sum::<f64>() / 3.0;
        assert!((est.variance - var).abs() < 1e-12);
    }
}
