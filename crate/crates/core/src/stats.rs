//! Small statistics toolkit shared by the Monte Carlo estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// A point estimate with a two-sided interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn new(value: f64, lo: f64, hi: f64) -> Self {
        Self { value, lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Linear interpolation quantile on a sorted sample, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// `log sum_i exp(x_i)` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `NaN` with two points.
    pub slope_se: f64,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - intercept - slope * a;
                r * r
            })
            .sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
    })
}

/// Wilson score interval for `k` successes out of `n` at two-sided level `1 - alpha`.
pub fn wilson_interval(k: u64, n: u64, alpha: f64) -> Estimate {
    if n == 0 {
        return Estimate::new(f64::NAN, 0.0, 1.0);
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    Estimate::new(p, (center - half).max(0.0), (center + half).min(1.0))
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Deterministic resampling source for bootstrap intervals.
pub fn bootstrap_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a resample of `xs` with replacement into `out`.
pub fn resample_into<R: Rng>(rng: &mut R, xs: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]));
}

/// Percentile bootstrap interval of `stat` over `reps` resamples of `xs`.
pub fn bootstrap_ci(xs: &[f64], stat: impl Fn(&[f64]) -> f64, reps: usize, level: f64, seed: u64) -> Estimate {
    let value = stat(xs);
    let mut rng = bootstrap_rng(seed);
    let mut buf = Vec::with_capacity(xs.len());
    let mut draws: Vec<f64> = (0..reps)
        .map(|_| {
            resample_into(&mut rng, xs, &mut buf);
            stat(&buf)
        })
        .filter(|v| v.is_finite())
        .collect();
    if draws.is_empty() {
        return Estimate::new(value, f64::NAN, f64::NAN);
    }
    draws.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Estimate::new(value, quantile_sorted(&draws, a), quantile_sorted(&draws, 1.0 - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&xs), 2.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.25 * v).collect();
        let fit = least_squares(&x, &y).unwrap();
        assert!((fit.slope + 0.25).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-14);
        assert!(fit.slope_se < 1e-12);
        assert!(least_squares(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn wilson_known_values() {
        // 0 of 10 at 95%: upper = z^2 / (n + z^2).
        let w = wilson_interval(0, 10, 0.05);
        let z = normal_quantile(0.975);
        assert!((z - 1.959963984540054).abs() < 1e-8);
        assert!(w.lo.abs() < 1e-15);
        assert!((w.hi - z * z / (10.0 + z * z)).abs() < 1e-12);
        let w = wilson_interval(5, 10, 0.05);
        assert!((w.lo + w.hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let a = bootstrap_ci(&xs, mean, 200, 0.9, 7);
        let b = bootstrap_ci(&xs, mean, 200, 0.9, 7);
        assert_eq!(a, b);
        assert!(a.lo <= a.value && a.value <= a.hi);
    }

    proptest! {
        #[test]
        fn quantile_is_monotone(mut xs in proptest::collection::vec(-1e3f64..1e3, 1..40), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
            xs.sort_by(f64::total_cmp);
            let (a, b) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(quantile_sorted(&xs, a) <= quantile_sorted(&xs, b));
        }

        #[test]
        fn wilson_brackets_the_proportion(n in 1u64..500, frac in 0.0f64..=1.0) {
            let k = (frac * n as f64).floor() as u64;
            let w = wilson_interval(k, n, 0.05);
            prop_assert!(w.lo <= w.value + 1e-12 && w.value <= w.hi + 1e-12);
            prop_assert!(w.lo >= 0.0 && w.hi <= 1.0);
        }
    }
}
