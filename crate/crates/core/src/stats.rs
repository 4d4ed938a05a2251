//! Small statistics helpers shared by the samplers and the sweep.

use rand::Rng as _;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::rng;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(x);
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

pub fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Bootstrap standard error of the median.
pub fn median_se(x: &[f64], resamples: usize, seed: u64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mut rng = rng::seeded(seed);
    let mut buf = vec![0.0; x.len()];
    let meds: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = x[rng.gen_range(0..x.len())];
            }
            median(&buf)
        })
        .collect();
    variance(&meds).sqrt()
}

/// Batch-means standard error of the mean of a correlated series, together
/// with the implied effective sample size.
pub fn batch_means_se(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let b = batches.min(n).max(1);
    let size = n / b;
    if size == 0 || b < 2 {
        return (0.0, n as f64);
    }
    let means: Vec<f64> = (0..b).map(|i| mean(&x[i * size..(i + 1) * size])).collect();
    let se = (variance(&means) / b as f64).sqrt();
    let var = variance(x);
    let ess = if se > 0.0 {
        (var / (se * se)).min(n as f64)
    } else {
        n as f64
    };
    (se, ess)
}

/// `ln Σ exp(x_i)`, `−∞` for an empty or all-`−∞` input.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sample skewness and excess kurtosis.
pub fn skew_kurt(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mu = mean(x);
    let m2 = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mu).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mu).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Ordinary least squares fit `y ≈ a + b x`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    /// Two-sided 95% interval for the slope (Student t).
    pub slope_ci95: (f64, f64),
    pub points: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let dof = (n - 2) as f64;
    let slope_se = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.96);
    Some(LinearFit {
        intercept,
        slope,
        slope_se,
        slope_ci95: (slope - t * slope_se, slope + t * slope_se),
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let x = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&x), 2.5);
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-10);
    }
}
