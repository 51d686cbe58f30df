//! Deterministic Monte Carlo reductions.

use serde::Serialize;

/// Pairwise (cascade) summation; the result depends only on the order of
/// `xs`, never on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            samples: 0,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    let std_error = if n > 1 {
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Estimate {
        mean,
        std_error,
        samples: n,
    }
}

/// Sample variance (unbiased).
pub fn variance(xs: &[f64]) -> f64 {
    let e = mean_se(xs);
    e.std_error * e.std_error * e.samples as f64
}

/// Least-squares slope of `ln y` against `t`, using only points with `y > 0`.
/// `None` with fewer than two usable points.
pub fn fit_log_slope(ts: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_exact_values() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mean_and_se() {
        let e = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, se = sqrt(5/3/4)
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((variance(&[1.0, 2.0, 3.0, 4.0]) - 5.0 / 3.0).abs() < 1e-14);
        assert_eq!(mean_se(&[3.0]).std_error, 0.0);
        assert!(mean_se(&[]).mean.is_nan());
    }

    #[test]
    fn log_slope_of_exponential() {
        let ts = [0.0f64, 0.5, 1.0, 2.0];
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        assert!((fit_log_slope(&ts, &ys).unwrap() + 1.7).abs() < 1e-12);
        assert_eq!(fit_log_slope(&[1.0], &[1.0]), None);
        assert_eq!(fit_log_slope(&[0.0, 1.0], &[0.0, 0.0]), None);
    }
}
