//! Small statistical helpers for Monte Carlo diagnostics.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson as PoissonLaw};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn mean_stderr(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanEstimate { mean, stderr: f64::NAN, n };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanEstimate { mean, stderr: (var / n as f64).sqrt(), n }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::OutOfRange(format!("regression needs matching inputs of length ≥ 2, got {} and {}", x.len(), y.len())));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateSample("regressor has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if n > 2 { (rss / (n - 2) as f64 / sxx).sqrt() } else { f64::NAN };
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, slope_stderr, r2 })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Standard deviation of a statistic over bootstrap resamples of `n` units.
pub fn bootstrap_stderr<R, F>(n: usize, reps: usize, rng: &mut R, mut stat: F) -> f64
where
    R: Rng + ?Sized,
    F: FnMut(&[usize]) -> f64,
{
    let mut idx = vec![0usize; n];
    let mut values = Vec::with_capacity(reps);
    for _ in 0..reps {
        for v in idx.iter_mut() {
            *v = rng.random_range(0..n);
        }
        let s = stat(&idx);
        if s.is_finite() {
            values.push(s);
        }
    }
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
}

/// Goodness of fit of integer counts to `Poisson(mean)`; bins are merged
/// until each expected count is at least 5.
pub fn chi_square_poisson(counts: &[u64], mean: f64) -> Result<ChiSquareResult> {
    let n = counts.len() as f64;
    if counts.is_empty() || !(mean > 0.0) {
        return Err(Error::DegenerateSample("chi-square needs counts and a positive mean".into()));
    }
    let law = PoissonLaw::new(mean).map_err(|e| Error::OutOfRange(e.to_string()))?;
    let kmax = *counts.iter().max().unwrap() as usize;
    let top = kmax.max((mean + 10.0 * mean.sqrt() + 10.0) as usize);
    let mut hist = vec![0u64; top + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    let (mut o, mut e) = (0u64, 0.0);
    let mut cum = 0.0;
    for (k, h) in hist.iter().enumerate() {
        let p = law.pmf(k as u64);
        cum += p;
        o += h;
        e += n * p;
        if e >= 5.0 && n * (1.0 - cum) >= 5.0 {
            observed.push(o);
            expected.push(e);
            o = 0;
            e = 0.0;
        }
    }
    // the remaining tail, including mass beyond `top`
    e += n * (1.0 - cum).max(0.0);
    if let (Some(lo), Some(le)) = (observed.last_mut(), expected.last_mut()) {
        if e < 5.0 {
            *lo += o;
            *le += e;
        } else {
            observed.push(o);
            expected.push(e);
        }
    } else {
        observed.push(o);
        expected.push(e);
    }
    if observed.len() < 2 {
        return Err(Error::DegenerateSample("fewer than two chi-square bins".into()));
    }
    let statistic: f64 = observed.iter().zip(&expected).map(|(o, e)| (*o as f64 - e).powi(2) / e).sum();
    let dof = observed.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::OutOfRange(e.to_string()))?;
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(ChiSquareResult { statistic, dof, p_value, observed, expected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_poisson_counts_pass() {
        let law = PoissonLaw::new(3.0).unwrap();
        let mut counts = Vec::new();
        for k in 0..20u64 {
            let m = (10_000.0 * law.pmf(k)).round() as usize;
            counts.extend(std::iter::repeat_n(k, m));
        }
        let r = chi_square_poisson(&counts, 3.0).unwrap();
        assert!(r.p_value > 0.99, "{r:?}");
        let shifted: Vec<u64> = counts.iter().map(|c| c + 1).collect();
        assert!(chi_square_poisson(&shifted, 3.0).unwrap().p_value < 1e-6);
    }

    #[test]
    fn log_space_endpoints() {
        let g = log_space(1e2, 1e4, 40);
        assert_eq!(g.len(), 40);
        assert!((g[0] - 1e2).abs() < 1e-9 && (g[39] - 1e4).abs() < 1e-7);
    }
}
