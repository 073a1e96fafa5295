//! Least squares slopes with percentile bootstrap intervals.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Ordinary least squares y ≈ slope·x + intercept.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param("fit", "need at least two points of equal length"));
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("fit", "abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval over paths.
    pub ci_low: f64,
    pub ci_high: f64,
    pub half_width: f64,
    pub resamples: usize,
}

fn loglog(x: &[f64], means: &[f64]) -> Result<(f64, f64)> {
    if means.iter().any(|m| !(*m > 0.0)) {
        return Ok((f64::NAN, f64::NAN));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = means.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly)
}

/// Slope of log E[X(x)] against log x, where `samples[p][j]` is path p's
/// value at abscissa x[j]; paths are resampled with replacement.
pub fn loglog_slope(name: &str, x: &[f64], samples: &[Vec<f64>], seed: u64) -> Result<SlopeFit> {
    if samples.is_empty() {
        return Err(Error::param("fit", "no samples"));
    }
    let mean_of = |idx: &mut dyn Iterator<Item = usize>| -> Vec<f64> {
        let mut acc = vec![0.0; x.len()];
        let mut count = 0usize;
        for p in idx {
            acc.iter_mut().zip(&samples[p]).for_each(|(a, v)| *a += v);
            count += 1;
        }
        acc.iter().map(|a| a / count as f64).collect()
    };
    let (slope, intercept) = loglog(x, &mean_of(&mut (0..samples.len())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = samples.len();
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let draws: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            loglog(x, &mean_of(&mut draws.into_iter())).map(|f| f.0)
        })
        .collect::<Result<_>>()?;
    boot.sort_by(f64::total_cmp);
    let at = |q: f64| boot[((q * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
    let (ci_low, ci_high) = (at(0.025), at(0.975));
    Ok(SlopeFit {
        name: name.into(),
        slope,
        intercept,
        ci_low,
        ci_high,
        half_width: 0.5 * (ci_high - ci_low),
        resamples: BOOTSTRAP_RESAMPLES,
    })
}
