//! Normal CDF, Kolmogorov-Smirnov distance and sample summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard normal CDF from the Abramowitz-Stegun 7.1.26 rational
/// approximation of erf (absolute error at most 1.5e-7 on erf, half that on
/// the CDF). Only `exp` is used, so results do not depend on a platform erf.
pub fn normal_cdf(x: f64) -> f64 {
    const P: f64 = 0.327_591_1;
    const A: [f64; 5] = [
        0.254_829_592,
        -0.284_496_736,
        1.421_413_741,
        -1.453_152_027,
        1.061_405_429,
    ];
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + P * z);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    let erf = 1.0 - poly * (-z * z).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

/// `sup_x |F_n(x) - Phi(x)|` for the empirical CDF `F_n` of `sample`.
pub fn ks_distance(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("sample contains NaN".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = normal_cdf(x);
            let above = (i + 1) as f64 / n - cdf;
            let below = cdf - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub ks_distance: f64,
}

impl SampleSummary {
    pub fn of(sample: &[f64]) -> Result<Self> {
        let ks_distance = ks_distance(sample)?;
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let m2 = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = sample.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let sd = if sample.len() > 1 {
            (m2 * n / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            n: sample.len(),
            mean,
            sd,
            skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
            ks_distance,
        })
    }
}

/// Mean and standard error of the mean.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
