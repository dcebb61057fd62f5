//! Small statistical toolkit for Monte Carlo verdicts.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided confidence level used for every Monte Carlo interval.
pub const CONFIDENCE: f64 = 0.99;

/// Number of batches used by [`Estimate::batch_means`] (fewer if there are
/// fewer samples).
pub const DEFAULT_BATCHES: usize = 100;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// A Monte Carlo mean with its standard error and two-sided interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Estimate {
    /// Batch-means estimate: samples are split, in order, into equal batches
    /// whose means are treated as iid normal. The interval is the
    /// [`CONFIDENCE`] normal interval.
    pub fn batch_means(samples: &[f64]) -> Self {
        Self::batch_means_with(samples, DEFAULT_BATCHES)
    }

    pub fn batch_means_with(samples: &[f64], batches: usize) -> Self {
        let n = samples.len();
        let nb = batches.min(n).max(1);
        let size = n / nb;
        let used = size * nb;
        let means: Vec<f64> = samples[..used].chunks(size.max(1)).map(mean).collect();
        let m = mean(samples);
        let se = if nb > 1 {
            (variance(&means) / nb as f64).sqrt()
        } else {
            f64::NAN
        };
        let z = normal_quantile(0.5 + CONFIDENCE / 2.0);
        Estimate {
            mean: m,
            se,
            lo: m - z * se,
            hi: m + z * se,
            n,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    /// `|mean − value| ≤ k · se`.
    pub fn within_se(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and a
/// continuous CDF. Sorts a copy of the input.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        // ties: the empirical CDF jumps once over the whole run
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    d
}

/// KS distance against the centered Gaussian whose variance is the sample
/// second moment.
pub fn ks_centered_normal(samples: &[f64]) -> f64 {
    let second = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    let normal = Normal::new(0.0, second.sqrt().max(f64::MIN_POSITIVE)).expect("normal");
    ks_distance(samples, |x| normal.cdf(x))
}

/// Asymptotic critical value of the one-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Pearson chi-square statistic of `counts` against the uniform law,
/// with the `level` quantile of the reference distribution.
pub fn chi_square_uniform(counts: &[u64], level: f64) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat = counts
        .iter()
        .map(|&c| {
            let diff = c as f64 - expected;
            diff * diff / expected
        })
        .sum();
    let df = (counts.len() - 1) as f64;
    let critical = ChiSquared::new(df).expect("df > 0").inverse_cdf(level);
    (stat, critical)
}

/// Least-squares line `y ≈ intercept + slope · x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
