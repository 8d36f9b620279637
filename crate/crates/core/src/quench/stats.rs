use rand::Rng;
use serde::Serialize;

use super::rng::{stream, Purpose};
use crate::error::{Error, Result};

/// Bootstrap resamples used for variance uncertainties.
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Sampled `O_Ψ(t)` values with their variance statistics.
///
/// When each target state was measured through `repetitions > 1` noisy
/// repetitions, `values` holds the per-target means and `variance` is the
/// between-target variance with the mean within-target noise
/// (`within_correction`) subtracted.
#[derive(Clone, Debug, Serialize)]
pub struct QuenchSamples {
    pub values: Vec<f64>,
    pub mean: f64,
    pub stderr_of_mean: f64,
    /// Unbiased (`M − 1` denominator).
    pub variance: f64,
    /// Standard deviation of the bootstrap replicates of `variance`.
    pub stderr_of_variance: f64,
    /// 0.5% and 99.5% bootstrap percentiles of `variance`.
    pub band99: (f64, f64),
    pub sample_count: usize,
    pub time: Option<f64>,
    pub seed: u64,
    pub repetitions: usize,
    pub within_correction: f64,
}

impl QuenchSamples {
    /// Statistics of single noiseless values per target.
    pub fn from_values(values: Vec<f64>, seed: u64) -> Result<Self> {
        let within = vec![0.0; values.len()];
        Self::from_repeated(values, within, 1, seed)
    }

    /// Statistics of per-target means `values` (each averaged over
    /// `repetitions` noisy repetitions with unbiased within-target variance
    /// `within`).
    pub fn from_repeated(values: Vec<f64>, within: Vec<f64>, repetitions: usize, seed: u64) -> Result<Self> {
        let m = values.len();
        if m < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {m}")));
        }
        if within.len() != m || repetitions == 0 {
            return Err(Error::InvalidArgument("within-target variances do not match samples".into()));
        }
        let k = repetitions as f64;
        let estimate = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
            let (mut s1, mut s2, mut w) = (0.0, 0.0, 0.0);
            for i in idx {
                s1 += values[i];
                s2 += values[i] * values[i];
                w += within[i];
            }
            let mean = s1 / m as f64;
            let var = ((s2 - m as f64 * mean * mean) / (m as f64 - 1.0)).max(0.0);
            (var - w / m as f64 / k).max(0.0)
        };
        let mean = values.iter().sum::<f64>() / m as f64;
        let raw_var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let within_correction = within.iter().sum::<f64>() / m as f64 / k;
        let variance = (raw_var - within_correction).max(0.0);

        let mut rng = stream(seed, Purpose::Bootstrap, m as u64, repetitions as u64);
        let mut replicates: Vec<f64> = (0..DEFAULT_BOOTSTRAP_RESAMPLES)
            .map(|_| estimate(&mut (0..m).map(|_| rng.random_range(0..m))))
            .collect();
        let rep_mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
        let stderr_of_variance = (replicates.iter().map(|r| (r - rep_mean).powi(2)).sum::<f64>()
            / (replicates.len() as f64 - 1.0))
            .sqrt();
        replicates.sort_by(f64::total_cmp);
        let band99 = (percentile(&replicates, 0.005), percentile(&replicates, 0.995));
        Ok(Self {
            stderr_of_mean: (raw_var / m as f64).sqrt(),
            values,
            mean,
            variance,
            stderr_of_variance,
            band99,
            sample_count: m,
            time: None,
            seed,
            repetitions,
            within_correction,
        })
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    /// `|variance − target| ≤ sigmas · stderr`, with an absolute floor of
    /// `1e-12` so that identically zero samples match a zero target.
    pub fn within_sigmas(&self, target: f64, sigmas: f64) -> bool {
        (self.variance - target).abs() <= sigmas * self.stderr_of_variance + 1e-12
    }

    pub fn band_contains(&self, target: f64) -> bool {
        self.band99.0 - 1e-12 <= target && target <= self.band99.1 + 1e-12
    }
}

/// Linear-interpolated quantile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let s = QuenchSamples::from_values(vec![1.0, 2.0, 3.0, 4.0], 0).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(s.stderr_of_variance > 0.0 && s.stderr_of_variance.is_finite());
        assert!(s.band99.0 <= s.variance && s.variance <= s.band99.1);
    }

    #[test]
    fn constant_samples_have_zero_spread() {
        let s = QuenchSamples::from_values(vec![0.25; 50], 1).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.stderr_of_variance, 0.0);
        assert!(s.within_sigmas(0.0, 4.0));
    }

    #[test]
    fn repetition_noise_is_subtracted() {
        let s = QuenchSamples::from_repeated(vec![0.0, 1.0, 0.0, 1.0], vec![0.4; 4], 4, 2).unwrap();
        assert!((s.within_correction - 0.1).abs() < 1e-15);
        assert!((s.variance - (1.0 / 3.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn too_few_samples() {
        assert!(QuenchSamples::from_values(vec![1.0], 0).is_err());
    }

    #[test]
    fn bootstrap_is_seeded() {
        let v: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let a = QuenchSamples::from_values(v.clone(), 5).unwrap();
        let b = QuenchSamples::from_values(v, 5).unwrap();
        assert_eq!(a.stderr_of_variance.to_bits(), b.stderr_of_variance.to_bits());
    }
}
