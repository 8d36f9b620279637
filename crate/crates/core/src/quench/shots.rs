//! Projective-measurement (shot-noise) model.

use ndarray::Array1;
use rand::Rng;
use serde::Serialize;

use super::rng::{stream, Purpose, Stream};
use crate::algebra::{DenseOperator, StateVector};
use crate::dynamics::{adjoint, eigendecompose, SpectralData};
use crate::error::{Error, Result};

/// Number of projective measurements per state and the seed of their
/// outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ShotPlan {
    shots: usize,
    seed: u64,
}

impl ShotPlan {
    pub fn new(shots: usize, seed: u64) -> Result<Self> {
        if shots < 1 {
            return Err(Error::InvalidArgument("need at least one shot".into()));
        }
        Ok(Self { shots, seed })
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShotEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(k)`. For `k = 1` the spectral
    /// half-width `(λ_max − λ_min)/2` stands in for the unknown deviation.
    pub stderr: f64,
    pub shots: usize,
}

/// Born-rule sampler for one observable; diagonalizes once.
#[derive(Clone, Debug)]
pub struct ShotSampler {
    spectral: SpectralData,
}

impl ShotSampler {
    pub fn new(op: &DenseOperator) -> Result<Self> {
        Ok(Self { spectral: eigendecompose(op)? })
    }

    /// Outcome probabilities `|⟨e_j|ψ⟩|²` over the eigenvalues.
    pub fn probabilities(&self, state: &StateVector) -> Result<Array1<f64>> {
        self.spectral.chain().same_as(&state.chain(), "shot sampling")?;
        let amps = adjoint(self.spectral.eigenvectors()).dot(state.amplitudes());
        Ok(amps.mapv(|z| z.norm_sqr()))
    }

    /// One projective outcome.
    pub fn sample_outcome(&self, cumulative: &[f64], rng: &mut Stream) -> f64 {
        let total = cumulative[cumulative.len() - 1];
        let u = rng.random::<f64>() * total;
        let j = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        self.spectral.eigenvalues()[j]
    }

    pub fn cumulative(&self, state: &StateVector) -> Result<Vec<f64>> {
        let mut acc = 0.0;
        Ok(self
            .probabilities(state)?
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect())
    }

    pub fn estimate(&self, state: &StateVector, plan: ShotPlan) -> Result<ShotEstimate> {
        let cumulative = self.cumulative(state)?;
        let mut rng = stream(plan.seed, Purpose::Shots, 0, 0);
        let k = plan.shots;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..k {
            let x = self.sample_outcome(&cumulative, &mut rng);
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / k as f64;
        let stderr = if k > 1 {
            (((s2 - k as f64 * mean * mean) / (k as f64 - 1.0)).max(0.0) / k as f64).sqrt()
        } else {
            let l = self.spectral.eigenvalues();
            (l[l.len() - 1] - l[0]) / 2.0
        };
        Ok(ShotEstimate { mean, stderr, shots: k })
    }
}

/// Mean of `k` Born-rule outcomes of `op` in `state`.
pub fn shot_noise_expectation(op: &DenseOperator, state: &StateVector, plan: ShotPlan) -> Result<ShotEstimate> {
    ShotSampler::new(op)?.estimate(state, plan)
}
