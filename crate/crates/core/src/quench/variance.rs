//! Product-ensemble variance of `O_Ψ(t) = ⟨Ψ|O(t)|Ψ⟩`: Monte-Carlo
//! estimators and the exact size-distribution formula.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{sample_haar_state, EnsembleSpec, LocalState};
use super::rng::{stream, Purpose, Stream};
use super::shots::ShotSampler;
use super::stats::QuenchSamples;
use crate::algebra::{doubled_trace, norm, swap_operator, DenseOperator, StateVector};
use crate::decomposition::SizeDistribution;
use crate::error::{Error, Result};

/// Imaginary residue tolerated in `⟨ψ|O|ψ⟩` for Hermitian `O`.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-9;

/// Real `⟨ψ|O|ψ⟩`.
pub fn expectation(op: &DenseOperator, state: &StateVector) -> Result<f64> {
    real_part(op.expectation(state)?, op.max_abs())
}

fn real_part(z: C64, scale: f64) -> Result<f64> {
    let tolerance = EXPECTATION_IMAG_TOL * scale.max(1.0);
    if z.im.abs() > tolerance {
        return Err(Error::NotHermitian { residual: z.im.abs(), tolerance });
    }
    Ok(z.re)
}

/// Amplitude-damping model of imperfect preparation: the prepared state is
/// `√(1−ε)|ψ⟩ + √ε|φ⟩` with Haar `φ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepErrorModel {
    epsilon: f64,
}

impl PrepErrorModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("preparation error {epsilon} outside [0, 1]")));
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(1 − ε)² / (d + 1)`, the point at which the generating function
    /// gives the variance.
    pub fn damping_point(&self, d: usize) -> f64 {
        (1.0 - self.epsilon).powi(2) / (d as f64 + 1.0)
    }
}

/// One imperfect preparation of `target`.
///
/// Draws Haar `φ` and forms `v = √(1−ε)ψ + √ε φ`. The draw is kept with
/// probability `|v|² / (√(1−ε) + √ε)²` and returned normalized; otherwise a
/// new `φ` is drawn. Weighting by `|v|²` makes the average prepared state
/// exactly `(1−ε)|ψ⟩⟨ψ| + ε I/d`.
pub fn perturbed_state(target: &LocalState, err: PrepErrorModel, rng: &mut Stream) -> LocalState {
    let eps = err.epsilon();
    if eps == 0.0 {
        return target.clone();
    }
    let (a, b) = ((1.0 - eps).sqrt(), eps.sqrt());
    let bound = (a + b) * (a + b);
    loop {
        let phi = sample_haar_state(target.len(), rng);
        let v = target.mapv(|z| z * a) + phi.mapv(|z| z * b);
        let n = norm(&v);
        if rng.random::<f64>() * bound < n * n {
            return v.mapv(|z| z / n);
        }
    }
}

/// How each target state is measured.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasurementModel {
    /// Independent preparations of every target state.
    pub repetitions: usize,
    pub prep_error: PrepErrorModel,
    /// Record one Born-rule outcome per preparation instead of the exact
    /// expectation.
    pub projective: bool,
}

impl MeasurementModel {
    pub fn ideal() -> Self {
        Self { repetitions: 1, prep_error: PrepErrorModel::none(), projective: false }
    }

    pub fn with_prep_error(err: PrepErrorModel, repetitions: usize) -> Self {
        Self { repetitions, prep_error: err, projective: false }
    }

    pub fn shots(shots: usize, err: PrepErrorModel) -> Self {
        Self { repetitions: shots, prep_error: err, projective: true }
    }
}

/// Monte-Carlo variance of `⟨Ψ|O|Ψ⟩` over `m` initial states drawn from
/// `ensemble` (sample indices `0..m`).
pub fn mc_variance(op: &DenseOperator, ensemble: &EnsembleSpec, m: usize) -> Result<QuenchSamples> {
    mc_variance_measured(op, ensemble, m, MeasurementModel::ideal())
}

/// [`mc_variance`] under a noisy measurement model. Each target is prepared
/// `repetitions` times; the reported variance is the between-target
/// variance minus the mean within-target variance over `repetitions`,
/// which is unbiased for the noiseless value at any repetition count.
pub fn mc_variance_measured(
    op: &DenseOperator,
    ensemble: &EnsembleSpec,
    m: usize,
    model: MeasurementModel,
) -> Result<QuenchSamples> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {m}")));
    }
    ensemble.validate()?;
    op.require_hermitian()?;
    op.chain().same_as(&ensemble.chain(), "variance")?;
    if model.repetitions == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    let noisy_prep = model.prep_error.epsilon() > 0.0;
    if noisy_prep && !ensemble.is_product() {
        return Err(Error::Unsupported("preparation error needs a product ensemble".into()));
    }
    let sampler = if model.projective { Some(ShotSampler::new(op)?) } else { None };
    let scale = op.max_abs();
    let chain = op.chain();
    let seed = ensemble.master_seed();

    let per_target: Vec<(f64, f64)> = (0..m as u64)
        .into_par_iter()
        .map(|idx| -> Result<(f64, f64)> {
            let factors = ensemble.sample_factors(idx);
            if !noisy_prep && !model.projective {
                let psi = StateVector::product(chain, &factors)?;
                return Ok((real_part(op.expectation(&psi)?, scale)?, 0.0));
            }
            let ideal_cumulative = match (&sampler, noisy_prep) {
                (Some(s), false) => Some(s.cumulative(&StateVector::product(chain, &factors)?)?),
                _ => None,
            };
            let k = model.repetitions;
            let (mut s1, mut s2) = (0.0, 0.0);
            for rep in 0..k {
                let mut rng = stream(seed, Purpose::Preparation, idx, rep as u64);
                let y = if noisy_prep {
                    let prepared: Vec<LocalState> = factors
                        .iter()
                        .map(|f| perturbed_state(f, model.prep_error, &mut rng))
                        .collect();
                    let psi = StateVector::product(chain, &prepared)?;
                    match &sampler {
                        Some(s) => s.sample_outcome(&s.cumulative(&psi)?, &mut rng),
                        None => real_part(op.expectation(&psi)?, scale)?,
                    }
                } else {
                    let s = sampler.as_ref().expect("projective");
                    s.sample_outcome(ideal_cumulative.as_ref().expect("ideal"), &mut rng)
                };
                s1 += y;
                s2 += y * y;
            }
            let mean = s1 / k as f64;
            let within = if k > 1 {
                ((s2 - k as f64 * mean * mean) / (k as f64 - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok((mean, within))
        })
        .collect::<Result<_>>()?;
    let (values, within): (Vec<f64>, Vec<f64>) = per_target.into_iter().unzip();
    QuenchSamples::from_repeated(values, within, model.repetitions, seed)
}

/// Variance of `⟨Ψ|O|Ψ⟩` over explicit states (already drawn).
pub fn variance_over_states(op: &DenseOperator, states: &[StateVector], seed: u64) -> Result<QuenchSamples> {
    op.require_hermitian()?;
    let scale = op.max_abs();
    let values = states
        .par_iter()
        .map(|psi| real_part(op.expectation(psi)?, scale))
        .collect::<Result<Vec<_>>>()?;
    QuenchSamples::from_values(values, seed)
}

/// `F((1−ε)²/(d+1)) = Σ_l p_l ((1−ε)²/(d+1))^l`: the product-ensemble
/// variance of an operator normalized to `tr(O²) = d^N` with size
/// distribution `p`.
pub fn exact_variance(p: &SizeDistribution, err: PrepErrorModel) -> f64 {
    let z = err.damping_point(p.chain().local_dim());
    p.p().iter().rev().fold(0.0, |acc, &pl| acc * z + pl)
}

/// `tr[O^{⊗2} ⊗_n (X_n + I_n)] / (d^N (d+1)^N)` by a literal doubled-space
/// trace. Requires traceless `O`; at most
/// [`crate::algebra::DOUBLED_SPACE_MAX_SITES`] sites.
pub fn exact_variance_doubled(op: &DenseOperator) -> Result<f64> {
    let chain = op.chain();
    let tr = op.trace().norm();
    if tr > crate::algebra::HERMITIAN_TOL * op.max_abs().max(1.0) * chain.state_dim() as f64 {
        return Err(Error::NotTraceless(tr));
    }
    let d = chain.local_dim();
    let x_plus_i: Array2<C64> = swap_operator(d)? + Array2::<C64>::eye(d * d);
    let factors = vec![x_plus_i; chain.n_sites()];
    let t = doubled_trace(op, &factors)?;
    let norm = (d as f64).powi(chain.n_sites() as i32) * (d as f64 + 1.0).powi(chain.n_sites() as i32);
    Ok(t.re / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{site_basis, string_to_matrix, ChainSpec, PauliString};
    use crate::decomposition::random_baseline;
    use rand::SeedableRng;

    fn string_op(chain: ChainSpec, letters: Vec<usize>) -> DenseOperator {
        string_to_matrix(&PauliString::new(chain, letters).unwrap(), &site_basis(chain.local_dim()).unwrap())
            .unwrap()
    }

    #[test]
    fn expectation_examples() {
        let chain = ChainSpec::qubits(1).unwrap();
        let zero = StateVector::basis(chain, 0).unwrap();
        assert_eq!(expectation(&string_op(chain, vec![3]), &zero).unwrap(), 1.0);
        assert_eq!(expectation(&string_op(chain, vec![1]), &zero).unwrap(), 0.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(chain, ndarray::arr1(&[C64::new(r, 0.0), C64::new(r, 0.0)])).unwrap();
        assert!((expectation(&string_op(chain, vec![1]), &plus).unwrap() - 1.0).abs() < 1e-15);
        let m = ndarray::arr2(&[[C64::new(0.0, 0.0), C64::new(0.0, 1.0)], [C64::new(0.0, 1.0), C64::new(0.0, 0.0)]]);
        let anti = DenseOperator::from_matrix(chain, m).unwrap();
        let plus_i = StateVector::new(chain, ndarray::arr1(&[C64::new(r, 0.0), C64::new(0.0, r)])).unwrap();
        assert!(matches!(expectation(&anti, &plus), Err(Error::NotHermitian { .. })));
        assert!(expectation(&anti, &plus_i).is_ok());
    }

    #[test]
    fn exact_variance_examples() {
        let chain = ChainSpec::qubits(3).unwrap();
        let p = SizeDistribution::new(chain, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((exact_variance(&p, PrepErrorModel::none()) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(exact_variance(&p, PrepErrorModel::new(1.0).unwrap()), 0.0);
        for n in 1..=10 {
            let base = random_baseline(ChainSpec::qubits(n).unwrap());
            let v = exact_variance(&base, PrepErrorModel::none());
            assert!((v - 0.5f64.powi(n as i32)).abs() < 1e-15, "N={n}");
        }
        assert!(PrepErrorModel::new(1.5).is_err());
    }

    #[test]
    fn doubled_examples() {
        let chain = ChainSpec::qubits(1).unwrap();
        assert!((exact_variance_doubled(&string_op(chain, vec![1])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            exact_variance_doubled(&DenseOperator::identity(chain)),
            Err(Error::NotTraceless(_))
        ));
        let big = string_op(ChainSpec::qubits(6).unwrap(), vec![1, 0, 0, 0, 0, 0]);
        assert!(matches!(exact_variance_doubled(&big), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn perturbation_limits() {
        let mut rng = Stream::seed_from_u64(0);
        let target = sample_haar_state(2, &mut rng);
        assert_eq!(perturbed_state(&target, PrepErrorModel::none(), &mut rng), target);
        let eps1 = PrepErrorModel::new(1.0).unwrap();
        let mut a = Stream::seed_from_u64(3);
        let mut b = Stream::seed_from_u64(3);
        let full = perturbed_state(&target, eps1, &mut a);
        let haar = sample_haar_state(2, &mut b);
        assert!(full.iter().zip(haar.iter()).all(|(x, y)| (x - y).norm() < 1e-15));
    }

    #[test]
    fn averaged_perturbed_state_is_depolarized() {
        // ⟨ψ|ρ̄|ψ⟩ = 1 − ε + ε/d for the exact model.
        let target = ndarray::arr1(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let eps = 0.3;
        let err = PrepErrorModel::new(eps).unwrap();
        let mut rng = Stream::seed_from_u64(21);
        let n = 200_000;
        let fidelities: Vec<f64> =
            (0..n).map(|_| perturbed_state(&target, err, &mut rng)[0].norm_sqr()).collect();
        let mean = fidelities.iter().sum::<f64>() / n as f64;
        let sd = (fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let want = 1.0 - eps + eps / 2.0;
        assert!((mean - want).abs() < 4.0 * sd / (n as f64).sqrt(), "mean {mean} want {want}");
    }

    #[test]
    fn mc_variance_needs_two_samples() {
        let chain = ChainSpec::qubits(1).unwrap();
        let e = EnsembleSpec::haar_product(chain, 0);
        assert!(mc_variance(&string_op(chain, vec![1]), &e, 1).is_err());
    }

    #[test]
    fn single_qubit_haar_variance() {
        let chain = ChainSpec::qubits(2).unwrap();
        let e = EnsembleSpec::haar_product(chain, 77);
        let s = mc_variance(&string_op(chain, vec![1, 0]), &e, 100_000).unwrap();
        assert!(s.within_sigmas(1.0 / 3.0, 4.0), "{} ± {}", s.variance, s.stderr_of_variance);
        assert!(s.mean.abs() < 4.0 * s.stderr_of_mean);
    }

    #[test]
    fn single_site_prep_error() {
        let chain = ChainSpec::qubits(1).unwrap();
        let e = EnsembleSpec::haar_product(chain, 5);
        let err = PrepErrorModel::new(0.1).unwrap();
        let s = mc_variance_measured(
            &string_op(chain, vec![1]),
            &e,
            20_000,
            MeasurementModel::with_prep_error(err, 16),
        )
        .unwrap();
        let want = (1.0f64 - 0.1).powi(2) / 3.0;
        assert!(s.within_sigmas(want, 4.0), "{} ± {} vs {want}", s.variance, s.stderr_of_variance);
    }

    #[test]
    fn prep_error_rejects_clusters() {
        let chain = ChainSpec::qubits(2).unwrap();
        let e = EnsembleSpec::contiguous_blocks(chain, 2, 0).unwrap();
        let model = MeasurementModel::with_prep_error(PrepErrorModel::new(0.2).unwrap(), 4);
        assert!(matches!(
            mc_variance_measured(&string_op(chain, vec![1, 0]), &e, 10, model),
            Err(Error::Unsupported(_))
        ));
    }
}
