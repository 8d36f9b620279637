//! Retarded response over global Haar states and the infinite-temperature
//! OTOC.
//!
//! For `C_Ψ = −i⟨Ψ|[W(t₂), V(t₁)]|Ψ⟩ θ(t₂ − t₁)` with `Ψ` Haar on the full
//! space of dimension `D`, the variance of `C_Ψ` equals
//! `−tr([W(t₂), V(t₁)]²) / (D (D+1))`. The step function uses `θ(0) = 1`.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::algebra::{ChainSpec, DenseOperator, StateVector};
use crate::dynamics::{HeisenbergEvolver, SpectralData};
use crate::error::{Error, Result};
use crate::quench::rng::{stream, Purpose};
use crate::quench::{sample_haar_state, QuenchSamples, EXPECTATION_IMAG_TOL};
use crate::C64;

/// `W`, `V` evolving under one Hamiltonian, probed at `(t₁, t₂)`.
#[derive(Clone, Debug)]
pub struct ResponsePair {
    w: DenseOperator,
    v: DenseOperator,
    spectral: Arc<SpectralData>,
    t1: f64,
    t2: f64,
    /// `−i[W(t₂), V(t₁)]` (Hermitian), or `None` when `t₂ < t₁`.
    kernel: Option<Array2<C64>>,
}

impl ResponsePair {
    pub fn new(w: DenseOperator, v: DenseOperator, spectral: Arc<SpectralData>, t1: f64, t2: f64) -> Result<Self> {
        let chain = spectral.chain();
        chain.same_as(&w.chain(), "response pair (W)")?;
        chain.same_as(&v.chain(), "response pair (V)")?;
        w.require_hermitian()?;
        v.require_hermitian()?;
        if !t1.is_finite() || !t2.is_finite() {
            return Err(Error::InvalidArgument("times must be finite".into()));
        }
        let kernel = if t2 >= t1 {
            let wt = HeisenbergEvolver::new(&w, spectral.clone())?.at(t2);
            let vt = HeisenbergEvolver::new(&v, spectral.clone())?.at(t1);
            let c = wt.commutator(&vt)?;
            Some(c.matrix().mapv(|z| z * C64::new(0.0, -1.0)))
        } else {
            None
        };
        Ok(Self { w, v, spectral, t1, t2, kernel })
    }

    /// Same operators and Hamiltonian at new times.
    pub fn at_times(&self, t1: f64, t2: f64) -> Result<Self> {
        Self::new(self.w.clone(), self.v.clone(), self.spectral.clone(), t1, t2)
    }

    pub fn chain(&self) -> ChainSpec {
        self.spectral.chain()
    }

    pub fn times(&self) -> (f64, f64) {
        (self.t1, self.t2)
    }

    pub fn is_causal(&self) -> bool {
        self.kernel.is_some()
    }
}

/// `C_ψ = −i⟨ψ|[W(t₂), V(t₁)]|ψ⟩ θ(t₂ − t₁)`.
pub fn response(rp: &ResponsePair, state: &StateVector) -> Result<f64> {
    rp.chain().same_as(&state.chain(), "response")?;
    let Some(k) = &rp.kernel else {
        return Ok(0.0);
    };
    let a = state.amplitudes();
    let z: C64 = a.iter().zip(k.dot(a).iter()).map(|(x, y)| x.conj() * y).sum();
    let scale = k.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let tolerance = EXPECTATION_IMAG_TOL * scale;
    if z.im.abs() > tolerance {
        return Err(Error::NotHermitian { residual: z.im.abs(), tolerance });
    }
    Ok(z.re)
}

/// Haar-random state on the full chain.
pub fn sample_global_haar<R: Rng + ?Sized>(chain: ChainSpec, rng: &mut R) -> Result<StateVector> {
    chain.require_operator_side()?;
    Ok(StateVector::from_parts(chain, sample_haar_state(chain.state_dim(), rng)))
}

/// Variance of [`response`] over `m` global Haar states.
pub fn mc_otoc_variance(rp: &ResponsePair, m: usize, master_seed: u64) -> Result<QuenchSamples> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {m}")));
    }
    let chain = rp.chain();
    let values = (0..m as u64)
        .into_par_iter()
        .map(|idx| {
            if !rp.is_causal() {
                return Ok(0.0);
            }
            let mut rng = stream(master_seed, Purpose::GlobalState, idx, 0);
            response(rp, &sample_global_haar(chain, &mut rng)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuenchSamples::from_values(values, master_seed)?.at_time(rp.t2))
}

/// `−tr([W(t₂), V(t₁)]²) / (D (D+1)) · θ(t₂ − t₁)`.
pub fn exact_otoc(rp: &ResponsePair) -> f64 {
    let Some(k) = &rp.kernel else {
        return 0.0;
    };
    let dim = rp.chain().state_dim() as f64;
    // tr(K²) = Σ |K_ij|² for Hermitian K.
    k.iter().map(|z| z.norm_sqr()).sum::<f64>() / (dim * (dim + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{site_basis, string_to_matrix, PauliString};
    use crate::dynamics::eigendecompose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pauli(chain: ChainSpec, site: usize, letter: usize) -> DenseOperator {
        string_to_matrix(&PauliString::single(chain, site, letter).unwrap(), &site_basis(2).unwrap()).unwrap()
    }

    fn free_pair(t1: f64, t2: f64) -> ResponsePair {
        let chain = ChainSpec::qubits(1).unwrap();
        let spectral = Arc::new(eigendecompose(&DenseOperator::zeros(chain)).unwrap());
        ResponsePair::new(pauli(chain, 0, 1), pauli(chain, 0, 3), spectral, t1, t2).unwrap()
    }

    #[test]
    fn single_qubit_exact() {
        assert!((exact_otoc(&free_pair(0.0, 1.0)) - 4.0 / 3.0).abs() < 1e-12);
        assert!((exact_otoc(&free_pair(0.5, 0.5)) - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(exact_otoc(&free_pair(1.0, 0.0)), 0.0);
    }

    #[test]
    fn single_qubit_response_is_minus_two_sigma_y() {
        let rp = free_pair(0.0, 1.0);
        let chain = rp.chain();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = pauli(chain, 0, 2);
        for _ in 0..10 {
            let psi = sample_global_haar(chain, &mut rng).unwrap();
            let want = -2.0 * y.expectation(&psi).unwrap().re;
            assert!((response(&rp, &psi).unwrap() - want).abs() < 1e-12);
        }
        let psi = sample_global_haar(chain, &mut rng).unwrap();
        assert_eq!(response(&free_pair(2.0, 1.0), &psi).unwrap(), 0.0);
    }

    #[test]
    fn commuting_pair_vanishes() {
        let chain = ChainSpec::qubits(2).unwrap();
        let spectral = Arc::new(eigendecompose(&DenseOperator::zeros(chain)).unwrap());
        let rp = ResponsePair::new(pauli(chain, 0, 1), pauli(chain, 1, 3), spectral, 0.0, 1.0).unwrap();
        assert!(exact_otoc(&rp) < 1e-15);
    }

    #[test]
    fn single_qubit_monte_carlo() {
        let s = mc_otoc_variance(&free_pair(0.0, 1.0), 100_000, 6).unwrap();
        assert!(s.within_sigmas(4.0 / 3.0, 4.0), "{} ± {}", s.variance, s.stderr_of_variance);
        assert!(s.mean.abs() < 4.0 * s.stderr_of_mean);
        let s = mc_otoc_variance(&free_pair(1.0, 0.0), 10, 6).unwrap();
        assert_eq!(s.variance, 0.0);
        assert!(mc_otoc_variance(&free_pair(0.0, 1.0), 1, 6).is_err());
    }

    #[test]
    fn global_haar_norm_and_variance() {
        let chain = ChainSpec::qubits(2).unwrap();
        let op = pauli(chain, 0, 1);
        let mut values = Vec::new();
        for i in 0..40_000u64 {
            let mut rng = stream(0, Purpose::GlobalState, i, 0);
            let psi = sample_global_haar(chain, &mut rng).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            values.push(op.expectation(&psi).unwrap().re);
        }
        let s = QuenchSamples::from_values(values, 0).unwrap();
        assert!(s.within_sigmas(0.2, 4.0), "{} ± {}", s.variance, s.stderr_of_variance);
    }

    #[test]
    fn time_translation_invariance() {
        let chain = ChainSpec::qubits(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = DenseOperator::random_hermitian(chain, &mut rng);
        let spectral = Arc::new(eigendecompose(&h).unwrap());
        let rp = ResponsePair::new(pauli(chain, 0, 1), pauli(chain, 2, 3), spectral, 0.3, 1.1).unwrap();
        let shifted = rp.at_times(1.3, 2.1).unwrap();
        assert!((exact_otoc(&rp) - exact_otoc(&shifted)).abs() < 1e-9);
        assert!(exact_otoc(&rp) >= 0.0);
    }
}
