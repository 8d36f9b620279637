//! Nearest-neighbour spin-chain Hamiltonians and exact evolution through a
//! cached dense eigendecomposition.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array1, Array2, ShapeBuilder, Zip};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::algebra::{ChainSpec, DenseOperator, StateVector};
use crate::error::{Error, Result};

/// Couplings and fields of
/// `H = Σ_{n<N} Σ_a J_a σ_a,n σ_a,n+1 + Σ_n Σ_a h_a σ_a,n` (open chain,
/// `a = x, y, z`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinChainParams {
    pub chain: ChainSpec,
    /// `[J_x, J_y, J_z]`.
    pub couplings: [f64; 3],
    /// `[h_x, h_y, h_z]`.
    pub fields: [f64; 3],
}

impl SpinChainParams {
    pub fn xyz(n_sites: usize, couplings: [f64; 3], fields: [f64; 3]) -> Result<Self> {
        let p = Self { chain: ChainSpec::qubits(n_sites)?, couplings, fields };
        p.validate()?;
        Ok(p)
    }

    /// `H = J Σ σz σz + h_x Σ σx + h_z Σ σz`.
    pub fn ising(n_sites: usize, j: f64, hx: f64, hz: f64) -> Result<Self> {
        Self::xyz(n_sites, [0.0, 0.0, j], [hx, 0.0, hz])
    }

    /// Toolkit default for a chaotic Ising chain: `J = 1, h_x = 1.05, h_z = 0.5`.
    pub fn chaotic_ising(n_sites: usize) -> Result<Self> {
        Self::ising(n_sites, 1.0, 1.05, 0.5)
    }

    /// Transverse-field (free-fermion) Ising chain: `J = 1, h_x = 1, h_z = 0`.
    pub fn integrable_ising(n_sites: usize) -> Result<Self> {
        Self::ising(n_sites, 1.0, 1.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain.local_dim() != 2 {
            return Err(Error::Unsupported(format!(
                "spin-chain builders are qubit-only, got d = {}",
                self.chain.local_dim()
            )));
        }
        if self.couplings.iter().chain(&self.fields).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Hamiltonian parameter".into()));
        }
        Ok(())
    }
}

/// Action of one Pauli letter (1 = x, 2 = y, 3 = z) on a qubit basis bit:
/// returns the flipped flag and the phase.
fn pauli_on_bit(letter: usize, bit: usize) -> (bool, C64) {
    match (letter, bit) {
        (1, _) => (true, C64::new(1.0, 0.0)),
        (2, 0) => (true, C64::new(0.0, 1.0)),
        (2, _) => (true, C64::new(0.0, -1.0)),
        (3, 0) => (false, C64::new(1.0, 0.0)),
        (3, _) => (false, C64::new(-1.0, 0.0)),
        _ => (false, C64::new(1.0, 0.0)),
    }
}

pub fn build_xyz(params: &SpinChainParams) -> Result<DenseOperator> {
    params.validate()?;
    let chain = params.chain;
    chain.require_operator_side()?;
    let n = chain.n_sites();
    let dim = chain.state_dim();
    // (coefficient, [(site, letter)]) for every nonzero term.
    let mut terms: Vec<(f64, Vec<(usize, usize)>)> = Vec::new();
    for a in 0..3 {
        if params.couplings[a] != 0.0 {
            for s in 0..n.saturating_sub(1) {
                terms.push((params.couplings[a], vec![(s, a + 1), (s + 1, a + 1)]));
            }
        }
        if params.fields[a] != 0.0 {
            for s in 0..n {
                terms.push((params.fields[a], vec![(s, a + 1)]));
            }
        }
    }
    let mut h = Array2::<C64>::zeros((dim, dim));
    for col in 0..dim {
        for (coef, factors) in &terms {
            let mut row = col;
            let mut phase = C64::new(*coef, 0.0);
            for &(site, letter) in factors {
                let stride = chain.site_stride(site);
                let (flip, ph) = pauli_on_bit(letter, (col / stride) % 2);
                if flip {
                    row ^= stride;
                }
                phase *= ph;
            }
            h[[row, col]] += phase;
        }
    }
    DenseOperator::from_matrix(chain, h)
}

/// Eigendecomposition `H = U Λ U†` of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct SpectralData {
    chain: ChainSpec,
    eigenvalues: Array1<f64>,
    eigenvectors: Array2<C64>,
    source_hash: u64,
}

impl SpectralData {
    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// Columns are eigenvectors.
    pub fn eigenvectors(&self) -> &Array2<C64> {
        &self.eigenvectors
    }

    pub fn source_hash(&self) -> u64 {
        self.source_hash
    }

    /// `max |H − U Λ U†|`.
    pub fn reconstruction_residual(&self, h: &DenseOperator) -> f64 {
        let u = &self.eigenvectors;
        let mut ul = u.clone();
        for (mut col, &l) in ul.columns_mut().into_iter().zip(self.eigenvalues.iter()) {
            col.mapv_inplace(|z| z * l);
        }
        let rebuilt = ul.dot(&adjoint(u));
        max_abs_diff(&rebuilt, h.matrix())
    }

    /// `max |U† U − I|`.
    pub fn unitarity_residual(&self) -> f64 {
        let u = &self.eigenvectors;
        max_abs_diff(&adjoint(u).dot(u), &Array2::eye(u.nrows()))
    }

    fn check_chain(&self, chain: ChainSpec, what: &str) -> Result<()> {
        self.chain.same_as(&chain, what)
    }
}

pub(crate) fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

pub(crate) fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// Fingerprint of an operator's entries (bitwise).
pub fn operator_hash(op: &DenseOperator) -> u64 {
    let mut hasher = std::hash::DefaultHasher::new();
    op.chain().hash(&mut hasher);
    for z in op.matrix().iter() {
        z.re.to_bits().hash(&mut hasher);
        z.im.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

pub fn eigendecompose(h: &DenseOperator) -> Result<SpectralData> {
    h.require_hermitian()?;
    // Column-major input: LAPACK would otherwise see the conjugate of a
    // row-major Hermitian matrix and return conjugated eigenvectors.
    let mut m = Array2::<C64>::zeros(h.matrix().raw_dim().f());
    m.assign(h.matrix());
    let (eigenvalues, eigenvectors) = m
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    Ok(SpectralData {
        chain: h.chain(),
        eigenvalues,
        eigenvectors,
        source_hash: operator_hash(h),
    })
}

/// Thread-safe memo of eigendecompositions keyed by [`operator_hash`].
#[derive(Debug, Default)]
pub struct SpectralCache {
    entries: Mutex<HashMap<u64, Arc<SpectralData>>>,
}

impl SpectralCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache.
    pub fn global() -> &'static SpectralCache {
        static GLOBAL: OnceLock<SpectralCache> = OnceLock::new();
        GLOBAL.get_or_init(SpectralCache::new)
    }

    pub fn eigendecompose(&self, h: &DenseOperator) -> Result<Arc<SpectralData>> {
        let key = operator_hash(h);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        // Diagonalize outside the lock; a racing duplicate is harmless.
        let spectral = Arc::new(eigendecompose(h)?);
        self.entries.lock().unwrap().entry(key).or_insert(spectral.clone());
        Ok(spectral)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Heisenberg evolution of one operator at many times; keeps the operator in
/// the eigenbasis so each time costs two matrix products.
#[derive(Clone, Debug)]
pub struct HeisenbergEvolver {
    spectral: Arc<SpectralData>,
    in_eigenbasis: Array2<C64>,
    hermitian: bool,
    traceless: bool,
}

impl HeisenbergEvolver {
    pub fn new(op: &DenseOperator, spectral: Arc<SpectralData>) -> Result<Self> {
        spectral.check_chain(op.chain(), "operator evolution")?;
        let u = spectral.eigenvectors();
        let in_eigenbasis = adjoint(u).dot(op.matrix()).dot(u);
        Ok(Self {
            spectral,
            in_eigenbasis,
            hermitian: op.is_hermitian(),
            traceless: op.is_traceless(),
        })
    }

    /// `O(t) = e^{iHt} O e^{−iHt}`.
    pub fn at(&self, t: f64) -> DenseOperator {
        let lambda = self.spectral.eigenvalues();
        let phases: Array1<C64> = lambda.mapv(|l| C64::from_polar(1.0, l * t));
        let mut rotated = self.in_eigenbasis.clone();
        Zip::indexed(&mut rotated).for_each(|(j, k), z| *z *= phases[j] * phases[k].conj());
        let u = self.spectral.eigenvectors();
        let mut m = u.dot(&rotated).dot(&adjoint(u));
        if self.hermitian {
            symmetrize(&mut m);
        }
        DenseOperator::with_flags(self.spectral.chain(), m, self.hermitian, self.traceless)
    }
}

fn symmetrize(m: &mut Array2<C64>) {
    let dim = m.nrows();
    for r in 0..dim {
        m[[r, r]].im = 0.0;
        for c in r + 1..dim {
            let avg = (m[[r, c]] + m[[c, r]].conj()) * 0.5;
            m[[r, c]] = avg;
            m[[c, r]] = avg.conj();
        }
    }
}

pub fn evolve_operator(op: &DenseOperator, spectral: &Arc<SpectralData>, t: f64) -> Result<DenseOperator> {
    Ok(HeisenbergEvolver::new(op, spectral.clone())?.at(t))
}

/// Schrödinger evolution of one state at many times.
#[derive(Clone, Debug)]
pub struct StateEvolver {
    spectral: Arc<SpectralData>,
    in_eigenbasis: Array1<C64>,
}

impl StateEvolver {
    pub fn new(state: &StateVector, spectral: Arc<SpectralData>) -> Result<Self> {
        spectral.check_chain(state.chain(), "state evolution")?;
        let in_eigenbasis = adjoint(spectral.eigenvectors()).dot(state.amplitudes());
        Ok(Self { spectral, in_eigenbasis })
    }

    /// `e^{−iHt} |ψ⟩`.
    pub fn at(&self, t: f64) -> StateVector {
        let lambda = self.spectral.eigenvalues();
        let c = Zip::from(&self.in_eigenbasis)
            .and(lambda)
            .map_collect(|z, &l| z * C64::from_polar(1.0, -l * t));
        let amplitudes = self.spectral.eigenvectors().dot(&c);
        StateVector::from_parts(self.spectral.chain(), amplitudes)
    }
}

pub fn evolve_state(state: &StateVector, spectral: &Arc<SpectralData>, t: f64) -> Result<StateVector> {
    Ok(StateEvolver::new(state, spectral.clone())?.at(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{site_basis, string_to_matrix, PauliString};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spectrum(params: SpinChainParams) -> Vec<f64> {
        eigendecompose(&build_xyz(&params).unwrap()).unwrap().eigenvalues().to_vec()
    }

    fn single(chain: ChainSpec, site: usize, letter: usize) -> DenseOperator {
        string_to_matrix(&PauliString::single(chain, site, letter).unwrap(), &site_basis(2).unwrap())
            .unwrap()
    }

    #[test]
    fn zz_and_field_spectra() {
        let e = spectrum(SpinChainParams::xyz(2, [0.0, 0.0, 0.7], [0.0; 3]).unwrap());
        for (a, b) in e.iter().zip([-0.7, -0.7, 0.7, 0.7]) {
            assert!((a - b).abs() < 1e-14);
        }
        let e = spectrum(SpinChainParams::xyz(1, [0.0; 3], [0.0, 0.0, 0.3]).unwrap());
        assert!((e[0] + 0.3).abs() < 1e-14 && (e[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn builder_matches_string_sum() {
        let params = SpinChainParams::xyz(3, [0.4, -0.9, 1.3], [0.2, 0.5, -0.7]).unwrap();
        let h = build_xyz(&params).unwrap();
        let chain = params.chain;
        let basis = site_basis(2).unwrap();
        let mut want = DenseOperator::zeros(chain);
        for a in 0..3 {
            for s in 0..2 {
                let mut letters = vec![0; 3];
                letters[s] = a + 1;
                letters[s + 1] = a + 1;
                let term = string_to_matrix(&PauliString::new(chain, letters).unwrap(), &basis).unwrap();
                want = want.add(&term.scaled(params.couplings[a])).unwrap();
            }
            for s in 0..3 {
                want = want.add(&single(chain, s, a + 1).scaled(params.fields[a])).unwrap();
            }
        }
        assert!(max_abs_diff(h.matrix(), want.matrix()) < 1e-14);
        assert!(h.is_hermitian());
    }

    #[test]
    fn xxz_conserves_total_sz() {
        let params = SpinChainParams::xyz(5, [0.8, 0.8, 1.7], [0.0, 0.0, 0.45]).unwrap();
        let h = build_xyz(&params).unwrap();
        let chain = params.chain;
        let mut sz = DenseOperator::zeros(chain);
        for s in 0..5 {
            sz = sz.add(&single(chain, s, 3)).unwrap();
        }
        assert!(h.commutator(&sz).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn builder_rejects_qudits_and_bad_values() {
        let p = SpinChainParams { chain: ChainSpec::new(2, 3).unwrap(), couplings: [1.0; 3], fields: [0.0; 3] };
        assert!(matches!(build_xyz(&p), Err(Error::Unsupported(_))));
        assert!(SpinChainParams::xyz(2, [f64::NAN, 0.0, 0.0], [0.0; 3]).is_err());
        let big = SpinChainParams::chaotic_ising(13).unwrap();
        assert!(matches!(build_xyz(&big), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn eigendecompose_examples() {
        let chain = ChainSpec::qubits(1).unwrap();
        let s = eigendecompose(&single(chain, 0, 3)).unwrap();
        assert_eq!(s.eigenvalues().to_vec(), vec![-1.0, 1.0]);
        let zero = eigendecompose(&DenseOperator::zeros(ChainSpec::qubits(2).unwrap())).unwrap();
        assert!(zero.eigenvalues().iter().all(|&l| l == 0.0));
        assert!(zero.unitarity_residual() < 1e-15);

        let chain = ChainSpec::qubits(3).unwrap();
        let h = DenseOperator::random_hermitian(chain, &mut ChaCha8Rng::seed_from_u64(5));
        let s = eigendecompose(&h).unwrap();
        assert!(s.reconstruction_residual(&h) < 1e-9 * h.max_abs());
        assert!(s.unitarity_residual() < 1e-10);

        let mut m = h.matrix().clone();
        m[[0, 1]] += C64::new(1.0, 0.0);
        let bad = DenseOperator::from_matrix(chain, m).unwrap();
        assert!(matches!(eigendecompose(&bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn cache_reuses_decompositions() {
        let cache = SpectralCache::new();
        let h = build_xyz(&SpinChainParams::chaotic_ising(3).unwrap()).unwrap();
        let a = cache.eigendecompose(&h).unwrap();
        let b = cache.eigendecompose(&h.clone()).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
        let h2 = build_xyz(&SpinChainParams::integrable_ising(3).unwrap()).unwrap();
        cache.eigendecompose(&h2).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn single_qubit_precession() {
        let chain = ChainSpec::qubits(1).unwrap();
        let h_field = 0.37;
        let h = single(chain, 0, 3).scaled(h_field);
        let s = Arc::new(eigendecompose(&h).unwrap());
        let x = single(chain, 0, 1);
        let y = single(chain, 0, 2);
        for t in [0.0, 0.3, 1.7, 5.0] {
            let xt = evolve_operator(&x, &s, t).unwrap();
            let angle = 2.0 * h_field * t;
            let want = x.scaled(angle.cos()).add(&y.scaled(-angle.sin())).unwrap();
            assert!(max_abs_diff(xt.matrix(), want.matrix()) < 1e-14, "t={t}");
            let zt = evolve_operator(&single(chain, 0, 3), &s, t).unwrap();
            assert!(max_abs_diff(zt.matrix(), single(chain, 0, 3).matrix()) < 1e-14);
        }
        let psi = StateVector::basis(chain, 0).unwrap();
        let later = evolve_state(&psi, &s, 2.2).unwrap();
        assert!((later.inner(&psi).norm() - 1.0).abs() < 1e-14);
        assert_eq!(evolve_state(&psi, &s, 0.0).unwrap().amplitudes()[0].norm(), 1.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = Arc::new(eigendecompose(&DenseOperator::zeros(ChainSpec::qubits(2).unwrap())).unwrap());
        let op = DenseOperator::identity(ChainSpec::qubits(3).unwrap());
        assert!(matches!(evolve_operator(&op, &s, 1.0), Err(Error::DimensionMismatch(_))));
        let psi = StateVector::basis(ChainSpec::qubits(1).unwrap(), 0).unwrap();
        assert!(evolve_state(&psi, &s, 1.0).is_err());
    }
}
