//! Site-local operator basis, Pauli strings and dense operators on a chain of
//! qudits.
//!
//! Index conventions, fixed for the whole crate:
//!
//! * State index: site 0 is the most significant base-`d` digit, so the
//!   operator `A ⊗ B` on two sites is `kron(A, B)` with `A` acting on site 0.
//! * Region masks: bit `n` of a `u64` is site `n`.
//! * Pauli-string index: site 0 is the least significant base-`d²` digit,
//!   letter 0 is the identity.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest operator (in matrix entries, `d^{2N}`) accepted by operator-side
/// pathways. Equals `4^12`, i.e. 12 qubits.
pub const MAX_OPERATOR_ENTRIES: usize = 1 << 24;

/// Largest state dimension accepted anywhere.
pub const MAX_STATE_DIM: usize = 1 << 26;

/// Relative tolerance for the Hermitian / traceless checks.
pub const HERMITIAN_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Number of sites and local dimension of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainSpec {
    n_sites: usize,
    local_dim: usize,
}

impl ChainSpec {
    pub fn new(n_sites: usize, local_dim: usize) -> Result<Self> {
        if local_dim < 2 {
            return Err(Error::InvalidDimension(local_dim));
        }
        if n_sites == 0 {
            return Err(Error::InvalidChain("need at least one site".into()));
        }
        let dim = local_dim
            .checked_pow(n_sites as u32)
            .filter(|&dim| dim <= MAX_STATE_DIM);
        if dim.is_none() || n_sites > 63 {
            return Err(Error::CapExceeded {
                what: "state space",
                n_sites,
                local_dim,
                limit: max_sites(local_dim, MAX_STATE_DIM),
            });
        }
        Ok(Self { n_sites, local_dim })
    }

    pub fn qubits(n_sites: usize) -> Result<Self> {
        Self::new(n_sites, 2)
    }

    /// Zero-site chain, the target of a partial trace over everything.
    pub(crate) fn empty(local_dim: usize) -> Self {
        Self { n_sites: 0, local_dim }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// `D = d^N`.
    pub fn state_dim(&self) -> usize {
        self.local_dim.pow(self.n_sites as u32)
    }

    /// Number of single-site letters, `d²` (identity included).
    pub fn n_letters(&self) -> usize {
        self.local_dim * self.local_dim
    }

    /// Number of Pauli strings, `d^{2N}`.
    pub fn n_strings(&self) -> usize {
        self.state_dim() * self.state_dim()
    }

    /// Number of regions, `2^N`.
    pub fn n_regions(&self) -> usize {
        1usize << self.n_sites
    }

    pub fn full_mask(&self) -> u64 {
        if self.n_sites == 64 {
            u64::MAX
        } else {
            (1u64 << self.n_sites) - 1
        }
    }

    /// Fails unless the `d^{2N}` operator space fits under [`MAX_OPERATOR_ENTRIES`].
    pub fn require_operator_side(&self) -> Result<()> {
        let dim = self.state_dim();
        match dim.checked_mul(dim) {
            Some(entries) if entries <= MAX_OPERATOR_ENTRIES => Ok(()),
            _ => Err(Error::CapExceeded {
                what: "dense operators",
                n_sites: self.n_sites,
                local_dim: self.local_dim,
                limit: max_sites(self.local_dim * self.local_dim, MAX_OPERATOR_ENTRIES),
            }),
        }
    }

    /// Place value of `site` in a state index.
    pub fn site_stride(&self, site: usize) -> usize {
        self.local_dim.pow((self.n_sites - 1 - site) as u32)
    }

    /// Local basis state of `site` in the product basis state `index`.
    pub fn digit(&self, index: usize, site: usize) -> usize {
        (index / self.site_stride(site)) % self.local_dim
    }

    pub(crate) fn check_mask(&self, mask: u64) -> Result<()> {
        if mask & !self.full_mask() != 0 {
            return Err(Error::InvalidArgument(format!(
                "site mask {mask:#b} outside a chain of {} sites",
                self.n_sites
            )));
        }
        Ok(())
    }

    pub(crate) fn same_as(&self, other: &ChainSpec, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!(
                "{what}: chain (N={}, d={}) vs (N={}, d={})",
                self.n_sites, self.local_dim, other.n_sites, other.local_dim
            )));
        }
        Ok(())
    }
}

fn max_sites(base: usize, limit: usize) -> usize {
    let mut n = 0;
    let mut size = 1usize;
    while let Some(next) = size.checked_mul(base).filter(|&s| s <= limit) {
        size = next;
        n += 1;
    }
    n
}

/// The `d² − 1` traceless Hermitian matrices spanning a single site, with
/// `tr(σ_a σ_b) = d δ_ab`.
///
/// Ordering: symmetric off-diagonal `(j, k)` for `j < k` in lexicographic
/// order, then antisymmetric in the same order, then the `d − 1` diagonal
/// generalized Gell-Mann matrices. For `d = 2` that is `x, y, z`.
#[derive(Clone, Debug)]
pub struct SiteBasis {
    local_dim: usize,
    matrices: Vec<Array2<C64>>,
}

pub fn site_basis(d: usize) -> Result<SiteBasis> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let scale = (d as f64 / 2.0).sqrt();
    let mut matrices = Vec::with_capacity(d * d - 1);
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
        .collect();
    for &(j, k) in &pairs {
        let mut m = Array2::zeros((d, d));
        m[[j, k]] = ONE * scale;
        m[[k, j]] = ONE * scale;
        matrices.push(m);
    }
    for &(j, k) in &pairs {
        let mut m = Array2::zeros((d, d));
        m[[j, k]] = -I * scale;
        m[[k, j]] = I * scale;
        matrices.push(m);
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt() * scale;
        let mut m = Array2::zeros((d, d));
        for j in 0..l {
            m[[j, j]] = ONE * norm;
        }
        m[[l, l]] = ONE * (-(l as f64) * norm);
        matrices.push(m);
    }
    Ok(SiteBasis { local_dim: d, matrices })
}

impl SiteBasis {
    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// Number of traceless basis elements, `d² − 1`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Traceless elements, in basis order.
    pub fn matrices(&self) -> &[Array2<C64>] {
        &self.matrices
    }

    /// Matrix for a string letter: 0 is the identity, `a ≥ 1` is `σ_a`.
    pub fn letter_matrix(&self, letter: usize) -> Array2<C64> {
        if letter == 0 {
            Array2::eye(self.local_dim)
        } else {
            self.matrices[letter - 1].clone()
        }
    }
}

/// Tensor product of single-site operators, one letter per site.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    chain: ChainSpec,
    letters: Vec<usize>,
    support: u64,
}

impl PauliString {
    pub fn new(chain: ChainSpec, letters: Vec<usize>) -> Result<Self> {
        if letters.len() != chain.n_sites() {
            return Err(Error::DimensionMismatch(format!(
                "{} letters for {} sites",
                letters.len(),
                chain.n_sites()
            )));
        }
        if let Some(&bad) = letters.iter().find(|&&a| a >= chain.n_letters()) {
            return Err(Error::InvalidArgument(format!(
                "letter {bad} out of range for d = {}",
                chain.local_dim()
            )));
        }
        let support = letters
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0)
            .fold(0u64, |m, (n, _)| m | (1 << n));
        Ok(Self { chain, letters, support })
    }

    pub fn identity(chain: ChainSpec) -> Self {
        Self { chain, letters: vec![0; chain.n_sites()], support: 0 }
    }

    /// Single nontrivial letter on one site.
    pub fn single(chain: ChainSpec, site: usize, letter: usize) -> Result<Self> {
        if site >= chain.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "site {site} outside a chain of {} sites",
                chain.n_sites()
            )));
        }
        let mut letters = vec![0; chain.n_sites()];
        letters[site] = letter;
        Self::new(chain, letters)
    }

    /// Inverse of [`PauliString::index`].
    pub fn from_index(chain: ChainSpec, mut index: usize) -> Result<Self> {
        if index >= chain.n_strings() {
            return Err(Error::InvalidArgument(format!("string index {index} out of range")));
        }
        let q = chain.n_letters();
        let letters = (0..chain.n_sites())
            .map(|_| {
                let a = index % q;
                index /= q;
                a
            })
            .collect();
        Self::new(chain, letters)
    }

    /// Position in a [`crate::CoefficientTable`]: site 0 is the least
    /// significant base-`d²` digit.
    pub fn index(&self) -> usize {
        let q = self.chain.n_letters();
        self.letters.iter().rev().fold(0, |acc, &a| acc * q + a)
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn support(&self) -> u64 {
        self.support
    }

    pub fn size(&self) -> usize {
        self.support.count_ones() as usize
    }
}

/// Dense `D × D` complex operator with tracked Hermitian / traceless flags.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    chain: ChainSpec,
    entries: Array2<C64>,
    hermitian: bool,
    traceless: bool,
}

impl DenseOperator {
    /// Wraps a matrix, computing both flags.
    pub fn from_matrix(chain: ChainSpec, entries: Array2<C64>) -> Result<Self> {
        let dim = chain.state_dim();
        if entries.dim() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {:?} for state dimension {dim}",
                entries.dim()
            )));
        }
        let mut op = Self { chain, entries, hermitian: false, traceless: false };
        op.refresh_flags();
        Ok(op)
    }

    /// Wraps a matrix whose flags are known from construction.
    pub(crate) fn with_flags(
        chain: ChainSpec,
        entries: Array2<C64>,
        hermitian: bool,
        traceless: bool,
    ) -> Self {
        debug_assert_eq!(entries.nrows(), chain.state_dim());
        Self { chain, entries, hermitian, traceless }
    }

    pub fn identity(chain: ChainSpec) -> Self {
        let dim = chain.state_dim();
        Self::with_flags(chain, Array2::eye(dim), true, false)
    }

    pub fn zeros(chain: ChainSpec) -> Self {
        let dim = chain.state_dim();
        Self::with_flags(chain, Array2::zeros((dim, dim)), true, true)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(state: &StateVector) -> Self {
        let a = state.amplitudes();
        let dim = a.len();
        let entries = Array2::from_shape_fn((dim, dim), |(r, c)| a[r] * a[c].conj());
        Self::with_flags(state.chain(), entries, true, false)
    }

    /// Draw from the Gaussian unitary ensemble: independent standard normal
    /// coefficients on every Hermitian basis direction.
    pub fn random_hermitian<R: Rng + ?Sized>(chain: ChainSpec, rng: &mut R) -> Self {
        let dim = chain.state_dim();
        let mut m = Array2::<C64>::zeros((dim, dim));
        for r in 0..dim {
            m[[r, r]] = C64::new(rng.sample(StandardNormal), 0.0);
            for c in r + 1..dim {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let z = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                m[[r, c]] = z;
                m[[c, r]] = z.conj();
            }
        }
        Self::with_flags(chain, m, true, false)
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }

    /// Recomputes both flags from the entries.
    pub fn refresh_flags(&mut self) {
        let scale = self.max_abs();
        self.hermitian = self.hermiticity_residual() <= HERMITIAN_TOL * scale;
        self.traceless =
            self.trace().norm() <= HERMITIAN_TOL * scale * self.chain.state_dim() as f64;
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `max |O_rc − conj(O_cr)|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let dim = self.entries.nrows();
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in r..dim {
                worst = worst.max((self.entries[[r, c]] - self.entries[[c, r]].conj()).norm());
            }
        }
        worst
    }

    /// Fails with [`Error::NotHermitian`] unless the entries are Hermitian
    /// within [`HERMITIAN_TOL`] relative to the largest entry.
    pub fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            return Ok(());
        }
        let residual = self.hermiticity_residual();
        let tolerance = HERMITIAN_TOL * self.max_abs();
        if residual <= tolerance {
            Ok(())
        } else {
            Err(Error::NotHermitian { residual, tolerance })
        }
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    /// `tr(O† O)`.
    pub fn hs_norm2(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Rescaled so that `tr(O²) = D`.
    pub fn normalized(&self) -> Result<Self> {
        let norm2 = self.hs_norm2();
        if norm2 == 0.0 {
            return Err(Error::ZeroOperator);
        }
        let factor = (self.chain.state_dim() as f64 / norm2).sqrt();
        Ok(self.scaled(factor))
    }

    /// `O − tr(O)/D · I`.
    pub fn traceless_part(&self) -> Self {
        let shift = self.trace() / self.chain.state_dim() as f64;
        let mut entries = self.entries.clone();
        entries.diag_mut().mapv_inplace(|z| z - shift);
        Self::with_flags(self.chain, entries, self.hermitian, true)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::with_flags(
            self.chain,
            self.entries.mapv(|z| z * factor),
            self.hermitian,
            self.traceless,
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.chain.same_as(&other.chain, "add")?;
        Self::from_matrix(self.chain, &self.entries + &other.entries)
    }

    pub fn dot(&self, other: &Self) -> Result<Self> {
        self.chain.same_as(&other.chain, "product")?;
        Self::from_matrix(self.chain, self.entries.dot(&other.entries))
    }

    /// `[A, B] = AB − BA`. Anti-Hermitian for Hermitian inputs.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.chain.same_as(&other.chain, "commutator")?;
        let ab = self.entries.dot(&other.entries);
        let ba = other.entries.dot(&self.entries);
        Ok(Self::with_flags(self.chain, ab - ba, false, true))
    }

    /// `⟨ψ|O|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> Result<C64> {
        self.chain.same_as(&state.chain, "expectation")?;
        let a = state.amplitudes();
        let oa = self.entries.dot(a);
        Ok(a.iter().zip(oa.iter()).map(|(x, y)| x.conj() * y).sum())
    }
}

/// Normalized pure state of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    chain: ChainSpec,
    amplitudes: Array1<C64>,
}

/// Norm tolerance enforced by [`StateVector::new`].
pub const STATE_NORM_TOL: f64 = 1e-12;

impl StateVector {
    pub fn new(chain: ChainSpec, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != chain.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for state dimension {}",
                amplitudes.len(),
                chain.state_dim()
            )));
        }
        let norm = norm(&amplitudes);
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::InvalidArgument(format!("state norm {norm} is not 1")));
        }
        Ok(Self { chain, amplitudes })
    }

    /// Divides by the Euclidean norm.
    pub fn normalize(chain: ChainSpec, mut amplitudes: Array1<C64>) -> Result<Self> {
        let n = norm(&amplitudes);
        if n == 0.0 {
            return Err(Error::InvalidArgument("zero vector".into()));
        }
        amplitudes.mapv_inplace(|z| z / n);
        Self::new(chain, amplitudes)
    }

    pub(crate) fn from_parts(chain: ChainSpec, amplitudes: Array1<C64>) -> Self {
        Self { chain, amplitudes }
    }

    /// Product basis state `|index⟩`.
    pub fn basis(chain: ChainSpec, index: usize) -> Result<Self> {
        let dim = chain.state_dim();
        if index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} >= {dim}")));
        }
        let mut a = Array1::zeros(dim);
        a[index] = ONE;
        Ok(Self { chain, amplitudes: a })
    }

    /// Tensor product of normalized factors, in site order. Factors may span
    /// several sites (their lengths must multiply to `D`).
    pub fn product(chain: ChainSpec, factors: &[Array1<C64>]) -> Result<Self> {
        let mut acc = Array1::from_elem(1, ONE);
        for f in factors {
            acc = kron_vec(&acc, f);
        }
        Self::new(chain, acc)
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

pub(crate) fn norm(v: &Array1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn kron_vec(a: &Array1<C64>, b: &Array1<C64>) -> Array1<C64> {
    let nb = b.len();
    Array1::from_shape_fn(a.len() * nb, |i| a[i / nb] * b[i % nb])
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    Array2::from_shape_fn((ra * rb, ca * cb), |(r, c)| a[[r / rb, c / cb]] * b[[r % rb, c % cb]])
}

/// Swap on `C^d ⊗ C^d`: `[X]_{αγ,βδ} = δ_αδ δ_βγ`, row `(α, γ)` at `α d + γ`.
pub fn swap_operator(d: usize) -> Result<Array2<C64>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let mut x = Array2::zeros((d * d, d * d));
    for a in 0..d {
        for b in 0..d {
            x[[a * d + b, b * d + a]] = ONE;
        }
    }
    Ok(x)
}

/// Materializes a Pauli string as a `D × D` matrix.
pub fn string_to_matrix(s: &PauliString, basis: &SiteBasis) -> Result<DenseOperator> {
    let chain = s.chain();
    if basis.local_dim() != chain.local_dim() {
        return Err(Error::DimensionMismatch(format!(
            "basis for d = {} applied to a chain with d = {}",
            basis.local_dim(),
            chain.local_dim()
        )));
    }
    let mut m = Array2::from_elem((1, 1), ONE);
    for &a in s.letters() {
        m = kron(&m, &basis.letter_matrix(a));
    }
    Ok(DenseOperator::with_flags(chain, m, true, s.support() != 0))
}

/// Hilbert-Schmidt pairing `tr(A† B)`.
pub fn hs_trace_inner(a: &DenseOperator, b: &DenseOperator) -> Result<C64> {
    a.chain().same_as(&b.chain(), "trace inner product")?;
    Ok(a.matrix()
        .iter()
        .zip(b.matrix().iter())
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Raw partial trace over every site not in `keep`; the result lives on the
/// kept sites in their original order. An empty `keep` gives the 1×1 matrix
/// `tr(O)`.
pub fn partial_trace(op: &DenseOperator, keep: u64) -> Result<DenseOperator> {
    let chain = op.chain();
    chain.check_mask(keep)?;
    let d = chain.local_dim();
    let n = chain.n_sites();
    let kept: Vec<usize> = (0..n).filter(|&s| keep >> s & 1 == 1).collect();
    let traced: Vec<usize> = (0..n).filter(|&s| keep >> s & 1 == 0).collect();
    let out_chain = if kept.is_empty() {
        ChainSpec::empty(d)
    } else {
        ChainSpec::new(kept.len(), d)?
    };
    let out_dim = out_chain.state_dim();
    let env_dim = d.pow(traced.len() as u32);
    let kept_strides: Vec<usize> = kept.iter().map(|&s| chain.site_stride(s)).collect();
    let traced_strides: Vec<usize> = traced.iter().map(|&s| chain.site_stride(s)).collect();
    let expand = |mut index: usize, strides: &[usize]| -> usize {
        let mut full = 0;
        for &stride in strides.iter().rev() {
            full += (index % d) * stride;
            index /= d;
        }
        full
    };
    let kept_offsets: Vec<usize> = (0..out_dim).map(|i| expand(i, &kept_strides)).collect();
    let env_offsets: Vec<usize> = (0..env_dim).map(|i| expand(i, &traced_strides)).collect();
    let m = op.matrix();
    let out = Array2::from_shape_fn((out_dim, out_dim), |(r, c)| {
        env_offsets
            .iter()
            .map(|&e| m[[kept_offsets[r] + e, kept_offsets[c] + e]])
            .sum::<C64>()
    });
    Ok(DenseOperator::with_flags(out_chain, out, op.is_hermitian(), false))
}

/// Largest chain accepted by [`doubled_trace`].
pub const DOUBLED_SPACE_MAX_SITES: usize = 5;

/// Literal doubled-space trace `tr[(O ⊗ O) · ⊗_n M_n]`, where `M_n` acts on
/// the two copies of site `n` with the `(α, γ), (β, δ)` layout of
/// [`swap_operator`]. Cost `D⁴ N`; a test oracle only.
pub fn doubled_trace(op: &DenseOperator, factors: &[Array2<C64>]) -> Result<C64> {
    let chain = op.chain();
    let n = chain.n_sites();
    let d = chain.local_dim();
    if n > DOUBLED_SPACE_MAX_SITES {
        return Err(Error::CapExceeded {
            what: "doubled-space traces",
            n_sites: n,
            local_dim: d,
            limit: DOUBLED_SPACE_MAX_SITES,
        });
    }
    if factors.len() != n || factors.iter().any(|f| f.dim() != (d * d, d * d)) {
        return Err(Error::DimensionMismatch(format!(
            "need {n} site factors of shape {}x{}",
            d * d,
            d * d
        )));
    }
    let dim = chain.state_dim();
    let digits: Vec<Vec<usize>> = (0..dim)
        .map(|i| (0..n).map(|s| chain.digit(i, s)).collect())
        .collect();
    let m = op.matrix();
    let mut total = ZERO;
    for r1 in 0..dim {
        for c1 in 0..dim {
            let o1 = m[[r1, c1]];
            if o1 == ZERO {
                continue;
            }
            for r2 in 0..dim {
                for c2 in 0..dim {
                    let o2 = m[[r2, c2]];
                    if o2 == ZERO {
                        continue;
                    }
                    let mut w = ONE;
                    for (s, f) in factors.iter().enumerate() {
                        let row = digits[c1][s] * d + digits[c2][s];
                        let col = digits[r1][s] * d + digits[r2][s];
                        w *= f[[row, col]];
                        if w == ZERO {
                            break;
                        }
                    }
                    total += o1 * o2 * w;
                }
            }
        }
    }
    Ok(total)
}
