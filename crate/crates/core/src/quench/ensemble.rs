//! Random initial-state ensembles: Haar product states, finite per-site
//! ensembles (2-designs) and clustered Haar blocks.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::rng::{site_stream, Stream};
use crate::algebra::{kron, norm, swap_operator, ChainSpec, StateVector};
use crate::error::{Error, Result};

/// State of one site (or one block of sites), not tied to a chain.
pub type LocalState = Array1<C64>;

/// Haar-random unit vector: independent standard complex Gaussians,
/// normalized.
pub fn sample_haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> LocalState {
    loop {
        let v: LocalState = (0..dim)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.mapv(|z| z / n);
        }
    }
}

/// Finite single-site ensemble `{(p_i, |ψ_i⟩)}`.
#[derive(Clone, Debug)]
pub struct SiteEnsemble {
    weights: Vec<f64>,
    states: Vec<LocalState>,
    cumulative: Vec<f64>,
}

impl SiteEnsemble {
    pub fn new(members: Vec<(f64, LocalState)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidEnsemble("empty site ensemble".into()));
        }
        let dim = members[0].1.len();
        let mut total = 0.0;
        let mut cumulative = Vec::with_capacity(members.len());
        for (p, s) in &members {
            if !(*p >= 0.0) {
                return Err(Error::InvalidEnsemble(format!("negative weight {p}")));
            }
            if s.len() != dim || (norm(s) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidEnsemble("states must be normalized and of equal dimension".into()));
            }
            total += p;
            cumulative.push(total);
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!("weights sum to {total}")));
        }
        let (weights, states) = members.into_iter().unzip();
        Ok(Self { weights, states, cumulative })
    }

    /// The six eigenstates of σx, σy, σz with weight 1/6 each: a qubit
    /// 2-design.
    pub fn pauli_six() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = |a: (f64, f64), b: (f64, f64)| ndarray::arr1(&[C64::new(a.0, a.1), C64::new(b.0, b.1)]);
        let states = vec![
            c((1.0, 0.0), (0.0, 0.0)),
            c((0.0, 0.0), (1.0, 0.0)),
            c((r, 0.0), (r, 0.0)),
            c((r, 0.0), (-r, 0.0)),
            c((r, 0.0), (0.0, r)),
            c((r, 0.0), (0.0, -r)),
        ];
        Self::new(states.into_iter().map(|s| (1.0 / 6.0, s)).collect()).expect("valid ensemble")
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn members(&self) -> impl Iterator<Item = (f64, &LocalState)> {
        self.weights.iter().copied().zip(&self.states)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &LocalState {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.states.len() - 1);
        &self.states[i]
    }
}

#[derive(Clone, Debug)]
pub enum EnsembleKind {
    /// Independent Haar state on every site.
    HaarProduct,
    /// Independent draw from a finite ensemble on every site.
    FiniteProduct { sites: Vec<SiteEnsemble> },
    /// Independent Haar state on each contiguous block of sites.
    ClusteredHaar { blocks: Vec<Vec<usize>> },
}

#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    chain: ChainSpec,
    kind: EnsembleKind,
    master_seed: u64,
}

impl EnsembleSpec {
    pub fn haar_product(chain: ChainSpec, master_seed: u64) -> Self {
        Self { chain, kind: EnsembleKind::HaarProduct, master_seed }
    }

    pub fn finite_product(chain: ChainSpec, sites: Vec<SiteEnsemble>, master_seed: u64) -> Result<Self> {
        Self::build(chain, EnsembleKind::FiniteProduct { sites }, master_seed)
    }

    /// Same finite ensemble on every site.
    pub fn uniform_finite(chain: ChainSpec, site: SiteEnsemble, master_seed: u64) -> Result<Self> {
        Self::finite_product(chain, vec![site; chain.n_sites()], master_seed)
    }

    pub fn clustered_haar(chain: ChainSpec, blocks: Vec<Vec<usize>>, master_seed: u64) -> Result<Self> {
        Self::build(chain, EnsembleKind::ClusteredHaar { blocks }, master_seed)
    }

    /// Consecutive blocks of `block_size` sites; the last block takes the
    /// remainder.
    pub fn contiguous_blocks(chain: ChainSpec, block_size: usize, master_seed: u64) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidEnsemble("block size must be positive".into()));
        }
        let sites: Vec<usize> = (0..chain.n_sites()).collect();
        let blocks = sites.chunks(block_size).map(|c| c.to_vec()).collect();
        Self::clustered_haar(chain, blocks, master_seed)
    }

    fn build(chain: ChainSpec, kind: EnsembleKind, master_seed: u64) -> Result<Self> {
        let spec = Self { chain, kind, master_seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.chain.local_dim();
        match &self.kind {
            EnsembleKind::HaarProduct => Ok(()),
            EnsembleKind::FiniteProduct { sites } => {
                if sites.len() != self.chain.n_sites() {
                    return Err(Error::InvalidEnsemble(format!(
                        "{} site ensembles for {} sites",
                        sites.len(),
                        self.chain.n_sites()
                    )));
                }
                if sites.iter().any(|s| s.dim() != d) {
                    return Err(Error::InvalidEnsemble(format!("site states must have dimension {d}")));
                }
                Ok(())
            }
            EnsembleKind::ClusteredHaar { blocks } => {
                let mut next = 0;
                for block in blocks {
                    if block.is_empty() {
                        return Err(Error::InvalidEnsemble("empty block".into()));
                    }
                    for &s in block {
                        if s != next {
                            return Err(Error::InvalidEnsemble(
                                "blocks must be contiguous and cover every site once, in order".into(),
                            ));
                        }
                        next += 1;
                    }
                }
                if next != self.chain.n_sites() {
                    return Err(Error::InvalidEnsemble(format!(
                        "blocks cover {next} of {} sites",
                        self.chain.n_sites()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    pub fn kind(&self) -> &EnsembleKind {
        &self.kind
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self { master_seed, ..self.clone() }
    }

    pub fn is_product(&self) -> bool {
        !matches!(self.kind, EnsembleKind::ClusteredHaar { .. })
    }

    /// Draw for one site of a product ensemble.
    pub(crate) fn sample_site(&self, sample_index: u64, site: usize) -> LocalState {
        let mut rng = site_stream(self.master_seed, sample_index, site as u64);
        self.sample_site_with(site, &mut rng)
    }

    pub(crate) fn sample_site_with(&self, site: usize, rng: &mut Stream) -> LocalState {
        match &self.kind {
            EnsembleKind::FiniteProduct { sites } => sites[site].sample(rng).clone(),
            _ => sample_haar_state(self.chain.local_dim(), rng),
        }
    }

    /// Per-site (or per-block) factors of one initial state.
    pub fn sample_factors(&self, sample_index: u64) -> Vec<LocalState> {
        match &self.kind {
            EnsembleKind::ClusteredHaar { blocks } => blocks
                .iter()
                .map(|block| {
                    let dim = self.chain.local_dim().pow(block.len() as u32);
                    let mut rng = site_stream(self.master_seed, sample_index, block[0] as u64);
                    sample_haar_state(dim, &mut rng)
                })
                .collect(),
            _ => (0..self.chain.n_sites())
                .map(|site| self.sample_site(sample_index, site))
                .collect(),
        }
    }
}

/// Initial state number `sample_index`, a pure function of
/// `(master_seed, sample_index)`.
pub fn sample_initial_state(ensemble: &EnsembleSpec, sample_index: u64) -> Result<StateVector> {
    ensemble.validate()?;
    StateVector::product(ensemble.chain(), &ensemble.sample_factors(sample_index))
}

/// Residuals of the two 2-design conditions for a single-site ensemble.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TwoDesignReport {
    /// `max |Σ p_i |ψ_i⟩⟨ψ_i| − I/d|`.
    pub first_moment_residual: f64,
    /// `max |Σ p_i (|ψ_i⟩⟨ψ_i|)^{⊗2} − (X + I)/(d(d+1))|`.
    pub second_moment_residual: f64,
    pub threshold: f64,
}

impl TwoDesignReport {
    pub fn first_moment_ok(&self) -> bool {
        self.first_moment_residual < self.threshold
    }

    pub fn second_moment_ok(&self) -> bool {
        self.second_moment_residual < self.threshold
    }

    pub fn passes(&self) -> bool {
        self.first_moment_ok() && self.second_moment_ok()
    }
}

pub const TWO_DESIGN_TOL: f64 = 1e-10;

pub fn verify_2design(members: &[(f64, LocalState)], d: usize) -> Result<TwoDesignReport> {
    let x = swap_operator(d)?;
    if members.iter().any(|(_, s)| s.len() != d) {
        return Err(Error::DimensionMismatch(format!("ensemble states must have dimension {d}")));
    }
    let mut first = Array2::<C64>::zeros((d, d));
    let mut second = Array2::<C64>::zeros((d * d, d * d));
    for (p, s) in members {
        let rho = Array2::from_shape_fn((d, d), |(r, c)| s[r] * s[c].conj());
        second = second + kron(&rho, &rho).mapv(|z| z * *p);
        first = first + rho.mapv(|z| z * *p);
    }
    let first_target = Array2::<C64>::eye(d).mapv(|z| z / d as f64);
    let second_target = (x + Array2::<C64>::eye(d * d)).mapv(|z| z / (d * (d + 1)) as f64);
    let resid = |a: &Array2<C64>, b: &Array2<C64>| {
        a.iter().zip(b.iter()).fold(0.0f64, |m, (u, v)| m.max((u - v).norm()))
    };
    Ok(TwoDesignReport {
        first_moment_residual: resid(&first, &first_target),
        second_moment_residual: resid(&second, &second_target),
        threshold: TWO_DESIGN_TOL,
    })
}

impl SiteEnsemble {
    pub fn verify_2design(&self) -> TwoDesignReport {
        let members: Vec<(f64, LocalState)> = self.members().map(|(p, s)| (p, s.clone())).collect();
        verify_2design(&members, self.dim()).expect("dimension checked at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{partial_trace, DenseOperator};
    use rand::SeedableRng;

    #[test]
    fn haar_scalar_is_a_phase() {
        let mut rng = Stream::seed_from_u64(1);
        let v = sample_haar_state(1, &mut rng);
        assert!((v[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn six_state_design() {
        let report = SiteEnsemble::pauli_six().verify_2design();
        assert!(report.passes(), "{report:?}");
        let zero = ndarray::arr1(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let one = ndarray::arr1(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let z_only = verify_2design(&[(0.5, zero.clone()), (0.5, one)], 2).unwrap();
        assert!(z_only.first_moment_ok() && !z_only.second_moment_ok());
        let single = verify_2design(&[(1.0, zero)], 2).unwrap();
        assert!(!single.first_moment_ok() && !single.passes());
    }

    #[test]
    fn finite_single_state_is_deterministic() {
        let chain = ChainSpec::qubits(1).unwrap();
        let zero = ndarray::arr1(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let site = SiteEnsemble::new(vec![(1.0, zero.clone())]).unwrap();
        let e = EnsembleSpec::uniform_finite(chain, site, 9).unwrap();
        for i in 0..20 {
            assert_eq!(sample_initial_state(&e, i).unwrap().amplitudes(), &zero);
        }
    }

    #[test]
    fn product_samples_have_pure_marginals() {
        let chain = ChainSpec::qubits(4).unwrap();
        let e = EnsembleSpec::haar_product(chain, 3);
        let psi = sample_initial_state(&e, 17).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let rho = DenseOperator::projector(&psi);
        for site in 0..4 {
            let r = partial_trace(&rho, 1 << site).unwrap();
            let purity = r.hs_norm2();
            assert!((purity - 1.0).abs() < 1e-12, "site {site} purity {purity}");
        }
    }

    #[test]
    fn clustered_blocks_are_pure_but_entangled_inside() {
        let chain = ChainSpec::qubits(4).unwrap();
        let e = EnsembleSpec::contiguous_blocks(chain, 2, 3).unwrap();
        let psi = sample_initial_state(&e, 0).unwrap();
        let rho = DenseOperator::projector(&psi);
        let block = partial_trace(&rho, 0b0011).unwrap();
        assert!((block.hs_norm2() - 1.0).abs() < 1e-12);
        let site = partial_trace(&rho, 0b0001).unwrap();
        assert!(site.hs_norm2() < 1.0 - 1e-6);
    }

    #[test]
    fn malformed_ensembles_are_rejected() {
        let chain = ChainSpec::qubits(4).unwrap();
        assert!(EnsembleSpec::clustered_haar(chain, vec![vec![0, 1], vec![3, 2]], 0).is_err());
        assert!(EnsembleSpec::clustered_haar(chain, vec![vec![0, 1], vec![2]], 0).is_err());
        assert!(EnsembleSpec::clustered_haar(chain, vec![vec![0, 1], vec![1, 2, 3]], 0).is_err());
        let zero = ndarray::arr1(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        assert!(SiteEnsemble::new(vec![(0.7, zero.clone())]).is_err());
        assert!(SiteEnsemble::new(vec![(-0.5, zero.clone()), (1.5, zero.clone())]).is_err());
        let site = SiteEnsemble::new(vec![(1.0, zero)]).unwrap();
        assert!(EnsembleSpec::finite_product(chain, vec![site], 0).is_err());
    }

    #[test]
    fn samples_do_not_depend_on_order_of_generation() {
        let chain = ChainSpec::qubits(3).unwrap();
        let e = EnsembleSpec::haar_product(chain, 42);
        let forward: Vec<_> = (0..5).map(|i| sample_initial_state(&e, i).unwrap()).collect();
        let backward: Vec<_> = (0..5).rev().map(|i| sample_initial_state(&e, i).unwrap()).collect();
        for (a, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(a, b);
        }
    }
}
