//! Pauli-string coefficient tables and the size / region distributions
//! derived from them.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::algebra::{
    site_basis, string_to_matrix, ChainSpec, DenseOperator, PauliString, HERMITIAN_TOL,
};
use crate::error::{Error, Result};

/// Tolerance for sums of probabilities and for clipping round-off dust.
pub const PROBABILITY_TOL: f64 = 1e-9;

/// Largest chain accepted by [`decompose_oracle`].
pub const ORACLE_MAX_SITES: usize = 5;

/// Real amplitudes `ψ_s = d^{-N} tr(O σ_s)` of every Pauli string `s`,
/// indexed as in [`PauliString::index`].
#[derive(Clone, Debug, Serialize)]
pub struct CoefficientTable {
    chain: ChainSpec,
    values: Vec<f64>,
    norm2: f64,
}

impl CoefficientTable {
    fn from_values(chain: ChainSpec, values: Vec<f64>) -> Self {
        let norm2 = values.iter().map(|v| v * v).sum();
        Self { chain, values, norm2 }
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_s ψ_s² = tr(O²) / d^N`.
    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn get(&self, s: &PauliString) -> f64 {
        self.values[s.index()]
    }

    /// Support mask of the string stored at `index`.
    pub fn support_of(&self, mut index: usize) -> u64 {
        let q = self.chain.n_letters();
        let mut mask = 0;
        for site in 0..self.chain.n_sites() {
            if index % q != 0 {
                mask |= 1 << site;
            }
            index /= q;
        }
        mask
    }
}

/// Pauli decomposition by a site-by-site block transform, `O(N d^{2N})`
/// basis pairings.
///
/// Each pass replaces the `d × d` block `B` on one site's (row, column)
/// digits with the `d²` numbers `tr(σ_a B) / d` (identity first). After every
/// site has been transformed, the entry whose row/column digits are
/// `(r_n, c_n)` holds the coefficient of the string with letter
/// `a_n = r_n d + c_n`; a final gather moves it to its table position.
pub fn decompose(op: &DenseOperator) -> Result<CoefficientTable> {
    transform(op, false)
}

/// [`decompose`] with the sign of the `σ_1` row flipped on site 0. Exists
/// only so the self-test can prove it detects a broken transform.
#[doc(hidden)]
pub fn decompose_with_sign_fault(op: &DenseOperator) -> Result<CoefficientTable> {
    transform(op, true)
}

fn transform(op: &DenseOperator, sign_fault: bool) -> Result<CoefficientTable> {
    let chain = op.chain();
    chain.require_operator_side()?;
    op.require_hermitian()?;
    let d = chain.local_dim();
    let q = d * d;
    let n = chain.n_sites();
    let dim = chain.state_dim();
    let basis = site_basis(d)?;
    // pairing[a][α d + β] = σ_a[β, α] / d, with a = 0 the identity.
    let pairing: Vec<Vec<C64>> = (0..q)
        .map(|a| {
            let m = basis.letter_matrix(a);
            (0..q).map(|slot| m[[slot % d, slot / d]] / d as f64).collect()
        })
        .collect();

    let mut data: Vec<C64> = op.matrix().iter().copied().collect();
    let mut block = vec![C64::new(0.0, 0.0); q];
    for site in 0..n {
        let s = chain.site_stride(site);
        let offsets: Vec<usize> = (0..q).map(|slot| (slot / d) * s * dim + (slot % d) * s).collect();
        let flip = sign_fault && site == 0;
        for r in (0..dim).filter(|&r| (r / s) % d == 0) {
            for c in (0..dim).filter(|&c| (c / s) % d == 0) {
                let base = r * dim + c;
                for (slot, b) in block.iter_mut().enumerate() {
                    *b = data[base + offsets[slot]];
                }
                for (a, row) in pairing.iter().enumerate() {
                    let mut coef: C64 = row.iter().zip(&block).map(|(w, b)| w * b).sum();
                    if flip && a == 1 {
                        coef = -coef;
                    }
                    data[base + offsets[a]] = coef;
                }
            }
        }
    }

    let tolerance = HERMITIAN_TOL * op.max_abs();
    let mut values = vec![0.0; dim * dim];
    let mut worst_imag = 0.0f64;
    for r in 0..dim {
        for c in 0..dim {
            let mut index = 0;
            let mut place = 1;
            for site in 0..n {
                let letter = chain.digit(r, site) * d + chain.digit(c, site);
                index += letter * place;
                place *= q;
            }
            let z = data[r * dim + c];
            worst_imag = worst_imag.max(z.im.abs());
            values[index] = z.re;
        }
    }
    if worst_imag > tolerance {
        return Err(Error::NotHermitian { residual: worst_imag, tolerance });
    }
    Ok(CoefficientTable::from_values(chain, values))
}

/// Literal `d^{-N} tr(O σ_s)` for each string, one full trace per string.
/// Test oracle; limited to [`ORACLE_MAX_SITES`].
pub fn decompose_oracle(op: &DenseOperator) -> Result<CoefficientTable> {
    let chain = op.chain();
    if chain.n_sites() > ORACLE_MAX_SITES {
        return Err(Error::CapExceeded {
            what: "the brute-force decomposition oracle",
            n_sites: chain.n_sites(),
            local_dim: chain.local_dim(),
            limit: ORACLE_MAX_SITES,
        });
    }
    op.require_hermitian()?;
    let basis = site_basis(chain.local_dim())?;
    let dim = chain.state_dim();
    let o = op.matrix();
    let values = (0..chain.n_strings())
        .map(|index| {
            let s = PauliString::from_index(chain, index)?;
            let m = string_to_matrix(&s, &basis)?;
            let m = m.matrix();
            let mut tr = C64::new(0.0, 0.0);
            for r in 0..dim {
                for c in 0..dim {
                    tr += o[[r, c]] * m[[c, r]];
                }
            }
            Ok(tr.re / dim as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoefficientTable::from_values(chain, values))
}

/// Weight `p_R` of strings supported exactly on each region mask `R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionDistribution {
    chain: ChainSpec,
    p: Vec<f64>,
}

impl RegionDistribution {
    pub fn new(chain: ChainSpec, p: Vec<f64>) -> Result<Self> {
        if p.len() != chain.n_regions() {
            return Err(Error::DimensionMismatch(format!(
                "{} region weights for {} regions",
                p.len(),
                chain.n_regions()
            )));
        }
        check_probabilities(&p)?;
        Ok(Self { chain, p })
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    /// Indexed by region mask.
    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, mask: u64) -> f64 {
        self.p[mask as usize]
    }
}

/// Weight `p_l` of strings of size `l = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeDistribution {
    chain: ChainSpec,
    p: Vec<f64>,
}

impl SizeDistribution {
    pub fn new(chain: ChainSpec, p: Vec<f64>) -> Result<Self> {
        if p.len() != chain.n_sites() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} size weights for {} sites",
                p.len(),
                chain.n_sites()
            )));
        }
        check_probabilities(&p)?;
        Ok(Self { chain, p })
    }

    /// Full pipeline: decompose, aggregate by region, aggregate by size.
    pub fn of_operator(op: &DenseOperator) -> Result<Self> {
        Ok(size_distribution(&region_distribution(&decompose(op)?)?))
    }

    pub fn chain(&self) -> ChainSpec {
        self.chain
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn mean_size(&self) -> f64 {
        self.p.iter().enumerate().map(|(l, p)| l as f64 * p).sum()
    }

    /// Total-variation distance `½ Σ_l |p_l − q_l|`.
    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        self.chain.same_as(&other.chain, "total variation")?;
        Ok(0.5 * self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Distribution conditioned on `l ≥ 1` (the `l = 0` weight removed and
    /// the rest renormalized).
    pub fn conditioned_nonzero(&self) -> Result<Self> {
        let rest = 1.0 - self.p[0];
        if rest <= 0.0 {
            return Err(Error::ZeroOperator);
        }
        let mut p: Vec<f64> = self.p.iter().map(|x| x / rest).collect();
        p[0] = 0.0;
        Self::new(self.chain, p)
    }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if let Some(bad) = p.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::Inconsistent(format!("negative or NaN probability {bad:e}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOL {
        return Err(Error::Inconsistent(format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// `p_R = Σ_{support(s) = R} ψ_s² / Σ_s ψ_s²`, in one pass over the table.
pub fn region_distribution(table: &CoefficientTable) -> Result<RegionDistribution> {
    if table.norm2() <= 0.0 {
        return Err(Error::ZeroOperator);
    }
    let chain = table.chain();
    let q = chain.n_letters();
    let n = chain.n_sites();
    let mut p = vec![0.0; chain.n_regions()];
    for (index, v) in table.values().iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let mut rest = index;
        let mut mask = 0usize;
        for site in 0..n {
            if rest % q != 0 {
                mask |= 1 << site;
            }
            rest /= q;
        }
        p[mask] += v * v;
    }
    for x in &mut p {
        *x /= table.norm2();
    }
    RegionDistribution::new(chain, p)
}

/// `p_l = Σ_{|R| = l} p_R`.
pub fn size_distribution(regions: &RegionDistribution) -> SizeDistribution {
    let chain = regions.chain();
    let mut p = vec![0.0; chain.n_sites() + 1];
    for (mask, w) in regions.p().iter().enumerate() {
        p[mask.count_ones() as usize] += w;
    }
    SizeDistribution { chain, p }
}

/// `F(z) = Σ_l p_l z^l`.
pub fn generating_function(dist: &SizeDistribution, z: C64) -> C64 {
    dist.p().iter().rev().fold(C64::new(0.0, 0.0), |acc, &p| acc * z + p)
}

/// The `N + 1` points `z_k = exp(2πi k / (N + 1))` used by
/// [`size_from_samples`].
pub fn sample_points(chain: ChainSpec) -> Vec<C64> {
    let m = chain.n_sites() + 1;
    (0..m)
        .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
        .collect()
}

/// Recovers `p_l` from `F` evaluated at [`sample_points`] by an inverse DFT.
pub fn size_from_samples(chain: ChainSpec, values: &[C64]) -> Result<SizeDistribution> {
    let m = chain.n_sites() + 1;
    if values.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} samples of F for {} sites (need {m})",
            values.len(),
            chain.n_sites()
        )));
    }
    let mut p = Vec::with_capacity(m);
    for l in 0..m {
        let z: C64 = values
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let angle = -2.0 * std::f64::consts::PI * ((k * l) % m) as f64 / m as f64;
                f * C64::from_polar(1.0, angle)
            })
            .sum::<C64>()
            / m as f64;
        if z.im.abs() > PROBABILITY_TOL {
            return Err(Error::Inconsistent(format!(
                "p_{l} has imaginary part {:e}",
                z.im
            )));
        }
        if z.re < -PROBABILITY_TOL {
            return Err(Error::Inconsistent(format!("p_{l} = {:e} is negative", z.re)));
        }
        p.push(z.re.max(0.0));
    }
    SizeDistribution::new(chain, p)
}

/// Size distribution of a uniformly random string,
/// `p_l = C(N, l) ((d² − 1)/d²)^l (1/d²)^{N − l}`, including `l = 0`.
pub fn random_baseline(chain: ChainSpec) -> SizeDistribution {
    let n = chain.n_sites();
    let q = chain.n_letters() as f64;
    let nontrivial = (q - 1.0) / q;
    let trivial = 1.0 / q;
    let mut binom = 1.0;
    let p = (0..=n)
        .map(|l| {
            if l > 0 {
                binom = binom * (n + 1 - l) as f64 / l as f64;
            }
            binom * nontrivial.powi(l as i32) * trivial.powi((n - l) as i32)
        })
        .collect();
    SizeDistribution { chain, p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{site_basis, string_to_matrix};

    fn string_op(chain: ChainSpec, letters: Vec<usize>) -> DenseOperator {
        let basis = site_basis(chain.local_dim()).unwrap();
        string_to_matrix(&PauliString::new(chain, letters).unwrap(), &basis).unwrap()
    }

    #[test]
    fn single_site_operator() {
        let chain = ChainSpec::qubits(3).unwrap();
        let table = decompose(&string_op(chain, vec![1, 0, 0])).unwrap();
        for (i, v) in table.values().iter().enumerate() {
            let want = if i == 1 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-15, "index {i}: {v}");
        }
        let id = decompose(&DenseOperator::identity(chain)).unwrap();
        assert_eq!(id.values()[0], 1.0);
        assert_eq!(id.norm2(), 1.0);
    }

    #[test]
    fn oracle_examples() {
        let chain = ChainSpec::qubits(1).unwrap();
        let t = decompose_oracle(&string_op(chain, vec![2])).unwrap();
        assert_eq!(t.values(), &[0.0, 0.0, 1.0, 0.0]);

        let chain = ChainSpec::qubits(2).unwrap();
        let op = string_op(chain, vec![1, 1]).add(&string_op(chain, vec![3, 0])).unwrap();
        let op = op.normalized().unwrap();
        let t = decompose_oracle(&op).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (i, v) in t.values().iter().enumerate() {
            let want = if i == 1 + 4 || i == 3 { r } else { 0.0 };
            assert!((v - want).abs() < 1e-15);
        }
        assert!(decompose_oracle(&DenseOperator::identity(ChainSpec::qubits(6).unwrap())).is_err());
    }

    #[test]
    fn rejects_non_hermitian_and_oversized() {
        let chain = ChainSpec::qubits(1).unwrap();
        let m = ndarray::arr2(&[[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(0.0, 0.0); 2]]);
        let op = DenseOperator::from_matrix(chain, m).unwrap();
        assert!(matches!(decompose(&op), Err(Error::NotHermitian { .. })));
        let big = DenseOperator::zeros(ChainSpec::qubits(13).unwrap());
        assert!(matches!(decompose(&big), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn region_examples() {
        let chain = ChainSpec::qubits(2).unwrap();
        let r = region_distribution(&decompose(&string_op(chain, vec![1, 0])).unwrap()).unwrap();
        assert_eq!(r.p(), &[0.0, 1.0, 0.0, 0.0]);
        let op = string_op(chain, vec![1, 0]).add(&string_op(chain, vec![1, 1])).unwrap();
        let r = region_distribution(&decompose(&op.normalized().unwrap()).unwrap()).unwrap();
        assert!((r.get(0b01) - 0.5).abs() < 1e-15 && (r.get(0b11) - 0.5).abs() < 1e-15);
        let zero = decompose(&DenseOperator::zeros(chain)).unwrap();
        assert!(matches!(region_distribution(&zero), Err(Error::ZeroOperator)));
    }

    #[test]
    fn size_aggregation() {
        let chain = ChainSpec::qubits(2).unwrap();
        let r = RegionDistribution::new(chain, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(size_distribution(&r).p(), &[0.0, 1.0, 0.0]);
        let third = 1.0 / 3.0;
        let r = RegionDistribution::new(chain, vec![0.0, third, third, third]).unwrap();
        let p = size_distribution(&r);
        assert!((p.p()[1] - 2.0 / 3.0).abs() < 1e-15 && (p.p()[2] - third).abs() < 1e-15);
    }

    #[test]
    fn generating_function_examples() {
        let chain = ChainSpec::qubits(3).unwrap();
        let p = SizeDistribution::new(chain, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let z = C64::new(0.3, -0.7);
        assert_eq!(generating_function(&p, z), z);
        let base = random_baseline(chain);
        assert!((generating_function(&base, C64::from(1.0)) - 1.0).norm() < 1e-15);
        let closed = ((C64::from(1.0) + z * 3.0) / 4.0).powu(3);
        assert!((generating_function(&base, z) - closed).norm() < 1e-15);
    }

    #[test]
    fn samples_round_trip() {
        let chain = ChainSpec::qubits(4).unwrap();
        let p = SizeDistribution::new(chain, vec![0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let f: Vec<C64> = sample_points(chain).iter().map(|&z| generating_function(&p, z)).collect();
        let back = size_from_samples(chain, &f).unwrap();
        for (a, b) in back.p().iter().zip(p.p()) {
            assert!((a - b).abs() < 1e-15);
        }
        let constant = vec![C64::from(1.0); 5];
        assert_eq!(size_from_samples(chain, &constant).unwrap().p()[0], 1.0);
        let bad = vec![C64::new(0.0, 1.0); 5];
        assert!(matches!(size_from_samples(chain, &bad), Err(Error::Inconsistent(_))));
        assert!(size_from_samples(chain, &constant[..4]).is_err());
    }

    #[test]
    fn baseline_closed_form() {
        let p = random_baseline(ChainSpec::qubits(2).unwrap());
        let want = [1.0 / 16.0, 6.0 / 16.0, 9.0 / 16.0];
        for (a, b) in p.p().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        for (n, d) in [(10, 2), (7, 3), (12, 2)] {
            let chain = ChainSpec::new(n, d).unwrap();
            let p = random_baseline(chain);
            assert!((p.p().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let argmax = (0..=n).max_by(|&a, &b| p.p()[a].total_cmp(&p.p()[b])).unwrap();
            let peak = n as f64 * (d * d - 1) as f64 / (d * d) as f64;
            assert!((argmax as f64 - peak).abs() <= 1.0, "N={n} d={d} argmax {argmax}");
        }
    }

    #[test]
    fn conditioning_and_distance() {
        let chain = ChainSpec::qubits(2).unwrap();
        let base = random_baseline(chain);
        let cond = base.conditioned_nonzero().unwrap();
        assert_eq!(cond.p()[0], 0.0);
        assert!((cond.p()[1] - 6.0 / 15.0).abs() < 1e-15);
        let tv = base.total_variation(&cond).unwrap();
        assert!((tv - 1.0 / 16.0).abs() < 1e-15);
        assert!(SizeDistribution::new(chain, vec![0.5, 0.5, 0.5]).is_err());
    }
}
