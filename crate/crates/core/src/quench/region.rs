//! Region-restricted variances `δO^R²` and inclusion-exclusion recovery of
//! `p_R` from them.

use std::collections::HashMap;

use rayon::prelude::*;

use super::ensemble::EnsembleSpec;
use super::stats::QuenchSamples;
use super::variance::expectation;
use crate::algebra::{partial_trace, ChainSpec, DenseOperator, StateVector};
use crate::decomposition::RegionDistribution;
use crate::error::{Error, Result};

/// Largest region accepted where all `2^|R|` subsets are enumerated.
pub const MAX_REGION_SITES: usize = 20;

/// `δO^R² = Σ_{S⊆R} p_S (d+1)^{−|S|}`.
pub fn region_variance_exact(r: &RegionDistribution, region: u64) -> Result<f64> {
    let chain = r.chain();
    chain.check_mask(region)?;
    let z = 1.0 / (chain.local_dim() as f64 + 1.0);
    // Walk the submasks of `region`, including ∅.
    let mut total = 0.0;
    let mut s = region;
    loop {
        total += r.get(s) * z.powi(s.count_ones() as i32);
        if s == 0 {
            break;
        }
        s = (s - 1) & region;
    }
    Ok(total)
}

/// `δO^R²` for every region mask at once (subset-sum transform).
pub fn region_variances_all(r: &RegionDistribution) -> Vec<f64> {
    let chain = r.chain();
    let z = 1.0 / (chain.local_dim() as f64 + 1.0);
    let mut v: Vec<f64> = r
        .p()
        .iter()
        .enumerate()
        .map(|(mask, p)| p * z.powi(mask.count_ones() as i32))
        .collect();
    for bit in 0..chain.n_sites() {
        for mask in 0..v.len() {
            if mask >> bit & 1 == 1 {
                v[mask] += v[mask ^ (1 << bit)];
            }
        }
    }
    v
}

/// Monte-Carlo `δO^R²`: variance over product states on `R` of
/// `⟨ψ_R|O^R|ψ_R⟩`, with `O^R = tr_{R̄}(O) / d^{N−|R|}`. Sample `i` uses
/// the same per-site draws on `R` as initial state `i` of `ensemble`.
pub fn mc_region_variance(
    op: &DenseOperator,
    region: u64,
    ensemble: &EnsembleSpec,
    m: usize,
) -> Result<QuenchSamples> {
    let chain = op.chain();
    chain.check_mask(region)?;
    chain.same_as(&ensemble.chain(), "region variance")?;
    ensemble.validate()?;
    if !ensemble.is_product() {
        return Err(Error::Unsupported("region variances need a product ensemble".into()));
    }
    op.require_hermitian()?;
    let seed = ensemble.master_seed();
    let d = chain.local_dim();
    let sites: Vec<usize> = (0..chain.n_sites()).filter(|&s| region >> s & 1 == 1).collect();
    let reduced = partial_trace(op, region)?;
    let scale = (d as f64).powi((chain.n_sites() - sites.len()) as i32);
    if sites.is_empty() {
        let c = reduced.trace().re / scale;
        return QuenchSamples::from_values(vec![c; m], seed);
    }
    let sub = ChainSpec::new(sites.len(), d)?;
    let reduced = DenseOperator::from_matrix(sub, reduced.into_matrix().mapv(|z| z / scale))?;
    let values = (0..m as u64)
        .into_par_iter()
        .map(|idx| {
            let factors: Vec<_> = sites.iter().map(|&s| ensemble.sample_site(idx, s)).collect();
            expectation(&reduced, &StateVector::product(sub, &factors)?)
        })
        .collect::<Result<Vec<_>>>()?;
    QuenchSamples::from_values(values, seed)
}

/// `p_R = (d+1)^{|R|} Σ_{Q⊆R} (−1)^{|R|−|Q|} δO^Q²`.
///
/// `variances` must hold every subset of `region`; a missing `∅` is taken
/// as `0` (the fully averaged value does not fluctuate).
pub fn recover_region_distribution(variances: &HashMap<u64, f64>, region: u64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let size = region.count_ones();
    if size as usize > MAX_REGION_SITES {
        return Err(Error::InvalidArgument(format!("region of {size} sites is too large")));
    }
    let mut sum = 0.0;
    let mut q = region;
    loop {
        let v = match variances.get(&q) {
            Some(v) => *v,
            None if q == 0 => 0.0,
            None => return Err(Error::MissingSubset(q)),
        };
        let sign = if (size - q.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * v;
        if q == 0 {
            break;
        }
        q = (q - 1) & region;
    }
    Ok((d as f64 + 1.0).powi(size as i32) * sum)
}

/// [`recover_region_distribution`] for every region at once, from variances
/// indexed by region mask. The result is not clipped, so statistical noise
/// may show up as small negative weights.
pub fn recover_all_regions(chain: ChainSpec, variances: &[f64]) -> Result<Vec<f64>> {
    if variances.len() != chain.n_regions() {
        return Err(Error::DimensionMismatch(format!(
            "{} variances for {} regions",
            variances.len(),
            chain.n_regions()
        )));
    }
    let mut p = variances.to_vec();
    p[0] = 0.0;
    for bit in 0..chain.n_sites() {
        for mask in 0..p.len() {
            if mask >> bit & 1 == 1 {
                p[mask] -= p[mask ^ (1 << bit)];
            }
        }
    }
    let w = chain.local_dim() as f64 + 1.0;
    for (mask, x) in p.iter_mut().enumerate() {
        *x *= w.powi(mask.count_ones() as i32);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{site_basis, string_to_matrix, PauliString};
    use crate::decomposition::{decompose, region_distribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn string_op(chain: ChainSpec, letters: Vec<usize>) -> DenseOperator {
        string_to_matrix(&PauliString::new(chain, letters).unwrap(), &site_basis(chain.local_dim()).unwrap())
            .unwrap()
    }

    fn regions(op: &DenseOperator) -> RegionDistribution {
        region_distribution(&decompose(op).unwrap()).unwrap()
    }

    #[test]
    fn exact_examples() {
        let chain = ChainSpec::qubits(2).unwrap();
        let r = regions(&string_op(chain, vec![1, 1]));
        assert_eq!(region_variance_exact(&r, 0b01).unwrap(), 0.0);
        assert!((region_variance_exact(&r, 0b11).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert!(region_variance_exact(&r, 0b100).is_err());
    }

    #[test]
    fn full_region_is_full_variance() {
        let chain = ChainSpec::qubits(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = DenseOperator::random_hermitian(chain, &mut rng).traceless_part().normalized().unwrap();
        let r = regions(&op);
        let p = crate::decomposition::size_distribution(&r);
        let full = super::super::variance::exact_variance(&p, super::super::variance::PrepErrorModel::none());
        assert!((region_variance_exact(&r, 0b111).unwrap() - full).abs() < 1e-14);
        let all = region_variances_all(&r);
        for mask in 0..8u64 {
            assert!((all[mask as usize] - region_variance_exact(&r, mask).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn recovery_examples() {
        let mut v = HashMap::new();
        v.insert(0b1u64, 1.0 / 3.0);
        assert!((recover_region_distribution(&v, 0b1, 2).unwrap() - 1.0).abs() < 1e-15);
        v.insert(0b10, 0.0);
        v.insert(0b11, 1.0 / 3.0);
        assert!(recover_region_distribution(&v, 0b11, 2).unwrap().abs() < 1e-15);
        v.remove(&0b10);
        assert!(matches!(recover_region_distribution(&v, 0b11, 2), Err(Error::MissingSubset(0b10))));
    }

    #[test]
    fn round_trip_all_regions() {
        let chain = ChainSpec::qubits(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let op = DenseOperator::random_hermitian(chain, &mut rng).traceless_part().normalized().unwrap();
        let r = regions(&op);
        let v = region_variances_all(&r);
        let back = recover_all_regions(chain, &v).unwrap();
        let map: HashMap<u64, f64> = v.iter().enumerate().map(|(m, x)| (m as u64, *x)).collect();
        for mask in 0..16u64 {
            assert!((back[mask as usize] - r.get(mask)).abs() < 1e-12);
            let single = recover_region_distribution(&map, mask, 2).unwrap();
            assert!((single - r.get(mask)).abs() < 1e-12);
        }
    }

    #[test]
    fn mc_single_site() {
        let chain = ChainSpec::qubits(2).unwrap();
        let e = EnsembleSpec::haar_product(chain, 3);
        let s = mc_region_variance(&string_op(chain, vec![1, 0]), 0b01, &e, 100_000).unwrap();
        assert!(s.within_sigmas(1.0 / 3.0, 4.0), "{} ± {}", s.variance, s.stderr_of_variance);
        let s = mc_region_variance(&string_op(chain, vec![1, 1]), 0b01, &e, 1000).unwrap();
        assert!(s.variance.abs() < 1e-12);
        let s = mc_region_variance(&string_op(chain, vec![1, 1]), 0, &e, 10).unwrap();
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn mc_matches_exact_on_random_operator() {
        let chain = ChainSpec::qubits(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let op = DenseOperator::random_hermitian(chain, &mut rng).traceless_part().normalized().unwrap();
        let want = region_variance_exact(&regions(&op), 0b110).unwrap();
        let e = EnsembleSpec::haar_product(chain, 11);
        let s = mc_region_variance(&op, 0b110, &e, 20_000).unwrap();
        assert!(s.within_sigmas(want, 4.0), "{} ± {} vs {want}", s.variance, s.stderr_of_variance);
    }

    #[test]
    fn clustered_rejected() {
        let chain = ChainSpec::qubits(2).unwrap();
        let e = EnsembleSpec::contiguous_blocks(chain, 2, 0).unwrap();
        assert!(matches!(
            mc_region_variance(&string_op(chain, vec![1, 0]), 1, &e, 10),
            Err(Error::Unsupported(_))
        ));
    }
}
