//! The experiment subcommands. Each `compute_*` returns the numbers; each
//! `run_*` also writes them under the output directory.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use opsize::otoc::{exact_otoc, mc_otoc_variance, ResponsePair};
use opsize::quench::rng::{stream, Purpose};
use opsize::quench::{
    exact_variance, mc_region_variance, mc_variance_measured, recover_region_distribution,
    region_variance_exact, EnsembleKind, QuenchSamples,
};
use opsize::{
    build_xyz, decompose, eigendecompose, random_baseline, region_distribution,
    ChainSpec, DenseOperator, HeisenbergEvolver, RegionDistribution, SizeDistribution, SpectralData,
};

use crate::config::{parse_string, string_op, Config, OtocHamiltonian};
use crate::output::{prepare_dir, write_json, Cell, Csv, Meta};
use crate::CliError;

/// Regions recovered from exact subset variances must match the direct
/// weights to this tolerance.
pub const RECOVERY_TOL: f64 = 1e-8;

fn spectral(config: &Config) -> Result<Arc<SpectralData>, CliError> {
    Ok(Arc::new(eigendecompose(&build_xyz(&config.params()?)?)?))
}

fn evolver(config: &Config) -> Result<HeisenbergEvolver, CliError> {
    Ok(HeisenbergEvolver::new(&config.observable_op()?, spectral(config)?)?)
}

fn region_label(mask: u64) -> String {
    let sites: Vec<String> = (0..64).filter(|s| mask >> s & 1 == 1).map(|s| s.to_string()).collect();
    sites.join("+")
}

/// Submasks of `mask` in increasing order, `∅` first.
fn submasks(mask: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(1 << mask.count_ones());
    let mut q = mask;
    loop {
        out.push(q);
        if q == 0 {
            break;
        }
        q = (q - 1) & mask;
    }
    out.reverse();
    out
}

pub struct SizeDistRun {
    pub times: Vec<f64>,
    pub sizes: Vec<SizeDistribution>,
    pub baseline: SizeDistribution,
}

impl SizeDistRun {
    /// Total-variation distance of each `p_l` to the random baseline, both
    /// conditioned on `l ≥ 1`.
    pub fn distances(&self) -> Result<Vec<f64>, CliError> {
        let base = self.baseline.conditioned_nonzero()?;
        self.sizes
            .iter()
            .map(|p| Ok(p.conditioned_nonzero()?.total_variation(&base)?))
            .collect()
    }
}

pub fn compute_size_dist(config: &Config) -> Result<SizeDistRun, CliError> {
    config.validate()?;
    let times = config.times()?;
    let ev = evolver(config)?;
    let sizes = times
        .par_iter()
        .map(|&t| Ok(SizeDistribution::of_operator(&ev.at(t))?))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(SizeDistRun { times, sizes, baseline: random_baseline(config.chain()?) })
}

#[derive(Serialize)]
struct SizeSummary<'a> {
    meta: Meta<'a>,
    points: Vec<SizePoint>,
}

#[derive(Serialize)]
struct SizePoint {
    t: f64,
    mean_size: f64,
    tv_to_baseline: f64,
}

pub fn run_size_dist(config: &Config, out: &Path) -> Result<SizeDistRun, CliError> {
    let run = compute_size_dist(config)?;
    prepare_dir(out)?;
    let n = config.chain()?.n_sites();
    let mut sizes = Csv::new(config, "size-dist", &["t", "l", "p_l"]);
    for (t, p) in run.times.iter().zip(&run.sizes) {
        for (l, pl) in p.p().iter().enumerate() {
            sizes.row(&[Cell::F(*t), Cell::U(l as u64), Cell::F(*pl)]);
        }
    }
    sizes.write(out, "sizes.csv")?;

    let mut baseline = Csv::new(config, "size-dist", &["l", "p_l"]);
    for (l, pl) in run.baseline.p().iter().enumerate() {
        baseline.row(&[Cell::U(l as u64), Cell::F(*pl)]);
    }
    baseline.write(out, "baseline.csv")?;

    // Long format for a (t, l) colormap: the weight, the baseline weight and
    // their log ratio.
    let mut map = Csv::new(config, "size-dist", &["t", "l", "p_l", "baseline", "log10_ratio"]);
    for (t, p) in run.times.iter().zip(&run.sizes) {
        for l in 0..=n {
            let (a, b) = (p.p()[l], run.baseline.p()[l]);
            let ratio = if a > 0.0 { Cell::F((a / b).log10()) } else { Cell::Empty };
            map.row(&[Cell::F(*t), Cell::U(l as u64), Cell::F(a), Cell::F(b), ratio]);
        }
    }
    map.write(out, "sizes_map.csv")?;

    let distances = run.distances()?;
    let points = run
        .times
        .iter()
        .zip(&run.sizes)
        .zip(distances)
        .map(|((&t, p), tv)| SizePoint { t, mean_size: p.mean_size(), tv_to_baseline: tv })
        .collect();
    write_json(out, "summary.json", &SizeSummary { meta: Meta::new(config, "size-dist"), points })?;
    Ok(run)
}

pub struct VarianceRun {
    pub times: Vec<f64>,
    /// `F((1−ε)²/(d+1))` at each time (`None` for ensembles without a
    /// closed form, i.e. unequal clusters).
    pub exact: Vec<Option<f64>>,
    pub samples: Vec<QuenchSamples>,
}

impl VarianceRun {
    /// Fraction of time points whose exact value lies inside the 99%
    /// bootstrap band of the sampled variance.
    pub fn band_coverage(&self) -> f64 {
        let hits = self
            .exact
            .iter()
            .zip(&self.samples)
            .filter(|(e, s)| e.is_some_and(|e| s.band_contains(e)))
            .count();
        hits as f64 / self.times.len() as f64
    }
}

/// Exact variance of `op` under the configured ensemble. Equal contiguous
/// clusters of `b` sites act as single sites of dimension `d^b`.
fn exact_for(op: &DenseOperator, config: &Config) -> Result<Option<f64>, CliError> {
    let err = config.prep_error()?;
    let ensemble = config.ensemble()?;
    let p = match ensemble.kind() {
        EnsembleKind::ClusteredHaar { blocks } => {
            let b = blocks[0].len();
            if blocks.iter().any(|bl| bl.len() != b) {
                return Ok(None);
            }
            let chain = op.chain();
            let coarse = ChainSpec::new(chain.n_sites() / b, chain.local_dim().pow(b as u32))?;
            SizeDistribution::of_operator(&DenseOperator::from_matrix(coarse, op.matrix().clone())?)?
        }
        _ => SizeDistribution::of_operator(op)?,
    };
    Ok(Some(exact_variance(&p, err)))
}

pub fn compute_variance(config: &Config) -> Result<VarianceRun, CliError> {
    config.validate()?;
    let times = config.times()?;
    let ev = evolver(config)?;
    let ensemble = config.ensemble()?;
    let model = config.measurement()?;
    let m = config.sampling.samples;
    let rows = times
        .par_iter()
        .map(|&t| {
            let op = ev.at(t);
            let exact = exact_for(&op, config)?;
            let samples = mc_variance_measured(&op, &ensemble, m, model)?.at_time(t);
            Ok((exact, samples))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (exact, samples) = rows.into_iter().unzip();
    Ok(VarianceRun { times, exact, samples })
}

#[derive(Serialize)]
struct VarianceSummary<'a> {
    meta: Meta<'a>,
    band_coverage: f64,
    points: Vec<VariancePoint>,
}

#[derive(Serialize)]
struct VariancePoint {
    t: f64,
    exact: Option<f64>,
    variance: f64,
    stderr: f64,
    band99: (f64, f64),
    mean: f64,
    stderr_of_mean: f64,
    samples: usize,
}

pub fn run_variance(config: &Config, out: &Path) -> Result<VarianceRun, CliError> {
    let run = compute_variance(config)?;
    prepare_dir(out)?;
    let mut csv = Csv::new(config, "variance", &["t", "kind", "value", "err"]);
    let shown = config.sampling.trajectories.min(config.sampling.samples);
    for ((t, exact), s) in run.times.iter().zip(&run.exact).zip(&run.samples) {
        let row = |csv: &mut Csv, kind: String, value: f64, err: Option<f64>| {
            csv.row(&[Cell::F(*t), Cell::S(kind), Cell::F(value), err.map_or(Cell::Empty, Cell::F)]);
        };
        for (i, v) in s.values.iter().take(shown).enumerate() {
            row(&mut csv, format!("trajectory_{i}"), *v, None);
        }
        row(&mut csv, "mc_mean".into(), s.mean, Some(s.stderr_of_mean));
        row(&mut csv, "mc_variance".into(), s.variance, Some(s.stderr_of_variance));
        row(&mut csv, "band99_lo".into(), s.band99.0, None);
        row(&mut csv, "band99_hi".into(), s.band99.1, None);
        if let Some(e) = exact {
            row(&mut csv, "exact".into(), *e, None);
        }
    }
    csv.write(out, "variance.csv")?;
    let points = run
        .times
        .iter()
        .zip(&run.exact)
        .zip(&run.samples)
        .map(|((&t, &exact), s)| VariancePoint {
            t,
            exact,
            variance: s.variance,
            stderr: s.stderr_of_variance,
            band99: s.band99,
            mean: s.mean,
            stderr_of_mean: s.stderr_of_mean,
            samples: s.sample_count,
        })
        .collect();
    let summary = VarianceSummary { meta: Meta::new(config, "variance"), band_coverage: run.band_coverage(), points };
    write_json(out, "summary.json", &summary)?;
    Ok(run)
}

pub struct RegionPoint {
    pub t: f64,
    pub direct: RegionDistribution,
    /// `(Q, exact δO^Q², sampled)` for every `Q ⊆ R`.
    pub variances: Vec<(u64, f64, Option<QuenchSamples>)>,
    /// `(Q, from exact variances, from sampled variances)`.
    pub recovered: Vec<(u64, f64, Option<f64>)>,
}

pub struct RegionRun {
    pub region: u64,
    pub points: Vec<RegionPoint>,
}

impl RegionRun {
    /// Largest `|p_Q(recovered from exact variances) − p_Q(direct)|`.
    pub fn max_recovery_error(&self) -> f64 {
        self.points
            .iter()
            .flat_map(|p| p.recovered.iter().map(|(q, r, _)| (r - p.direct.get(*q)).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn compute_region(config: &Config) -> Result<RegionRun, CliError> {
    config.validate()?;
    let region = config.region_mask()?;
    let times = config.times()?;
    let ev = evolver(config)?;
    let ensemble = config.ensemble()?;
    let subsets = submasks(region);
    let m = config.sampling.samples;
    let points = times
        .par_iter()
        .map(|&t| {
            let op = ev.at(t);
            let direct = region_distribution(&decompose(&op)?)?;
            let mut variances = Vec::with_capacity(subsets.len());
            for &q in &subsets {
                let exact = region_variance_exact(&direct, q)?;
                let sampled = if config.region.sampled {
                    Some(mc_region_variance(&op, q, &ensemble, m)?.at_time(t))
                } else {
                    None
                };
                variances.push((q, exact, sampled));
            }
            let exact_map: HashMap<u64, f64> = variances.iter().map(|(q, v, _)| (*q, *v)).collect();
            let sampled_map: Option<HashMap<u64, f64>> = config
                .region
                .sampled
                .then(|| variances.iter().map(|(q, _, s)| (*q, s.as_ref().expect("sampled").variance)).collect());
            let recovered = subsets
                .iter()
                .map(|&q| {
                    let from_exact = recover_region_distribution(&exact_map, q, 2)?;
                    let from_sampled =
                        sampled_map.as_ref().map(|m| recover_region_distribution(m, q, 2)).transpose()?;
                    Ok((q, from_exact, from_sampled))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(RegionPoint { t, direct, variances, recovered })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(RegionRun { region, points })
}

pub fn run_region(config: &Config, out: &Path) -> Result<RegionRun, CliError> {
    let run = compute_region(config)?;
    prepare_dir(out)?;
    let mut variances = Csv::new(config, "region", &["t", "mask", "sites", "exact", "sampled", "sampled_err"]);
    let mut recovered = Csv::new(
        config,
        "region",
        &["t", "mask", "sites", "direct", "recovered_exact", "recovered_sampled"],
    );
    for p in &run.points {
        for (q, exact, sampled) in &p.variances {
            variances.row(&[
                Cell::F(p.t),
                Cell::U(*q),
                Cell::S(region_label(*q)),
                Cell::F(*exact),
                sampled.as_ref().map_or(Cell::Empty, |s| Cell::F(s.variance)),
                sampled.as_ref().map_or(Cell::Empty, |s| Cell::F(s.stderr_of_variance)),
            ]);
        }
        for (q, from_exact, from_sampled) in &p.recovered {
            recovered.row(&[
                Cell::F(p.t),
                Cell::U(*q),
                Cell::S(region_label(*q)),
                Cell::F(p.direct.get(*q)),
                Cell::F(*from_exact),
                from_sampled.map_or(Cell::Empty, Cell::F),
            ]);
        }
    }
    variances.write(out, "region.csv")?;
    recovered.write(out, "recovered.csv")?;
    let err = run.max_recovery_error();
    if !(err < RECOVERY_TOL) {
        return Err(CliError::Numerical(format!(
            "inclusion-exclusion recovery off by {err:e} (tolerance {RECOVERY_TOL:e})"
        )));
    }
    Ok(run)
}

pub struct OtocRun {
    pub t1: f64,
    pub times: Vec<f64>,
    pub exact: Vec<f64>,
    pub samples: Vec<QuenchSamples>,
}

pub fn compute_otoc(config: &Config) -> Result<OtocRun, CliError> {
    config.validate()?;
    let chain = config.chain()?;
    let w = if config.otoc.w.trim().is_empty() { config.observable()? } else { parse_string(chain, &config.otoc.w)? };
    let v = if config.otoc.v.trim().is_empty() { parse_string(chain, "Z0")? } else { parse_string(chain, &config.otoc.v)? };
    let spectral = match config.otoc.hamiltonian {
        OtocHamiltonian::Model => spectral(config)?,
        OtocHamiltonian::Random => {
            let mut rng = stream(config.seed, Purpose::Operator, 0, 0);
            Arc::new(eigendecompose(&DenseOperator::random_hermitian(chain, &mut rng))?)
        }
    };
    let t1 = config.otoc.t1;
    if !t1.is_finite() {
        return Err(CliError::Usage("otoc.t1 must be finite".into()));
    }
    let base = ResponsePair::new(string_op(&w)?, string_op(&v)?, spectral, t1, t1)?;
    let times = config.times()?;
    let m = config.sampling.samples;
    let rows = times
        .par_iter()
        .map(|&t2| {
            let rp = base.at_times(t1, t2)?;
            Ok((exact_otoc(&rp), mc_otoc_variance(&rp, m, config.seed)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (exact, samples) = rows.into_iter().unzip();
    Ok(OtocRun { t1, times, exact, samples })
}

pub fn run_otoc(config: &Config, out: &Path) -> Result<OtocRun, CliError> {
    let run = compute_otoc(config)?;
    prepare_dir(out)?;
    let mut csv = Csv::new(config, "otoc", &["t1", "t2", "exact", "mc_variance", "mc_err", "mc_mean"]);
    for ((t2, e), s) in run.times.iter().zip(&run.exact).zip(&run.samples) {
        csv.row(&[
            Cell::F(run.t1),
            Cell::F(*t2),
            Cell::F(*e),
            Cell::F(s.variance),
            Cell::F(s.stderr_of_variance),
            Cell::F(s.mean),
        ]);
    }
    csv.write(out, "otoc.csv")?;
    Ok(run)
}
