//! Experiment configuration: named presets, TOML files, and flag overrides
//! layered in that order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use opsize::quench::{EnsembleSpec, MeasurementModel, PrepErrorModel, SiteEnsemble};
use opsize::{site_basis, string_to_matrix, ChainSpec, DenseOperator, PauliString, SpinChainParams};

use crate::CliError;

/// Largest region whose `2^|R|` subsets are enumerated.
pub const MAX_REGION_SITES: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub model: ModelConfig,
    /// Pauli string such as `"X4"` or `"X0 Z3"` (0-based sites). Empty
    /// means `σ_x` on site `(N − 1)/2`.
    #[serde(default)]
    pub observable: String,
    pub times: TimeGrid,
    pub ensemble: EnsembleConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default)]
    pub otoc: OtocConfig,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// `H = Σ J_a σ_a σ_a + Σ h_a σ_a` on an open qubit chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_sites: usize,
    /// `[J_x, J_y, J_z]`.
    pub couplings: [f64; 3],
    /// `[h_x, h_y, h_z]`.
    pub fields: [f64; 3],
}

/// Either explicit `values` or an inclusive `start..=stop` grid with `step`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKindConfig {
    /// Independent Haar state per site.
    Haar,
    /// The six Pauli eigenstates, uniformly.
    SixState,
    /// Haar states on contiguous blocks of `block_size` sites.
    Clustered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub kind: EnsembleKindConfig,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
}

fn default_block_size() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Initial states per time point.
    pub samples: usize,
    /// Sampled trajectories written out by `variance`.
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub prep_error: f64,
    /// Preparations per initial state when `prep_error > 0`.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Projective measurements per initial state (replaces exact
    /// expectation values).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
}

fn default_trajectories() -> usize {
    20
}

fn default_repetitions() -> usize {
    64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    /// Sites of `R` (0-based). Empty means the observable's support.
    #[serde(default)]
    pub sites: Vec<usize>,
    /// Also estimate every `δO^Q²` by sampling.
    #[serde(default)]
    pub sampled: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OtocHamiltonian {
    /// The `[model]` chain.
    #[default]
    Model,
    /// GUE matrix drawn from the seed.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtocConfig {
    /// Defaults to the observable.
    #[serde(default)]
    pub w: String,
    /// Defaults to `Z0`.
    #[serde(default)]
    pub v: String,
    #[serde(default)]
    pub t1: f64,
    #[serde(default)]
    pub hamiltonian: OtocHamiltonian,
}

impl Default for OtocConfig {
    fn default() -> Self {
        Self { w: String::new(), v: String::new(), t1: 0.0, hamiltonian: OtocHamiltonian::Model }
    }
}

pub const PRESETS: &[&str] = &[
    "fig2-chaotic",
    "fig2-integrable",
    "fig5-xxz",
    "fig5-xxz-u1",
    "fig6-ising",
    "fig6-ising-tfim",
];

pub const DEFAULT_PRESET: &str = "fig2-chaotic";

fn grid(start: f64, stop: f64, step: f64) -> TimeGrid {
    TimeGrid { values: None, start: Some(start), stop: Some(stop), step: Some(step) }
}

pub fn preset(name: &str) -> Result<Config, CliError> {
    let ising = |n: usize, hx: f64, hz: f64| ModelConfig { n_sites: n, couplings: [0.0, 0.0, 1.0], fields: [hx, 0.0, hz] };
    let xxz = |fields: [f64; 3]| ModelConfig { n_sites: 8, couplings: [1.0, 1.0, 0.5], fields };
    let (model, times) = match name {
        "fig2-chaotic" => (ising(10, 1.05, 0.5), grid(0.0, 10.0, 0.5)),
        "fig2-integrable" => (ising(10, 1.05, 0.0), grid(0.0, 10.0, 0.5)),
        "fig5-xxz" => (xxz([0.5, 0.0, 0.4]), grid(0.0, 9.8, 0.2)),
        "fig5-xxz-u1" => (xxz([0.0, 0.0, 0.4]), grid(0.0, 9.8, 0.2)),
        "fig6-ising" => (ising(8, 1.05, 0.5), grid(0.0, 9.8, 0.2)),
        "fig6-ising-tfim" => (ising(8, 1.05, 0.0), grid(0.0, 9.8, 0.2)),
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset '{other}' (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(Config {
        seed: 1,
        model,
        observable: String::new(),
        times,
        ensemble: EnsembleConfig { kind: EnsembleKindConfig::Haar, block_size: 2 },
        sampling: SamplingConfig {
            samples: 100,
            trajectories: default_trajectories(),
            prep_error: 0.0,
            repetitions: default_repetitions(),
            shots: None,
        },
        region: RegionConfig::default(),
        otoc: OtocConfig::default(),
        out: None,
    })
}

/// Overlays `overlay` onto `base` key by key (tables merge recursively,
/// everything else is replaced).
fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Preset (or the default one), then the TOML file on top.
pub fn load(preset_name: Option<&str>, file: Option<&Path>) -> Result<Config, CliError> {
    let base = preset(preset_name.unwrap_or(DEFAULT_PRESET))?;
    let Some(path) = file else {
        return Ok(base);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let overlay: toml::Value =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    // A grid in the file replaces the preset's grid wholesale.
    let mut merged = toml::Value::try_from(&base).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(t) = overlay.get("times") {
        if let Some(table) = merged.as_table_mut() {
            table.insert("times".into(), t.clone());
        }
    }
    merge(&mut merged, overlay);
    merged
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("{}: {e}", path.display())))
}

impl Config {
    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.times()?;
        self.observable_op()?;
        if self.sampling.samples < 2 {
            return Err(CliError::Usage("sampling.samples must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.sampling.prep_error) {
            return Err(CliError::Usage("sampling.prep_error must lie in [0, 1]".into()));
        }
        if self.sampling.repetitions == 0 || self.sampling.shots == Some(0) {
            return Err(CliError::Usage("repetitions and shots must be positive".into()));
        }
        self.ensemble()?;
        Ok(())
    }

    pub fn chain(&self) -> Result<ChainSpec, CliError> {
        Ok(ChainSpec::qubits(self.model.n_sites)?)
    }

    pub fn params(&self) -> Result<SpinChainParams, CliError> {
        Ok(SpinChainParams::xyz(self.model.n_sites, self.model.couplings, self.model.fields)?)
    }

    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        let t = &self.times;
        let values = match (&t.values, t.start, t.stop, t.step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(step)) => {
                if !(step > 0.0) || !(stop >= start) {
                    return Err(CliError::Usage("times need step > 0 and stop >= start".into()));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // Rounded to 12 decimals so that e.g. 3 × 0.2 prints as 0.6.
                (0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
            }
            _ => return Err(CliError::Usage("times: give either `values` or `start`, `stop`, `step`".into())),
        };
        if values.is_empty() || values.iter().any(|t| !t.is_finite()) {
            return Err(CliError::Usage("times must be a nonempty list of finite numbers".into()));
        }
        Ok(values)
    }

    pub fn observable(&self) -> Result<PauliString, CliError> {
        let chain = self.chain()?;
        if self.observable.trim().is_empty() {
            return Ok(PauliString::single(chain, (chain.n_sites() - 1) / 2, 1)?);
        }
        parse_string(chain, &self.observable)
    }

    pub fn observable_op(&self) -> Result<DenseOperator, CliError> {
        string_op(&self.observable()?)
    }

    pub fn ensemble(&self) -> Result<EnsembleSpec, CliError> {
        let chain = self.chain()?;
        let e = match self.ensemble.kind {
            EnsembleKindConfig::Haar => EnsembleSpec::haar_product(chain, self.seed),
            EnsembleKindConfig::SixState => EnsembleSpec::uniform_finite(chain, SiteEnsemble::pauli_six(), self.seed)?,
            EnsembleKindConfig::Clustered => EnsembleSpec::contiguous_blocks(chain, self.ensemble.block_size, self.seed)?,
        };
        Ok(e)
    }

    pub fn prep_error(&self) -> Result<PrepErrorModel, CliError> {
        Ok(PrepErrorModel::new(self.sampling.prep_error)?)
    }

    pub fn measurement(&self) -> Result<MeasurementModel, CliError> {
        let err = self.prep_error()?;
        Ok(match self.sampling.shots {
            Some(k) => MeasurementModel::shots(k, err),
            None if err.epsilon() > 0.0 => MeasurementModel::with_prep_error(err, self.sampling.repetitions),
            None => MeasurementModel::ideal(),
        })
    }

    /// Region mask; defaults to the observable's support.
    pub fn region_mask(&self) -> Result<u64, CliError> {
        let chain = self.chain()?;
        if self.region.sites.is_empty() {
            return Ok(self.observable()?.support());
        }
        let mut mask = 0u64;
        for &s in &self.region.sites {
            if s >= chain.n_sites() {
                return Err(CliError::Usage(format!("region site {s} outside a {}-site chain", chain.n_sites())));
            }
            mask |= 1 << s;
        }
        if mask.count_ones() as usize > MAX_REGION_SITES {
            return Err(CliError::Usage(format!(
                "region of {} sites exceeds the limit of {MAX_REGION_SITES}",
                mask.count_ones()
            )));
        }
        Ok(mask)
    }
}

pub fn string_op(s: &PauliString) -> Result<DenseOperator, CliError> {
    Ok(string_to_matrix(s, &site_basis(2)?)?)
}

/// Parses `"X0 Z3"`-style strings (letters `X`, `Y`, `Z`, 0-based sites,
/// separated by spaces or `*`).
pub fn parse_string(chain: ChainSpec, text: &str) -> Result<PauliString, CliError> {
    let mut letters = vec![0; chain.n_sites()];
    let bad = |why: &str| CliError::Usage(format!("observable '{text}': {why}"));
    for token in text.split(|c: char| c.is_whitespace() || c == '*').filter(|t| !t.is_empty()) {
        let mut chars = token.chars();
        let letter = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('X') => 1,
            Some('Y') => 2,
            Some('Z') => 3,
            _ => return Err(bad("letters must be X, Y or Z")),
        };
        let site: usize = chars.as_str().parse().map_err(|_| bad("expected a site index after the letter"))?;
        if site >= chain.n_sites() {
            return Err(bad(&format!("site {site} outside a {}-site chain", chain.n_sites())));
        }
        if letters[site] != 0 {
            return Err(bad(&format!("site {site} appears twice")));
        }
        letters[site] = letter;
    }
    if letters.iter().all(|&l| l == 0) {
        return Err(bad("empty string"));
    }
    Ok(PauliString::new(chain, letters)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            c.validate().unwrap();
        }
        assert_eq!(preset("fig5-xxz").unwrap().times().unwrap().len(), 50);
        assert_eq!(preset("fig2-chaotic").unwrap().times().unwrap().len(), 21);
        assert!(preset("fig7").is_err());
    }

    #[test]
    fn default_observable_is_middle_x() {
        let c = preset("fig2-chaotic").unwrap();
        assert_eq!(c.observable().unwrap().letters(), &[0, 0, 0, 0, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn parses_strings() {
        let chain = ChainSpec::qubits(4).unwrap();
        assert_eq!(parse_string(chain, "X0 z3").unwrap().letters(), &[1, 0, 0, 3]);
        assert_eq!(parse_string(chain, "Y1*Y2").unwrap().letters(), &[0, 2, 2, 0]);
        for bad in ["", "Q1", "X4", "X1 Z1", "X"] {
            assert!(parse_string(chain, bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = preset("fig6-ising").unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn file_layers_over_preset() {
        let dir = std::env::temp_dir().join(format!("opsize-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        std::fs::write(&path, "seed = 9\n[model]\nn_sites = 4\n[times]\nvalues = [0.0, 1.0]\n").unwrap();
        let c = load(Some("fig6-ising"), Some(&path)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.model.n_sites, 4);
        assert_eq!(c.model.fields, [1.05, 0.0, 0.5]);
        assert_eq!(c.times().unwrap(), vec![0.0, 1.0]);
        std::fs::write(&path, "[model]\nspin = 3\n").unwrap();
        assert!(matches!(load(None, Some(&path)), Err(CliError::Usage(_))));
    }
}
