//! Experiment configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use brm_core::rng::mix64;
use brm_core::sgda::InitMode;
use brm_core::stability::{HitConstant, KernelRate};
use brm_core::{IndexSampling, SamplingMode, SgdaRunConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mdp: MdpSpec,
    pub policy: PolicySpec,
    pub dataset: DatasetSpec,
    pub sgda: SgdaSpec,
    pub stability: StabilitySpec,
    pub bound: BoundSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdpSpec {
    /// Existing MDP JSON; when set the generator fields are ignored.
    pub file: Option<PathBuf>,
    pub states: usize,
    pub actions: usize,
    pub beta: f64,
    pub seed: Option<u64>,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    /// Behavior policy rows; uniform when absent.
    pub rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// Existing dataset CSV (sidecar at the same path with extension `json`).
    pub file: Option<PathBuf>,
    pub n: usize,
    pub mode: SamplingMode,
    pub seed: Option<u64>,
    pub min_visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdaSpec {
    pub batch_size: usize,
    pub c1: f64,
    pub c2: f64,
    pub iterations: usize,
    pub sampling: IndexSampling,
    pub seed: Option<u64>,
    pub record_every: usize,
    pub init: InitMode,
    pub log_indices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    pub replicates: usize,
    pub i_subsample: Option<usize>,
    pub n_grid: Vec<usize>,
    pub t_grid: Vec<usize>,
    pub probe_budget: usize,
    pub slope_window: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSpec {
    pub c_var: f64,
    pub hit: HitConstant,
    pub kernel: KernelRate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            seed: 0,
            output_dir: PathBuf::from("."),
            mdp: MdpSpec::default(),
            policy: PolicySpec::default(),
            dataset: DatasetSpec::default(),
            sgda: SgdaSpec::default(),
            stability: StabilitySpec::default(),
            bound: BoundSpec::default(),
        }
    }
}

impl Default for MdpSpec {
    fn default() -> Self {
        Self {
            file: None,
            states: 3,
            actions: 2,
            beta: 0.9,
            seed: None,
            deterministic: false,
        }
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            file: None,
            n: 200,
            mode: SamplingMode::IidPairs,
            seed: None,
            min_visits: 2,
        }
    }
}

impl Default for SgdaSpec {
    fn default() -> Self {
        Self {
            batch_size: 1,
            c1: 2.0,
            c2: 20.0,
            iterations: 20_000,
            sampling: IndexSampling::WithReplacement,
            seed: None,
            record_every: 10,
            init: InitMode::DualOptimal,
            log_indices: false,
        }
    }
}

impl Default for StabilitySpec {
    fn default() -> Self {
        Self {
            replicates: 20,
            i_subsample: Some(25),
            n_grid: vec![50, 100, 200, 400, 800],
            t_grid: vec![20_000],
            probe_budget: 200,
            slope_window: [-1.3, -0.7],
        }
    }
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self {
            c_var: 1.0,
            hit: HitConstant::Statement,
            kernel: KernelRate::ThreeQuarters,
        }
    }
}

/// Sub-seed tags; each consumer derives its seed from the master seed unless
/// the config pins it.
#[derive(Debug, Clone, Copy)]
pub enum SeedTag {
    Mdp = 1,
    Dataset = 2,
    Sgda = 3,
    Neighbor = 4,
    Probes = 5,
}

pub fn derive_seed(master: u64, tag: SeedTag) -> u64 {
    mix64(master ^ mix64(tag as u64))
}

impl ExperimentConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.mdp.file, &mut cfg.dataset.file]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "format_version must be {FORMAT_VERSION}, got {}",
                self.format_version
            )));
        }
        for p in [&self.mdp.file, &self.dataset.file].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::usage(format!(
                    "referenced file {} does not exist",
                    p.display()
                )));
            }
        }
        if self.mdp.file.is_none() {
            if self.mdp.states == 0 || self.mdp.actions == 0 {
                return Err(CliError::usage("states and actions must be at least 1"));
            }
            if !(self.mdp.beta > 0.0 && self.mdp.beta < 1.0) {
                return Err(CliError::usage(format!(
                    "beta must lie in (0, 1), got {}",
                    self.mdp.beta
                )));
            }
        }
        Ok(())
    }

    pub fn mdp_seed(&self) -> u64 {
        self.mdp
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, SeedTag::Mdp))
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, SeedTag::Dataset))
    }

    pub fn sgda_seed(&self) -> u64 {
        self.sgda
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, SeedTag::Sgda))
    }

    pub fn neighbor_seed(&self) -> u64 {
        derive_seed(self.seed, SeedTag::Neighbor)
    }

    pub fn probe_seed(&self) -> u64 {
        derive_seed(self.seed, SeedTag::Probes)
    }

    pub fn run_config(&self) -> SgdaRunConfig {
        SgdaRunConfig {
            batch_size: self.sgda.batch_size,
            c1: self.sgda.c1,
            c2: self.sgda.c2,
            iterations: self.sgda.iterations,
            sampling: self.sgda.sampling,
            seed: self.sgda_seed(),
            index_stream: 0,
            record_every: self.sgda.record_every,
            stepsize_cap: None,
            log_objective: true,
        }
    }

    /// `sha256` of the canonical JSON form of the resolved config, with the output
    /// directory dropped and input files replaced by digests of their contents, so
    /// the same experiment hashes the same wherever it runs.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let by_content = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| match std::fs::read(p) {
                Ok(bytes) => {
                    PathBuf::from(format!("sha256:{}", hex::encode(Sha256::digest(&bytes))))
                }
                Err(_) => p.clone(),
            })
        };
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.mdp.file = by_content(&self.mdp.file);
        canonical.dataset.file = by_content(&self.dataset.file);
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
