//! Subcommand implementations and the loaders they share.

use std::fs::File;
use std::path::{Path, PathBuf};

use brm_core::io::{read_dataset_csv, DatasetSidecar};
use brm_core::{generate_dataset, Policy, TabularMdp, TransitionDataset};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

pub mod bound;
pub mod constants;
pub mod gen_data;
pub mod gen_mdp;
pub mod solve;
pub mod sweep;
pub mod train;
pub mod verify;

pub fn load_mdp(cfg: &ExperimentConfig) -> CliResult<TabularMdp> {
    match &cfg.mdp.file {
        Some(p) => Ok(serde_json::from_reader(File::open(p)?)?),
        None => {
            let m = &cfg.mdp;
            let seed = cfg.mdp_seed();
            Ok(if m.deterministic {
                TabularMdp::random_deterministic(m.states, m.actions, m.beta, seed)?
            } else {
                TabularMdp::random(m.states, m.actions, m.beta, seed)?
            })
        }
    }
}

pub fn load_policy(cfg: &ExperimentConfig, mdp: &TabularMdp) -> CliResult<Policy> {
    let policy = match &cfg.policy.rows {
        Some(rows) => Policy::from_rows(rows)?,
        None => Policy::uniform(mdp.n_states(), mdp.n_actions()),
    };
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(CliError::usage("policy shape does not match the MDP"));
    }
    Ok(policy)
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Loads `dataset.file` (validated row by row against `mdp`) or generates one.
pub fn load_data(cfg: &ExperimentConfig, mdp: &TabularMdp) -> CliResult<TransitionDataset> {
    match &cfg.dataset.file {
        Some(p) => {
            let side: DatasetSidecar = serde_json::from_reader(File::open(sidecar_path(p))?)?;
            let data = read_dataset_csv(File::open(p)?, &side)?;
            data.validate(mdp)?;
            Ok(data)
        }
        None => {
            let d = &cfg.dataset;
            let policy = load_policy(cfg, mdp)?;
            Ok(generate_dataset(
                mdp,
                &policy,
                d.n,
                d.mode,
                cfg.dataset_seed(),
                d.min_visits,
            )?)
        }
    }
}

/// Runs `body`, then writes the manifest with the outcome and returns the body's result.
pub fn recorded<F>(cfg: &ExperimentConfig, command: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut Recorder) -> CliResult<()>,
{
    let mut rec = Recorder::new(&cfg.output_dir, command, cfg.hash());
    rec.seed("master", cfg.seed);
    let result = body(&mut rec);
    let (status, failure) = match &result {
        Ok(()) => ("ok", None),
        Err(CliError::Core(brm_core::BrmError::Divergence { t, .. })) => (
            "diverged",
            Some(json!({ "t": t, "message": result.as_ref().unwrap_err().to_string() })),
        ),
        Err(e) => (
            "failed",
            Some(json!({ "message": e.to_string(), "exit_code": e.exit_code() })),
        ),
    };
    rec.finish(status, failure)?;
    result
}
