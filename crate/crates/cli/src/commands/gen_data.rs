use std::path::PathBuf;

use brm_core::io::{write_dataset_csv, DatasetSidecar};
use brm_core::SamplingMode;
use clap::Args;

use crate::commands::{load_mdp, load_policy, recorded};
use crate::error::{CliError, CliResult};
use crate::Common;

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// MDP JSON; generated from the config when absent.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// `iid_pairs` or `single_trajectory`.
    #[arg(long)]
    mode: Option<SamplingMode>,
    #[arg(long)]
    min_visits: Option<usize>,
    /// CSV file name; the sidecar takes the same stem with extension `json`.
    #[arg(long, default_value = "dataset.csv")]
    out: String,
}

pub fn run(args: GenDataArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    if args.mdp.is_some() {
        cfg.mdp.file = args.mdp;
    }
    if let Some(n) = args.n {
        cfg.dataset.n = n;
    }
    if let Some(m) = args.mode {
        cfg.dataset.mode = m;
    }
    if let Some(v) = args.min_visits {
        cfg.dataset.min_visits = v;
    }
    cfg.dataset.file = None;
    cfg.validate()?;
    if !args.out.ends_with(".csv") {
        return Err(CliError::usage("--out must name a .csv file"));
    }
    recorded(&cfg, "gen-data", |rec| {
        rec.seed("dataset", cfg.dataset_seed());
        let mdp = load_mdp(&cfg)?;
        load_policy(&cfg, &mdp)?;
        let data = crate::commands::load_data(&cfg, &mdp)?;
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf)?;
        rec.write(&args.out, &buf)?;
        let side = args.out.trim_end_matches(".csv").to_string() + ".json";
        rec.write_json(&side, &DatasetSidecar::describe(&data))?;
        Ok(())
    })
}
