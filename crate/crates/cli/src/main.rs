use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod manifest;

use config::ExperimentConfig;
use error::CliResult;

#[derive(Parser)]
#[command(
    name = "brm",
    version,
    about = "Bellman residual minimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML experiment config; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, env = "BRM_SEED")]
    seed: Option<u64>,

    /// Directory for every artifact and the manifest.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a random MDP as JSON.
    GenMdp(commands::gen_mdp::GenMdpArgs),
    /// Sample an offline dataset (CSV plus JSON sidecar).
    GenData(commands::gen_data::GenDataArgs),
    /// Solve the soft Bellman fixed point and, with data, the empirical saddle.
    Solve(commands::solve::SolveArgs),
    /// Run minibatch SGDA and write its trace.
    Train(commands::train::TrainArgs),
    /// Check identities, gradients and lemma inequalities against exact oracles.
    Verify(commands::verify::VerifyArgs),
    /// Estimate stability over an (n, T) grid.
    StabilitySweep(commands::sweep::SweepArgs),
    /// Estimate L, rho, G, mu_PL, mu_QG around the empirical saddle.
    Constants(commands::constants::ConstantsArgs),
    /// Evaluate the stability bound from a constants file.
    Bound(commands::bound::BoundArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenMdp(a) => commands::gen_mdp::run(a),
        Command::GenData(a) => commands::gen_data::run(a),
        Command::Solve(a) => commands::solve::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Verify(a) => commands::verify::run(a),
        Command::StabilitySweep(a) => commands::sweep::run(a),
        Command::Constants(a) => commands::constants::run(a),
        Command::Bound(a) => commands::bound::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("brm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
