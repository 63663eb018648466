use clap::Args;

use crate::commands::{load_mdp, recorded};
use crate::error::CliResult;
use crate::Common;

#[derive(Args, Debug)]
pub struct GenMdpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    /// Discount factor in (0, 1).
    #[arg(long)]
    beta: Option<f64>,
    /// Deterministic transitions.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, default_value = "mdp.json")]
    out: String,
}

pub fn run(args: GenMdpArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    cfg.mdp.file = None;
    if let Some(s) = args.states {
        cfg.mdp.states = s;
    }
    if let Some(a) = args.actions {
        cfg.mdp.actions = a;
    }
    if let Some(b) = args.beta {
        cfg.mdp.beta = b;
    }
    cfg.mdp.deterministic |= args.deterministic;
    cfg.validate()?;
    recorded(&cfg, "gen-mdp", |rec| {
        rec.seed("mdp", cfg.mdp_seed());
        let mdp = load_mdp(&cfg)?;
        rec.write_json(&args.out, &mdp)?;
        Ok(())
    })
}
