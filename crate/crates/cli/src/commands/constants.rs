use std::path::PathBuf;

use brm_core::sgda::initial_point;
use brm_core::stability::bounds::psi0_max;
use brm_core::stability::constants::default_probe_radius;
use brm_core::stability::estimate_constants;
use brm_core::stability::saddle::{solve_saddle, DEFAULT_SADDLE_TOL};
use brm_core::{Parameterization, SaddleObjective};
use clap::Args;
use serde_json::json;

use crate::commands::{load_data, load_mdp, recorded};
use crate::error::CliResult;
use crate::Common;

#[derive(Args, Debug)]
pub struct ConstantsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    probe_budget: Option<usize>,
    /// Probe ball radius (default: distance from the initial point to the saddle, at least 0.1).
    #[arg(long)]
    radius: Option<f64>,
}

pub fn run(args: ConstantsArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    if args.mdp.is_some() {
        cfg.mdp.file = args.mdp;
    }
    if args.data.is_some() {
        cfg.dataset.file = args.data;
    }
    cfg.stability.probe_budget = args.probe_budget.unwrap_or(cfg.stability.probe_budget);
    cfg.validate()?;
    recorded(&cfg, "constants", |rec| {
        rec.seed("probes", cfg.probe_seed());
        let mdp = load_mdp(&cfg)?;
        let data = load_data(&cfg, &mdp)?;
        let param = Parameterization::tabular(&data);
        let obj = SaddleObjective::from_dataset(&param, mdp.beta(), &data)?;
        let saddle = solve_saddle(&obj, DEFAULT_SADDLE_TOL)?;
        let init = initial_point(&obj, cfg.sgda.init);
        let radius = args
            .radius
            .unwrap_or_else(|| default_probe_radius(&saddle, &init));
        let k = estimate_constants(
            &obj,
            &saddle,
            radius,
            cfg.stability.probe_budget,
            cfg.probe_seed(),
        )?;
        let psi0 = psi0_max(&[(&obj, &saddle)], &init, k.alpha);
        println!(
            "L={:.4e} rho={:.4e} G={:.4e} mu_PL={:.4e} mu_QG={:.4e} alpha={:.4e}",
            k.l_hat, k.rho_hat, k.g_hat, k.mu_pl_hat, k.mu_qg_hat, k.alpha
        );
        rec.write_json(
            "constants.json",
            &json!({ "n": data.len(), "constants": k, "psi0_base": psi0, "phi_star": saddle.phi_star }),
        )?;
        Ok(())
    })
}
