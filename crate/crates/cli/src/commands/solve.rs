use std::path::PathBuf;

use brm_core::numeric::sup_dist;
use brm_core::stability::saddle::solve_saddle;
use brm_core::{soft_bellman_apply, solve_soft_optimal, Parameterization, SaddleObjective};
use clap::Args;
use serde_json::json;

use crate::commands::{load_data, load_mdp, recorded};
use crate::error::CliResult;
use crate::Common;

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Dataset CSV; when given the empirical saddle point is solved as well.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sup-norm tolerance on Q*.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Gradient-norm tolerance for the saddle solver.
    #[arg(long, default_value_t = 1e-10)]
    saddle_tol: f64,
}

pub fn run(args: SolveArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    if args.mdp.is_some() {
        cfg.mdp.file = args.mdp;
    }
    let with_data = args.data.is_some();
    if with_data {
        cfg.dataset.file = args.data;
    }
    cfg.validate()?;
    recorded(&cfg, "solve", |rec| {
        let mdp = load_mdp(&cfg)?;
        let sol = solve_soft_optimal(&mdp, args.tol, 1_000_000)?;
        let residual = sup_dist(&soft_bellman_apply(&mdp, &sol.q_star)?, &sol.q_star);
        rec.write_json(
            "soft_solution.json",
            &json!({
                "q_star": sol.q_star,
                "v_star": sol.v_star,
                "pi_star": sol.pi_star,
                "iterations": sol.iterations,
                "bellman_residual_sup": residual,
            }),
        )?;
        println!(
            "soft fixed point: {} iterations, sup-norm Bellman residual {residual:e}",
            sol.iterations
        );
        if with_data {
            let data = load_data(&cfg, &mdp)?;
            let param = Parameterization::tabular(&data);
            let obj = SaddleObjective::from_dataset(&param, mdp.beta(), &data)?;
            let saddle = solve_saddle(&obj, args.saddle_tol)?;
            println!(
                "empirical saddle: Phi* = {:e}, grad norm {:e}",
                saddle.phi_star, saddle.grad_norm
            );
            rec.write_json("saddle.json", &saddle)?;
        }
        Ok(())
    })
}
