use std::path::PathBuf;

use brm_core::io::{write_index_csv, write_trace_csv};
use brm_core::sgda::initial_point;
use brm_core::stability::saddle::{solve_saddle, DEFAULT_SADDLE_TOL};
use brm_core::{run_sgda, Parameterization, SaddleObjective};
use clap::Args;
use serde_json::json;

use crate::commands::{load_data, load_mdp, recorded};
use crate::error::CliResult;
use crate::Common;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Also write the minibatch index log.
    #[arg(long)]
    log_indices: bool,
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    if args.mdp.is_some() {
        cfg.mdp.file = args.mdp;
    }
    if args.data.is_some() {
        cfg.dataset.file = args.data;
    }
    let s = &mut cfg.sgda;
    s.batch_size = args.batch_size.unwrap_or(s.batch_size);
    s.c1 = args.c1.unwrap_or(s.c1);
    s.c2 = args.c2.unwrap_or(s.c2);
    s.iterations = args.iterations.unwrap_or(s.iterations);
    s.record_every = args.record_every.unwrap_or(s.record_every);
    s.log_indices |= args.log_indices;
    cfg.validate()?;
    recorded(&cfg, "train", |rec| {
        rec.seed("dataset", cfg.dataset_seed());
        rec.seed("sgda", cfg.sgda_seed());
        let mdp = load_mdp(&cfg)?;
        let data = load_data(&cfg, &mdp)?;
        let param = Parameterization::tabular(&data);
        let obj = SaddleObjective::from_dataset(&param, mdp.beta(), &data)?;
        let saddle = solve_saddle(&obj, DEFAULT_SADDLE_TOL)?;
        let init = initial_point(&obj, cfg.sgda.init);
        let run_cfg = cfg.run_config();
        let trace = run_sgda(&param, mdp.beta(), &data, &run_cfg, &init, None)?;

        let mut buf = Vec::new();
        write_trace_csv(&trace.objective_log, saddle.phi_star, &mut buf)?;
        rec.write("trace.csv", &buf)?;
        if cfg.sgda.log_indices {
            let mut buf = Vec::new();
            write_index_csv(&trace.index_log, &mut buf)?;
            rec.write("indices.csv", &buf)?;
        }
        let p = &trace.final_point;
        let gap = obj.phi(&p.w) - saddle.phi_star;
        rec.write_json(
            "final.json",
            &json!({
                "w": p.w,
                "v": p.v,
                "iterations": run_cfg.iterations,
                "phi_star": saddle.phi_star,
                "final_phi_gap": gap,
            }),
        )?;
        println!(
            "trained {} steps: final Phi gap {gap:e}",
            run_cfg.iterations
        );
        Ok(())
    })
}
