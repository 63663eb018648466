use std::fs::File;
use std::path::PathBuf;

use brm_core::stability::{
    corollary_bound, stability_bound, BoundOptions, ConstantsEstimate, HitConstant, KernelRate,
};
use clap::Args;
use serde::Deserialize;
use serde_json::json;

use crate::commands::recorded;
use crate::error::{CliError, CliResult};
use crate::Common;

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[command(flatten)]
    common: Common,
    /// Output of the `constants` command.
    #[arg(long)]
    constants: PathBuf,
    /// Dataset size (default: the one recorded with the constants).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Initial potential (default: `psi0_base` from the constants file).
    #[arg(long)]
    psi0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    c_var: Option<f64>,
    /// `statement` or `proof`.
    #[arg(long)]
    hit: Option<HitConstant>,
}

#[derive(Deserialize)]
struct ConstantsFile {
    n: usize,
    constants: ConstantsEstimate,
    psi0_base: f64,
}

pub fn run(args: BoundArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    cfg.sgda.iterations = args.iterations.unwrap_or(cfg.sgda.iterations);
    cfg.sgda.c1 = args.c1.unwrap_or(cfg.sgda.c1);
    cfg.sgda.c2 = args.c2.unwrap_or(cfg.sgda.c2);
    cfg.bound.c_var = args.c_var.unwrap_or(cfg.bound.c_var);
    cfg.bound.hit = args.hit.unwrap_or(cfg.bound.hit);
    cfg.validate()?;
    let file: ConstantsFile =
        serde_json::from_reader(File::open(&args.constants).map_err(|e| {
            CliError::usage(format!("cannot open {}: {e}", args.constants.display()))
        })?)?;
    recorded(&cfg, "bound", |rec| {
        let n = args.n.unwrap_or(file.n);
        let psi0 = args.psi0.unwrap_or(file.psi0_base);
        let run_cfg = cfg.run_config();
        let t = run_cfg.iterations;
        let mut rows = Vec::new();
        for kernel in [KernelRate::ThreeQuarters, KernelRate::Half] {
            let opts = BoundOptions {
                c_var: cfg.bound.c_var,
                hit: cfg.bound.hit,
                kernel,
            };
            let theorem = stability_bound(&file.constants, &run_cfg, n, psi0, &opts)?;
            let corollary = corollary_bound(&file.constants, &run_cfg, n, t, psi0, &opts);
            println!(
                "kernel {kernel}: kernel-sum bound {:.6e}, closed-form bound {}",
                theorem.total,
                corollary
                    .as_ref()
                    .map_or_else(|e| e.to_string(), |b| format!("{:.6e}", b.total))
            );
            rows.push(json!({
                "kernel": kernel,
                "kernel_sum": theorem,
                "closed_form": corollary.as_ref().ok(),
                "closed_form_error": corollary.as_ref().err().map(|e| e.to_string()),
            }));
        }
        rec.write_json(
            "bound.json",
            &json!({ "n": n, "T": t, "psi0_max": psi0, "hit_variant": cfg.bound.hit, "bounds": rows }),
        )?;
        Ok(())
    })
}
