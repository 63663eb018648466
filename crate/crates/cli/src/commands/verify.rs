use std::path::PathBuf;

use brm_core::verify::{run_verification, VerifyOptions};
use brm_core::Parameterization;
use clap::Args;

use crate::commands::{load_data, load_mdp, recorded};
use crate::error::{CliError, CliResult};
use crate::Common;

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Probes per lemma checker.
    #[arg(long, default_value_t = 100)]
    probes: usize,
    /// Skip the lemma checkers.
    #[arg(long)]
    no_lemmas: bool,
}

pub fn run(args: VerifyArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    if args.mdp.is_some() {
        cfg.mdp.file = args.mdp;
    }
    if args.data.is_some() {
        cfg.dataset.file = args.data;
    }
    cfg.validate()?;
    recorded(&cfg, "verify", |rec| {
        rec.seed("probes", cfg.probe_seed());
        let mdp = load_mdp(&cfg)?;
        let data = load_data(&cfg, &mdp)?;
        let weight = brm_core::stability::population_weight(
            &mdp,
            &data.behavior_policy,
            data.mode,
            data.len(),
        )?;
        let param = Parameterization::tabular(&data);
        let opts = VerifyOptions {
            lemma_probes: args.probes,
            run_lemmas: !args.no_lemmas,
            ..VerifyOptions::default()
        };
        let report = run_verification(&mdp, &param, &data, &weight, &opts, cfg.probe_seed())?;
        rec.write_json("verify.json", &report)?;
        for c in &report.checks {
            println!(
                "{} {}: max error {:e} (tol {:e})",
                verdict(c.passed),
                c.name,
                c.max_error,
                c.tolerance
            );
        }
        println!(
            "double-sampling bias at first probe: {:e}",
            report.bias_at_first_probe
        );
        if let Some(l) = &report.lemmas {
            for c in &l.checks {
                println!(
                    "{} {} {}: {} violations",
                    verdict(c.passed()),
                    c.lemma,
                    c.inequality,
                    c.violations.len()
                );
            }
        }
        if report.passed {
            Ok(())
        } else {
            Err(CliError::Verification("see verify.json".into()))
        }
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
