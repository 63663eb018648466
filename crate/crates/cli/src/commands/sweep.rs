use std::path::PathBuf;

use brm_core::io::fmt_f64;
use brm_core::numeric::log_log_slope;
use brm_core::rng::mix64;
use brm_core::stability::{stability_cell, BoundOptions, CellResult, CellSpec};
use clap::Args;
use serde::Serialize;

use crate::commands::{load_mdp, load_policy, recorded};
use crate::error::{CliError, CliResult};
use crate::Common;

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Comma-separated dataset sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Comma-separated iteration counts.
    #[arg(long = "t-grid", value_delimiter = ',')]
    t_grid: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    i_subsample: Option<usize>,
    /// Exit with status 4 when a fitted slope leaves the configured window.
    #[arg(long)]
    enforce: bool,
    /// Worker threads for coupled runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Serialize)]
struct CellOutcome {
    n: usize,
    t: usize,
    dataset_seed: u64,
    result: Option<CellResult>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct SlopeSummary {
    t: usize,
    slope: Option<f64>,
    within_window: Option<bool>,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    complete: bool,
    failed_cells: Vec<(usize, usize)>,
    slope_window: [f64; 2],
    slopes: Vec<SlopeSummary>,
}

/// Dataset seed for size `n`; equal sizes share a dataset, distinct sizes do not.
pub fn cell_dataset_seed(base: u64, n: usize) -> u64 {
    mix64(base ^ mix64(n as u64 ^ 0x5eed))
}

pub fn run(args: SweepArgs) -> CliResult<()> {
    let mut cfg = args.common.resolve()?;
    if args.mdp.is_some() {
        cfg.mdp.file = args.mdp;
    }
    let st = &mut cfg.stability;
    if let Some(g) = args.n_grid {
        st.n_grid = g;
    }
    if let Some(g) = args.t_grid {
        st.t_grid = g;
    }
    st.replicates = args.replicates.unwrap_or(st.replicates);
    if args.i_subsample.is_some() {
        st.i_subsample = args.i_subsample;
    }
    cfg.validate()?;
    if cfg.stability.n_grid.is_empty() || cfg.stability.t_grid.is_empty() {
        return Err(CliError::usage("n_grid and t_grid must be nonempty"));
    }
    if let Some(j) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    recorded(&cfg, "stability-sweep", |rec| {
        rec.seed("dataset", cfg.dataset_seed());
        rec.seed("sgda", cfg.sgda_seed());
        rec.seed("neighbor", cfg.neighbor_seed());
        rec.seed("probes", cfg.probe_seed());
        let mdp = load_mdp(&cfg)?;
        let policy = load_policy(&cfg, &mdp)?;
        let st = &cfg.stability;
        let bound_opts = BoundOptions {
            c_var: cfg.bound.c_var,
            hit: cfg.bound.hit,
            kernel: cfg.bound.kernel,
        };

        let mut cells = Vec::new();
        for &t in &st.t_grid {
            for &n in &st.n_grid {
                let spec = CellSpec {
                    n,
                    mode: cfg.dataset.mode,
                    dataset_seed: cell_dataset_seed(cfg.dataset_seed(), n),
                    min_visits: cfg.dataset.min_visits,
                    init: cfg.sgda.init,
                    replicates: st.replicates,
                    i_subsample: st.i_subsample,
                    neighbor_seed: cfg.neighbor_seed(),
                    probe_budget: st.probe_budget,
                    probe_seed: cfg.probe_seed(),
                    bound: bound_opts,
                };
                let run_cfg = brm_core::SgdaRunConfig {
                    iterations: t,
                    ..cfg.run_config()
                };
                let outcome = match stability_cell(&mdp, &policy, &spec, &run_cfg) {
                    Ok(r) => CellOutcome {
                        n,
                        t,
                        dataset_seed: spec.dataset_seed,
                        result: Some(r),
                        error: None,
                    },
                    Err(e) => {
                        eprintln!("cell n={n} T={t} failed: {e}");
                        CellOutcome {
                            n,
                            t,
                            dataset_seed: spec.dataset_seed,
                            result: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                cells.push(outcome);
            }
        }

        let [lo, hi] = st.slope_window;
        let slopes: Vec<SlopeSummary> = st
            .t_grid
            .iter()
            .map(|&t| {
                let pts: Vec<(f64, f64)> = cells
                    .iter()
                    .filter(|c| c.t == t)
                    .filter_map(|c| c.result.as_ref().map(|r| (c.n as f64, r.report.eps_t_mean)))
                    .filter(|&(_, e)| e > 0.0)
                    .collect();
                let mut ns: Vec<f64> = pts.iter().map(|p| p.0).collect();
                ns.dedup();
                let slope = (ns.len() >= 2).then(|| {
                    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                    log_log_slope(&x, &y)
                });
                SlopeSummary {
                    t,
                    slope,
                    within_window: slope.map(|s| (lo..=hi).contains(&s)),
                }
            })
            .collect();

        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Other(e.to_string());
        w.write_record([
            "n",
            "T",
            "replicates",
            "eps_mean",
            "eps_stderr",
            "bound",
            "slope_window",
        ])
        .map_err(csv_err)?;
        let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), fmt_f64);
        for c in &cells {
            let slope = slopes.iter().find(|s| s.t == c.t).and_then(|s| s.slope);
            let (eps, se, bound) = match &c.result {
                Some(r) => (
                    Some(r.report.eps_t_mean),
                    Some(r.report.eps_t_stderr),
                    r.report.bound_value,
                ),
                None => (None, None, None),
            };
            w.write_record([
                c.n.to_string(),
                c.t.to_string(),
                st.replicates.to_string(),
                opt(eps),
                opt(se),
                opt(bound),
                opt(slope),
            ])
            .map_err(csv_err)?;
            if c.result.is_some() {
                rec.write_json(&format!("reports/report_n{}_T{}.json", c.n, c.t), c)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
        rec.write("sweep.csv", &bytes)?;

        let failed: Vec<(usize, usize)> = cells
            .iter()
            .filter(|c| c.result.is_none())
            .map(|c| (c.n, c.t))
            .collect();
        let summary = SweepSummary {
            complete: failed.is_empty(),
            failed_cells: failed,
            slope_window: st.slope_window,
            slopes,
        };
        rec.write_json("summary.json", &summary)?;
        for s in &summary.slopes {
            match s.slope {
                Some(v) => println!("T={}: log-log slope of eps_T vs n = {v:.4}", s.t),
                None => println!("T={}: slope unavailable", s.t),
            }
        }
        if !summary.complete {
            eprintln!(
                "sweep incomplete: {} failed cells",
                summary.failed_cells.len()
            );
        }
        if args.enforce && summary.slopes.iter().any(|s| s.within_window != Some(true)) {
            return Err(CliError::Verification(format!(
                "slope outside [{lo}, {hi}]"
            )));
        }
        Ok(())
    })
}
