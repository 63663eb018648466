//! Browser bindings: each export takes plain numbers and returns a JSON string.

use brm_core::mdp::{solve_soft_optimal, Policy, TabularMdp};
use brm_core::numeric::log_log_slope;
use brm_core::sgda::{initial_point, suboptimality_curve};
use brm_core::stability::{estimate_eps_t, solve_saddle};
use brm_core::{
    generate_dataset, run_sgda, BrmError, InitMode, Parameterization, SaddleObjective,
    SamplingMode, SgdaRunConfig,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js(e: BrmError) -> JsError {
    JsError::new(&e.to_string())
}

/// Soft-optimal `Q*`, `V*`, `pi*` of a random MDP.
#[wasm_bindgen]
pub fn soft_values(states: usize, actions: usize, beta: f64, seed: u64) -> Result<String, JsError> {
    let mdp = TabularMdp::random(states, actions, beta, seed).map_err(js)?;
    let sol = solve_soft_optimal(&mdp, 1e-12, 1_000_000).map_err(js)?;
    Ok(json!({
        "states": states,
        "actions": actions,
        "reward": mdp.rewards(),
        "q": sol.q_star,
        "v": sol.v_star,
        "pi": sol.pi_star,
        "residual": sol.residual,
        "iterations": sol.iterations,
    })
    .to_string())
}

/// SGDA suboptimality `Phi(w_t) - Phi*` on a random 3x2 instance, recorded every
/// `record_every` steps.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn sgda_curve(
    beta: f64,
    n: usize,
    batch: usize,
    c1: f64,
    c2: f64,
    iterations: usize,
    record_every: usize,
    seed: u64,
) -> Result<String, JsError> {
    let mdp = TabularMdp::random(3, 2, beta, seed).map_err(js)?;
    let data = generate_dataset(
        &mdp,
        &Policy::uniform(3, 2),
        n,
        SamplingMode::IidPairs,
        seed,
        2,
    )
    .map_err(js)?;
    let param = Parameterization::tabular(&data);
    let obj = SaddleObjective::from_dataset(&param, beta, &data).map_err(js)?;
    let star = solve_saddle(&obj, 1e-10).map_err(js)?;
    let cfg = SgdaRunConfig {
        batch_size: batch,
        c1,
        c2,
        iterations,
        seed,
        record_every,
        log_objective: true,
        ..Default::default()
    };
    let trace = run_sgda(
        &param,
        beta,
        &data,
        &cfg,
        &initial_point(&obj, InitMode::DualOptimal),
        None,
    )
    .map_err(js)?;
    let curve = suboptimality_curve(&trace, &obj, star.phi_star);
    Ok(json!({
        "t": curve.iter().map(|c| c.0).collect::<Vec<_>>(),
        "gap": curve.iter().map(|c| c.1).collect::<Vec<_>>(),
        "phi_star": star.phi_star,
    })
    .to_string())
}

/// On-average argument stability over `n_grid` with its log-log slope.
#[wasm_bindgen]
pub fn stability_scan(
    beta: f64,
    n_grid: Vec<u32>,
    iterations: usize,
    replicates: usize,
    c1: f64,
    c2: f64,
    seed: u64,
) -> Result<String, JsError> {
    let mdp = TabularMdp::random(3, 2, beta, seed).map_err(js)?;
    let policy = Policy::uniform(3, 2);
    let cfg = SgdaRunConfig {
        batch_size: 1,
        c1,
        c2,
        iterations,
        seed,
        record_every: 0,
        log_objective: false,
        ..Default::default()
    };
    let mut eps = Vec::with_capacity(n_grid.len());
    let mut stderr = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        let data = generate_dataset(
            &mdp,
            &policy,
            n as usize,
            SamplingMode::IidPairs,
            seed.wrapping_add(k as u64),
            2,
        )
        .map_err(js)?;
        let param = Parameterization::tabular(&data);
        let obj = SaddleObjective::from_dataset(&param, beta, &data).map_err(js)?;
        let init = initial_point(&obj, InitMode::DualOptimal);
        let report = estimate_eps_t(&mdp, &param, &data, &cfg, &init, replicates, Some(25), seed)
            .map_err(js)?;
        eps.push(report.eps_t_mean);
        stderr.push(report.eps_t_stderr);
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let slope = if eps.len() >= 2 && eps.iter().all(|&e| e > 0.0) {
        log_log_slope(&xs, &eps)
    } else {
        f64::NAN
    };
    Ok(json!({ "n": n_grid, "eps": eps, "stderr": stderr, "slope": slope }).to_string())
}
