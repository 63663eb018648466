//! One `(n, T)` cell of a stability sweep: dataset, saddle, constants, coupled runs,
//! bound and generalization gaps.

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_dataset, SamplingMode};
use crate::error::{BrmError, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::objective::SaddleObjective;
use crate::param::Parameterization;
use crate::sgda::{initial_point, InitMode, SgdaKernel, SgdaRunConfig};
use crate::stability::bounds::{corollary_bound, psi0_max, BoundOptions, BoundTerms};
use crate::stability::constants::{default_probe_radius, estimate_constants, ConstantsEstimate};
use crate::stability::estimate::{
    estimate_eps_t, replicate_neighbor, replicate_positions, StabilityReport,
};
use crate::stability::generalization::{generalization_gap, population_weight, GapOptions};
use crate::stability::saddle::{solve_saddle, solve_saddle_from, DEFAULT_SADDLE_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub n: usize,
    pub mode: SamplingMode,
    pub dataset_seed: u64,
    pub min_visits: usize,
    pub init: InitMode,
    pub replicates: usize,
    pub i_subsample: Option<usize>,
    pub neighbor_seed: u64,
    pub probe_budget: usize,
    pub probe_seed: u64,
    pub bound: BoundOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub report: StabilityReport,
    pub constants: ConstantsEstimate,
    pub psi0_max: f64,
    pub bound: Option<BoundTerms>,
    /// Why `bound` is absent, when it is.
    pub bound_note: Option<String>,
    /// `eta_0 <= min{1/(4L), 1/rho}` with the estimated constants.
    pub stepsize_condition_met: bool,
    pub phi_star: f64,
}

/// Runs one sweep cell; `cfg.iterations` is `T`.
pub fn stability_cell(
    mdp: &TabularMdp,
    policy: &Policy,
    spec: &CellSpec,
    cfg: &SgdaRunConfig,
) -> Result<CellResult> {
    let cfg = SgdaRunConfig {
        record_every: 0,
        log_objective: false,
        ..cfg.clone()
    };
    let beta = mdp.beta();
    let data = generate_dataset(
        mdp,
        policy,
        spec.n,
        spec.mode,
        spec.dataset_seed,
        spec.min_visits,
    )?;
    cfg.validate(data.len())?;
    let param = Parameterization::tabular(&data);
    let obj = SaddleObjective::from_dataset(&param, beta, &data)?;
    let saddle = solve_saddle(&obj, DEFAULT_SADDLE_TOL)?;
    let init = initial_point(&obj, spec.init);

    let mut report = estimate_eps_t(
        mdp,
        &param,
        &data,
        &cfg,
        &init,
        spec.replicates,
        spec.i_subsample,
        spec.neighbor_seed,
    )?;
    let radius = default_probe_radius(&saddle, &init);
    let constants = estimate_constants(&obj, &saddle, radius, spec.probe_budget, spec.probe_seed)?;

    let mut neighbors = Vec::new();
    for i in replicate_positions(spec.n, spec.i_subsample, spec.neighbor_seed, 0) {
        let pair = replicate_neighbor(mdp, &data, spec.neighbor_seed, 0, i)?;
        let nobj = SaddleObjective::from_dataset(&param, beta, &pair.neighbor)?;
        let nsol = solve_saddle_from(&nobj, DEFAULT_SADDLE_TOL, &saddle.x_star, 2_000_000)?;
        neighbors.push((nobj, nsol));
    }
    let mut pairs = vec![(&obj, &saddle)];
    pairs.extend(neighbors.iter().map(|(o, s)| (o, s)));
    let psi0 = psi0_max(&pairs, &init, constants.alpha);

    let (bound, bound_note) =
        match corollary_bound(&constants, &cfg, spec.n, cfg.iterations, psi0, &spec.bound) {
            Ok(b) => (Some(b), None),
            Err(e @ (BrmError::ScheduleIncompatible { .. } | BrmError::Precondition(_))) => {
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
    report.bound_value = bound.as_ref().map(|b| b.total);

    let base_final = SgdaKernel::new(&param, beta, &data.samples)?.run(
        &cfg,
        &init,
        &crate::sgda::draw_indices(&cfg, spec.n)?,
        |_, _| {},
    )?;
    let weight = population_weight(mdp, policy, spec.mode, spec.n)?;
    let gap = generalization_gap(
        &param,
        mdp,
        &data,
        &base_final,
        &weight,
        &GapOptions::default(),
    )?;
    report.gen_gap_primal = Some(gap.primal);
    report.gen_gap_pd = Some(gap.pd);

    Ok(CellResult {
        report,
        stepsize_condition_met: cfg.eta(0) <= constants.stepsize_cap(),
        constants,
        psi0_max: psi0,
        bound,
        bound_note,
        phi_star: saddle.phi_star,
    })
}
