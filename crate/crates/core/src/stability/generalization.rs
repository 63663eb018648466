//! Population risks from the exact kernel, generalization gaps and excess risk.

use serde::{Deserialize, Serialize};

use crate::dataset::{SamplingMode, TransitionDataset};
use crate::error::Result;
use crate::mdp::{Policy, TabularMdp};
use crate::objective::SaddleObjective;
use crate::param::{ParamPoint, Parameterization};
use crate::stability::saddle::{
    minimize_primal_fixed_dual, solve_saddle, SaddleSolution, DEFAULT_SADDLE_TOL,
};

/// Population `(s, a)` law matching a generation mode: the discounted occupancy for
/// `iid_pairs`, the time-averaged marginal of an `n`-step trajectory otherwise.
pub fn population_weight(
    mdp: &TabularMdp,
    policy: &Policy,
    mode: SamplingMode,
    n: usize,
) -> Result<Vec<f64>> {
    match mode {
        SamplingMode::IidPairs => policy.discounted_occupancy(mdp),
        SamplingMode::SingleTrajectory => policy.trajectory_visitation(mdp, n),
    }
}

/// Exact population objective; its dual lives on the support of `weight`.
pub fn population_objective(
    param: &Parameterization,
    mdp: &TabularMdp,
    weight: &[f64],
) -> Result<SaddleObjective> {
    SaddleObjective::population(&param.with_dual_support(weight), mdp, weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    /// Radius of the primal ball for the inner minimization; `None` uses
    /// [`default_primal_radius`].
    pub radius: Option<f64>,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            radius: None,
            inner_tol: 1e-9,
            inner_max_iter: 100_000,
        }
    }
}

/// `2 sqrt(d) (r_max + beta ln|A|) / (1 - beta)`: twice the sup-norm bound on any
/// soft Q-function, scaled to the Euclidean ball in dimension `d`.
pub fn default_primal_radius(mdp: &TabularMdp, param: &Parameterization) -> f64 {
    let r_max = mdp.rewards().iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let beta = mdp.beta();
    let d = param.dim_primal() as f64;
    2.0 * d.sqrt() * (r_max + beta * (mdp.n_actions() as f64).ln()) / (1.0 - beta)
}

/// Weak primal-dual gap `max_v' F(w, v') - min_{||w'|| <= R} F(w', v)`, with the
/// inner minimization started at `w` so the result is nonnegative.
pub fn pd_gap(obj: &SaddleObjective, p: &ParamPoint, radius: f64, opts: &GapOptions) -> f64 {
    let upper = obj.phi(&p.w);
    let (_, lower) =
        minimize_primal_fixed_dual(obj, &p.v, &p.w, radius, opts.inner_tol, opts.inner_max_iter);
    upper - lower
}

/// Dual vector of `from` restated on `to`'s support; pairs absent from `from`
/// take `to`'s closed-form optimum at `w`.
fn transfer_dual(to: &SaddleObjective, from: &Parameterization, p: &ParamPoint) -> Vec<f64> {
    let fallback = to.dual_argmax(&p.w);
    to.param()
        .dual_pairs()
        .iter()
        .zip(fallback)
        .map(|(&(s, a), f)| from.dual_coord(s, a).map_or(f, |k| p.v[k]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationGap {
    /// `R(w) - R_n(w)`.
    pub primal: f64,
    /// Population weak primal-dual gap minus its empirical counterpart.
    pub pd: f64,
    pub population_risk: f64,
    pub empirical_risk: f64,
}

pub fn generalization_gap(
    param: &Parameterization,
    mdp: &TabularMdp,
    data: &TransitionDataset,
    point: &ParamPoint,
    weight: &[f64],
    opts: &GapOptions,
) -> Result<GeneralizationGap> {
    param.check_point(point)?;
    let emp = SaddleObjective::from_dataset(param, mdp.beta(), data)?;
    let pop = population_objective(param, mdp, weight)?;
    let radius = opts
        .radius
        .unwrap_or_else(|| default_primal_radius(mdp, param));
    let population_risk = pop.phi(&point.w);
    let empirical_risk = emp.phi(&point.w);
    let pop_point = ParamPoint::new(point.w.clone(), transfer_dual(&pop, param, point));
    let pd = pd_gap(&pop, &pop_point, radius, opts) - pd_gap(&emp, point, radius, opts);
    Ok(GeneralizationGap {
        primal: population_risk - empirical_risk,
        pd,
        population_risk,
        empirical_risk,
    })
}

/// Population saddle under `weight`.
pub fn population_saddle(
    param: &Parameterization,
    mdp: &TabularMdp,
    weight: &[f64],
) -> Result<SaddleSolution> {
    solve_saddle(
        &population_objective(param, mdp, weight)?,
        DEFAULT_SADDLE_TOL,
    )
}

/// `R(w) - R(theta*)` with `theta*` the population minimizer.
pub fn excess_risk(
    param: &Parameterization,
    mdp: &TabularMdp,
    w: &[f64],
    weight: &[f64],
) -> Result<f64> {
    let pop = population_objective(param, mdp, weight)?;
    let star = solve_saddle(&pop, DEFAULT_SADDLE_TOL)?;
    Ok(pop.phi(w) - star.phi_star)
}
