//! Self-checks against exact-kernel oracles, shared by the CLI `verify` command.

use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::numeric::sup_dist;
use crate::objective::{
    bellman_error, double_sampling_bias, expected_td_error, msbe_exact, mstde_exact,
    per_sample_objective, SaddleObjective,
};
use crate::param::{ParamPoint, Parameterization};
use crate::rng::{streams, StreamRng};
use crate::stability::constants::{default_probe_radius, estimate_constants, gaussian};
use crate::stability::generalization::population_objective;
use crate::stability::lemmas::{lemma_checkers, LemmaReport};
use crate::stability::saddle::{solve_saddle, DEFAULT_SADDLE_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub tolerance: f64,
    pub probes: usize,
}

impl CheckResult {
    fn new(name: &str, max_error: f64, tolerance: f64, probes: usize) -> Self {
        Self {
            name: name.into(),
            passed: max_error <= tolerance,
            max_error,
            tolerance,
            probes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    /// Double-sampling bias at the first probe; exactly 0 for deterministic kernels.
    pub bias_at_first_probe: f64,
    pub lemmas: Option<LemmaReport>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub value_probes: usize,
    pub gradient_probes: usize,
    pub lemma_probes: usize,
    pub fd_step: f64,
    pub run_lemmas: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            value_probes: 20,
            gradient_probes: 100,
            lemma_probes: 100,
            fd_step: 1e-5,
            run_lemmas: true,
        }
    }
}

fn random_vec(d: usize, scale: f64, rng: &mut StreamRng) -> Vec<f64> {
    (0..d).map(|_| scale * gaussian(rng)).collect()
}

/// Largest relative central-difference error of the joint gradient at `p` for sample `z`,
/// measured as `max_k |g_k - fd_k| / max(1, max_k |g_k|)`.
pub fn gradient_fd_error(
    param: &Parameterization,
    beta: f64,
    p: &ParamPoint,
    z: &crate::dataset::Transition,
    h: f64,
) -> Result<f64> {
    let g = per_sample_objective(param, beta, p, z)?.joint_grad();
    let x = p.joint();
    let dp = p.w.len();
    let mut worst: f64 = 0.0;
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let fp = per_sample_objective(param, beta, &ParamPoint::from_joint(&xp, dp), z)?.value;
        let fm = per_sample_objective(param, beta, &ParamPoint::from_joint(&xm, dp), z)?.value;
        worst = worst.max(((fp - fm) / (2.0 * h) - g[k]).abs() / scale);
    }
    Ok(worst)
}

/// Runs every identity check on `mdp` with `weight` as the population `(s, a)` law.
pub fn run_verification(
    mdp: &TabularMdp,
    param: &Parameterization,
    data: &TransitionDataset,
    weight: &[f64],
    opts: &VerifyOptions,
    seed: u64,
) -> Result<VerifyReport> {
    data.validate(mdp)?;
    let mut rng = StreamRng::new(seed, streams::PROBES).split(0xfe11);
    let dp = param.dim_primal();
    let pop = population_objective(param, mdp, weight)?;

    let mut unbiased: f64 = 0.0;
    let mut double: f64 = 0.0;
    let mut biconj: f64 = 0.0;
    let mut bias0 = f64::NAN;
    for k in 0..opts.value_probes {
        let w = random_vec(dp, 1.0, &mut rng);
        unbiased = unbiased.max(sup_dist(
            &expected_td_error(mdp, param, &w)?,
            &bellman_error(mdp, param, &w)?,
        ));
        let msbe = msbe_exact(mdp, param, &w, weight)?;
        let bias = double_sampling_bias(mdp, param, &w, weight)?;
        if k == 0 {
            bias0 = bias;
        }
        double = double.max((msbe - (mstde_exact(mdp, param, &w, weight)? - bias)).abs());
        biconj = biconj.max((pop.phi(&w) - msbe).abs());
    }

    let mut grad: f64 = 0.0;
    let dd = param.dim_dual();
    for _ in 0..opts.gradient_probes {
        let p = ParamPoint::new(random_vec(dp, 1.0, &mut rng), random_vec(dd, 1.0, &mut rng));
        let z = data.samples[rng.below(data.len())];
        grad = grad.max(gradient_fd_error(param, mdp.beta(), &p, &z, opts.fd_step)?);
    }

    let checks = vec![
        CheckResult::new(
            "expected TD error equals Bellman error",
            unbiased,
            1e-12,
            opts.value_probes,
        ),
        CheckResult::new(
            "MSBE = MSTDE - double-sampling bias",
            double,
            1e-10,
            opts.value_probes,
        ),
        CheckResult::new(
            "population minimax at inner optimum equals MSBE",
            biconj,
            1e-10,
            opts.value_probes,
        ),
        CheckResult::new(
            "analytic gradient vs central differences",
            grad,
            1e-6,
            opts.gradient_probes,
        ),
    ];

    let lemmas = if opts.run_lemmas && mdp.beta() > 0.0 {
        let obj = SaddleObjective::from_dataset(param, mdp.beta(), data)?;
        let saddle = solve_saddle(&obj, DEFAULT_SADDLE_TOL)?;
        let init = crate::sgda::initial_point(&obj, crate::sgda::InitMode::DualOptimal);
        let radius = default_probe_radius(&saddle, &init);
        let consts = estimate_constants(&obj, &saddle, radius, opts.lemma_probes.max(100), seed)?;
        Some(lemma_checkers(
            mdp,
            param,
            data,
            &consts,
            &saddle,
            opts.lemma_probes,
            seed,
        )?)
    } else {
        None
    };
    let passed = checks.iter().all(|c| c.passed) && lemmas.as_ref().is_none_or(LemmaReport::passed);
    Ok(VerifyReport {
        checks,
        bias_at_first_probe: bias0,
        lemmas,
        passed,
    })
}
