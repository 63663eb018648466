//! Shared-index coupled runs and the on-average argument stability estimate.

use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::numeric::{dist, mean_stderr};
use crate::param::{ParamPoint, Parameterization};
use crate::rng::{streams, StreamRng};
use crate::sgda::{draw_indices, IndexLog, SgdaKernel, SgdaRunConfig};
use crate::stability::neighbor::{make_neighbor, replacement_seed, NeighborPair};

/// Final-iterate distances `(||w_T - w'_T||, ||v_T - v'_T||)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledDistance {
    pub dw: f64,
    pub dv: f64,
    /// Whether the replaced index was ever drawn.
    pub hit: bool,
}

impl CoupledDistance {
    pub fn total(&self) -> f64 {
        self.dw + self.dv
    }
}

fn final_iterate(
    param: &Parameterization,
    beta: f64,
    data: &TransitionDataset,
    cfg: &SgdaRunConfig,
    init: &ParamPoint,
    indices: &IndexLog,
) -> Result<ParamPoint> {
    SgdaKernel::new(param, beta, &data.samples)?.run(cfg, init, indices, |_, _| {})
}

/// Runs SGDA on `pair.base` and `pair.neighbor` with one shared index sequence.
pub fn coupled_stability(
    param: &Parameterization,
    beta: f64,
    pair: &NeighborPair,
    cfg: &SgdaRunConfig,
    init: &ParamPoint,
) -> Result<CoupledDistance> {
    param.check_point(init)?;
    let indices = draw_indices(cfg, pair.base.len())?;
    let a = final_iterate(param, beta, &pair.base, cfg, init, &indices)?;
    let b = final_iterate(param, beta, &pair.neighbor, cfg, init, &indices)?;
    Ok(CoupledDistance {
        dw: dist(&a.w, &b.w),
        dv: dist(&a.v, &b.v),
        hit: indices.contains(pair.replaced_index),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean_dw: f64,
    pub mean_dv: f64,
    /// Pairs whose replaced index was never drawn.
    pub zero_hit_count: usize,
    /// Every zero-hit pair produced distance exactly 0.
    pub zero_hit_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub replicates: usize,
    pub indices_per_replicate: usize,
    pub eps_t_mean: f64,
    pub eps_t_stderr: f64,
    pub bound_value: Option<f64>,
    pub per_i_distances: DistanceSummary,
    pub gen_gap_primal: Option<f64>,
    pub gen_gap_pd: Option<f64>,
}

/// Positions examined in replicate `rep`: all of them, or a uniform subsample.
pub fn replicate_positions(
    n: usize,
    i_subsample: Option<usize>,
    seed: u64,
    rep: u64,
) -> Vec<usize> {
    match i_subsample {
        Some(k) if k < n => {
            let mut rng = StreamRng::new(seed, streams::NEIGHBOR).split(u64::MAX - rep);
            let mut perm: Vec<usize> = (0..n).collect();
            for j in 0..k {
                let r = j + rng.below(n - j);
                perm.swap(j, r);
            }
            let mut out = perm[..k].to_vec();
            out.sort_unstable();
            out
        }
        _ => (0..n).collect(),
    }
}

/// Neighbor used in replicate `rep` at position `i`.
pub fn replicate_neighbor(
    mdp: &TabularMdp,
    data: &TransitionDataset,
    seed: u64,
    rep: u64,
    i: usize,
) -> Result<NeighborPair> {
    make_neighbor(mdp, data, i, replacement_seed(seed, rep))
}

#[cfg(feature = "parallel")]
fn map_tasks<T, R, F>(tasks: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    tasks.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_tasks<T, R, F>(tasks: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    tasks.iter().map(f).collect()
}

/// Estimates `eps_T = (1/n) sum_i E ||A(D) - A(D^(i))||` by averaging coupled
/// distances over replicates (index stream `cfg.index_stream + rep`, fresh
/// replacement draws) and positions `i`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_eps_t(
    mdp: &TabularMdp,
    param: &Parameterization,
    data: &TransitionDataset,
    cfg: &SgdaRunConfig,
    init: &ParamPoint,
    replicates: usize,
    i_subsample: Option<usize>,
    seed: u64,
) -> Result<StabilityReport> {
    if replicates == 0 {
        return Err(crate::BrmError::precondition("need at least one replicate"));
    }
    param.check_point(init)?;
    let beta = mdp.beta();
    let n = data.len();
    let mut tasks = Vec::new();
    let mut replicate_state = Vec::with_capacity(replicates);
    for rep in 0..replicates as u64 {
        let rcfg = SgdaRunConfig {
            index_stream: cfg.index_stream.wrapping_add(rep),
            ..cfg.clone()
        };
        let indices = draw_indices(&rcfg, n)?;
        let base_final = final_iterate(param, beta, data, &rcfg, init, &indices)?;
        for i in replicate_positions(n, i_subsample, seed, rep) {
            tasks.push((rep as usize, i));
        }
        replicate_state.push((rcfg, indices, base_final));
    }
    let results = map_tasks(&tasks, |&(rep, i)| -> Result<CoupledDistance> {
        let (rcfg, indices, base_final) = &replicate_state[rep];
        let pair = replicate_neighbor(mdp, data, seed, rep as u64, i)?;
        let other = final_iterate(param, beta, &pair.neighbor, rcfg, init, indices)?;
        Ok(CoupledDistance {
            dw: dist(&base_final.w, &other.w),
            dv: dist(&base_final.v, &other.v),
            hit: indices.contains(i),
        })
    });
    let distances = results.into_iter().collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = distances.iter().map(CoupledDistance::total).collect();
    let (mean, stderr) = mean_stderr(&totals);
    let mut sorted = totals.clone();
    sorted.sort_by(f64::total_cmp);
    let zero_hit: Vec<&CoupledDistance> = distances.iter().filter(|d| !d.hit).collect();
    let summary = DistanceSummary {
        count: totals.len(),
        mean,
        min: sorted[0],
        median: sorted[sorted.len() / 2],
        max: sorted[sorted.len() - 1],
        mean_dw: mean_stderr(&distances.iter().map(|d| d.dw).collect::<Vec<_>>()).0,
        mean_dv: mean_stderr(&distances.iter().map(|d| d.dv).collect::<Vec<_>>()).0,
        zero_hit_count: zero_hit.len(),
        zero_hit_exact: zero_hit.iter().all(|d| d.dw == 0.0 && d.dv == 0.0),
    };
    Ok(StabilityReport {
        n,
        iterations: cfg.iterations,
        replicates,
        indices_per_replicate: i_subsample.map_or(n, |k| k.min(n)),
        eps_t_mean: mean,
        eps_t_stderr: stderr,
        bound_value: None,
        per_i_distances: summary,
        gen_gap_primal: None,
        gen_gap_pd: None,
    })
}
