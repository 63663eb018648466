//! Replace-one neighboring datasets.

use serde::{Deserialize, Serialize};

use crate::dataset::{draw_like_position, Transition, TransitionDataset};
use crate::error::{BrmError, Result};
use crate::mdp::TabularMdp;
use crate::rng::{mix64, streams, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborPair {
    pub base: TransitionDataset,
    pub replaced_index: usize,
    pub replacement: Transition,
    pub neighbor: TransitionDataset,
}

const RESAMPLE_BUDGET: usize = 10_000;

/// Neighbor with an explicit replacement sample.
pub fn make_neighbor_with(
    data: &TransitionDataset,
    i: usize,
    replacement: Transition,
) -> Result<NeighborPair> {
    if i >= data.len() {
        return Err(BrmError::precondition(format!(
            "index {i} out of range for {} samples",
            data.len()
        )));
    }
    let mut samples = data.samples.clone();
    samples[i] = replacement;
    Ok(NeighborPair {
        base: data.clone(),
        replaced_index: i,
        replacement,
        neighbor: data.with_samples(samples),
    })
}

/// Draws `z~_i` from the generation law of position `i`, resampling until its
/// `(s, a)` already occurs in `data` so both datasets share one dual support.
pub fn make_neighbor(
    mdp: &TabularMdp,
    data: &TransitionDataset,
    i: usize,
    seed: u64,
) -> Result<NeighborPair> {
    if i >= data.len() {
        return Err(BrmError::precondition(format!(
            "index {i} out of range for {} samples",
            data.len()
        )));
    }
    let counts = data.pair_counts();
    let a_n = data.n_actions();
    let mut rng = StreamRng::new(seed, streams::NEIGHBOR).split(i as u64);
    for _ in 0..RESAMPLE_BUDGET {
        let z = draw_like_position(mdp, data, i, &mut rng);
        if counts[z.s * a_n + z.a] > 0 {
            return make_neighbor_with(data, i, z);
        }
    }
    Err(BrmError::Coverage { missing: vec![] })
}

/// Seed for the replacement drawn in replicate `rep` at position `i`.
pub fn replacement_seed(seed: u64, rep: u64) -> u64 {
    mix64(seed ^ mix64(rep.wrapping_add(0x632b_e59b_d9b4_e019)))
}
