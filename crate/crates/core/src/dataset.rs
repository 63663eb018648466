//! Offline transition datasets and their generation law.

use serde::{Deserialize, Serialize};

use crate::error::{BrmError, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::rng::{streams, StreamRng};

/// One logged sample `z = (s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent draws of `(s, a)` from the discounted occupancy of the
    /// behavior policy (geometric restart with probability `1 - beta`).
    IidPairs,
    /// One trajectory of length `n` from `s_0 ~ nu0`.
    SingleTrajectory,
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingMode::IidPairs => "iid_pairs",
            SamplingMode::SingleTrajectory => "single_trajectory",
        })
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = BrmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid_pairs" | "iid" => Ok(SamplingMode::IidPairs),
            "single_trajectory" | "trajectory" => Ok(SamplingMode::SingleTrajectory),
            other => Err(BrmError::precondition(format!(
                "unknown sampling mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub samples: Vec<Transition>,
    pub behavior_policy: Policy,
    pub seed: u64,
    pub mode: SamplingMode,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.behavior_policy.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.behavior_policy.n_actions()
    }

    /// Visit counts per `(s, a)`, flat `s * n_actions + a`.
    pub fn pair_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_states() * self.n_actions()];
        for z in &self.samples {
            counts[z.s * self.n_actions() + z.a] += 1;
        }
        counts
    }

    /// Same provenance, different samples.
    pub fn with_samples(&self, samples: Vec<Transition>) -> Self {
        Self {
            samples,
            behavior_policy: self.behavior_policy.clone(),
            seed: self.seed,
            mode: self.mode,
        }
    }

    /// Checks every row against the generating MDP; the error names the first bad row.
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        self.behavior_policy.check_for(mdp)?;
        for (idx, z) in self.samples.iter().enumerate() {
            if z.s >= mdp.n_states() || z.a >= mdp.n_actions() || z.s_next >= mdp.n_states() {
                return Err(BrmError::Format(format!("row {idx}: index out of range")));
            }
            if z.r != mdp.reward(z.s, z.a) {
                return Err(BrmError::Format(format!(
                    "row {idx}: reward {} differs from r({}, {}) = {}",
                    z.r,
                    z.s,
                    z.a,
                    mdp.reward(z.s, z.a)
                )));
            }
            if mdp.next_state_dist(z.s, z.a)[z.s_next] <= 0.0 {
                return Err(BrmError::Format(format!(
                    "row {idx}: transition {} -> {} has zero probability",
                    z.s, z.s_next
                )));
            }
        }
        Ok(())
    }
}

const COVERAGE_ATTEMPTS: u64 = 64;

fn step(mdp: &TabularMdp, policy: &Policy, s: usize, rng: &mut StreamRng) -> Transition {
    let a = rng.categorical(policy.row(s));
    let s_next = rng.categorical(mdp.next_state_dist(s, a));
    Transition {
        s,
        a,
        r: mdp.reward(s, a),
        s_next,
    }
}

/// One draw from the discounted occupancy: roll forward from `nu0`, stopping with
/// probability `1 - beta` before each step.
fn occupancy_draw(mdp: &TabularMdp, policy: &Policy, rng: &mut StreamRng) -> Transition {
    let mut s = rng.categorical(mdp.init_dist());
    while rng.uniform() < mdp.beta() {
        s = step(mdp, policy, s, rng).s_next;
    }
    step(mdp, policy, s, rng)
}

fn draw_samples(
    mdp: &TabularMdp,
    policy: &Policy,
    n: usize,
    mode: SamplingMode,
    rng: &mut StreamRng,
) -> Vec<Transition> {
    match mode {
        SamplingMode::IidPairs => (0..n).map(|_| occupancy_draw(mdp, policy, rng)).collect(),
        SamplingMode::SingleTrajectory => {
            let mut s = rng.categorical(mdp.init_dist());
            (0..n)
                .map(|_| {
                    let z = step(mdp, policy, s, rng);
                    s = z.s_next;
                    z
                })
                .collect()
        }
    }
}

fn missing_pairs(
    policy: &Policy,
    samples: &[Transition],
    min_visits: usize,
) -> Vec<(usize, usize)> {
    let a_n = policy.n_actions();
    let mut counts = vec![0usize; policy.n_states() * a_n];
    for z in samples {
        counts[z.s * a_n + z.a] += 1;
    }
    (0..counts.len())
        .filter(|&k| policy.as_flat()[k] > 0.0 && counts[k] < min_visits)
        .map(|k| (k / a_n, k % a_n))
        .collect()
}

/// Generates `n` samples, retrying on fresh sub-streams until every `(s, a)` with
/// positive behavior probability is visited at least `min_visits` times.
pub fn generate_dataset(
    mdp: &TabularMdp,
    policy: &Policy,
    n: usize,
    mode: SamplingMode,
    seed: u64,
    min_visits: usize,
) -> Result<TransitionDataset> {
    if n == 0 {
        return Err(BrmError::precondition("dataset size must be at least 1"));
    }
    policy.check_for(mdp)?;
    let base = StreamRng::new(seed, streams::DATASET);
    let mut missing = Vec::new();
    for attempt in 0..COVERAGE_ATTEMPTS {
        let mut rng = base.split(attempt);
        let samples = draw_samples(mdp, policy, n, mode, &mut rng);
        missing = missing_pairs(policy, &samples, min_visits);
        if missing.is_empty() {
            return Ok(TransitionDataset {
                samples,
                behavior_policy: policy.clone(),
                seed,
                mode,
            });
        }
    }
    Err(BrmError::Coverage { missing })
}

/// A fresh sample from the same law as position `i` of `data`: an occupancy draw
/// for `IidPairs`, the time-`i` transition of a fresh trajectory otherwise.
pub fn draw_like_position(
    mdp: &TabularMdp,
    data: &TransitionDataset,
    i: usize,
    rng: &mut StreamRng,
) -> Transition {
    let policy = &data.behavior_policy;
    match data.mode {
        SamplingMode::IidPairs => occupancy_draw(mdp, policy, rng),
        SamplingMode::SingleTrajectory => {
            let mut s = rng.categorical(mdp.init_dist());
            for _ in 0..i {
                s = step(mdp, policy, s, rng).s_next;
            }
            step(mdp, policy, s, rng)
        }
    }
}
