//! Bellman residual minimization for entropy-regularized offline RL.
//!
//! The squared soft Bellman residual is rewritten as a minimax problem
//! `min_w max_v F_D(w, v)` and solved by minibatch SGDA. The crate also carries
//! the exact tabular oracles and the stability and generalization experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod io;
pub mod mdp;
pub mod numeric;
pub mod objective;
pub mod param;
pub mod rng;
pub mod sgda;
pub mod stability;
pub mod verify;

pub use dataset::{generate_dataset, SamplingMode, Transition, TransitionDataset};
pub use error::{BrmError, Result};
pub use mdp::{soft_bellman_apply, solve_soft_optimal, Policy, SoftSolution, TabularMdp};
pub use objective::SaddleObjective;
pub use param::{FeatureMap, ParamPoint, Parameterization};
pub use rng::StreamRng;
pub use sgda::{run_sgda, IndexLog, IndexSampling, InitMode, RunTrace, SgdaRunConfig};
