//! Neighboring datasets, coupled runs, stability and generalization estimates,
//! bound evaluation and lemma checkers.

pub mod bounds;
pub mod constants;
pub mod estimate;
pub mod experiment;
pub mod generalization;
pub mod lemmas;
pub mod neighbor;
pub mod saddle;

pub use bounds::{
    corollary_bound, stability_bound, BoundOptions, BoundTerms, HitConstant, KernelRate,
};
pub use constants::{estimate_constants, lyapunov_potential, ConstantsEstimate};
pub use estimate::{
    coupled_stability, estimate_eps_t, CoupledDistance, DistanceSummary, StabilityReport,
};
pub use experiment::{stability_cell, CellResult, CellSpec};
pub use generalization::{
    excess_risk, generalization_gap, population_weight, GapOptions, GeneralizationGap,
};
pub use lemmas::{lemma_checkers, LemmaCheck, LemmaReport};
pub use neighbor::{make_neighbor, make_neighbor_with, NeighborPair};
pub use saddle::{solve_saddle, SaddleSolution};
