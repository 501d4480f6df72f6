//! Restless-bandit planning for weekly intervention scheduling.
//!
//! Each beneficiary is a two-state, two-action MDP. Arms are prioritized by
//! their Whittle index and the `K` highest-priority arms are acted on each
//! week. Transition probabilities are learned from registration features
//! either by maximum likelihood ([`ts`]) or end to end through an off-policy
//! estimate of the induced policy ([`dfl`]). The [`sim`] module runs
//! synthetic randomized trials and computes engagement-drop outcomes, and
//! [`data`] holds file formats and the synthetic cohort generator.

pub mod data;
pub mod dfl;
pub mod error;
pub mod mdp;
pub mod predictor;
pub mod rng;
pub mod sim;
pub mod trajectory;
pub mod ts;
pub mod whittle;

pub use error::{Error, ErrorClass, Result};
pub use mdp::{reward, solve_subsidized, Action, ArmState, PlannerConfig, QTable, TransitionModel};
pub use predictor::{Architecture, FeatureVector, Provenance, TransitionPredictor};
pub use trajectory::{Trajectory, Transition, TransitionCounts};
pub use whittle::{
    check_indexability, select_top_k, verify_root, whittle_index, whittle_table, BudgetedSelection,
    SearchConfig, WhittleTable,
};
