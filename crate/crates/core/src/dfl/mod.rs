//! Decision-focused learning.
//!
//! Trains the same [`TransitionPredictor`](crate::predictor::TransitionPredictor)
//! as two-stage learning, but by maximizing an off-policy estimate of the
//! soft Whittle-index policy the predictions induce.

pub mod ope;
pub mod policy;
pub mod soft_whittle;
pub mod train;

pub use ope::{ope_cwpdis, ope_cwpdis_with_grad, BehaviorLog, OpeEstimate};
pub use policy::{policy_probs, SoftPolicy};
pub use soft_whittle::{soft_whittle, SoftIndex};
pub use train::{dfl_gradient, dfl_objective, train_dfl, DflArm, DflCohort, DflGradient, DflSettings};
