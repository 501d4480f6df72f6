//! Cohort simulation, scheduling policies and trial evaluation.

pub mod cohort;
pub mod metrics;
pub mod policy;
pub mod report;
pub mod trial;

pub use cohort::{Cohort, CohortArm};
pub use metrics::{engagement_drop, engagement_drop_states, DropSeries};
pub use policy::{
    index_tables, run_index_policy, run_policy, step_cohort, PolicyKind, Predictors, Rollout,
    RolloutConfig,
};
pub use report::{parse_summary, read_summary, write_report};
pub use trial::{
    bootstrap_mean_test, compare, run_trial, simulate_group, treatment_coefficient, Comparison,
    GroupOutcome, GroupSpec, TrialConfig, TrialReport,
};
