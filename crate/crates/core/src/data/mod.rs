//! On-disk schemas, synthetic cohort generation and intervention lists.

pub mod files;
pub mod generator;
pub mod schema;

pub use files::{
    align_behavior, export_intervention_list, load_behavior, load_cohort, load_intervention_list,
    load_trajectories, save_behavior, save_cohort, save_trajectories, ArmBehavior, ArmTrajectory,
    InterventionRow,
};
pub use generator::{generate_cohort, GeneratorConfig, LatentTypeConfig};
pub use schema::{BeneficiaryProfile, FEATURE_DIM, PROFILE_COLUMNS};
