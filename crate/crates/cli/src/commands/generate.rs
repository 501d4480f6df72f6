use std::path::Path;

use rmab_core::data::{generate_cohort, save_behavior, save_cohort, save_trajectories, ArmTrajectory, GeneratorConfig};
use rmab_core::sim::{run_policy, PolicyKind, Predictors, RolloutConfig};
use rmab_core::{PlannerConfig, SearchConfig};
use serde::{Deserialize, Serialize};

use super::{guard_outputs, Record};
use crate::error::{CliError, CliResult};

pub const OUTPUTS: [&str; 3] = ["cohort.csv", "trajectories.csv", "behavior.csv"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub generator: GeneratorConfig,
    pub rollout: BehaviorRollout,
}

/// The logging policy run over the generated cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorRollout {
    pub horizon: usize,
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "uniform_random")]
    pub policy: PolicyKind,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub search: SearchConfig,
}

fn uniform_random() -> PolicyKind {
    PolicyKind::UniformRandom
}

pub fn run(config: &mut GenerateConfig, out: &Path) -> CliResult<Record> {
    let r = &config.rollout;
    if matches!(r.policy, PolicyKind::WhittleTs | PolicyKind::WhittleDfl) {
        return Err(CliError::config(
            "rollout.policy",
            format!("`{}` needs a trained predictor; log with csoc, round_robin, uniform_random or oracle_whittle", r.policy),
        ));
    }
    guard_outputs(out, &OUTPUTS, &[])?;

    let cohort = generate_cohort(&config.generator)?;
    let rollout_config = RolloutConfig {
        planner: r.planner,
        search: r.search,
        ..RolloutConfig::new(r.horizon, r.budget, r.seed)
    };
    let rollout = run_policy(&cohort, r.policy, Predictors::default(), &rollout_config)?;
    let arms: Vec<ArmTrajectory> = cohort
        .ids()
        .zip(rollout.trajectories)
        .map(|(id, trajectory)| ArmTrajectory { id, trajectory })
        .collect();

    save_cohort(&cohort, &out.join(OUTPUTS[0]))?;
    save_trajectories(&arms, &out.join(OUTPUTS[1]))?;
    save_behavior(&arms, &rollout.behavior, &out.join(OUTPUTS[2]))?;
    Ok(Record {
        inputs: Vec::new(),
        outputs: OUTPUTS.iter().map(|s| s.to_string()).collect(),
        seed: Some(config.generator.seed),
    })
}
