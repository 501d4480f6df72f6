use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rmab_core::data::{align_behavior, load_behavior, load_cohort, load_trajectories, ArmTrajectory};
use rmab_core::dfl::{dfl_objective, train_dfl, DflArm, DflCohort, DflSettings};
use rmab_core::ts::{nll_loss, train_ts_from, TrainConfig};
use rmab_core::{Architecture, FeatureVector, PlannerConfig, SearchConfig, Trajectory, TransitionPredictor};
use serde::{Deserialize, Serialize};

use super::{guard_outputs, Record};
use crate::cli::TrainMode;
use crate::config::absolute;
use crate::error::{CliError, CliResult};

pub const SUMMARY: &str = "train_summary.txt";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub data: TrainData,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub dfl: DflSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainData {
    pub cohort: PathBuf,
    pub trajectories: PathBuf,
    /// Required in dfl mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DflSection {
    /// Weekly budget of the soft policy; required in dfl mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Checkpoint to start from instead of a seeded initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<PathBuf>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub search: SearchConfig,
}

impl Default for DflSection {
    fn default() -> Self {
        Self {
            budget: None,
            init: None,
            temperature: default_temperature(),
            planner: PlannerConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

fn default_temperature() -> f64 {
    DflSettings::default().temperature
}

pub fn checkpoint_name(mode: TrainMode) -> String {
    format!("{}.ckpt", mode.name())
}

/// Joins logged trajectories to cohort features by beneficiary id.
fn join_features(cohort_path: &Path, arms: &[ArmTrajectory]) -> CliResult<Vec<(FeatureVector, Trajectory)>> {
    let cohort = load_cohort(cohort_path)?;
    let features: HashMap<u64, &FeatureVector> = cohort.arms().iter().map(|a| (a.id, a.features())).collect();
    arms.iter()
        .map(|a| {
            let f = features.get(&a.id).ok_or_else(|| {
                CliError::config(
                    "data.trajectories",
                    format!("beneficiary {} is not in cohort {}", a.id, cohort_path.display()),
                )
            })?;
            Ok(((*f).clone(), a.trajectory.clone()))
        })
        .collect()
}

pub fn run(mode: TrainMode, config: &mut TrainFile, out: &Path) -> CliResult<Record> {
    config.data.cohort = absolute(&config.data.cohort)?;
    config.data.trajectories = absolute(&config.data.trajectories)?;
    let mut inputs = vec![config.data.cohort.clone(), config.data.trajectories.clone()];
    if mode == TrainMode::Dfl {
        let behavior = config
            .data
            .behavior
            .as_mut()
            .ok_or_else(|| CliError::config("data.behavior", "dfl mode needs the behavior file"))?;
        *behavior = absolute(behavior)?;
        inputs.push(behavior.clone());
        if config.dfl.budget.is_none() {
            return Err(CliError::config("dfl.budget", "dfl mode needs the weekly budget"));
        }
        if let Some(init) = config.dfl.init.as_mut() {
            *init = absolute(init)?;
            inputs.push(init.clone());
        }
    }
    let checkpoint = checkpoint_name(mode);
    guard_outputs(out, &[&checkpoint, SUMMARY], &inputs)?;

    let arms = load_trajectories(&config.data.trajectories)?;
    let data = join_features(&config.data.cohort, &arms)?;
    let feature_dim = data
        .first()
        .map(|(f, _)| f.dim())
        .ok_or_else(|| CliError::config("data.trajectories", "no logged trajectories"))?;
    let arch = Architecture {
        feature_dim,
        hidden: config.train.hidden_width,
    };
    let mut summary = String::new();
    let trained = match mode {
        TrainMode::Ts => {
            let init = TransitionPredictor::random_init(arch, config.train.seed);
            let _ = writeln!(summary, "nll_initial = {}", nll_loss(&init, &data)?);
            let trained = train_ts_from(init, &data, &config.train)?;
            let _ = writeln!(summary, "nll_final = {}", nll_loss(&trained, &data)?);
            trained
        }
        TrainMode::Dfl => {
            let behavior_path = config.data.behavior.as_deref().unwrap_or(Path::new(""));
            let log = align_behavior(&arms, &load_behavior(behavior_path)?)?;
            let cohort = DflCohort {
                arms: data
                    .into_iter()
                    .enumerate()
                    .map(|(i, (features, trajectory))| DflArm {
                        features,
                        trajectory,
                        behavior: log.arm(i).to_vec(),
                    })
                    .collect(),
                budget: config.dfl.budget.unwrap_or(0),
            };
            let settings = DflSettings {
                planner: config.dfl.planner,
                search: config.dfl.search,
                temperature: config.dfl.temperature,
            };
            settings.validate()?;
            let init = match &config.dfl.init {
                Some(path) => TransitionPredictor::load(path)?,
                None => TransitionPredictor::random_init(arch, config.train.seed),
            };
            let before = dfl_objective(&init, &cohort, &settings)?;
            let _ = writeln!(summary, "ope_initial = {}", before.value);
            let trained = train_dfl(&cohort, &config.train, &settings, Some(init))?;
            let after = dfl_objective(&trained, &cohort, &settings)?;
            let _ = writeln!(summary, "ope_final = {}", after.value);
            let _ = writeln!(summary, "effective_sample_size = {}", after.effective_sample_size);
            trained
        }
    };
    trained.save(out.join(&checkpoint))?;
    let path = out.join(SUMMARY);
    std::fs::write(&path, summary).map_err(|e| CliError::io(&path, e))?;
    Ok(Record {
        inputs,
        outputs: vec![checkpoint, SUMMARY.to_string()],
        seed: Some(config.train.seed),
    })
}
