use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rmab_core::data::{export_intervention_list, load_cohort, load_trajectories};
use rmab_core::sim::{index_tables, PolicyKind, Predictors};
use rmab_core::{select_top_k, ArmState, PlannerConfig, SearchConfig, TransitionPredictor};
use serde::{Deserialize, Serialize};

use super::{guard_outputs, Record};
use crate::config::absolute;
use crate::error::{CliError, CliResult};

pub const OUTPUTS: [&str; 2] = ["intervention_list.csv", "indices.tsv"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub data: PlanData,
    pub plan: PlanSection,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub search: SearchConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanData {
    pub cohort: PathBuf,
    /// Checkpoint to plan with; the cohort's true models when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<PathBuf>,
    /// Logged weeks; each arm's current state is its last logged state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub budget: usize,
    /// Week stamped on the list; defaults to the number of logged weeks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub week: Option<u64>,
}

pub fn run(config: &mut PlanFile, out: &Path) -> CliResult<Record> {
    let data = &mut config.data;
    data.cohort = absolute(&data.cohort)?;
    let mut inputs = vec![data.cohort.clone()];
    for path in [data.predictor.as_mut(), data.trajectories.as_mut()].into_iter().flatten() {
        *path = absolute(path)?;
        inputs.push(path.clone());
    }
    guard_outputs(out, &OUTPUTS, &inputs)?;

    let cohort = load_cohort(&data.cohort)?;
    let mut states: Vec<ArmState> = cohort.initial_states();
    let mut logged_weeks = 0u64;
    if let Some(path) = &data.trajectories {
        let slot: HashMap<u64, usize> = cohort.ids().enumerate().map(|(i, id)| (id, i)).collect();
        for arm in load_trajectories(path)? {
            let i = *slot.get(&arm.id).ok_or_else(|| {
                CliError::config(
                    "data.trajectories",
                    format!("beneficiary {} is not in cohort {}", arm.id, data.cohort.display()),
                )
            })?;
            if let Some(last) = arm.trajectory.transitions().last() {
                states[i] = last.next_state;
            }
            logged_weeks = logged_weeks.max(arm.trajectory.len() as u64);
        }
    }
    let week = config.plan.week.unwrap_or(logged_weeks);

    let predictor = data.predictor.as_deref().map(TransitionPredictor::load).transpose()?;
    let (kind, predictors) = match &predictor {
        Some(p) => (
            PolicyKind::WhittleTs,
            Predictors {
                ts: Some(p),
                dfl: None,
            },
        ),
        None => (PolicyKind::OracleWhittle, Predictors::default()),
    };
    let tables = index_tables(&cohort, kind, predictors, &config.planner, &config.search)?;

    let mut scores = Vec::with_capacity(cohort.len());
    let mut indices = String::from("beneficiary_id\tstate\tindex_not_engaging\tindex_engaging\tcurrent_index\n");
    for ((id, state), table) in cohort.ids().zip(&states).zip(&tables) {
        let current = table.get(*state);
        scores.push((id, current));
        let _ = writeln!(
            indices,
            "{id}\t{}\t{}\t{}\t{current}",
            state.value(),
            table.get(ArmState::NotEngaging),
            table.get(ArmState::Engaging)
        );
    }
    let selection = select_top_k(&scores, config.plan.budget);
    export_intervention_list(&selection, &cohort, week, &out.join(OUTPUTS[0]))?;
    let path = out.join(OUTPUTS[1]);
    std::fs::write(&path, indices).map_err(|e| CliError::io(&path, e))?;
    Ok(Record {
        inputs,
        outputs: OUTPUTS.iter().map(|s| s.to_string()).collect(),
        seed: None,
    })
}
