use std::path::{Path, PathBuf};

use rmab_core::data::{generate_cohort, load_cohort, GeneratorConfig};
use rmab_core::sim::{run_trial, write_report, Predictors, TrialConfig};
use rmab_core::TransitionPredictor;
use serde::{Deserialize, Serialize};

use super::{guard_outputs, Record};
use crate::config::absolute;
use crate::error::{CliError, CliResult};

pub const OUTPUTS: [&str; 4] = ["report.tsv", "summary.txt", "cumulative_drop.tsv", "drops_prevented.tsv"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialFile {
    pub cohort: CohortSource,
    pub trial: TrialConfig,
    #[serde(default)]
    pub predictors: PredictorPaths,
}

/// Exactly one of a generator or a cohort file. The cohort is split into
/// equal consecutive blocks, one per group in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dfl: Option<PathBuf>,
}

pub fn run(config: &mut TrialFile, out: &Path) -> CliResult<Record> {
    let mut inputs = Vec::new();
    let paths = [
        config.cohort.file.as_mut(),
        config.predictors.ts.as_mut(),
        config.predictors.dfl.as_mut(),
    ];
    for path in paths.into_iter().flatten() {
        *path = absolute(path)?;
        inputs.push(path.clone());
    }
    guard_outputs(out, &OUTPUTS, &inputs)?;

    let cohort = match (&config.cohort.generator, &config.cohort.file) {
        (Some(g), None) => generate_cohort(g)?,
        (None, Some(path)) => load_cohort(path)?,
        _ => return Err(CliError::config("cohort", "set exactly one of cohort.generator or cohort.file")),
    };
    let groups = config.trial.groups.len();
    if groups == 0 || cohort.len() % groups != 0 {
        return Err(CliError::config(
            "trial.groups",
            format!("{} arms do not split evenly into {groups} groups", cohort.len()),
        ));
    }
    let cohorts = cohort.split(groups);

    let load = |p: &Option<PathBuf>| p.as_deref().map(TransitionPredictor::load).transpose();
    let ts = load(&config.predictors.ts)?;
    let dfl = load(&config.predictors.dfl)?;
    let predictors = Predictors {
        ts: ts.as_ref(),
        dfl: dfl.as_ref(),
    };
    let report = run_trial(&config.trial, &cohorts, predictors)?;
    write_report(&report, out)?;
    Ok(Record {
        inputs,
        outputs: OUTPUTS.iter().map(|s| s.to_string()).collect(),
        seed: Some(config.trial.seed),
    })
}
