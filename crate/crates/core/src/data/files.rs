//! Delimited text files: a version line, a header, then one CSV record per row.
//!
//! Rows are numbered from 1 at the first record after the header. Header
//! problems are reported at row 0.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use super::schema::{BeneficiaryProfile, PROFILE_COLUMNS};
use crate::dfl::BehaviorLog;
use crate::error::{Error, Result};
use crate::mdp::{Action, ArmState, TransitionModel};
use crate::sim::{Cohort, CohortArm};
use crate::trajectory::{Trajectory, Transition};
use crate::whittle::BudgetedSelection;

pub const COHORT_VERSION: &str = "# rmab cohort v1";
pub const TRAJECTORY_VERSION: &str = "# rmab trajectories v1";
pub const BEHAVIOR_VERSION: &str = "# rmab behavior v1";
pub const INTERVENTION_VERSION: &str = "# rmab intervention-list v1";

pub const PROBABILITY_COLUMNS: [&str; 4] = [
    "p_engage_passive_ne",
    "p_engage_passive_e",
    "p_engage_active_ne",
    "p_engage_active_e",
];
pub const TRAJECTORY_COLUMNS: [&str; 5] = ["beneficiary_id", "week", "state", "action", "next_state"];
pub const BEHAVIOR_COLUMNS: [&str; 4] = ["beneficiary_id", "week", "action", "behavior_prob"];
pub const INTERVENTION_COLUMNS: [&str; 4] = ["beneficiary_id", "week", "priority_rank", "call_slot_code"];

pub fn cohort_columns() -> Vec<&'static str> {
    let mut cols = vec!["beneficiary_id"];
    cols.extend(PROFILE_COLUMNS.iter().map(|c| c.name));
    cols.extend(["initial_state", "latent_type"]);
    cols.extend(PROBABILITY_COLUMNS);
    cols
}

/// One logged arm: its id and weekly transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmTrajectory {
    pub id: u64,
    pub trajectory: Trajectory,
}

/// One logged arm: its id, weekly actions and their behavior probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmBehavior {
    pub id: u64,
    pub actions: Vec<Action>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterventionRow {
    pub id: u64,
    pub week: u64,
    pub priority_rank: usize,
    pub call_slot_code: u8,
}

fn prob_string(p: f64) -> String {
    format!("{p:.16e}")
}

fn write_table(path: &Path, version: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut buf = format!("{version}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Table {
    file: String,
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn violation(&self, row: usize, column: &str, message: impl Into<String>) -> Error {
        Error::SchemaViolation {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn field<T: FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let raw = self.records[row].get(col).unwrap_or("");
        raw.trim()
            .parse()
            .map_err(|_| self.violation(row + 1, &self.header[col], format!("cannot parse `{raw}`")))
    }

    fn state(&self, row: usize, col: usize) -> Result<ArmState> {
        let v: u8 = self.field(row, col)?;
        ArmState::from_value(v).ok_or_else(|| self.violation(row + 1, &self.header[col], format!("state {v} not 0 or 1")))
    }

    fn action(&self, row: usize, col: usize) -> Result<Action> {
        let v: u8 = self.field(row, col)?;
        Action::from_value(v).ok_or_else(|| self.violation(row + 1, &self.header[col], format!("action {v} not 0 or 1")))
    }
}

fn read_table(path: &Path, version: &str, header: &[&str]) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let violation = |row: usize, column: &str, message: String| Error::SchemaViolation {
        file: file.clone(),
        row,
        column: column.to_string(),
        message,
    };
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    if first.trim_end() != version {
        return Err(violation(0, "", format!("expected version line `{version}`, got `{}`", first.trim_end())));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| violation(0, "", e.to_string()))?
        .clone();
    let found: Vec<String> = found.iter().map(|s| s.trim().to_string()).collect();
    if found != header {
        return Err(violation(0, "", format!("expected header `{}`, got `{}`", header.join(","), found.join(","))));
    }
    let mut records = Vec::new();
    for (i, r) in reader.records().enumerate() {
        let r = r.map_err(|e| violation(i + 1, "", e.to_string()))?;
        records.push(r);
    }
    Ok(Table {
        file,
        header: found,
        records,
    })
}

pub fn save_cohort(cohort: &Cohort, path: &Path) -> Result<()> {
    let rows = cohort
        .arms()
        .iter()
        .map(|a| {
            let mut r = vec![a.id.to_string()];
            r.extend(a.profile.codes().iter().map(u8::to_string));
            r.push(a.initial_state.value().to_string());
            r.push(a.latent_type.to_string());
            r.extend(a.model.engage_probs().into_iter().map(prob_string));
            r
        })
        .collect();
    write_table(path, COHORT_VERSION, &cohort_columns(), rows)
}

pub fn load_cohort(path: &Path) -> Result<Cohort> {
    let cols = cohort_columns();
    let t = read_table(path, COHORT_VERSION, &cols)?;
    let mut arms = Vec::with_capacity(t.records.len());
    let mut seen = HashMap::new();
    for row in 0..t.records.len() {
        let id: u64 = t.field(row, 0)?;
        if let Some(prev) = seen.insert(id, row + 1) {
            return Err(t.violation(row + 1, "beneficiary_id", format!("duplicate id {id} (first at row {prev})")));
        }
        let mut codes = [0u8; 8];
        for (k, spec) in PROFILE_COLUMNS.iter().enumerate() {
            let code: u8 = t.field(row, 1 + k)?;
            if !spec.contains(code) {
                return Err(t.violation(
                    row + 1,
                    spec.name,
                    format!("code {code} outside [{}, {}]", spec.min, spec.max),
                ));
            }
            codes[k] = code;
        }
        let profile = BeneficiaryProfile::from_codes(codes)?;
        let initial_state = t.state(row, 9)?;
        let latent_type: usize = t.field(row, 10)?;
        let mut engage = [0.0; 4];
        for (k, p) in engage.iter_mut().enumerate() {
            *p = t.field(row, 11 + k)?;
        }
        let model = TransitionModel::from_engage_probs(engage)
            .map_err(|e| t.violation(row + 1, PROBABILITY_COLUMNS[0], e.to_string()))?;
        if !model.active_helps() {
            return Err(t.violation(row + 1, PROBABILITY_COLUMNS[2], "active engagement below passive"));
        }
        arms.push(CohortArm::new(id, profile, model, initial_state, latent_type));
    }
    Cohort::new(arms)
}

pub fn save_trajectories(arms: &[ArmTrajectory], path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for a in arms {
        for (week, tr) in a.trajectory.transitions().iter().enumerate() {
            rows.push(vec![
                a.id.to_string(),
                week.to_string(),
                tr.state.value().to_string(),
                tr.action.value().to_string(),
                tr.next_state.value().to_string(),
            ]);
        }
    }
    write_table(path, TRAJECTORY_VERSION, &TRAJECTORY_COLUMNS, rows)
}

/// Groups rows by beneficiary in order of first appearance. Each arm's
/// weeks must be consecutive from 0.
fn group_rows(t: &Table) -> Result<Vec<(u64, Vec<usize>)>> {
    let mut order: Vec<(u64, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<u64, usize> = HashMap::new();
    for row in 0..t.records.len() {
        let id: u64 = t.field(row, 0)?;
        let week: usize = t.field(row, 1)?;
        let i = *slot.entry(id).or_insert_with(|| {
            order.push((id, Vec::new()));
            order.len() - 1
        });
        let rows = &mut order[i].1;
        if week != rows.len() {
            return Err(t.violation(
                row + 1,
                "week",
                format!("beneficiary {id}: expected week {}, got {week}", rows.len()),
            ));
        }
        rows.push(row);
    }
    Ok(order)
}

pub fn load_trajectories(path: &Path) -> Result<Vec<ArmTrajectory>> {
    let t = read_table(path, TRAJECTORY_VERSION, &TRAJECTORY_COLUMNS)?;
    let mut out = Vec::new();
    for (id, rows) in group_rows(&t)? {
        let mut transitions: Vec<Transition> = Vec::with_capacity(rows.len());
        for &row in &rows {
            let tr = Transition::new(t.state(row, 2)?, t.action(row, 3)?, t.state(row, 4)?);
            if let Some(prev) = transitions.last() {
                if prev.next_state != tr.state {
                    return Err(t.violation(
                        row + 1,
                        "state",
                        format!(
                            "beneficiary {id}: chain break, previous next_state {} but state {}",
                            prev.next_state, tr.state
                        ),
                    ));
                }
            }
            transitions.push(tr);
        }
        out.push(ArmTrajectory {
            id,
            trajectory: Trajectory::new(transitions)?,
        });
    }
    Ok(out)
}

/// Writes the probability of each logged action; `log` rows align with `arms`.
pub fn save_behavior(arms: &[ArmTrajectory], log: &BehaviorLog, path: &Path) -> Result<()> {
    if log.num_arms() != arms.len() {
        return Err(Error::DimensionMismatch {
            expected: arms.len(),
            got: log.num_arms(),
        });
    }
    let mut rows = Vec::new();
    for (i, a) in arms.iter().enumerate() {
        let probs = log.arm(i);
        if probs.len() != a.trajectory.len() {
            return Err(Error::DimensionMismatch {
                expected: a.trajectory.len(),
                got: probs.len(),
            });
        }
        for (week, (tr, p)) in a.trajectory.transitions().iter().zip(probs).enumerate() {
            rows.push(vec![
                a.id.to_string(),
                week.to_string(),
                tr.action.value().to_string(),
                prob_string(*p),
            ]);
        }
    }
    write_table(path, BEHAVIOR_VERSION, &BEHAVIOR_COLUMNS, rows)
}

pub fn load_behavior(path: &Path) -> Result<Vec<ArmBehavior>> {
    let t = read_table(path, BEHAVIOR_VERSION, &BEHAVIOR_COLUMNS)?;
    let mut out = Vec::new();
    for (id, rows) in group_rows(&t)? {
        let mut actions = Vec::with_capacity(rows.len());
        let mut probs = Vec::with_capacity(rows.len());
        for &row in &rows {
            actions.push(t.action(row, 2)?);
            let p: f64 = t.field(row, 3)?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(t.violation(row + 1, "behavior_prob", format!("{p} outside (0, 1]")));
            }
            probs.push(p);
        }
        out.push(ArmBehavior { id, actions, probs });
    }
    Ok(out)
}

/// Orders behavior records like `arms` and checks their actions agree.
pub fn align_behavior(arms: &[ArmTrajectory], behavior: &[ArmBehavior]) -> Result<BehaviorLog> {
    let by_id: HashMap<u64, &ArmBehavior> = behavior.iter().map(|b| (b.id, b)).collect();
    let mut rows = Vec::with_capacity(arms.len());
    for a in arms {
        let b = by_id.get(&a.id).ok_or_else(|| {
            Error::InvalidTrajectory(format!("no behavior log for beneficiary {}", a.id))
        })?;
        let logged: Vec<Action> = a.trajectory.transitions().iter().map(|t| t.action).collect();
        if logged != b.actions {
            return Err(Error::InvalidTrajectory(format!(
                "beneficiary {}: behavior actions disagree with trajectory",
                a.id
            )));
        }
        rows.push(b.probs.clone());
    }
    BehaviorLog::new(rows)
}

/// Writes the chosen arms by priority rank, with each arm's call slot.
pub fn export_intervention_list(
    selection: &BudgetedSelection,
    cohort: &Cohort,
    week: u64,
    path: &Path,
) -> Result<()> {
    let slot: HashMap<u64, u8> = cohort.arms().iter().map(|a| (a.id, a.profile.call_slot_code)).collect();
    let mut rows = Vec::with_capacity(selection.chosen.len());
    for (rank, arm) in selection.chosen.iter().enumerate() {
        let code = slot.get(&arm.id).ok_or_else(|| {
            Error::InvalidConfig(format!("selected beneficiary {} not in cohort", arm.id))
        })?;
        rows.push(vec![
            arm.id.to_string(),
            week.to_string(),
            (rank + 1).to_string(),
            code.to_string(),
        ]);
    }
    write_table(path, INTERVENTION_VERSION, &INTERVENTION_COLUMNS, rows)
}

pub fn load_intervention_list(path: &Path) -> Result<Vec<InterventionRow>> {
    let t = read_table(path, INTERVENTION_VERSION, &INTERVENTION_COLUMNS)?;
    let slot_spec = PROFILE_COLUMNS[7];
    let mut out = Vec::with_capacity(t.records.len());
    for row in 0..t.records.len() {
        let r = InterventionRow {
            id: t.field(row, 0)?,
            week: t.field(row, 1)?,
            priority_rank: t.field(row, 2)?,
            call_slot_code: t.field(row, 3)?,
        };
        if r.priority_rank != row + 1 {
            return Err(t.violation(row + 1, "priority_rank", format!("expected rank {}, got {}", row + 1, r.priority_rank)));
        }
        if !slot_spec.contains(r.call_slot_code) {
            return Err(t.violation(row + 1, "call_slot_code", format!("code {} out of range", r.call_slot_code)));
        }
        out.push(r);
    }
    Ok(out)
}
