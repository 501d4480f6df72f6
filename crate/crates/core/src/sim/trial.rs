//! Multi-group randomized trial simulation.
//!
//! Every group is a disjoint cohort run under its own policy and budget. The
//! first `csoc` group is the control; each other group is compared with it on
//! weekly cumulative engagement drops, a paired bootstrap over arms of the
//! final cumulative drop, and the coefficient of a treatment-indicator
//! regression.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::metrics::engagement_drop;
use super::policy::{run_policy, PolicyKind, Predictors, RolloutConfig};
use crate::error::{Error, Result};
use crate::mdp::PlannerConfig;
use crate::rng::{CounterRng, Domain};
use crate::whittle::SearchConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    pub policy: PolicyKind,
    /// Overrides the trial budget for this group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Random stream id; defaults to the group's position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<u64>,
}

impl GroupSpec {
    pub fn new(name: impl Into<String>, policy: PolicyKind) -> Self {
        Self {
            name: name.into(),
            policy,
            budget: None,
            stream: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub horizon: usize,
    /// Weeks with calls; the rest of the horizon is observed passively.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention_weeks: Option<usize>,
    pub budget: usize,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub search: SearchConfig,
}

fn default_resamples() -> usize {
    10_000
}

impl TrialConfig {
    pub fn new(horizon: usize, budget: usize, groups: Vec<GroupSpec>, seed: u64) -> Self {
        Self {
            horizon,
            intervention_weeks: None,
            budget,
            groups,
            seed,
            bootstrap_resamples: default_resamples(),
            planner: PlannerConfig::default(),
            search: SearchConfig::default(),
        }
    }

    pub fn validate(&self, cohorts: &[Cohort]) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("trial.horizon must be at least 1".into()));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::InvalidConfig("trial.bootstrap_resamples must be positive".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::InvalidConfig("trial needs at least one group".into()));
        }
        if cohorts.len() != self.groups.len() {
            return Err(Error::InvalidConfig(format!(
                "{} groups but {} cohorts",
                self.groups.len(),
                cohorts.len()
            )));
        }
        let mut names = HashSet::new();
        let mut ids = HashSet::new();
        for (g, cohort) in self.groups.iter().zip(cohorts) {
            if !names.insert(g.name.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate group name `{}`", g.name)));
            }
            let budget = g.budget.unwrap_or(self.budget);
            if budget > cohort.len() {
                return Err(Error::InvalidConfig(format!(
                    "group `{}`: budget {budget} exceeds group size {}",
                    g.name,
                    cohort.len()
                )));
            }
            for id in cohort.ids() {
                if !ids.insert(id) {
                    return Err(Error::InvalidConfig(format!(
                        "beneficiary {id} appears in more than one group"
                    )));
                }
            }
        }
        self.planner.validate()?;
        self.search.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOutcome {
    pub name: String,
    pub policy: PolicyKind,
    pub size: usize,
    pub budget: usize,
    /// Engaged arms at weeks `0..=horizon`.
    pub engaged: Vec<u64>,
    /// Summed engagement drop per week.
    pub drop: Vec<i64>,
    /// Summed cumulative engagement drop per week.
    pub cumulative_drop: Vec<i64>,
    /// Each arm's cumulative drop at the final week.
    pub final_per_arm: Vec<i64>,
    pub active_per_week: Vec<usize>,
}

impl GroupOutcome {
    pub fn final_cumulative(&self) -> i64 {
        self.cumulative_drop.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub group: String,
    pub baseline: String,
    /// Control cumulative drop minus group cumulative drop, per week.
    pub drops_prevented: Vec<i64>,
    /// Final drops prevented over the control's final cumulative drop;
    /// `None` when the control has no cumulative drop.
    pub reduction: Option<f64>,
    pub p_value: f64,
    pub bootstrap_se: f64,
    /// Treatment-indicator coefficient regressing final cumulative drop.
    pub beta: f64,
    pub beta_se: f64,
}

impl Comparison {
    pub fn final_prevented(&self) -> i64 {
        self.drops_prevented.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub horizon: usize,
    pub intervention_weeks: usize,
    pub seed: u64,
    pub groups: Vec<GroupOutcome>,
    pub comparisons: Vec<Comparison>,
}

impl TrialReport {
    pub fn group(&self, name: &str) -> Option<&GroupOutcome> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn comparison(&self, name: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.group == name)
    }
}

/// Simulates one group and summarizes its drop series.
pub fn simulate_group(
    name: &str,
    kind: PolicyKind,
    cohort: &Cohort,
    predictors: Predictors<'_>,
    rollout: &RolloutConfig,
) -> Result<GroupOutcome> {
    let out = run_policy(cohort, kind, predictors, rollout).map_err(|e| match e {
        Error::MissingPredictor { policy, .. } => Error::MissingPredictor {
            group: name.to_string(),
            policy,
        },
        other => other,
    })?;
    Ok(summarize(name, kind, rollout.budget, &out))
}

pub(crate) fn summarize(
    name: &str,
    kind: PolicyKind,
    budget: usize,
    out: &super::policy::Rollout,
) -> GroupOutcome {
    let weeks = out.trajectories.first().map_or(0, |t| t.len() + 1);
    let mut engaged = vec![0u64; weeks];
    let mut drop = vec![0i64; weeks];
    let mut cumulative_drop = vec![0i64; weeks];
    let mut final_per_arm = Vec::with_capacity(out.trajectories.len());
    for traj in &out.trajectories {
        for (t, s) in traj.states().iter().enumerate() {
            engaged[t] += s.value() as u64;
        }
        let series = engagement_drop(traj);
        for t in 0..series.drop.len() {
            drop[t] += series.drop[t];
            cumulative_drop[t] += series.cumulative[t];
        }
        final_per_arm.push(series.final_cumulative());
    }
    GroupOutcome {
        name: name.to_string(),
        policy: kind,
        size: out.trajectories.len(),
        budget,
        engaged,
        drop,
        cumulative_drop,
        final_per_arm,
        active_per_week: out.active_per_week.clone(),
    }
}

/// Two-sided bootstrap test that the mean of `diffs` is zero.
///
/// Resamples the centered differences and counts resampled means at least as
/// far from zero as the observed one. Returns `(p_value, standard_error)`.
pub fn bootstrap_mean_test(diffs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = diffs.len();
    if n == 0 || resamples == 0 {
        return (1.0, 0.0);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = diffs.iter().map(|d| d - mean).collect();
    let mut rng = CounterRng::new(seed, Domain::Bootstrap).stream(0);
    let mut extreme = 0usize;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..resamples {
        let m = (0..n).map(|_| centered[rng.gen_range(0..n)]).sum::<f64>() / n as f64;
        if m.abs() >= mean.abs() {
            extreme += 1;
        }
        sum += m;
        sum_sq += m * m;
    }
    let b = resamples as f64;
    let var = (sum_sq / b - (sum / b).powi(2)).max(0.0);
    ((extreme as f64 + 1.0) / (b + 1.0), var.sqrt())
}

/// OLS of `y` on `[1, treated]`: returns `(beta, standard_error)`.
pub fn treatment_coefficient(control: &[f64], treated: &[f64]) -> (f64, f64) {
    let (nc, nt) = (control.len() as f64, treated.len() as f64);
    if nc == 0.0 || nt == 0.0 {
        return (0.0, 0.0);
    }
    let mc = control.iter().sum::<f64>() / nc;
    let mt = treated.iter().sum::<f64>() / nt;
    let ssr: f64 = control.iter().map(|y| (y - mc).powi(2)).sum::<f64>()
        + treated.iter().map(|y| (y - mt).powi(2)).sum::<f64>();
    let dof = nc + nt - 2.0;
    let se = if dof > 0.0 {
        (ssr / dof * (1.0 / nc + 1.0 / nt)).sqrt()
    } else {
        0.0
    };
    (mt - mc, se)
}

/// Compares `group` with `control`, pairing arms by position when the
/// groups have equal size.
pub fn compare(control: &GroupOutcome, group: &GroupOutcome, resamples: usize, seed: u64) -> Comparison {
    let drops_prevented: Vec<i64> = control
        .cumulative_drop
        .iter()
        .zip(&group.cumulative_drop)
        .map(|(c, g)| c - g)
        .collect();
    let control_final = control.final_cumulative();
    let prevented = drops_prevented.last().copied().unwrap_or(0);
    let reduction = (control_final > 0).then(|| prevented as f64 / control_final as f64);

    let c: Vec<f64> = control.final_per_arm.iter().map(|&x| x as f64).collect();
    let g: Vec<f64> = group.final_per_arm.iter().map(|&x| x as f64).collect();
    let (p_value, bootstrap_se) = if c.len() == g.len() {
        let diffs: Vec<f64> = c.iter().zip(&g).map(|(a, b)| a - b).collect();
        bootstrap_mean_test(&diffs, resamples, seed)
    } else {
        unpaired_bootstrap(&c, &g, resamples, seed)
    };
    let (beta, beta_se) = treatment_coefficient(&c, &g);
    Comparison {
        group: group.name.clone(),
        baseline: control.name.clone(),
        drops_prevented,
        reduction,
        p_value,
        bootstrap_se,
        beta,
        beta_se,
    }
}

fn unpaired_bootstrap(control: &[f64], group: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let observed = mean(control) - mean(group);
    let cc: Vec<f64> = control.iter().map(|x| x - mean(control)).collect();
    let gc: Vec<f64> = group.iter().map(|x| x - mean(group)).collect();
    let mut rng = CounterRng::new(seed, Domain::Bootstrap).stream(1);
    let mut extreme = 0usize;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..resamples {
        let a = (0..cc.len()).map(|_| cc[rng.gen_range(0..cc.len())]).sum::<f64>() / cc.len() as f64;
        let b = (0..gc.len()).map(|_| gc[rng.gen_range(0..gc.len())]).sum::<f64>() / gc.len() as f64;
        let m = a - b;
        if m.abs() >= observed.abs() {
            extreme += 1;
        }
        sum += m;
        sum_sq += m * m;
    }
    let r = resamples as f64;
    ((extreme as f64 + 1.0) / (r + 1.0), (sum_sq / r - (sum / r).powi(2)).max(0.0).sqrt())
}

pub fn run_trial(config: &TrialConfig, cohorts: &[Cohort], predictors: Predictors<'_>) -> Result<TrialReport> {
    config.validate(cohorts)?;
    let intervention_weeks = config.intervention_weeks.unwrap_or(config.horizon).min(config.horizon);
    let mut groups = Vec::with_capacity(config.groups.len());
    for (g, (spec, cohort)) in config.groups.iter().zip(cohorts).enumerate() {
        let rollout = RolloutConfig {
            horizon: config.horizon,
            intervention_weeks,
            budget: spec.budget.unwrap_or(config.budget),
            seed: config.seed,
            stream: spec.stream.unwrap_or(g as u64),
            planner: config.planner,
            search: config.search,
        };
        groups.push(simulate_group(&spec.name, spec.policy, cohort, predictors, &rollout)?);
    }
    let comparisons = match groups.iter().position(|g| g.policy == PolicyKind::Csoc) {
        Some(c) => groups
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != c)
            .map(|(i, g)| compare(&groups[c], g, config.bootstrap_resamples, config.seed ^ i as u64))
            .collect(),
        None => Vec::new(),
    };
    Ok(TrialReport {
        horizon: config.horizon,
        intervention_weeks,
        seed: config.seed,
        groups,
        comparisons,
    })
}
