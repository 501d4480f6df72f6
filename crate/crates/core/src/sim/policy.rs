//! Weekly scheduling policies and cohort rollouts.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use crate::dfl::BehaviorLog;
use crate::error::{Error, Result};
use crate::mdp::{Action, ArmState, PlannerConfig};
use crate::predictor::TransitionPredictor;
use crate::rng::{derive_seed, CounterRng, Domain};
use crate::trajectory::{Trajectory, Transition};
use crate::whittle::{select_top_k, whittle_table, SearchConfig, WhittleTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Current standard of care: never call.
    Csoc,
    RoundRobin,
    WhittleTs,
    WhittleDfl,
    /// Whittle policy on the true transition models.
    OracleWhittle,
    /// `K` arms uniformly at random each week; used to log training data.
    UniformRandom,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Csoc => "csoc",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::WhittleTs => "whittle_ts",
            PolicyKind::WhittleDfl => "whittle_dfl",
            PolicyKind::OracleWhittle => "oracle_whittle",
            PolicyKind::UniformRandom => "uniform_random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PolicyKind::Csoc,
            PolicyKind::RoundRobin,
            PolicyKind::WhittleTs,
            PolicyKind::WhittleDfl,
            PolicyKind::OracleWhittle,
            PolicyKind::UniformRandom,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Predictors<'a> {
    pub ts: Option<&'a TransitionPredictor>,
    pub dfl: Option<&'a TransitionPredictor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub horizon: usize,
    /// Weeks during which calls are placed; passive observation afterwards.
    pub intervention_weeks: usize,
    pub budget: usize,
    pub seed: u64,
    /// Separates the random streams of groups sharing one seed.
    pub stream: u64,
    pub planner: PlannerConfig,
    pub search: SearchConfig,
}

impl RolloutConfig {
    pub fn new(horizon: usize, budget: usize, seed: u64) -> Self {
        Self {
            horizon,
            intervention_weeks: horizon,
            budget,
            seed,
            stream: 0,
            planner: PlannerConfig::default(),
            search: SearchConfig::default(),
        }
    }

    fn group_seed(&self) -> u64 {
        derive_seed(self.seed, Domain::GroupStream, self.stream)
    }
}

/// Logged weeks of one policy on one cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub trajectories: Vec<Trajectory>,
    /// Probability of each logged action under the policy that chose it.
    pub behavior: BehaviorLog,
    pub active_per_week: Vec<usize>,
}

/// Samples every arm's next state from its true model.
///
/// Arm `i` uses the uniform addressed by `(slot i, week)` on `rng`.
pub fn step_cohort(
    states: &[ArmState],
    actions: &[Action],
    cohort: &Cohort,
    rng: &mut CounterRng,
    week: u64,
) -> Vec<ArmState> {
    cohort
        .arms()
        .iter()
        .enumerate()
        .map(|(i, arm)| {
            let p = arm.model.engage_prob(actions[i], states[i]);
            ArmState::from_bool(rng.uniform(i as u64, week) < p)
        })
        .collect()
}

/// Whittle tables from a predictor or from the true models.
pub fn index_tables(
    cohort: &Cohort,
    kind: PolicyKind,
    predictors: Predictors<'_>,
    planner: &PlannerConfig,
    search: &SearchConfig,
) -> Result<Vec<WhittleTable>> {
    let predictor = match kind {
        PolicyKind::WhittleTs => Some(predictors.ts),
        PolicyKind::WhittleDfl => Some(predictors.dfl),
        PolicyKind::OracleWhittle => None,
        other => {
            return Err(Error::InvalidConfig(format!(
                "policy {other} does not use index tables"
            )))
        }
    };
    let predictor = match predictor {
        Some(Some(p)) => Some(p),
        Some(None) => {
            return Err(Error::MissingPredictor {
                group: String::new(),
                policy: kind.to_string(),
            })
        }
        None => None,
    };
    cohort
        .arms()
        .par_iter()
        .map(|arm| {
            let model = match predictor {
                Some(p) => p.predict(arm.features())?,
                None => arm.model,
            };
            whittle_table(&model, planner, search)
        })
        .collect()
}

enum Scheduler {
    Passive,
    RoundRobin { order: Vec<usize>, next: usize },
    Index(Vec<WhittleTable>),
    Random(CounterRng),
}

impl Scheduler {
    /// Actions for this week and the probability each arm was made active.
    fn select(
        &mut self,
        cohort: &Cohort,
        states: &[ArmState],
        week: u64,
        budget: usize,
    ) -> (Vec<Action>, Vec<f64>) {
        let n = cohort.len();
        let mut actions = vec![Action::Passive; n];
        let mut active_prob = vec![0.0; n];
        let budget = budget.min(n);
        match self {
            Scheduler::Passive => {}
            Scheduler::RoundRobin { order, next } => {
                for k in 0..budget {
                    let i = order[(*next + k) % n];
                    actions[i] = Action::Active;
                    active_prob[i] = 1.0;
                }
                if n > 0 {
                    *next = (*next + budget) % n;
                }
            }
            Scheduler::Index(tables) => {
                let keyed: Vec<(u64, f64)> = cohort
                    .arms()
                    .iter()
                    .enumerate()
                    .map(|(i, arm)| (arm.id, tables[i].get(states[i])))
                    .collect();
                let slot_of: HashMap<u64, usize> =
                    keyed.iter().enumerate().map(|(i, &(id, _))| (id, i)).collect();
                for ranked in select_top_k(&keyed, budget).chosen {
                    let i = slot_of[&ranked.id];
                    actions[i] = Action::Active;
                    active_prob[i] = 1.0;
                }
            }
            Scheduler::Random(rng) => {
                let mut stream = rng.stream(week);
                let p = if n == 0 { 0.0 } else { budget as f64 / n as f64 };
                active_prob.iter_mut().for_each(|x| *x = p);
                for i in sample(&mut stream, n, budget).iter() {
                    actions[i] = Action::Active;
                }
            }
        }
        (actions, active_prob)
    }
}

fn scheduler_for(
    cohort: &Cohort,
    kind: PolicyKind,
    predictors: Predictors<'_>,
    config: &RolloutConfig,
) -> Result<Scheduler> {
    Ok(match kind {
        PolicyKind::Csoc => Scheduler::Passive,
        PolicyKind::RoundRobin => {
            let mut order: Vec<usize> = (0..cohort.len()).collect();
            order.sort_by_key(|&i| cohort.arms()[i].id);
            Scheduler::RoundRobin { order, next: 0 }
        }
        PolicyKind::UniformRandom => {
            Scheduler::Random(CounterRng::new(config.group_seed(), Domain::Selection))
        }
        PolicyKind::WhittleTs | PolicyKind::WhittleDfl | PolicyKind::OracleWhittle => {
            Scheduler::Index(index_tables(
                cohort,
                kind,
                predictors,
                &config.planner,
                &config.search,
            )?)
        }
    })
}

pub fn run_policy(
    cohort: &Cohort,
    kind: PolicyKind,
    predictors: Predictors<'_>,
    config: &RolloutConfig,
) -> Result<Rollout> {
    let scheduler = scheduler_for(cohort, kind, predictors, config)?;
    run_with(cohort, scheduler, config)
}

/// Rollout with precomputed index tables, so repeated replications of one
/// Whittle policy skip re-solving the planner.
pub fn run_index_policy(cohort: &Cohort, tables: Vec<WhittleTable>, config: &RolloutConfig) -> Result<Rollout> {
    if tables.len() != cohort.len() {
        return Err(Error::InvalidConfig(format!(
            "{} index tables for {} arms",
            tables.len(),
            cohort.len()
        )));
    }
    run_with(cohort, Scheduler::Index(tables), config)
}

fn run_with(cohort: &Cohort, mut scheduler: Scheduler, config: &RolloutConfig) -> Result<Rollout> {
    let n = cohort.len();
    let mut transitions_rng = CounterRng::new(config.group_seed(), Domain::Transition);
    let mut states = cohort.initial_states();
    let mut trajectories = vec![Trajectory::default(); n];
    let mut behavior = vec![Vec::with_capacity(config.horizon); n];
    let mut active_per_week = Vec::with_capacity(config.horizon);
    for week in 0..config.horizon {
        let (actions, active_prob) = if week < config.intervention_weeks {
            scheduler.select(cohort, &states, week as u64, config.budget)
        } else {
            (vec![Action::Passive; n], vec![0.0; n])
        };
        let next = step_cohort(&states, &actions, cohort, &mut transitions_rng, week as u64);
        let mut active = 0;
        for i in 0..n {
            trajectories[i].push_unchecked(Transition::new(states[i], actions[i], next[i]));
            let p = match actions[i] {
                Action::Active => {
                    active += 1;
                    active_prob[i]
                }
                Action::Passive => 1.0 - active_prob[i],
            };
            behavior[i].push(p);
        }
        active_per_week.push(active);
        states = next;
    }
    Ok(Rollout {
        trajectories,
        behavior: BehaviorLog::new(behavior)?,
        active_per_week,
    })
}
