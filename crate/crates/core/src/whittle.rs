//! Whittle indices and budgeted top-K selection.
//!
//! The index of a state is the passive subsidy at which the planner is
//! indifferent between acting and not acting. It is located by bisection on
//! the gap `g(λ) = Q_λ(s, passive) - Q_λ(s, active)`, which is negative when
//! the subsidy is too small to forgo the action and positive once it is large
//! enough.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{solve_with_reward, ArmState, PlannerConfig, QTable, TransitionModel};

const STANDARD_REWARD: [f64; 2] = [0.0, 1.0];

/// Slack used when deciding whether passive is weakly optimal.
const WEAK_PREFERENCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub subsidy_tolerance: f64,
    pub indifference_tolerance: f64,
}

impl SearchConfig {
    /// Bracket `[-1/(1-γ), 1/(1-γ)]`, wide enough for per-step rewards in `[0, 1]`.
    pub fn for_discount(discount: f64) -> Self {
        let span = 1.0 / (1.0 - discount);
        Self {
            lower_bound: -span,
            upper_bound: span,
            subsidy_tolerance: 1e-6,
            indifference_tolerance: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower_bound < self.upper_bound) {
            return Err(Error::InvalidConfig(format!(
                "search bracket [{}, {}] is empty",
                self.lower_bound, self.upper_bound
            )));
        }
        if !(self.subsidy_tolerance > 0.0 && self.indifference_tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "search tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self::for_discount(PlannerConfig::default().discount)
    }
}

/// Per-state index values of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhittleTable {
    pub index: [f64; 2],
}

impl WhittleTable {
    #[inline]
    pub fn get(&self, state: ArmState) -> f64 {
        self.index[state.index()]
    }
}

/// `Q_λ(s, passive) - Q_λ(s, active)` under the standard reward.
pub fn subsidy_gap(
    model: &TransitionModel,
    state: ArmState,
    subsidy: f64,
    planner: &PlannerConfig,
) -> Result<f64> {
    Ok(solve_with_reward(model, STANDARD_REWARD, subsidy, planner, None)?.gap(state))
}

pub fn whittle_index(
    model: &TransitionModel,
    state: ArmState,
    planner: &PlannerConfig,
    search: &SearchConfig,
) -> Result<f64> {
    whittle_index_for_reward(model, state, STANDARD_REWARD, planner, search)
}

/// Bisection for the indifference subsidy under arbitrary per-state rewards.
pub fn whittle_index_for_reward(
    model: &TransitionModel,
    state: ArmState,
    state_reward: [f64; 2],
    planner: &PlannerConfig,
    search: &SearchConfig,
) -> Result<f64> {
    search.validate()?;
    let solve = |subsidy: f64, warm: Option<&QTable>| {
        solve_with_reward(model, state_reward, subsidy, planner, warm)
    };

    let mut lo = search.lower_bound;
    let mut hi = search.upper_bound;
    let q_lo = solve(lo, None)?;
    let q_hi = solve(hi, None)?;
    let (gap_lower, gap_upper) = (q_lo.gap(state), q_hi.gap(state));
    if !(gap_lower < 0.0 && gap_upper > 0.0) {
        return Err(Error::BracketingFailure {
            state: state.value(),
            lower: lo,
            upper: hi,
            gap_lower,
            gap_upper,
        });
    }

    let mut warm = q_hi;
    while hi - lo >= search.subsidy_tolerance {
        let mid = 0.5 * (lo + hi);
        warm = solve(mid, Some(&warm))?;
        if warm.gap(state) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn whittle_table(
    model: &TransitionModel,
    planner: &PlannerConfig,
    search: &SearchConfig,
) -> Result<WhittleTable> {
    Ok(WhittleTable {
        index: [
            whittle_index(model, ArmState::NotEngaging, planner, search)?,
            whittle_index(model, ArmState::Engaging, planner, search)?,
        ],
    })
}

/// Re-solves at `index ∓ 2·subsidy_tolerance`: active must be strictly
/// preferred below and passive weakly preferred above.
pub fn verify_root(
    model: &TransitionModel,
    state: ArmState,
    index: f64,
    planner: &PlannerConfig,
    search: &SearchConfig,
) -> Result<bool> {
    let step = 2.0 * search.subsidy_tolerance;
    let below = subsidy_gap(model, state, index - step, planner)?;
    let above = subsidy_gap(model, state, index + step, planner)?;
    Ok(below < 0.0 && above >= 0.0)
}

/// Checks that the set of states where passive is weakly optimal only grows
/// as the subsidy sweeps the default bracket on a grid of `grid_step`.
pub fn check_indexability(
    model: &TransitionModel,
    planner: &PlannerConfig,
    grid_step: f64,
) -> Result<bool> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "grid_step must be positive, got {grid_step}"
        )));
    }
    let bracket = SearchConfig::for_discount(planner.discount);
    let steps = ((bracket.upper_bound - bracket.lower_bound) / grid_step).ceil() as usize;
    let mut previous = [false; 2];
    let mut warm: Option<QTable> = None;
    for k in 0..=steps {
        let subsidy = (bracket.lower_bound + k as f64 * grid_step).min(bracket.upper_bound);
        let q = solve_with_reward(model, STANDARD_REWARD, subsidy, planner, warm.as_ref())?;
        let passive = [
            q.gap(ArmState::NotEngaging) >= -WEAK_PREFERENCE_SLACK,
            q.gap(ArmState::Engaging) >= -WEAK_PREFERENCE_SLACK,
        ];
        if previous.iter().zip(&passive).any(|(&was, &is)| was && !is) {
            return Ok(false);
        }
        previous = passive;
        warm = Some(q);
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedArm {
    pub id: u64,
    pub index: f64,
}

/// Arms picked for the active action this week, highest priority first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetedSelection {
    pub chosen: Vec<RankedArm>,
    pub budget: usize,
}

impl BudgetedSelection {
    pub fn ids(&self) -> Vec<u64> {
        self.chosen.iter().map(|r| r.id).collect()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.chosen.iter().any(|r| r.id == id)
    }
}

/// Descending index, ties broken by ascending arm id.
pub fn priority_order(a: &RankedArm, b: &RankedArm) -> Ordering {
    b.index.total_cmp(&a.index).then(a.id.cmp(&b.id))
}

pub fn select_top_k(indices: &[(u64, f64)], budget: usize) -> BudgetedSelection {
    let mut ranked: Vec<RankedArm> = indices
        .iter()
        .map(|&(id, index)| RankedArm { id, index })
        .collect();
    ranked.sort_by(priority_order);
    ranked.truncate(budget);
    BudgetedSelection {
        chosen: ranked,
        budget,
    }
}
