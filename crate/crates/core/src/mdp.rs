//! Single-arm engagement MDP.
//!
//! Every arm has two states (not engaging / engaging) and two actions
//! (passive / active). The immediate reward is the state value itself, and
//! a passive subsidy λ can be added to the passive action's reward. The
//! subsidized problem is solved exactly enough by synchronous value
//! iteration with a residual stopping rule.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-stochasticity slack accepted when validating a transition table.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArmState {
    NotEngaging = 0,
    Engaging = 1,
}

impl ArmState {
    pub const ALL: [ArmState; 2] = [ArmState::NotEngaging, ArmState::Engaging];

    pub fn from_value(value: u8) -> Option<Self> {
        match value {
            0 => Some(ArmState::NotEngaging),
            1 => Some(ArmState::Engaging),
            _ => None,
        }
    }

    pub fn from_bool(engaged: bool) -> Self {
        if engaged {
            ArmState::Engaging
        } else {
            ArmState::NotEngaging
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn other(self) -> Self {
        match self {
            ArmState::NotEngaging => ArmState::Engaging,
            ArmState::Engaging => ArmState::NotEngaging,
        }
    }
}

impl fmt::Display for ArmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Passive = 0,
    Active = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Passive, Action::Active];

    pub fn from_value(value: u8) -> Option<Self> {
        match value {
            0 => Some(Action::Passive),
            1 => Some(Action::Active),
            _ => None,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn value(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Immediate reward of a state: 1 when engaging, 0 otherwise.
#[inline]
pub fn reward(state: ArmState) -> f64 {
    state.value() as f64
}

/// Position of `P(E | action, state)` in the four free parameters of a model.
///
/// The order is `(p,NE), (p,E), (a,NE), (a,E)`.
#[inline]
pub fn param_index(action: Action, state: ArmState) -> usize {
    2 * action.index() + state.index()
}

/// Transition probabilities `prob[state][action][next_state]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    prob: [[[f64; 2]; 2]; 2],
}

impl TransitionModel {
    pub fn new(prob: [[[f64; 2]; 2]; 2]) -> Result<Self> {
        for s in ArmState::ALL {
            for a in Action::ALL {
                let row = prob[s.index()][a.index()];
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidModel(format!(
                        "row (state {s}, action {a}) has entry outside [0, 1]: {row:?}"
                    )));
                }
                if (row[0] + row[1] - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "row (state {s}, action {a}) sums to {}",
                        row[0] + row[1]
                    )));
                }
            }
        }
        Ok(Self { prob })
    }

    /// Builds a model from the four engagement probabilities
    /// `P(E|p,NE), P(E|p,E), P(E|a,NE), P(E|a,E)`.
    pub fn from_engage_probs(engage: [f64; 4]) -> Result<Self> {
        let mut prob = [[[0.0; 2]; 2]; 2];
        for s in ArmState::ALL {
            for a in Action::ALL {
                let p = engage[param_index(a, s)];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidModel(format!(
                        "P(E | action {a}, state {s}) = {p} outside [0, 1]"
                    )));
                }
                prob[s.index()][a.index()] = [1.0 - p, p];
            }
        }
        Ok(Self { prob })
    }

    /// Model whose next state does not depend on the action.
    pub fn action_indifferent(p_engage_from_ne: f64, p_engage_from_e: f64) -> Result<Self> {
        Self::from_engage_probs([
            p_engage_from_ne,
            p_engage_from_e,
            p_engage_from_ne,
            p_engage_from_e,
        ])
    }

    #[inline]
    pub fn prob(&self, state: ArmState, action: Action, next: ArmState) -> f64 {
        self.prob[state.index()][action.index()][next.index()]
    }

    #[inline]
    pub fn engage_prob(&self, action: Action, state: ArmState) -> f64 {
        self.prob(state, action, ArmState::Engaging)
    }

    /// The four free parameters in [`param_index`] order.
    pub fn engage_probs(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for s in ArmState::ALL {
            for a in Action::ALL {
                out[param_index(a, s)] = self.engage_prob(a, s);
            }
        }
        out
    }

    pub fn table(&self) -> &[[[f64; 2]; 2]; 2] {
        &self.prob
    }

    /// True when acting never lowers the chance of engaging next week.
    pub fn active_helps(&self) -> bool {
        ArmState::ALL
            .iter()
            .all(|&s| self.engage_prob(Action::Active, s) >= self.engage_prob(Action::Passive, s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub discount: f64,
    pub bellman_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            discount: 0.9,
            bellman_tolerance: 1e-9,
            max_iterations: 10_000,
        }
    }
}

impl PlannerConfig {
    pub fn with_discount(discount: f64) -> Self {
        Self {
            discount,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "planner.discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        if !(self.bellman_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "planner.bellman_tolerance must be positive, got {}",
                self.bellman_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "planner.max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Action values `q[state][action]` of the subsidized single-arm problem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QTable {
    pub q: [[f64; 2]; 2],
}

impl QTable {
    #[inline]
    pub fn get(&self, state: ArmState, action: Action) -> f64 {
        self.q[state.index()][action.index()]
    }

    #[inline]
    pub fn value(&self, state: ArmState) -> f64 {
        let row = self.q[state.index()];
        row[0].max(row[1])
    }

    pub fn values(&self) -> [f64; 2] {
        [
            self.value(ArmState::NotEngaging),
            self.value(ArmState::Engaging),
        ]
    }

    /// `Q(s, passive) - Q(s, active)`; positive means passive is preferred.
    #[inline]
    pub fn gap(&self, state: ArmState) -> f64 {
        self.get(state, Action::Passive) - self.get(state, Action::Active)
    }

    pub fn max_entry(&self) -> f64 {
        self.q.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One synchronous Bellman backup under per-state rewards and a passive subsidy.
pub fn bellman_backup(
    model: &TransitionModel,
    state_reward: [f64; 2],
    subsidy: f64,
    discount: f64,
    q: &QTable,
) -> QTable {
    let v = q.values();
    let mut out = QTable::default();
    for s in ArmState::ALL {
        for a in Action::ALL {
            let row = model.prob[s.index()][a.index()];
            let bonus = if a == Action::Passive { subsidy } else { 0.0 };
            out.q[s.index()][a.index()] =
                state_reward[s.index()] + bonus + discount * (row[0] * v[0] + row[1] * v[1]);
        }
    }
    out
}

/// Largest absolute change produced by one more Bellman backup.
pub fn bellman_residual(
    model: &TransitionModel,
    state_reward: [f64; 2],
    subsidy: f64,
    discount: f64,
    q: &QTable,
) -> f64 {
    let next = bellman_backup(model, state_reward, subsidy, discount, q);
    max_abs_diff(&next, q)
}

fn max_abs_diff(a: &QTable, b: &QTable) -> f64 {
    a.q.iter()
        .flatten()
        .zip(b.q.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Solves the subsidized arm with the standard reward `R(s) = s`.
pub fn solve_subsidized(
    model: &TransitionModel,
    subsidy: f64,
    config: &PlannerConfig,
) -> Result<QTable> {
    solve_with_reward(model, [0.0, 1.0], subsidy, config, None)
}

/// Value iteration with arbitrary per-state rewards, optionally warm-started.
pub fn solve_with_reward(
    model: &TransitionModel,
    state_reward: [f64; 2],
    subsidy: f64,
    config: &PlannerConfig,
    warm_start: Option<&QTable>,
) -> Result<QTable> {
    config.validate()?;
    let mut q = warm_start.copied().unwrap_or_default();
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iterations {
        let next = bellman_backup(model, state_reward, subsidy, config.discount, &q);
        residual = max_abs_diff(&next, &q);
        q = next;
        if residual < config.bellman_tolerance {
            return Ok(q);
        }
    }
    Err(Error::NonConvergence {
        residual,
        iterations: config.max_iterations,
    })
}
