use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{param_index, Action, ArmState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub state: ArmState,
    pub action: Action,
    pub next_state: ArmState,
}

impl Transition {
    pub fn new(state: ArmState, action: Action, next_state: ArmState) -> Self {
        Self {
            state,
            action,
            next_state,
        }
    }
}

/// Weekly transitions of one beneficiary, chained state to state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>) -> Result<Self> {
        for (t, pair) in transitions.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(Error::InvalidTrajectory(format!(
                    "chain break at week {}: next_state {} but following state {}",
                    t + 1,
                    pair[0].next_state,
                    pair[1].state
                )));
            }
        }
        Ok(Self { transitions })
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Weekly states `s_0, ..., s_H`; `H + 1` entries for `H` transitions.
    pub fn states(&self) -> Vec<ArmState> {
        let mut out = Vec::with_capacity(self.transitions.len() + 1);
        if let Some(first) = self.transitions.first() {
            out.push(first.state);
        }
        out.extend(self.transitions.iter().map(|t| t.next_state));
        out
    }

    pub fn counts(&self) -> TransitionCounts {
        let mut counts = TransitionCounts::default();
        for t in &self.transitions {
            counts.add(*t);
        }
        counts
    }

    pub(crate) fn push_unchecked(&mut self, t: Transition) {
        self.transitions.push(t);
    }
}

/// Visit counts `n[param_index(action, state)][next_state]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub n: [[u64; 2]; 4],
}

impl TransitionCounts {
    pub fn add(&mut self, t: Transition) {
        self.n[param_index(t.action, t.state)][t.next_state.index()] += 1;
    }

    pub fn get(&self, state: ArmState, action: Action, next: ArmState) -> u64 {
        self.n[param_index(action, state)][next.index()]
    }

    pub fn visits(&self, state: ArmState, action: Action) -> u64 {
        let row = self.n[param_index(action, state)];
        row[0] + row[1]
    }

    pub fn total(&self) -> u64 {
        self.n.iter().flatten().sum()
    }
}
