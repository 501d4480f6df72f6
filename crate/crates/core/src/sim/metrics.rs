//! Engagement-drop outcomes.
//!
//! With `E(t)` the week-`t` state, the drop is `E(0) - E(t)` and the
//! cumulative drop at `t` is the sum of drops over weeks `0..=t`. Negative
//! drops (an arm more engaged than at the start) are kept.

use serde::{Deserialize, Serialize};

use crate::mdp::ArmState;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropSeries {
    pub drop: Vec<i64>,
    pub cumulative: Vec<i64>,
}

impl DropSeries {
    pub fn final_cumulative(&self) -> i64 {
        self.cumulative.last().copied().unwrap_or(0)
    }
}

pub fn engagement_drop_states(states: &[ArmState]) -> DropSeries {
    let Some(first) = states.first() else {
        return DropSeries {
            drop: Vec::new(),
            cumulative: Vec::new(),
        };
    };
    let start = first.value() as i64;
    let drop: Vec<i64> = states.iter().map(|s| start - s.value() as i64).collect();
    let cumulative = drop
        .iter()
        .scan(0i64, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .collect();
    DropSeries { drop, cumulative }
}

/// Drop series over the trajectory's weekly states `s_0, ..., s_H`.
pub fn engagement_drop(trajectory: &Trajectory) -> DropSeries {
    engagement_drop_states(&trajectory.states())
}
