//! Whittle indices with derivatives in the transition probabilities.
//!
//! At the index `λ*` of state `s`, both actions are optimal in `s`, so the
//! stationary policy that is passive in `s` (and optimal in the other state)
//! attains the optimal values. Under that fixed policy the gap
//! `G(λ, P) = λ + γ δ_s (V(E) - V(NE))`, with `δ_s = P(E|p,s) - P(E|a,s)`,
//! is affine in `λ` because `V = (I - γ P_π)^{-1} (r + λ e_passive)`.
//! The bisection root is polished by solving `G = 0` exactly, and implicit
//! differentiation of `G(λ*(P), P) = 0` gives `dλ*/dP = -(∂G/∂P) / (∂G/∂λ)`.

use crate::error::{Error, Result};
use crate::mdp::{param_index, Action, ArmState, PlannerConfig, TransitionModel};
use crate::whittle::{whittle_index, SearchConfig};

/// Index of each state and its Jacobian `d index[s] / d P(E | action, state')`
/// in [`param_index`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftIndex {
    pub index: [f64; 2],
    pub jacobian: [[f64; 4]; 2],
}

type Mat2 = [[f64; 2]; 2];

fn solve2(m: &Mat2, rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return None;
    }
    Some([
        (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

struct Branch {
    index: f64,
    jacobian: [f64; 4],
}

/// Exact root and derivative of the gap under the policy `policy[state]`.
fn solve_branch(
    model: &TransitionModel,
    state: ArmState,
    policy: [Action; 2],
    discount: f64,
) -> Result<Branch> {
    let mut m = [[0.0; 2]; 2];
    let mut passive = [0.0; 2];
    for x in ArmState::ALL {
        let a = policy[x.index()];
        for y in ArmState::ALL {
            let id = if x == y { 1.0 } else { 0.0 };
            m[x.index()][y.index()] = id - discount * model.prob(x, a, y);
        }
        if a == Action::Passive {
            passive[x.index()] = 1.0;
        }
    }
    let singular = || Error::DegenerateIndex {
        state: state.value(),
        slope: 0.0,
    };
    let base = solve2(&m, [0.0, 1.0]).ok_or_else(singular)?;
    let per_subsidy = solve2(&m, passive).ok_or_else(singular)?;

    let delta = model.engage_prob(Action::Passive, state) - model.engage_prob(Action::Active, state);
    let intercept = discount * delta * (base[1] - base[0]);
    let slope = 1.0 + discount * delta * (per_subsidy[1] - per_subsidy[0]);
    if slope.abs() < 1e-12 {
        return Err(Error::DegenerateIndex {
            state: state.value(),
            slope,
        });
    }
    let index = -intercept / slope;
    let v = [base[0] + index * per_subsidy[0], base[1] + index * per_subsidy[1]];
    let spread = v[1] - v[0];

    let mut jacobian = [0.0; 4];
    for s2 in ArmState::ALL {
        for a in Action::ALL {
            // dV/dθ = (I - γP_π)^{-1} γ (dP_π/dθ) V; only row s2 moves, and only
            // if the policy plays `a` there.
            let mut rhs = [0.0; 2];
            if policy[s2.index()] == a {
                rhs[s2.index()] = discount * spread;
            }
            let dv = solve2(&m, rhs).ok_or_else(singular)?;
            let ddelta = match (s2 == state, a) {
                (true, Action::Passive) => 1.0,
                (true, Action::Active) => -1.0,
                _ => 0.0,
            };
            let dgap = discount * (ddelta * spread + delta * (dv[1] - dv[0]));
            jacobian[param_index(a, s2)] = -dgap / slope;
        }
    }
    Ok(Branch { index, jacobian })
}

pub fn soft_whittle(
    model: &TransitionModel,
    planner: &PlannerConfig,
    search: &SearchConfig,
) -> Result<SoftIndex> {
    let mut out = SoftIndex {
        index: [0.0; 2],
        jacobian: [[0.0; 4]; 2],
    };
    for state in ArmState::ALL {
        let bisected = whittle_index(model, state, planner, search)?;
        let q = crate::mdp::solve_subsidized(model, bisected, planner)?;
        let other = state.other();
        let preferred = if q.gap(other) >= 0.0 {
            Action::Passive
        } else {
            Action::Active
        };
        // Try the policy the solver prefers first; keep whichever exact root
        // lands closest to the bisection estimate.
        let mut best: Option<Branch> = None;
        for other_action in [preferred, opposite(preferred)] {
            let mut policy = [Action::Passive; 2];
            policy[other.index()] = other_action;
            let branch = match solve_branch(model, state, policy, planner.discount) {
                Ok(b) => b,
                Err(Error::DegenerateIndex { .. }) => continue,
                Err(e) => return Err(e),
            };
            let better = best
                .as_ref()
                .map_or(true, |b| (branch.index - bisected).abs() < (b.index - bisected).abs());
            if better {
                best = Some(branch);
            }
            if best
                .as_ref()
                .is_some_and(|b| (b.index - bisected).abs() <= search.subsidy_tolerance)
            {
                break;
            }
        }
        let branch = best.ok_or(Error::DegenerateIndex {
            state: state.value(),
            slope: 0.0,
        })?;
        if (branch.index - bisected).abs() > search.subsidy_tolerance {
            // The exact root disagrees with bisection: keep the bisection value
            // and use the branch only for the derivative.
            out.index[state.index()] = bisected;
        } else {
            out.index[state.index()] = branch.index;
        }
        out.jacobian[state.index()] = branch.jacobian;
    }
    Ok(out)
}

fn opposite(a: Action) -> Action {
    match a {
        Action::Passive => Action::Active,
        Action::Active => Action::Passive,
    }
}
