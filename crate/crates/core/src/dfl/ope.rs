//! Consistent weighted per-decision importance sampling (CWPDIS).
//!
//! Each trajectory is one arm. At step `t` the arm's weight is the product,
//! over steps `τ <= t`, of the ratio between the evaluation and behavior
//! probabilities of the logged action. The step value is the weight-normalized
//! mean reward `R(s_t)` across arms, and the estimate is the discounted sum of
//! step values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{reward, Action};
use crate::trajectory::Trajectory;

/// Behavior-policy probability of each logged action, `probs[arm][step]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BehaviorLog {
    probs: Vec<Vec<f64>>,
}

impl BehaviorLog {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in probs.iter().enumerate() {
            if let Some((t, p)) = row.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
                return Err(Error::InvalidConfig(format!(
                    "behavior probability {p} at arm {i}, step {t} outside (0, 1]"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn arm(&self, i: usize) -> &[f64] {
        &self.probs[i]
    }

    pub fn num_arms(&self) -> usize {
        self.probs.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeEstimate {
    pub value: f64,
    /// Smallest per-step `(Σw)² / Σw²` over the horizon.
    pub effective_sample_size: f64,
}

/// Probability the evaluation policy assigns to the logged action.
#[inline]
fn eval_prob(active_prob: f64, action: Action) -> f64 {
    match action {
        Action::Active => active_prob,
        Action::Passive => 1.0 - active_prob,
    }
}

fn check_shapes(eval_active: &[Vec<f64>], trajectories: &[Trajectory], behavior: &BehaviorLog) -> Result<usize> {
    if trajectories.is_empty() {
        return Err(Error::InvalidConfig("no trajectories to evaluate".into()));
    }
    if eval_active.len() != trajectories.len() || behavior.num_arms() != trajectories.len() {
        return Err(Error::InvalidConfig(format!(
            "shape mismatch: {} trajectories, {} evaluation rows, {} behavior rows",
            trajectories.len(),
            eval_active.len(),
            behavior.num_arms()
        )));
    }
    for (i, traj) in trajectories.iter().enumerate() {
        if eval_active[i].len() < traj.len() || behavior.arm(i).len() < traj.len() {
            return Err(Error::InvalidConfig(format!(
                "arm {i}: probabilities shorter than its trajectory"
            )));
        }
    }
    Ok(trajectories.iter().map(Trajectory::len).max().unwrap_or(0))
}

struct Forward {
    estimate: OpeEstimate,
    ratios: Vec<Vec<f64>>,
    step_value: Vec<f64>,
    step_weight: Vec<f64>,
}

fn forward(
    eval_active: &[Vec<f64>],
    trajectories: &[Trajectory],
    behavior: &BehaviorLog,
    discount: f64,
) -> Result<Forward> {
    let horizon = check_shapes(eval_active, trajectories, behavior)?;
    let mut ratios = Vec::with_capacity(trajectories.len());
    let mut weights = Vec::with_capacity(trajectories.len());
    for (i, traj) in trajectories.iter().enumerate() {
        let mut w = 1.0;
        let mut r_row = Vec::with_capacity(traj.len());
        let mut w_row = Vec::with_capacity(traj.len());
        for (t, step) in traj.transitions().iter().enumerate() {
            let rho = eval_prob(eval_active[i][t], step.action) / behavior.arm(i)[t];
            w *= rho;
            r_row.push(rho);
            w_row.push(w);
        }
        ratios.push(r_row);
        weights.push(w_row);
    }

    let mut value = 0.0;
    let mut ess = f64::INFINITY;
    let mut step_value = vec![0.0; horizon];
    let mut step_weight = vec![0.0; horizon];
    let mut scale = 1.0;
    for t in 0..horizon {
        let (mut sum_w, mut sum_w2, mut sum_wr) = (0.0, 0.0, 0.0);
        for (i, traj) in trajectories.iter().enumerate() {
            if t < traj.len() {
                let w = weights[i][t];
                sum_w += w;
                sum_w2 += w * w;
                sum_wr += w * reward(traj.transitions()[t].state);
            }
        }
        if !(sum_w > 0.0) || !sum_w.is_finite() {
            return Err(Error::DegenerateWeights { step: t });
        }
        step_weight[t] = sum_w;
        step_value[t] = sum_wr / sum_w;
        value += scale * step_value[t];
        ess = ess.min(sum_w * sum_w / sum_w2);
        scale *= discount;
    }
    Ok(Forward {
        estimate: OpeEstimate {
            value,
            effective_sample_size: ess,
        },
        ratios,
        step_value,
        step_weight,
    })
}

pub fn ope_cwpdis(
    eval_active: &[Vec<f64>],
    trajectories: &[Trajectory],
    behavior: &BehaviorLog,
    discount: f64,
) -> Result<OpeEstimate> {
    Ok(forward(eval_active, trajectories, behavior, discount)?.estimate)
}

/// Estimate plus `d value / d eval_active[arm][step]`.
pub fn ope_cwpdis_with_grad(
    eval_active: &[Vec<f64>],
    trajectories: &[Trajectory],
    behavior: &BehaviorLog,
    discount: f64,
) -> Result<(OpeEstimate, Vec<Vec<f64>>)> {
    let fwd = forward(eval_active, trajectories, behavior, discount)?;
    let mut grads = Vec::with_capacity(trajectories.len());
    for (i, traj) in trajectories.iter().enumerate() {
        let len = traj.len();
        let steps = traj.transitions();
        // d value / d w[i][t]
        let mut scale = 1.0;
        let dw: Vec<f64> = (0..len)
            .map(|t| {
                let d = scale * (reward(steps[t].state) - fwd.step_value[t]) / fwd.step_weight[t];
                scale *= discount;
                d
            })
            .collect();
        let rho = &fwd.ratios[i];
        let mut g = vec![0.0; eval_active[i].len()];
        let mut prefix = 1.0;
        for tau in 0..len {
            // Σ_{t >= τ} dw[t] * Π_{τ' <= t, τ' != τ} ρ[τ']
            let mut running = prefix;
            let mut acc = 0.0;
            for t in tau..len {
                if t > tau {
                    running *= rho[t];
                }
                acc += dw[t] * running;
            }
            let sign = match steps[tau].action {
                Action::Active => 1.0,
                Action::Passive => -1.0,
            };
            g[tau] = sign * acc / behavior.arm(i)[tau];
            prefix *= rho[tau];
        }
        grads.push(g);
    }
    Ok((fwd.estimate, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ArmState::*;
    use crate::trajectory::Transition;

    fn traj(states: &[u8], actions: &[u8]) -> Trajectory {
        let s: Vec<_> = states.iter().map(|&v| crate::mdp::ArmState::from_value(v).unwrap()).collect();
        Trajectory::new(
            actions
                .iter()
                .enumerate()
                .map(|(t, &a)| Transition::new(s[t], Action::from_value(a).unwrap(), s[t + 1]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_step_is_self_normalized() {
        let t = vec![Trajectory::new(vec![Transition::new(Engaging, Action::Active, NotEngaging)]).unwrap()];
        let b = BehaviorLog::new(vec![vec![0.2]]).unwrap();
        for p in [0.05, 0.5, 0.99] {
            let est = ope_cwpdis(&[vec![p]], &t, &b, 0.9).unwrap();
            assert!((est.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let t = vec![traj(&[1, 0, 0], &[1, 0])];
        let b = BehaviorLog::new(vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            ope_cwpdis(&[vec![0.0, 0.5]], &t, &b, 0.9),
            Err(Error::DegenerateWeights { step: 0 })
        ));
    }

    #[test]
    fn rejects_zero_behavior_probability() {
        assert!(BehaviorLog::new(vec![vec![0.5, 0.0]]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = vec![
            traj(&[1, 0, 1, 1], &[0, 1, 0]),
            traj(&[0, 0, 1, 0], &[1, 0, 1]),
            traj(&[1, 1, 0, 0], &[0, 0, 1]),
        ];
        let b = BehaviorLog::new(vec![vec![0.7, 0.3, 0.7], vec![0.3, 0.7, 0.3], vec![0.7, 0.7, 0.3]]).unwrap();
        let p = vec![vec![0.2, 0.6, 0.4], vec![0.5, 0.1, 0.8], vec![0.3, 0.3, 0.9]];
        let (_, g) = ope_cwpdis_with_grad(&p, &t, &b, 0.9).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[i][k] += 1e-6;
                lo[i][k] -= 1e-6;
                let fd = (ope_cwpdis(&hi, &t, &b, 0.9).unwrap().value
                    - ope_cwpdis(&lo, &t, &b, 0.9).unwrap().value)
                    / 2e-6;
                assert!((fd - g[i][k]).abs() < 1e-7, "({i},{k}) {fd} vs {}", g[i][k]);
            }
        }
    }
}
