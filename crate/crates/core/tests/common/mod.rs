//! Reference computations that share no code with the library's solvers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmab_core::{ArmState, TransitionModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Engagement probabilities in `[0.01, 0.99]` with active at least passive.
pub fn random_active_helps(rng: &mut ChaCha8Rng) -> TransitionModel {
    let p_ne = rng.gen_range(0.01..0.99);
    let p_e = rng.gen_range(0.01..0.99);
    let a_ne = rng.gen_range(p_ne..=0.99);
    let a_e = rng.gen_range(p_e..=0.99);
    TransitionModel::from_engage_probs([p_ne, p_e, a_ne, a_e]).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng) -> TransitionModel {
    let e: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..=1.0));
    TransitionModel::from_engage_probs(e).unwrap()
}

/// `P(E | action, state)` read straight off the table.
fn up(model: &TransitionModel, state: usize, action: usize) -> f64 {
    model.table()[state][action][1]
}

/// Exact value of the stationary policy `policy[state] = action` by solving
/// the 2x2 system `(I - γ P) v = r` with Cramer's rule.
pub fn policy_values(model: &TransitionModel, subsidy: f64, gamma: f64, policy: [usize; 2]) -> [f64; 2] {
    let r = [0.0 + subsidy_if(policy[0], subsidy), 1.0 + subsidy_if(policy[1], subsidy)];
    let p0 = up(model, 0, policy[0]);
    let p1 = up(model, 1, policy[1]);
    let a = 1.0 - gamma * (1.0 - p0);
    let b = -gamma * p0;
    let c = -gamma * (1.0 - p1);
    let d = 1.0 - gamma * p1;
    let det = a * d - b * c;
    [(r[0] * d - b * r[1]) / det, (a * r[1] - c * r[0]) / det]
}

fn subsidy_if(action: usize, subsidy: f64) -> f64 {
    if action == 0 {
        subsidy
    } else {
        0.0
    }
}

/// Optimal values as the pointwise maximum over the 4 deterministic policies.
pub fn optimal_values(model: &TransitionModel, subsidy: f64, gamma: f64) -> [f64; 2] {
    let mut best = [f64::NEG_INFINITY; 2];
    for a0 in 0..2 {
        for a1 in 0..2 {
            let v = policy_values(model, subsidy, gamma, [a0, a1]);
            best[0] = best[0].max(v[0]);
            best[1] = best[1].max(v[1]);
        }
    }
    best
}

/// `q[state][action]` from the enumerated optimal values.
pub fn q_oracle(model: &TransitionModel, subsidy: f64, gamma: f64) -> [[f64; 2]; 2] {
    let v = optimal_values(model, subsidy, gamma);
    let mut q = [[0.0; 2]; 2];
    for s in 0..2 {
        for a in 0..2 {
            let p = up(model, s, a);
            q[s][a] = s as f64 + subsidy_if(a, subsidy) + gamma * ((1.0 - p) * v[0] + p * v[1]);
        }
    }
    q
}

pub fn gap_oracle(model: &TransitionModel, state: ArmState, subsidy: f64, gamma: f64) -> f64 {
    let q = q_oracle(model, subsidy, gamma);
    let s = state.index();
    q[s][0] - q[s][1]
}

/// First sign change of the gap on the grid `lo + k * step`, as the midpoint
/// of the bracketing grid pair.
///
/// The grid is scanned at `coarse` first, asserting the sign pattern is a
/// single switch from negative to nonnegative, then at `step` inside the
/// switching cell. `coarse` must be an integer multiple of `step` so both
/// grids are aligned.
pub fn grid_sweep_index(model: &TransitionModel, state: ArmState, gamma: f64, step: f64, coarse: f64) -> f64 {
    let span = 1.0 / (1.0 - gamma);
    let (lo, hi) = (-span, span);
    let ratio = (coarse / step).round() as usize;
    let n_coarse = ((hi - lo) / coarse).round() as usize;
    let g = |x: f64| gap_oracle(model, state, x, gamma);
    let mut switch = None;
    for k in 0..=n_coarse {
        let x = lo + k as f64 * coarse;
        let nonneg = g(x) >= 0.0;
        match (switch, nonneg) {
            (None, true) => switch = Some(k),
            (Some(_), false) => panic!("gap changes sign more than once on the grid"),
            _ => {}
        }
    }
    let k = switch.expect("gap never becomes nonnegative on the grid");
    assert!(k > 0, "gap nonnegative at the lower bound");
    let base = (k - 1) * ratio;
    for j in 1..=ratio {
        let x = lo + (base + j) as f64 * step;
        if g(x) >= 0.0 {
            let prev = lo + (base + j - 1) as f64 * step;
            return 0.5 * (prev + x);
        }
    }
    unreachable!("coarse switch point must be found on the fine grid")
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let hi = f(&probe);
            probe[i] = x[i] - h;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * h)
        })
        .collect()
}

/// A chained trajectory of `len` steps with uniformly random actions and
/// next states.
pub fn random_trajectory(rng: &mut ChaCha8Rng, len: usize) -> rmab_core::Trajectory {
    use rmab_core::{Action, Transition};
    let mut state = ArmState::from_bool(rng.gen());
    let steps = (0..len)
        .map(|_| {
            let action = if rng.gen() { Action::Active } else { Action::Passive };
            let t = Transition::new(state, action, ArmState::from_bool(rng.gen()));
            state = t.next_state;
            t
        })
        .collect();
    rmab_core::Trajectory::new(steps).unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, dim: usize) -> rmab_core::FeatureVector {
    rmab_core::FeatureVector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Training data logged by running `policy` on `cohort`.
pub struct Logged {
    pub ts: Vec<(rmab_core::FeatureVector, rmab_core::Trajectory)>,
    pub dfl: rmab_core::dfl::DflCohort,
}

pub fn log_cohort(
    cohort: &rmab_core::sim::Cohort,
    horizon: usize,
    budget: usize,
    seed: u64,
) -> Logged {
    use rmab_core::dfl::{DflArm, DflCohort};
    use rmab_core::sim::{run_policy, PolicyKind, Predictors, RolloutConfig};
    let config = RolloutConfig::new(horizon, budget, seed);
    let out = run_policy(cohort, PolicyKind::UniformRandom, Predictors::default(), &config).unwrap();
    let ts = cohort
        .arms()
        .iter()
        .zip(&out.trajectories)
        .map(|(a, t)| (a.features().clone(), t.clone()))
        .collect();
    let arms = cohort
        .arms()
        .iter()
        .zip(&out.trajectories)
        .enumerate()
        .map(|(i, (a, t))| DflArm {
            features: a.features().clone(),
            trajectory: t.clone(),
            behavior: out.behavior.arm(i).to_vec(),
        })
        .collect();
    Logged {
        ts,
        dfl: DflCohort { arms, budget },
    }
}

/// Latent types A and B share a feature signature; C has its own. Pooling A
/// with B makes the two-stage fit rank the shared signature above C in the
/// not-engaged state, while ranking C first prevents more drops.
pub fn mismatch_types() -> Vec<rmab_core::data::LatentTypeConfig> {
    use rmab_core::data::LatentTypeConfig;
    let mut a = LatentTypeConfig::passive_plus(0.1, 0.3, 0.8);
    a.feature_group = Some(0);
    let mut b = LatentTypeConfig::passive_plus(0.02, 0.99, 0.03);
    b.feature_group = Some(0);
    let mut c = LatentTypeConfig::passive_plus(0.05, 0.95, 0.25);
    c.feature_group = Some(1);
    vec![a, b, c]
}

pub fn mismatch_generator(seed: u64, num_arms: usize) -> rmab_core::data::GeneratorConfig {
    rmab_core::data::GeneratorConfig {
        initial_engaged_fraction: 0.8,
        ..rmab_core::data::GeneratorConfig::new(seed, num_arms, mismatch_types())
    }
}
