//! End-to-end objective and training.
//!
//! Forward: features → predicted probabilities → per-state Whittle indices →
//! per-step soft top-K selection over the logged states → CWPDIS value of
//! that policy on the logged trajectories. The gradient is the product of the
//! four factor Jacobians, accumulated arm by arm in a fixed order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ope::{ope_cwpdis, ope_cwpdis_with_grad, BehaviorLog, OpeEstimate};
use super::policy::SoftPolicy;
use super::soft_whittle::{soft_whittle, SoftIndex};
use crate::error::{Error, Result};
use crate::mdp::{PlannerConfig, TransitionModel};
use crate::predictor::{
    Architecture, FeatureVector, ForwardPass, Provenance, TransitionPredictor, NUM_HEADS,
};
use crate::trajectory::Trajectory;
use crate::ts::TrainConfig;
use crate::whittle::SearchConfig;

/// One logged arm: its features, trajectory and behavior probabilities of
/// the logged actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DflArm {
    pub features: FeatureVector,
    pub trajectory: Trajectory,
    pub behavior: Vec<f64>,
}

/// Logged data plus the weekly budget the soft policy spends over it.
#[derive(Debug, Clone, PartialEq)]
pub struct DflCohort {
    pub arms: Vec<DflArm>,
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DflSettings {
    pub planner: PlannerConfig,
    pub search: SearchConfig,
    pub temperature: f64,
}

impl Default for DflSettings {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            search: SearchConfig::default(),
            temperature: 0.5,
        }
    }
}

impl DflSettings {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.search.validate()?;
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DflGradient {
    pub estimate: OpeEstimate,
    /// `d OPE / d params`, ascent direction.
    pub grad: Vec<f64>,
}

struct ArmForward {
    pass: ForwardPass,
    soft: SoftIndex,
}

struct PipelineForward {
    arms: Vec<ArmForward>,
    policies: Vec<(Vec<usize>, SoftPolicy)>,
    eval_active: Vec<Vec<f64>>,
    trajectories: Vec<Trajectory>,
    behavior: BehaviorLog,
}

fn run_forward(
    predictor: &TransitionPredictor,
    cohort: &DflCohort,
    settings: &DflSettings,
) -> Result<PipelineForward> {
    settings.validate()?;
    if cohort.arms.is_empty() {
        return Err(Error::InvalidConfig("DFL cohort is empty".into()));
    }
    let arms = cohort
        .arms
        .par_iter()
        .map(|arm| -> Result<ArmForward> {
            let pass = predictor.forward(&arm.features)?;
            let model = TransitionModel::from_engage_probs(pass.probs)?;
            let soft = soft_whittle(&model, &settings.planner, &settings.search)?;
            Ok(ArmForward { pass, soft })
        })
        .collect::<Result<Vec<_>>>()?;

    let horizon = cohort.arms.iter().map(|a| a.trajectory.len()).max().unwrap_or(0);
    let mut eval_active: Vec<Vec<f64>> = cohort
        .arms
        .iter()
        .map(|a| vec![0.0; a.trajectory.len()])
        .collect();
    let mut policies = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let present: Vec<usize> = (0..cohort.arms.len())
            .filter(|&i| t < cohort.arms[i].trajectory.len())
            .collect();
        let indices: Vec<f64> = present
            .iter()
            .map(|&i| {
                let state = cohort.arms[i].trajectory.transitions()[t].state;
                arms[i].soft.index[state.index()]
            })
            .collect();
        let policy = SoftPolicy::new(&indices, cohort.budget, settings.temperature);
        for (k, &i) in present.iter().enumerate() {
            eval_active[i][t] = policy.probs()[k];
        }
        policies.push((present, policy));
    }
    let trajectories = cohort.arms.iter().map(|a| a.trajectory.clone()).collect();
    let behavior = BehaviorLog::new(cohort.arms.iter().map(|a| a.behavior.clone()).collect())?;
    Ok(PipelineForward {
        arms,
        policies,
        eval_active,
        trajectories,
        behavior,
    })
}

/// CWPDIS value of the soft Whittle policy induced by `predictor`.
pub fn dfl_objective(
    predictor: &TransitionPredictor,
    cohort: &DflCohort,
    settings: &DflSettings,
) -> Result<OpeEstimate> {
    let fwd = run_forward(predictor, cohort, settings)?;
    ope_cwpdis(
        &fwd.eval_active,
        &fwd.trajectories,
        &fwd.behavior,
        settings.planner.discount,
    )
}

pub fn dfl_gradient(
    predictor: &TransitionPredictor,
    cohort: &DflCohort,
    settings: &DflSettings,
) -> Result<DflGradient> {
    let fwd = run_forward(predictor, cohort, settings)?;
    let (estimate, d_eval) = ope_cwpdis_with_grad(
        &fwd.eval_active,
        &fwd.trajectories,
        &fwd.behavior,
        settings.planner.discount,
    )?;

    // d OPE / d index[arm][state]
    let mut d_index = vec![[0.0f64; 2]; cohort.arms.len()];
    for (t, (present, policy)) in fwd.policies.iter().enumerate() {
        let upstream: Vec<f64> = present.iter().map(|&i| d_eval[i][t]).collect();
        let d_logit = policy.backprop(&upstream);
        for (k, &i) in present.iter().enumerate() {
            let state = cohort.arms[i].trajectory.transitions()[t].state;
            d_index[i][state.index()] += d_logit[k];
        }
    }

    let mut grad = vec![0.0; predictor.params().len()];
    for (i, arm) in fwd.arms.iter().enumerate() {
        let mut d_logits = [0.0; NUM_HEADS];
        for (j, d) in d_logits.iter_mut().enumerate() {
            let d_prob: f64 = (0..2).map(|s| d_index[i][s] * arm.soft.jacobian[s][j]).sum();
            let p = arm.pass.probs[j];
            *d = d_prob * p * (1.0 - p);
        }
        if d_logits.iter().any(|&d| d != 0.0) {
            predictor.backward(&cohort.arms[i].features, &arm.pass, &d_logits, &mut grad);
        }
    }
    Ok(DflGradient { estimate, grad })
}

fn is_step_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::BracketingFailure { .. }
            | Error::DegenerateIndex { .. }
            | Error::DegenerateWeights { .. }
            | Error::NonConvergence { .. }
    )
}

/// Gradient ascent on the OPE objective.
///
/// Starts from `init` when given (e.g. a two-stage solution), otherwise from
/// a fresh initialization seeded by `config.seed`. A step that lowers the
/// objective, or lands on a model the planner cannot index, is rejected and
/// the learning rate halved. `config.batch_size` is ignored because the soft
/// policy couples all arms of a step.
pub fn train_dfl(
    cohort: &DflCohort,
    config: &TrainConfig,
    settings: &DflSettings,
    init: Option<TransitionPredictor>,
) -> Result<TransitionPredictor> {
    config.validate()?;
    let dim = cohort
        .arms
        .first()
        .map(|a| a.features.dim())
        .ok_or_else(|| Error::InvalidConfig("DFL cohort is empty".into()))?;
    let mut predictor = init.unwrap_or_else(|| {
        TransitionPredictor::random_init(
            Architecture {
                feature_dim: dim,
                hidden: config.hidden_width,
            },
            config.seed,
        )
    });
    if config.epochs == 0 {
        return Ok(predictor);
    }
    let mut current = dfl_gradient(&predictor, cohort, settings)?;
    let mut lr = config.learning_rate;
    for _ in 0..config.epochs {
        let mut candidate = predictor.clone();
        for (w, g) in candidate.params_mut().iter_mut().zip(&current.grad) {
            *w += lr * g;
        }
        match dfl_gradient(&candidate, cohort, settings) {
            Ok(next) if next.estimate.value >= current.estimate.value => {
                predictor = candidate;
                current = next;
            }
            Ok(_) => lr *= 0.5,
            Err(e) if is_step_failure(&e) => lr *= 0.5,
            Err(e) => return Err(e),
        }
        if lr < 1e-12 {
            break;
        }
    }
    predictor.set_provenance(Provenance::Dfl);
    Ok(predictor)
}
