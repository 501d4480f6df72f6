//! Two-stage learning: estimate transition probabilities, then plan with them.
//!
//! Two estimators are provided. [`mle_tabular`] counts an arm's own
//! transitions. [`train_ts`] fits a [`TransitionPredictor`] on registration
//! features by minimizing the mean negative log-likelihood of the observed
//! trajectories with full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{param_index, Action, ArmState, TransitionModel};
use crate::predictor::{
    softplus, Architecture, FeatureVector, Provenance, TransitionPredictor, NUM_HEADS,
};
use crate::trajectory::{Trajectory, TransitionCounts};

/// Smallest per-step probability the likelihood accepts.
pub const MIN_STEP_PROBABILITY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Arms per gradient step; `None` uses the whole cohort.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Pseudo-count for tabular estimates.
    pub smoothing: f64,
    /// Width of the predictor's hidden layer (0 = linear).
    pub hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 2000,
            batch_size: None,
            seed: 0,
            smoothing: 1.0,
            hidden_width: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("train.batch_size must be positive".into()));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::InvalidConfig("train.smoothing must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Count-based estimate with symmetric pseudo-counts.
pub fn mle_tabular(trajectory: &Trajectory, smoothing: f64) -> Result<TransitionModel> {
    if !(smoothing >= 0.0) {
        return Err(Error::InvalidConfig(format!("smoothing must be nonnegative, got {smoothing}")));
    }
    let counts = trajectory.counts();
    let mut engage = [0.0; 4];
    for s in ArmState::ALL {
        for a in Action::ALL {
            let visits = counts.visits(s, a) as f64;
            if visits == 0.0 && smoothing == 0.0 {
                return Err(Error::UndefinedEstimate {
                    state: s.value(),
                    action: a.value(),
                });
            }
            let engaged = counts.get(s, a, ArmState::Engaging) as f64;
            engage[param_index(a, s)] = (engaged + smoothing) / (visits + 2.0 * smoothing);
        }
    }
    TransitionModel::from_engage_probs(engage)
}

/// Sufficient statistics of one training arm.
#[derive(Debug, Clone)]
pub(crate) struct CountedArm<'a> {
    pub features: &'a FeatureVector,
    pub counts: TransitionCounts,
}

pub(crate) fn count_cohort(cohort: &[(FeatureVector, Trajectory)]) -> Vec<CountedArm<'_>> {
    cohort
        .iter()
        .map(|(features, trajectory)| CountedArm {
            features,
            counts: trajectory.counts(),
        })
        .collect()
}

/// `-log P(T | logits)` of one arm and its derivative in the logits.
fn arm_nll(arm_index: usize, counts: &TransitionCounts, logits: &[f64; NUM_HEADS]) -> Result<(f64, [f64; NUM_HEADS])> {
    let mut loss = 0.0;
    let mut dlogits = [0.0; NUM_HEADS];
    for (j, &z) in logits.iter().enumerate() {
        let [n0, n1] = counts.n[j];
        if n0 == 0 && n1 == 0 {
            continue;
        }
        let p_engage = crate::predictor::logistic(z);
        let p_drop = crate::predictor::logistic(-z);
        if n1 > 0 && p_engage <= MIN_STEP_PROBABILITY {
            return Err(Error::DegenerateLikelihood {
                arm: arm_index,
                probability: p_engage,
            });
        }
        if n0 > 0 && p_drop <= MIN_STEP_PROBABILITY {
            return Err(Error::DegenerateLikelihood {
                arm: arm_index,
                probability: p_drop,
            });
        }
        let (n0, n1) = (n0 as f64, n1 as f64);
        loss += n1 * softplus(-z) + n0 * softplus(z);
        dlogits[j] = (n0 + n1) * p_engage - n1;
    }
    Ok((loss, dlogits))
}

fn loss_and_grad(
    predictor: &TransitionPredictor,
    arms: &[CountedArm<'_>],
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if arms.is_empty() {
        return Err(Error::InvalidConfig("training cohort is empty".into()));
    }
    let mut grad = vec![0.0; if want_grad { predictor.params().len() } else { 0 }];
    let mut total = 0.0;
    for (i, arm) in arms.iter().enumerate() {
        let pass = predictor.forward(arm.features)?;
        let (loss, dlogits) = arm_nll(i, &arm.counts, &pass.logits)?;
        total += loss;
        if want_grad {
            predictor.backward(arm.features, &pass, &dlogits, &mut grad);
        }
    }
    let n = arms.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

/// Mean over arms of the trajectory negative log-likelihood.
pub fn nll_loss(predictor: &TransitionPredictor, cohort: &[(FeatureVector, Trajectory)]) -> Result<f64> {
    Ok(loss_and_grad(predictor, &count_cohort(cohort), false)?.0)
}

/// [`nll_loss`] together with its gradient in the predictor parameters.
pub fn nll_loss_and_grad(
    predictor: &TransitionPredictor,
    cohort: &[(FeatureVector, Trajectory)],
) -> Result<(f64, Vec<f64>)> {
    loss_and_grad(predictor, &count_cohort(cohort), true)
}

pub(crate) fn cohort_feature_dim(cohort: &[(FeatureVector, Trajectory)]) -> Result<usize> {
    let first = cohort
        .first()
        .ok_or_else(|| Error::InvalidConfig("training cohort is empty".into()))?;
    let dim = first.0.dim();
    if let Some((f, _)) = cohort.iter().find(|(f, _)| f.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: f.dim(),
        });
    }
    Ok(dim)
}

/// Fits a fresh predictor initialized from `config.seed`.
pub fn train_ts(cohort: &[(FeatureVector, Trajectory)], config: &TrainConfig) -> Result<TransitionPredictor> {
    let arch = Architecture {
        feature_dim: cohort_feature_dim(cohort)?,
        hidden: config.hidden_width,
    };
    train_ts_from(TransitionPredictor::random_init(arch, config.seed), cohort, config)
}

/// Gradient descent on the mean NLL starting from `init`.
///
/// The step is scaled by the mean trajectory length, so the learning rate
/// acts per observed transition. An epoch that raises the full-cohort loss
/// is undone and the learning rate halved, which keeps the loss monotone.
pub fn train_ts_from(
    init: TransitionPredictor,
    cohort: &[(FeatureVector, Trajectory)],
    config: &TrainConfig,
) -> Result<TransitionPredictor> {
    config.validate()?;
    cohort_feature_dim(cohort)?;
    let arms = count_cohort(cohort);
    let mut predictor = init;
    if config.epochs == 0 {
        return Ok(predictor);
    }
    let mean_len = arms.iter().map(|a| a.counts.total()).sum::<u64>() as f64 / arms.len() as f64;
    let scale = 1.0 / mean_len.max(1.0);
    let batch = config.batch_size.unwrap_or(arms.len()).min(arms.len());

    let mut lr = config.learning_rate;
    let mut current = loss_and_grad(&predictor, &arms, false)?.0;
    for _ in 0..config.epochs {
        let mut candidate = predictor.clone();
        let mut failed = false;
        for chunk in arms.chunks(batch) {
            match loss_and_grad(&candidate, chunk, true) {
                Ok((_, grad)) => {
                    for (w, g) in candidate.params_mut().iter_mut().zip(&grad) {
                        *w -= lr * scale * g;
                    }
                }
                Err(Error::DegenerateLikelihood { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let next = if failed {
            None
        } else {
            match loss_and_grad(&candidate, &arms, false) {
                Ok((loss, _)) => Some(loss),
                Err(Error::DegenerateLikelihood { .. }) => None,
                Err(e) => return Err(e),
            }
        };
        match next {
            Some(loss) if loss <= current => {
                predictor = candidate;
                current = loss;
            }
            _ => {
                lr *= 0.5;
                if lr < 1e-12 {
                    break;
                }
            }
        }
    }
    predictor.set_provenance(Provenance::Ts);
    Ok(predictor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Transition;
    use ArmState::*;

    fn trajectory_from(steps: &[(ArmState, Action, ArmState)]) -> Trajectory {
        Trajectory::new(
            steps
                .iter()
                .map(|&(s, a, n)| Transition::new(s, a, n))
                .collect(),
        )
        .unwrap()
    }

    /// 8 passive E->E and 2 passive E->NE, chained through NE->E active steps.
    fn fixture() -> Trajectory {
        let mut steps = Vec::new();
        for _ in 0..8 {
            steps.push((Engaging, Action::Passive, Engaging));
        }
        for _ in 0..2 {
            steps.push((Engaging, Action::Passive, NotEngaging));
            steps.push((NotEngaging, Action::Active, Engaging));
        }
        trajectory_from(&steps)
    }

    #[test]
    fn tabular_is_count_ratio() {
        let m = mle_tabular(&fixture(), 1.0).unwrap();
        assert!((m.engage_prob(Action::Passive, Engaging) - 9.0 / 12.0).abs() < 1e-15);
        // unseen (NE, p) with unit pseudo-counts
        assert_eq!(m.engage_prob(Action::Passive, NotEngaging), 0.5);
    }

    #[test]
    fn tabular_unsmoothed() {
        let t = fixture();
        assert!(matches!(
            mle_tabular(&t, 0.0),
            Err(Error::UndefinedEstimate { state: 0, action: 0 })
        ));
        let mut steps: Vec<_> = t.transitions().iter().map(|x| (x.state, x.action, x.next_state)).collect();
        steps.push((Engaging, Action::Active, NotEngaging));
        steps.push((NotEngaging, Action::Passive, Engaging));
        let m = mle_tabular(&trajectory_from(&steps), 0.0).unwrap();
        assert!((m.engage_prob(Action::Passive, Engaging) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn uniform_predictor_nll_is_l_log2() {
        let p = TransitionPredictor::zeros(Architecture::linear(2));
        let t = fixture();
        let x = FeatureVector::new(vec![0.3, -1.0]).unwrap();
        let loss = nll_loss(&p, &[(x, t.clone())]).unwrap();
        assert!((loss - t.len() as f64 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_predictor_is_degenerate() {
        let mut p = TransitionPredictor::zeros(Architecture::linear(1));
        // P(E | p, E) -> 0 while E->E passive transitions are observed
        p.params_mut()[4 + 1] = -800.0;
        let x = FeatureVector::new(vec![0.0]).unwrap();
        assert!(matches!(
            nll_loss(&p, &[(x, fixture())]),
            Err(Error::DegenerateLikelihood { arm: 0, .. })
        ));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let x = FeatureVector::new(vec![1.0]).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let trained = train_ts(&[(x, fixture())], &cfg).unwrap();
        let init = TransitionPredictor::random_init(
            Architecture {
                feature_dim: 1,
                hidden: cfg.hidden_width,
            },
            cfg.seed,
        );
        assert_eq!(trained, init);
    }

    #[test]
    fn empty_cohort_rejected() {
        assert!(train_ts(&[], &TrainConfig::default()).is_err());
    }
}
