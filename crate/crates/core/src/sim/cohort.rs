use std::collections::HashSet;

use crate::data::schema::BeneficiaryProfile;
use crate::error::{Error, Result};
use crate::mdp::{ArmState, TransitionModel};
use crate::predictor::FeatureVector;

/// One simulated beneficiary with its ground-truth dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortArm {
    pub id: u64,
    pub profile: BeneficiaryProfile,
    pub model: TransitionModel,
    pub initial_state: ArmState,
    pub latent_type: usize,
    features: FeatureVector,
}

impl CohortArm {
    pub fn new(
        id: u64,
        profile: BeneficiaryProfile,
        model: TransitionModel,
        initial_state: ArmState,
        latent_type: usize,
    ) -> Self {
        let features = profile.encode();
        Self {
            id,
            profile,
            model,
            initial_state,
            latent_type,
            features,
        }
    }

    pub fn features(&self) -> &FeatureVector {
        &self.features
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cohort {
    arms: Vec<CohortArm>,
}

impl Cohort {
    /// Requires unique ids and models where acting never hurts.
    pub fn new(arms: Vec<CohortArm>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(arms.len());
        for arm in &arms {
            if !seen.insert(arm.id) {
                return Err(Error::InvalidConfig(format!("duplicate beneficiary id {}", arm.id)));
            }
            if !arm.model.active_helps() {
                return Err(Error::InvalidModel(format!(
                    "beneficiary {}: active action lowers engagement probability",
                    arm.id
                )));
            }
        }
        Ok(Self { arms })
    }

    pub fn arms(&self) -> &[CohortArm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.arms.iter().map(|a| a.id)
    }

    pub fn initial_states(&self) -> Vec<ArmState> {
        self.arms.iter().map(|a| a.initial_state).collect()
    }

    /// Same beneficiaries under new ids `offset, offset + 1, ...`.
    pub fn relabeled(&self, offset: u64) -> Self {
        let arms = self
            .arms
            .iter()
            .enumerate()
            .map(|(i, a)| CohortArm {
                id: offset + i as u64,
                ..a.clone()
            })
            .collect();
        Self { arms }
    }

    /// Splits into consecutive groups of `size` arms.
    pub fn split(&self, groups: usize) -> Vec<Cohort> {
        let size = self.arms.len() / groups.max(1);
        (0..groups)
            .map(|g| Cohort {
                arms: self.arms[g * size..(g + 1) * size].to_vec(),
            })
            .collect()
    }
}
