//! Seeded synthetic cohorts with latent types.
//!
//! Each latent type has a base model and an intervention boost added to both
//! active probabilities. Profiles copy the type's signature code column by
//! column with probability `feature_informativeness` and are uniform
//! otherwise, so informativeness 1 makes features identify the type and 0
//! makes them noise. Types may share a feature group, which makes them
//! indistinguishable from features alone.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schema::{BeneficiaryProfile, PROFILE_COLUMNS};
use crate::error::{Error, Result};
use crate::mdp::{ArmState, TransitionModel};
use crate::rng::{CounterRng, Domain};
use crate::sim::{Cohort, CohortArm};

/// Lowest and highest generated transition probability.
pub const CLIP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentTypeConfig {
    /// Base engagement probabilities in parameter order:
    /// `(passive, NE)`, `(passive, E)`, `(active, NE)`, `(active, E)`.
    pub engage: [f64; 4],
    /// Added to both active probabilities.
    #[serde(default)]
    pub boost: f64,
    /// Signature used for this type's profiles; defaults to the type index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_group: Option<usize>,
}

impl LatentTypeConfig {
    pub fn new(engage: [f64; 4], boost: f64) -> Self {
        Self {
            engage,
            boost,
            feature_group: None,
        }
    }

    /// A type whose active probabilities equal the passive ones plus `boost`.
    pub fn passive_plus(p_ne: f64, p_e: f64, boost: f64) -> Self {
        Self::new([p_ne, p_e, p_ne, p_e], boost)
    }

    fn validate(&self, t: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("generator.types[{t}]: {m}")));
        if self.engage.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad(format!("engage probabilities {:?} outside [0, 1]", self.engage));
        }
        if !(self.boost.is_finite() && self.boost >= 0.0) {
            return bad(format!("boost {} must be finite and nonnegative", self.boost));
        }
        if self.engage[2] < self.engage[0] || self.engage[3] < self.engage[1] {
            return bad("active engagement below passive".into());
        }
        Ok(())
    }

    fn model(&self, jitter: [f64; 2]) -> Result<TransitionModel> {
        let clip = |p: f64| p.clamp(CLIP.0, CLIP.1);
        let e = self.engage;
        TransitionModel::from_engage_probs([
            clip(e[0] + jitter[0]),
            clip(e[1] + jitter[1]),
            clip(e[2] + jitter[0] + self.boost),
            clip(e[3] + jitter[1] + self.boost),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    #[serde(default)]
    pub seed: u64,
    pub num_arms: usize,
    /// First beneficiary id; ids are consecutive.
    #[serde(default)]
    pub id_offset: u64,
    pub types: Vec<LatentTypeConfig>,
    #[serde(default = "one")]
    pub feature_informativeness: f64,
    #[serde(default = "half")]
    pub initial_engaged_fraction: f64,
    /// Per-arm uniform perturbation of the engagement probabilities, shared
    /// by both actions.
    #[serde(default)]
    pub jitter: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl GeneratorConfig {
    pub fn new(seed: u64, num_arms: usize, types: Vec<LatentTypeConfig>) -> Self {
        Self {
            seed,
            num_arms,
            id_offset: 0,
            types,
            feature_informativeness: 1.0,
            initial_engaged_fraction: 0.5,
            jitter: 0.0,
        }
    }

    pub fn num_latent_types(&self) -> usize {
        self.types.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::InvalidConfig("generator.types must not be empty".into()));
        }
        for (t, ty) in self.types.iter().enumerate() {
            ty.validate(t)?;
        }
        for (key, v) in [
            ("feature_informativeness", self.feature_informativeness),
            ("initial_engaged_fraction", self.initial_engaged_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("generator.{key} = {v} outside [0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::InvalidConfig(format!(
                "generator.jitter = {} outside [0, 0.5)",
                self.jitter
            )));
        }
        if self.id_offset.checked_add(self.num_arms as u64).is_none() {
            return Err(Error::InvalidConfig("generator.id_offset overflows".into()));
        }
        Ok(())
    }
}

fn draw_profile(rng: &mut ChaCha8Rng, group: usize, informativeness: f64) -> BeneficiaryProfile {
    let signature = BeneficiaryProfile::type_signature(group).codes();
    let mut codes = [0u8; 8];
    for (i, spec) in PROFILE_COLUMNS.iter().enumerate() {
        let informative = rng.gen::<f64>() < informativeness;
        let uniform = spec.min + rng.gen_range(0..spec.cardinality()) as u8;
        codes[i] = if informative { signature[i] } else { uniform };
    }
    BeneficiaryProfile::from_codes(codes).expect("generated codes are in range")
}

fn generate_arm(config: &GeneratorConfig, keys: &CounterRng, id: u64) -> Result<CohortArm> {
    let mut rng = keys.stream(id);
    let t = rng.gen_range(0..config.types.len());
    let ty = &config.types[t];
    let mut jitter = [0.0; 2];
    for j in &mut jitter {
        *j = if config.jitter > 0.0 {
            rng.gen_range(-config.jitter..config.jitter)
        } else {
            0.0
        };
    }
    let engaged = rng.gen::<f64>() < config.initial_engaged_fraction;
    let profile = draw_profile(
        &mut rng,
        ty.feature_group.unwrap_or(t),
        config.feature_informativeness,
    );
    let model = ty.model(jitter)?;
    Ok(CohortArm::new(id, profile, model, ArmState::from_bool(engaged), t))
}

/// Generates `num_arms` arms; arm `id` depends only on `(seed, id)`.
pub fn generate_cohort(config: &GeneratorConfig) -> Result<Cohort> {
    config.validate()?;
    let keys = CounterRng::new(config.seed, Domain::Generator);
    let arms = (0..config.num_arms as u64)
        .into_par_iter()
        .map(|i| generate_arm(config, &keys, config.id_offset + i))
        .collect::<Result<Vec<_>>>()?;
    Cohort::new(arms)
}
