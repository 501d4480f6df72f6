//! Registration profile schema and feature encoding.
//!
//! Categorical columns are integer codes `0..cardinality` expanded one-hot.
//! Numeric columns are integers in `[min, max]` scaled by `max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    OneHot,
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub min: u8,
    pub max: u8,
    pub encoding: Encoding,
}

impl ColumnSpec {
    const fn one_hot(name: &'static str, cardinality: u8) -> Self {
        Self {
            name,
            min: 0,
            max: cardinality - 1,
            encoding: Encoding::OneHot,
        }
    }

    const fn scaled(name: &'static str, min: u8, max: u8) -> Self {
        Self {
            name,
            min,
            max,
            encoding: Encoding::Scaled,
        }
    }

    pub fn contains(&self, code: u8) -> bool {
        (self.min..=self.max).contains(&code)
    }

    /// Number of distinct codes.
    pub fn cardinality(&self) -> usize {
        (self.max - self.min) as usize + 1
    }

    /// Width of this column in the encoded feature vector.
    pub fn width(&self) -> usize {
        match self.encoding {
            Encoding::OneHot => self.cardinality(),
            Encoding::Scaled => 1,
        }
    }
}

/// Profile columns in file and encoding order.
pub const PROFILE_COLUMNS: [ColumnSpec; 8] = [
    ColumnSpec::one_hot("age_band", 6),
    ColumnSpec::one_hot("education_level", 7),
    ColumnSpec::one_hot("income_bracket", 5),
    ColumnSpec::one_hot("phone_ownership", 3),
    ColumnSpec::scaled("gestational_age_weeks", 4, 40),
    ColumnSpec::scaled("num_children", 0, 6),
    ColumnSpec::one_hot("language_code", 5),
    ColumnSpec::one_hot("call_slot_code", 6),
];

/// Length of [`BeneficiaryProfile::encode`].
pub const FEATURE_DIM: usize = 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeneficiaryProfile {
    pub age_band: u8,
    pub education_level: u8,
    pub income_bracket: u8,
    pub phone_ownership: u8,
    pub gestational_age_weeks: u8,
    pub num_children: u8,
    pub language_code: u8,
    pub call_slot_code: u8,
}

impl BeneficiaryProfile {
    /// Codes in [`PROFILE_COLUMNS`] order.
    pub fn codes(&self) -> [u8; 8] {
        [
            self.age_band,
            self.education_level,
            self.income_bracket,
            self.phone_ownership,
            self.gestational_age_weeks,
            self.num_children,
            self.language_code,
            self.call_slot_code,
        ]
    }

    pub fn from_codes(c: [u8; 8]) -> Result<Self> {
        let p = Self {
            age_band: c[0],
            education_level: c[1],
            income_bracket: c[2],
            phone_ownership: c[3],
            gestational_age_weeks: c[4],
            num_children: c[5],
            language_code: c[6],
            call_slot_code: c[7],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (spec, code) in PROFILE_COLUMNS.iter().zip(self.codes()) {
            if !spec.contains(code) {
                return Err(Error::InvalidConfig(format!(
                    "{} = {code} outside [{}, {}]",
                    spec.name, spec.min, spec.max
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> FeatureVector {
        let mut x = Vec::with_capacity(FEATURE_DIM);
        for (spec, code) in PROFILE_COLUMNS.iter().zip(self.codes()) {
            match spec.encoding {
                Encoding::OneHot => {
                    let start = x.len();
                    x.resize(start + spec.cardinality(), 0.0);
                    x[start + (code - spec.min) as usize] = 1.0;
                }
                Encoding::Scaled => x.push(code as f64 / spec.max as f64),
            }
        }
        FeatureVector(x)
    }

    /// The profile every column of which identifies feature group `group`.
    pub fn type_signature(group: usize) -> Self {
        let mut c = [0u8; 8];
        let mut categorical = 0;
        for (i, spec) in PROFILE_COLUMNS.iter().enumerate() {
            c[i] = match spec.encoding {
                Encoding::OneHot => {
                    let code = ((group + categorical) % spec.cardinality()) as u8;
                    categorical += 1;
                    code
                }
                Encoding::Scaled => spec.min + ((group * 3 + i) % spec.cardinality()) as u8,
            };
        }
        Self::from_codes(c).expect("signature codes are in range")
    }
}
