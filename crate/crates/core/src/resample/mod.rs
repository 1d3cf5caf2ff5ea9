//! Training-set rebalancing: random over/undersampling, SMOTE, ENN and
//! SMOTE followed by ENN.
//!
//! The minority class is the one with fewer rows (Death on a tie). Added rows
//! get keys derived from their source row (`key~o1`, `key~s3`) so they can be
//! traced; synthetic rows carry unit weight.

mod enn;
pub mod neighbors;
mod random;
mod smote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use enn::{enn, enn_removals};
pub use random::random_resample;
pub use smote::{interpolate, smote};

use crate::prepare::{FeatureMatrix, Label, PrepareError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    None,
    Oversample,
    Undersample,
    Smote,
    SmoteEnn,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::None,
        Strategy::Oversample,
        Strategy::Undersample,
        Strategy::Smote,
        Strategy::SmoteEnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Oversample => "oversample",
            Strategy::Undersample => "undersample",
            Strategy::Smote => "smote",
            Strategy::SmoteEnn => "smote_enn",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ResampleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == norm)
            .ok_or_else(|| ResampleError::Plan(format!("unknown sampling strategy `{s}`")))
    }
}

/// Which rows ENN may delete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnnMode {
    /// Only rows of the majority class.
    MajorityOnly,
    /// Any row (classic Wilson editing).
    AllClasses,
}

impl FromStr for EnnMode {
    type Err = ResampleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "majority_only" | "majority" => Ok(EnnMode::MajorityOnly),
            "all_classes" | "all" => Ok(EnnMode::AllClasses),
            other => Err(ResampleError::Plan(format!("unknown enn mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub strategy: Strategy,
    /// Minority/majority row ratio after resampling.
    pub target_ratio: f64,
    pub k_smote: usize,
    pub k_enn: usize,
    pub enn_mode: EnnMode,
    pub seed: u64,
}

impl Default for ResamplePlan {
    fn default() -> Self {
        ResamplePlan {
            strategy: Strategy::None,
            target_ratio: 1.0,
            k_smote: 5,
            k_enn: 3,
            enn_mode: EnnMode::MajorityOnly,
            seed: 0,
        }
    }
}

impl ResamplePlan {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        ResamplePlan {
            strategy,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ResampleError> {
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(ResampleError::Plan(format!(
                "target_ratio must be in (0, 1], got {}",
                self.target_ratio
            )));
        }
        if self.k_smote == 0 || self.k_enn == 0 {
            return Err(ResampleError::Plan("k_smote and k_enn must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResampleError {
    #[error("invalid resample plan: {0}")]
    Plan(String),
    #[error("class {0} has no rows")]
    EmptyClass(Label),
    #[error("SMOTE needs more minority rows than k_smote ({found} <= {k}); lower k_smote")]
    TooFewMinority { found: usize, k: usize },
    #[error("ENN needs more rows than k_enn ({found} <= {k})")]
    TooFewRows { found: usize, k: usize },
    #[error(transparent)]
    Prepare(#[from] PrepareError),
}

/// Class counts before and after resampling, as `[death, recovered]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub strategy: Strategy,
    pub before: [usize; 2],
    pub after: [usize; 2],
}

/// `(minority, majority)` labels. Death is the minority on a tie.
pub fn minority_majority(counts: [usize; 2]) -> (Label, Label) {
    if counts[Label::Recovered.index()] < counts[Label::Death.index()] {
        (Label::Recovered, Label::Death)
    } else {
        (Label::Death, Label::Recovered)
    }
}

pub(crate) fn check_classes(matrix: &FeatureMatrix) -> Result<[usize; 2], ResampleError> {
    matrix.labels()?;
    let counts = matrix.class_counts();
    for l in Label::ALL {
        if counts[l.index()] == 0 {
            return Err(ResampleError::EmptyClass(l));
        }
    }
    Ok(counts)
}

/// Minority rows needed to reach `ratio` against `majority` rows.
pub(crate) fn oversample_target(majority: usize, ratio: f64) -> usize {
    (ratio * majority as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Majority rows that keep minority/majority at or above `ratio`.
pub(crate) fn undersample_target(minority: usize, ratio: f64) -> usize {
    (minority as f64 / ratio + 1e-9).floor() as usize
}

/// Applies the plan's strategy.
pub fn resample(matrix: &FeatureMatrix, plan: &ResamplePlan) -> Result<(FeatureMatrix, ResampleSummary), ResampleError> {
    plan.validate()?;
    let before = matrix.class_counts();
    let out = match plan.strategy {
        Strategy::None => {
            matrix.labels()?;
            matrix.clone()
        }
        Strategy::Oversample | Strategy::Undersample => random_resample(matrix, plan)?,
        Strategy::Smote => smote(matrix, plan)?,
        Strategy::SmoteEnn => smote_enn(matrix, plan)?,
    };
    let after = out.class_counts();
    Ok((
        out,
        ResampleSummary {
            strategy: plan.strategy,
            before,
            after,
        },
    ))
}

/// `enn(smote(matrix))` with one shared plan.
pub fn smote_enn(matrix: &FeatureMatrix, plan: &ResamplePlan) -> Result<FeatureMatrix, ResampleError> {
    enn(&smote(matrix, plan)?, plan)
}
