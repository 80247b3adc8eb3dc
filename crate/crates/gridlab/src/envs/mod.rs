//! The three gridworld tasks, each with a train variant and an eval variant
//! that perturbs the dynamics off the training trajectories, plus the
//! observation encodings fed to the neural trainers.

pub mod diversion;
pub mod key2door;
pub mod obs;
pub mod tmaze;

use std::str::FromStr;

use thiserror::Error;

use crate::fmdp::TabularFmdp;

pub use diversion::build_diversion;
pub use key2door::build_key2door;
pub use obs::{encode_observation, encode_step, per_step_len, ObsStacker};
pub use tmaze::{build_frozen_tmaze, build_frozen_tmaze_with_ice};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("unknown environment name '{0}' (expected key2door, frozen_tmaze, or diversion)")]
    UnknownName(String),
    #[error("unknown variant '{0}' (expected train or eval)")]
    UnknownVariant(String),
    #[error("observation history length mismatch: expected {expected}, got {got}")]
    HistoryLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    Key2Door,
    FrozenTMaze,
    Diversion,
}

impl EnvName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvName::Key2Door => "key2door",
            EnvName::FrozenTMaze => "frozen_tmaze",
            EnvName::Diversion => "diversion",
        }
    }
}

impl FromStr for EnvName {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s {
            "key2door" => Ok(EnvName::Key2Door),
            "frozen_tmaze" => Ok(EnvName::FrozenTMaze),
            "diversion" => Ok(EnvName::Diversion),
            other => Err(EnvError::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Train,
    Eval,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Train => "train",
            Variant::Eval => "eval",
        }
    }
}

impl FromStr for Variant {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, EnvError> {
        match s {
            "train" => Ok(Variant::Train),
            "eval" => Ok(Variant::Eval),
            other => Err(EnvError::UnknownVariant(other.to_string())),
        }
    }
}

/// Names a task instance: which environment, which variant, and how many
/// past frames the observation stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub name: EnvName,
    pub variant: Variant,
    pub obs_stack: usize,
}

impl EnvSpec {
    /// Uses the default stack depth: 30 frames for the maze with the
    /// start-only cue (it needs memory), a single frame elsewhere.
    pub fn new(name: EnvName, variant: Variant) -> Self {
        let obs_stack = match name {
            EnvName::FrozenTMaze => 30,
            _ => 1,
        };
        EnvSpec { name, variant, obs_stack }
    }

    pub fn with_stack(name: EnvName, variant: Variant, obs_stack: usize) -> Self {
        assert!(obs_stack >= 1, "obs_stack must be at least 1");
        EnvSpec { name, variant, obs_stack }
    }

    pub fn build(&self) -> TabularFmdp {
        match self.name {
            EnvName::Key2Door => build_key2door(self.variant),
            EnvName::FrozenTMaze => build_frozen_tmaze(self.variant),
            EnvName::Diversion => build_diversion(self.variant),
        }
    }

    /// Length of the full stacked observation vector.
    pub fn obs_len(&self) -> usize {
        self.obs_stack * per_step_len(self.name)
    }
}
