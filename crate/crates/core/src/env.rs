//! Types shared by the discrete and continuous environments.

use thiserror::Error;

use crate::config::ConfigError;
use crate::render::{ImageGrid, RenderError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("expected a {expected} environment config")]
    WrongStateSpaceType { expected: &'static str },
    #[error("sequence length {length} exceeds the {available} non-terminal states")]
    InfeasibleSequenceLength { length: usize, available: usize },
    #[error("reward density {density} leaves no rewardable sequence")]
    EmptyRewardSet { density: f64 },
    #[error("no legal sequence of length {0} exists in the transition graph")]
    NoLegalSequence(usize),
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode ended")]
    SteppedAfterDone,
    #[error("action {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("could not place a start state outside the target radius")]
    ResetInfeasible,
    #[error("invalid environment dump: {0}")]
    InvalidDump(String),
}

/// What the agent sees after `reset` or `step`.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// A categorical state id.
    State(usize),
    /// Relevant and irrelevant categorical state ids.
    Pair { relevant: usize, irrelevant: usize },
    /// Real-valued position, relevant dimensions first.
    Vector(Vec<f64>),
    Image(ImageGrid),
}

impl Observation {
    pub fn as_state(&self) -> Option<usize> {
        match self {
            Observation::State(s) => Some(*s),
            Observation::Pair { relevant, .. } => Some(*relevant),
            _ => None,
        }
    }

    pub fn as_image(&self) -> Option<&ImageGrid> {
        match self {
            Observation::Image(img) => Some(img),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Observation::Vector(v) => Some(v),
            _ => None,
        }
    }
}
