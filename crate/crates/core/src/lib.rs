//! Procedurally generated toy MDPs with independently tunable hardness
//! dimensions, tabular baseline agents and an experiment harness.

pub mod agents;
pub mod config;
pub mod continuous;
pub mod discrete;
pub mod env;
pub mod harness;
pub mod render;
pub mod rng;

pub use agents::{AgentConfig, AgentError, AgentKind, QTable, TabularAgent};
pub use config::{ConfigError, EnvConfig, ImageTransform, RewardDist, StateSpaceType};
pub use continuous::{ContStepResult, ContinuousEnv, DerivativeStack};
pub use discrete::{DiscreteEnv, DiscreteModel, StepResult, TransitionTable};
pub use env::{EnvError, Observation};
pub use harness::{run_single, run_sweep, Policy, Protocol, SweepGrid, SweepResult};
pub use render::{CanvasSpec, ImageGrid, TransformDraw};
pub use rng::{derive_stream, RngStream};
