//! Shared fixtures for the benchmarks.

use mdp_forge::EnvConfig;
use serde_json::json;

/// The 8-state, 8-action environment used by the trend experiments, with
/// the given delay and sequence length.
pub fn toy_discrete(delay: usize, sequence_length: usize) -> EnvConfig {
    EnvConfig::validate_and_default(&json!({
        "state_space_size": 8,
        "action_space_size": 8,
        "delay": delay,
        "sequence_length": sequence_length,
        "terminal_state_density": 0.25,
        "reward_density": 0.25
    }))
    .expect("fixture config is valid")
}

pub fn toy_continuous(order: usize) -> EnvConfig {
    EnvConfig::validate_and_default(&json!({
        "state_space_type": "continuous",
        "state_space_dim": 2,
        "transition_dynamics_order": order,
        "make_denser": true
    }))
    .expect("fixture config is valid")
}
