//! Environment configuration: JSON schema, defaults and validation.
//!
//! Keys mirror the names used by the original Python toolkit, so a config
//! dict written for it can be pasted here as JSON. Any key left out takes a
//! default that switches its dimension off.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("incompatible dimensions: {0}")]
    IncompatibleDimensions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpaceType {
    Discrete,
    Continuous,
}

/// Per-sequence reward distribution, sampled once at generation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardDist {
    ConstantOne,
    Uniform(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageTransform {
    Shift,
    Scale,
    Rotate,
    Flip,
}

/// A validated environment configuration with every field filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub state_space_type: StateSpaceType,
    pub seed: u64,

    // Discrete.
    pub state_space_size: usize,
    pub action_space_size: usize,
    pub diameter: usize,
    pub terminal_state_density: f64,
    pub reward_density: f64,
    pub reward_dist: RewardDist,

    // Continuous.
    pub state_space_dim: usize,
    pub action_space_dim: usize,
    pub irrelevant_state_space_dim: usize,
    pub target_point: Vec<f64>,
    pub target_radius: f64,
    pub time_unit: f64,
    pub inertia: f64,
    pub transition_dynamics_order: usize,
    pub state_space_max: f64,
    pub action_space_max: f64,
    pub action_loss_weight: f64,

    // Shared reward dimensions.
    pub delay: usize,
    pub sequence_length: usize,
    pub make_denser: bool,
    pub transition_noise: f64,
    pub reward_noise: f64,
    pub reward_scale: f64,
    pub reward_shift: f64,
    pub term_state_reward: f64,
    pub irrelevant_features: bool,
    pub max_episode_steps: usize,

    // Image observations.
    pub image_representations: bool,
    pub image_width: usize,
    pub image_height: usize,
    pub image_transforms: Vec<ImageTransform>,
    pub image_sh_quant: usize,
    pub image_ro_quant: usize,
    pub image_scale_range: (f64, f64),
}

/// The raw document: every key optional, nothing cross-checked yet.
#[derive(Debug, Default, Deserialize)]
struct RawConfig {
    state_space_type: Option<StateSpaceType>,
    seed: Option<u64>,
    state_space_size: Option<usize>,
    action_space_size: Option<usize>,
    diameter: Option<usize>,
    terminal_state_density: Option<f64>,
    reward_density: Option<f64>,
    reward_dist: Option<RewardDist>,
    state_space_dim: Option<usize>,
    action_space_dim: Option<usize>,
    irrelevant_state_space_dim: Option<usize>,
    target_point: Option<Vec<f64>>,
    target_radius: Option<f64>,
    time_unit: Option<f64>,
    inertia: Option<f64>,
    transition_dynamics_order: Option<usize>,
    state_space_max: Option<f64>,
    action_space_max: Option<f64>,
    action_loss_weight: Option<f64>,
    delay: Option<usize>,
    sequence_length: Option<usize>,
    make_denser: Option<bool>,
    transition_noise: Option<f64>,
    reward_noise: Option<f64>,
    reward_scale: Option<f64>,
    reward_shift: Option<f64>,
    term_state_reward: Option<f64>,
    irrelevant_features: Option<bool>,
    max_episode_steps: Option<usize>,
    image_representations: Option<bool>,
    image_width: Option<usize>,
    image_height: Option<usize>,
    image_transforms: Option<Vec<ImageTransform>>,
    image_sh_quant: Option<usize>,
    image_ro_quant: Option<usize>,
    image_scale_range: Option<(f64, f64)>,
}

/// Every key accepted in a config document.
pub const CONFIG_KEYS: &[&str] = &[
    "state_space_type",
    "seed",
    "state_space_size",
    "action_space_size",
    "diameter",
    "terminal_state_density",
    "reward_density",
    "reward_dist",
    "state_space_dim",
    "action_space_dim",
    "irrelevant_state_space_dim",
    "target_point",
    "target_radius",
    "time_unit",
    "inertia",
    "transition_dynamics_order",
    "state_space_max",
    "action_space_max",
    "action_loss_weight",
    "delay",
    "sequence_length",
    "make_denser",
    "transition_noise",
    "reward_noise",
    "reward_scale",
    "reward_shift",
    "term_state_reward",
    "irrelevant_features",
    "max_episode_steps",
    "image_representations",
    "image_width",
    "image_height",
    "image_transforms",
    "image_sh_quant",
    "image_ro_quant",
    "image_scale_range",
];

pub const DEFAULT_STATE_SPACE_SIZE: usize = 8;
pub const DEFAULT_MAX_EPISODE_STEPS: usize = 100;

fn violation(msg: impl Into<String>) -> ConfigError {
    ConfigError::ConstraintViolation(msg.into())
}

fn check_unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(violation(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_non_negative(name: &str, v: f64) -> Result<(), ConfigError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(violation(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(violation(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<(), ConfigError> {
    if !v.is_finite() {
        return Err(violation(format!("{name} must be finite, got {v}")));
    }
    Ok(())
}

fn check_positive_int(name: &str, v: usize) -> Result<(), ConfigError> {
    if v == 0 {
        return Err(violation(format!("{name} must be a positive integer")));
    }
    Ok(())
}

/// Number of terminal states for `|S|` and a density, rounding half up.
pub fn terminal_count(state_space_size: usize, density: f64) -> usize {
    (density * state_space_size as f64 + 0.5).floor() as usize
}

impl EnvConfig {
    /// Parses a JSON document and validates it.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| ConfigError::TypeMismatch(format!("invalid JSON: {e}")))?;
        Self::validate_and_default(&value)
    }

    /// Checks a raw key/value document and fills every omitted dimension
    /// with its default.
    pub fn validate_and_default(raw: &Value) -> Result<Self, ConfigError> {
        let map = raw
            .as_object()
            .ok_or_else(|| ConfigError::TypeMismatch("config must be a JSON object".into()))?;
        for key in map.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
        }
        // Deserialize key by key so a type error can name its key.
        let mut raw_cfg = RawConfig::default();
        for (key, value) in map {
            let mut single = Map::new();
            single.insert(key.clone(), value.clone());
            let parsed: RawConfig = serde_json::from_value(Value::Object(single))
                .map_err(|e| ConfigError::TypeMismatch(format!("`{key}`: {e}")))?;
            merge(&mut raw_cfg, parsed);
        }
        Self::from_raw(raw_cfg)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let state_space_type = raw.state_space_type.unwrap_or(StateSpaceType::Discrete);
        let discrete = state_space_type == StateSpaceType::Discrete;

        let diameter = raw.diameter.unwrap_or(1);
        check_positive_int("diameter", diameter)?;

        let (state_space_size, action_space_size) = if discrete {
            match (raw.state_space_size, raw.action_space_size) {
                (Some(s), Some(a)) => {
                    if a.checked_mul(diameter) != Some(s) {
                        return Err(ConfigError::IncompatibleDimensions(format!(
                            "action_space_size {a} contradicts state_space_size {s} / diameter {diameter}"
                        )));
                    }
                    (s, a)
                }
                (None, Some(a)) => {
                    check_positive_int("action_space_size", a)?;
                    (a * diameter, a)
                }
                (s, None) => {
                    let s = s.unwrap_or(DEFAULT_STATE_SPACE_SIZE);
                    check_positive_int("state_space_size", s)?;
                    if s % diameter != 0 {
                        return Err(violation(format!(
                            "diameter {diameter} does not divide state_space_size {s}"
                        )));
                    }
                    (s, s / diameter)
                }
            }
        } else {
            // Zero is what the canonical form stores for unused discrete sizes.
            if raw.state_space_size.is_some_and(|s| s != 0) || raw.action_space_size.is_some_and(|a| a != 0) {
                return Err(ConfigError::IncompatibleDimensions(
                    "state_space_size/action_space_size apply to discrete environments; use state_space_dim".into(),
                ));
            }
            if raw.diameter.is_some_and(|d| d != 1) {
                return Err(ConfigError::IncompatibleDimensions(
                    "diameter applies to discrete environments only".into(),
                ));
            }
            (0, 0)
        };
        if discrete {
            check_positive_int("state_space_size", state_space_size)?;
        }

        let terminal_state_density = raw.terminal_state_density.unwrap_or(if discrete { 0.25 } else { 0.0 });
        if !(0.0..1.0).contains(&terminal_state_density) {
            return Err(violation(format!(
                "terminal_state_density must lie in [0, 1), got {terminal_state_density}"
            )));
        }
        let reward_density = raw.reward_density.unwrap_or(0.25);
        check_unit_interval("reward_density", reward_density)?;
        let reward_dist = raw.reward_dist.unwrap_or(RewardDist::ConstantOne);
        if let RewardDist::Uniform(lo, hi) = reward_dist {
            check_finite("reward_dist lower bound", lo)?;
            check_finite("reward_dist upper bound", hi)?;
            if lo > hi {
                return Err(violation(format!("reward_dist uniform bounds reversed: ({lo}, {hi})")));
            }
        }

        let delay = raw.delay.unwrap_or(0);
        let sequence_length = raw.sequence_length.unwrap_or(1);
        check_positive_int("sequence_length", sequence_length)?;

        if discrete {
            let terminals = terminal_count(state_space_size, terminal_state_density);
            if terminals > state_space_size - diameter {
                return Err(violation(format!(
                    "terminal_state_density {terminal_state_density} leaves a partition with no non-terminal state"
                )));
            }
            if sequence_length > state_space_size - terminals {
                return Err(violation(format!(
                    "sequence_length {sequence_length} exceeds the {} non-terminal states",
                    state_space_size - terminals
                )));
            }
        } else if raw.sequence_length.is_some_and(|n| n != 1) {
            return Err(ConfigError::IncompatibleDimensions(
                "sequence_length > 1 is only supported for discrete environments".into(),
            ));
        }

        let make_denser = raw.make_denser.unwrap_or(false);
        let transition_noise = raw.transition_noise.unwrap_or(0.0);
        if discrete {
            check_unit_interval("transition_noise", transition_noise)?;
        } else {
            check_non_negative("transition_noise", transition_noise)?;
        }
        let reward_noise = raw.reward_noise.unwrap_or(0.0);
        check_non_negative("reward_noise", reward_noise)?;
        let reward_scale = raw.reward_scale.unwrap_or(1.0);
        check_finite("reward_scale", reward_scale)?;
        let reward_shift = raw.reward_shift.unwrap_or(0.0);
        check_finite("reward_shift", reward_shift)?;
        let term_state_reward = raw.term_state_reward.unwrap_or(0.0);
        check_finite("term_state_reward", term_state_reward)?;
        let irrelevant_features = raw.irrelevant_features.unwrap_or(false);
        let max_episode_steps = raw.max_episode_steps.unwrap_or(DEFAULT_MAX_EPISODE_STEPS);
        check_positive_int("max_episode_steps", max_episode_steps)?;

        let state_space_dim = raw.state_space_dim.unwrap_or(2);
        check_positive_int("state_space_dim", state_space_dim)?;
        let irrelevant_state_space_dim = match raw.irrelevant_state_space_dim {
            Some(d) if !irrelevant_features && d != 0 => {
                return Err(ConfigError::IncompatibleDimensions(
                    "irrelevant_state_space_dim set without irrelevant_features".into(),
                ))
            }
            Some(d) => d,
            None if irrelevant_features && !discrete => state_space_dim,
            None => 0,
        };
        if irrelevant_features && !discrete && irrelevant_state_space_dim == 0 {
            return Err(violation("irrelevant_state_space_dim must be positive when irrelevant_features is on"));
        }
        let total_dim = state_space_dim + irrelevant_state_space_dim;
        let action_space_dim = raw.action_space_dim.unwrap_or(total_dim);
        if !discrete && action_space_dim != total_dim {
            return Err(ConfigError::IncompatibleDimensions(format!(
                "action_space_dim {action_space_dim} must equal the total state dimensionality {total_dim}"
            )));
        }
        let target_point = raw.target_point.unwrap_or_else(|| vec![0.0; state_space_dim]);
        if target_point.len() != state_space_dim {
            return Err(ConfigError::IncompatibleDimensions(format!(
                "target_point has {} components, state_space_dim is {state_space_dim}",
                target_point.len()
            )));
        }
        for &c in &target_point {
            check_finite("target_point", c)?;
        }
        let target_radius = raw.target_radius.unwrap_or(0.05);
        check_positive("target_radius", target_radius)?;
        let time_unit = raw.time_unit.unwrap_or(1.0);
        check_positive("time_unit", time_unit)?;
        let inertia = raw.inertia.unwrap_or(1.0);
        check_positive("inertia", inertia)?;
        let transition_dynamics_order = raw.transition_dynamics_order.unwrap_or(1);
        check_positive_int("transition_dynamics_order", transition_dynamics_order)?;
        let state_space_max = raw.state_space_max.unwrap_or(10.0);
        check_positive("state_space_max", state_space_max)?;
        let action_space_max = raw.action_space_max.unwrap_or(1.0);
        check_positive("action_space_max", action_space_max)?;
        let action_loss_weight = raw.action_loss_weight.unwrap_or(0.0);
        check_non_negative("action_loss_weight", action_loss_weight)?;
        if !discrete {
            for &c in &target_point {
                if c.abs() > state_space_max {
                    return Err(violation("target_point lies outside the state box"));
                }
            }
            if target_radius >= state_space_max {
                return Err(violation("target_radius must be smaller than state_space_max"));
            }
        }

        let image_representations = raw.image_representations.unwrap_or(false);
        let image_width = raw.image_width.unwrap_or(100);
        let image_height = raw.image_height.unwrap_or(100);
        check_positive_int("image_width", image_width)?;
        check_positive_int("image_height", image_height)?;
        let mut image_transforms = raw.image_transforms.unwrap_or_default();
        image_transforms.sort_unstable();
        image_transforms.dedup();
        let image_sh_quant = raw.image_sh_quant.unwrap_or(1);
        check_positive_int("image_sh_quant", image_sh_quant)?;
        let image_ro_quant = raw.image_ro_quant.unwrap_or(1);
        check_positive_int("image_ro_quant", image_ro_quant)?;
        let image_scale_range = raw.image_scale_range.unwrap_or((0.5, 1.5));
        let (lo, hi) = image_scale_range;
        // Circumradius is 0.25 * min(w, h) at scale 1, so scale 2 just fits.
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi && hi <= 2.0) {
            return Err(violation(format!(
                "image_scale_range must satisfy 0 < lo <= hi <= 2, got ({lo}, {hi})"
            )));
        }
        if !image_representations && !image_transforms.is_empty() {
            return Err(ConfigError::IncompatibleDimensions(
                "image_transforms set without image_representations".into(),
            ));
        }
        if image_representations && !discrete && total_dim != 2 {
            return Err(ConfigError::IncompatibleDimensions(format!(
                "image observations need a 2-D continuous state, got {total_dim} dimensions"
            )));
        }

        Ok(EnvConfig {
            state_space_type,
            seed: raw.seed.unwrap_or(0),
            state_space_size,
            action_space_size,
            diameter,
            terminal_state_density,
            reward_density,
            reward_dist,
            state_space_dim,
            action_space_dim,
            irrelevant_state_space_dim,
            target_point,
            target_radius,
            time_unit,
            inertia,
            transition_dynamics_order,
            state_space_max,
            action_space_max,
            action_loss_weight,
            delay,
            sequence_length,
            make_denser,
            transition_noise,
            reward_noise,
            reward_scale,
            reward_shift,
            term_state_reward,
            irrelevant_features,
            max_episode_steps,
            image_representations,
            image_width,
            image_height,
            image_transforms,
            image_sh_quant,
            image_ro_quant,
            image_scale_range,
        })
    }

    /// A vanilla discrete config with `|S| = state_space_size`.
    pub fn discrete(state_space_size: usize) -> Self {
        let doc = serde_json::json!({
            "state_space_type": "discrete",
            "state_space_size": state_space_size,
        });
        Self::validate_and_default(&doc).expect("vanilla discrete config is valid")
    }

    /// A vanilla continuous config with `dim` relevant dimensions.
    pub fn continuous(dim: usize) -> Self {
        let doc = serde_json::json!({
            "state_space_type": "continuous",
            "state_space_dim": dim,
        });
        Self::validate_and_default(&doc).expect("vanilla continuous config is valid")
    }

    pub fn is_discrete(&self) -> bool {
        self.state_space_type == StateSpaceType::Discrete
    }

    pub fn terminal_count(&self) -> usize {
        terminal_count(self.state_space_size, self.terminal_state_density)
    }

    /// The config as a JSON value. Object keys come out sorted.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("EnvConfig always serializes")
    }

    /// Canonical text form: sorted keys, pretty-printed, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("EnvConfig always serializes");
        s.push('\n');
        s
    }

    /// Re-validates after applying `key = value` on top of this config.
    pub fn with_override(&self, key: &str, value: Value) -> Result<Self, ConfigError> {
        let mut doc = self.to_value();
        let map = doc.as_object_mut().expect("config serializes to an object");
        if !CONFIG_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        map.insert(key.to_string(), value);
        // Derived sizes must follow structural overrides rather than pin them.
        match key {
            "state_space_size" | "diameter" => {
                map.remove("action_space_size");
            }
            "action_space_size" => {
                map.remove("state_space_size");
            }
            "state_space_dim" | "irrelevant_state_space_dim" | "irrelevant_features" => {
                map.remove("action_space_dim");
                if key == "state_space_dim" {
                    map.remove("target_point");
                }
                if key == "irrelevant_features" {
                    map.remove("irrelevant_state_space_dim");
                }
            }
            _ => {}
        }
        Self::validate_and_default(&doc)
    }
}

fn merge(into: &mut RawConfig, from: RawConfig) {
    macro_rules! take {
        ($($f:ident),* $(,)?) => { $( if from.$f.is_some() { into.$f = from.$f; } )* };
    }
    take!(
        state_space_type,
        seed,
        state_space_size,
        action_space_size,
        diameter,
        terminal_state_density,
        reward_density,
        reward_dist,
        state_space_dim,
        action_space_dim,
        irrelevant_state_space_dim,
        target_point,
        target_radius,
        time_unit,
        inertia,
        transition_dynamics_order,
        state_space_max,
        action_space_max,
        action_loss_weight,
        delay,
        sequence_length,
        make_denser,
        transition_noise,
        reward_noise,
        reward_scale,
        reward_shift,
        term_state_reward,
        irrelevant_features,
        max_episode_steps,
        image_representations,
        image_width,
        image_height,
        image_transforms,
        image_sh_quant,
        image_ro_quant,
        image_scale_range,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn code_sample_config() {
        let cfg = EnvConfig::validate_and_default(&json!({
            "state_space_type": "discrete",
            "action_space_size": 8,
            "delay": 1,
            "sequence_length": 3,
            "reward_density": 0.25,
        }))
        .unwrap();
        assert_eq!(cfg.state_space_size, 8);
        assert_eq!(cfg.action_space_size, 8);
        assert_eq!(cfg.diameter, 1);
        assert_eq!(cfg.delay, 1);
        assert_eq!(cfg.sequence_length, 3);
        assert_eq!(cfg.reward_density, 0.25);
    }

    #[test]
    fn vanilla_defaults() {
        let cfg = EnvConfig::validate_and_default(&json!({
            "state_space_type": "discrete",
            "state_space_size": 8,
        }))
        .unwrap();
        assert_eq!(cfg.delay, 0);
        assert_eq!(cfg.sequence_length, 1);
        assert_eq!(cfg.transition_noise, 0.0);
        assert_eq!(cfg.reward_noise, 0.0);
        assert_eq!(cfg.diameter, 1);
        assert_eq!(cfg.action_space_size, 8);
        assert!(cfg.image_transforms.is_empty());
        assert_eq!(cfg.transition_dynamics_order, 1);
        assert_eq!(cfg.inertia, 1.0);
        assert_eq!(cfg.time_unit, 1.0);
        assert_eq!(cfg.action_loss_weight, 0.0);
        assert_eq!(EnvConfig::validate_and_default(&json!({})).unwrap(), cfg);
    }

    #[test]
    fn diameter_must_divide() {
        let err = EnvConfig::validate_and_default(&json!({"state_space_size": 8, "diameter": 3})).unwrap_err();
        assert!(matches!(err, ConfigError::ConstraintViolation(_)), "{err:?}");
    }

    #[test]
    fn contradicting_sizes_rejected() {
        let err = EnvConfig::validate_and_default(&json!({
            "state_space_size": 8, "action_space_size": 8, "diameter": 2
        }))
        .unwrap_err();
        assert!(matches!(err, ConfigError::IncompatibleDimensions(_)));
        let ok = EnvConfig::validate_and_default(&json!({
            "state_space_size": 8, "action_space_size": 4, "diameter": 2
        }))
        .unwrap();
        assert_eq!(ok.action_space_size, 4);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = EnvConfig::validate_and_default(&json!({"delays": 1})).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("delays".into()));
    }

    #[test]
    fn type_mismatch_names_key() {
        let err = EnvConfig::validate_and_default(&json!({"delay": "one"})).unwrap_err();
        match err {
            ConfigError::TypeMismatch(msg) => assert!(msg.contains("delay")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            EnvConfig::validate_and_default(&json!({"delay": -1})),
            Err(ConfigError::TypeMismatch(_))
        ));
        assert!(matches!(
            EnvConfig::validate_and_default(&json!([1, 2])),
            Err(ConfigError::TypeMismatch(_))
        ));
    }

    #[test]
    fn continuous_images_need_two_dims() {
        let err = EnvConfig::validate_and_default(&json!({
            "state_space_type": "continuous", "state_space_dim": 3, "image_representations": true
        }))
        .unwrap_err();
        assert!(matches!(err, ConfigError::IncompatibleDimensions(_)));
    }

    #[test]
    fn sequence_length_bounded_by_non_terminals() {
        // 8 states, 2 terminal: n = 6 fits, n = 7 does not.
        assert!(EnvConfig::validate_and_default(&json!({"sequence_length": 6})).is_ok());
        assert!(matches!(
            EnvConfig::validate_and_default(&json!({"sequence_length": 7})),
            Err(ConfigError::ConstraintViolation(_))
        ));
    }

    #[test]
    fn terminal_density_keeps_partitions_alive() {
        let err = EnvConfig::validate_and_default(&json!({
            "state_space_size": 4, "diameter": 4, "terminal_state_density": 0.25
        }))
        .unwrap_err();
        assert!(matches!(err, ConfigError::ConstraintViolation(_)));
    }

    #[test]
    fn noise_ranges() {
        assert!(EnvConfig::validate_and_default(&json!({"transition_noise": 1.5})).is_err());
        assert!(EnvConfig::validate_and_default(&json!({"reward_noise": -0.1})).is_err());
        assert!(EnvConfig::validate_and_default(&json!({
            "state_space_type": "continuous", "transition_noise": 1.5
        }))
        .is_ok());
    }

    #[test]
    fn canonical_form_sorted_and_stable() {
        let cfg = EnvConfig::discrete(8);
        let text = cfg.to_canonical_json();
        let reparsed = EnvConfig::from_json_str(&text).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.to_canonical_json(), text);
        let keys: Vec<String> = cfg.to_value().as_object().unwrap().keys().cloned().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(keys.len(), CONFIG_KEYS.len());
    }

    #[test]
    fn reward_dist_forms() {
        let cfg = EnvConfig::validate_and_default(&json!({"reward_dist": {"uniform": [0.5, 2.0]}})).unwrap();
        assert_eq!(cfg.reward_dist, RewardDist::Uniform(0.5, 2.0));
        let cfg = EnvConfig::validate_and_default(&json!({"reward_dist": "constant_one"})).unwrap();
        assert_eq!(cfg.reward_dist, RewardDist::ConstantOne);
    }

    #[test]
    fn override_rederives_sizes() {
        let cfg = EnvConfig::discrete(8);
        let wider = cfg.with_override("state_space_size", json!(12)).unwrap();
        assert_eq!(wider.action_space_size, 12);
        let partite = wider.with_override("diameter", json!(3)).unwrap();
        assert_eq!(partite.action_space_size, 4);
        assert!(cfg.with_override("nope", json!(1)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn canonical_round_trip(
                size_per_part in 1usize..5,
                diameter in 1usize..4,
                delay in 0usize..9,
                rd in 0.0f64..=1.0,
                tn in 0.0f64..=1.0,
                scale in -5.0f64..5.0,
                seed in any::<u64>(),
                denser in any::<bool>(),
            ) {
                let doc = json!({
                    "state_space_size": size_per_part * diameter * 2,
                    "diameter": diameter,
                    "terminal_state_density": 0.0,
                    "delay": delay,
                    "reward_density": rd,
                    "transition_noise": tn,
                    "reward_scale": scale,
                    "seed": seed,
                    "make_denser": denser,
                });
                let cfg = EnvConfig::validate_and_default(&doc).unwrap();
                let again = EnvConfig::from_json_str(&cfg.to_canonical_json()).unwrap();
                prop_assert_eq!(again, cfg);
            }

            #[test]
            fn continuous_round_trip(
                dim in 1usize..4,
                order in 1usize..4,
                tu in 0.01f64..2.0,
                irr in any::<bool>(),
            ) {
                let doc = json!({
                    "state_space_type": "continuous",
                    "state_space_dim": dim,
                    "transition_dynamics_order": order,
                    "time_unit": tu,
                    "irrelevant_features": irr,
                });
                let cfg = EnvConfig::validate_and_default(&doc).unwrap();
                let again = EnvConfig::from_json_str(&cfg.to_canonical_json()).unwrap();
                prop_assert_eq!(again, cfg);
            }
        }
    }
}
