//! Point-mass "move to a target" environment with n-th order dynamics.
//!
//! The action sets the highest derivative of the position (divided by the
//! inertia); lower derivatives are advanced with a truncated Taylor series
//! over one time unit. Dense reward is the distance gained towards the
//! target; sparse reward pays once on entering the target radius.

use crate::config::EnvConfig;
use crate::env::{EnvError, Observation};
use crate::render::{render_continuous, CanvasSpec, Scene};
use crate::rng::{derive_stream, RngStream};

/// Attempts made to draw a start point outside the target ball.
const RESET_ATTEMPTS: usize = 100_000;

/// Position and its time derivatives, lowest order first.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeStack {
    derivatives: Vec<Vec<f64>>,
    steps: usize,
}

impl DerivativeStack {
    /// All derivatives zero, `order + 1` levels (position up to the level
    /// the action drives).
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            derivatives: vec![vec![0.0; dim]; order + 1],
            steps: 0,
        }
    }

    pub fn from_levels(derivatives: Vec<Vec<f64>>) -> Self {
        assert!(!derivatives.is_empty());
        let dim = derivatives[0].len();
        assert!(derivatives.iter().all(|d| d.len() == dim), "all levels share one dimensionality");
        Self { derivatives, steps: 0 }
    }

    pub fn dim(&self) -> usize {
        self.derivatives[0].len()
    }

    /// Highest derivative level, the one set directly from the action.
    pub fn order(&self) -> usize {
        self.derivatives.len() - 1
    }

    pub fn position(&self) -> &[f64] {
        &self.derivatives[0]
    }

    pub fn level(&self, i: usize) -> &[f64] {
        &self.derivatives[i]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One integration step with an already clipped action.
    ///
    /// The action divided by `inertia` becomes the top derivative; then
    /// every lower level is replaced by its Taylor expansion
    /// `sum_j s^(i+j) * dt^j / j!`, evaluated on the pre-step values.
    pub fn integrate(&mut self, action: &[f64], inertia: f64, time_unit: f64) -> Result<(), EnvError> {
        if action.len() != self.dim() {
            return Err(EnvError::DimensionMismatch {
                expected: self.dim(),
                got: action.len(),
            });
        }
        let order = self.order();
        for (top, &a) in self.derivatives[order].iter_mut().zip(action) {
            *top = a / inertia;
        }
        let old = self.derivatives.clone();
        for i in (0..order).rev() {
            for k in 0..self.dim() {
                let mut sum = 0.0;
                let mut coeff = 1.0;
                for j in 0..=order - i {
                    if j > 0 {
                        coeff *= time_unit / j as f64;
                    }
                    sum += old[i + j][k] * coeff;
                }
                self.derivatives[i][k] = sum;
            }
        }
        self.steps += 1;
        Ok(())
    }

    /// Clamps each position component to `[-bound, bound]`, zeroing the
    /// higher derivatives of clamped components.
    pub fn clamp(&mut self, bound: f64) {
        for k in 0..self.dim() {
            let x = self.derivatives[0][k];
            if x.abs() > bound {
                self.derivatives[0][k] = x.clamp(-bound, bound);
                for level in self.derivatives.iter_mut().skip(1) {
                    level[k] = 0.0;
                }
            }
        }
    }

    fn position_mut(&mut self) -> &mut [f64] {
        &mut self.derivatives[0]
    }
}

/// Result of `reset` or `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContStepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub distance_to_target: f64,
}

#[derive(Debug, Clone)]
struct Streams {
    state_noise: RngStream,
    irrelevant_noise: RngStream,
    reward_noise: RngStream,
    reset: RngStream,
    irrelevant_reset: RngStream,
}

impl Streams {
    fn from_run(run: &RngStream) -> Self {
        Self {
            state_noise: run.fork("state-noise"),
            irrelevant_noise: run.fork("irrelevant-noise"),
            reward_noise: run.fork("reward-noise"),
            reset: run.fork("reset"),
            irrelevant_reset: run.fork("irrelevant-reset"),
        }
    }
}

/// A steppable continuous environment instance.
///
/// The first `state_space_dim` components are relevant; the remaining
/// `irrelevant_state_space_dim` integrate the same way but never enter the
/// reward or the termination test.
#[derive(Debug, Clone)]
pub struct ContinuousEnv {
    config: EnvConfig,
    streams: Streams,
    stack: DerivativeStack,
    done: bool,
    started: bool,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl ContinuousEnv {
    pub fn new(config: &EnvConfig, run_stream: &RngStream) -> Result<Self, EnvError> {
        if config.is_discrete() {
            return Err(EnvError::WrongStateSpaceType { expected: "continuous" });
        }
        let dim = config.state_space_dim + config.irrelevant_state_space_dim;
        Ok(Self {
            config: config.clone(),
            streams: Streams::from_run(run_stream),
            stack: DerivativeStack::zeros(dim, config.transition_dynamics_order),
            done: false,
            started: false,
        })
    }

    pub fn from_config(config: &EnvConfig) -> Result<Self, EnvError> {
        Self::new(config, &derive_stream(config.seed, "run", 0))
    }

    pub fn seed(&mut self, run_stream: &RngStream) {
        self.streams = Streams::from_run(run_stream);
        self.started = false;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn stack(&self) -> &DerivativeStack {
        &self.stack
    }

    pub fn action_dim(&self) -> usize {
        self.stack.dim()
    }

    pub fn relevant_position(&self) -> &[f64] {
        &self.stack.position()[..self.config.state_space_dim]
    }

    pub fn distance_to_target(&self) -> f64 {
        euclidean(self.relevant_position(), &self.config.target_point)
    }

    /// Uniform start over the box, rejecting points inside the target ball.
    pub fn reset(&mut self) -> Result<ContStepResult, EnvError> {
        let cfg = &self.config;
        let max = cfg.state_space_max;
        let relevant = cfg.state_space_dim;
        let mut start = vec![0.0; self.stack.dim()];
        let mut placed = false;
        for _ in 0..RESET_ATTEMPTS {
            for x in start.iter_mut().take(relevant) {
                *x = self.streams.reset.uniform_range(-max, max);
            }
            if euclidean(&start[..relevant], &cfg.target_point) >= cfg.target_radius {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(EnvError::ResetInfeasible);
        }
        for x in start.iter_mut().skip(relevant) {
            *x = self.streams.irrelevant_reset.uniform_range(-max, max);
        }
        Ok(self.reset_to(&start))
    }

    /// Starts an episode at an explicit position with zero higher
    /// derivatives. A start inside the target radius is already done.
    pub fn reset_to(&mut self, position: &[f64]) -> ContStepResult {
        assert_eq!(position.len(), self.stack.dim(), "start position dimensionality");
        self.stack = DerivativeStack::zeros(self.stack.dim(), self.config.transition_dynamics_order);
        self.stack.position_mut().copy_from_slice(position);
        let distance = self.distance_to_target();
        self.done = distance < self.config.target_radius;
        self.started = true;
        ContStepResult {
            observation: self.observe(),
            reward: 0.0,
            done: self.done,
            distance_to_target: distance,
        }
    }

    pub fn step(&mut self, action: &[f64]) -> Result<ContStepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::SteppedAfterDone);
        }
        if action.len() != self.stack.dim() {
            return Err(EnvError::DimensionMismatch {
                expected: self.stack.dim(),
                got: action.len(),
            });
        }
        let cfg = &self.config;
        let relevant = cfg.state_space_dim;
        let bound = cfg.action_space_max;
        let clipped: Vec<f64> = action.iter().map(|a| a.clamp(-bound, bound)).collect();

        let before = euclidean(&self.stack.position()[..relevant], &cfg.target_point);
        self.stack.integrate(&clipped, cfg.inertia, cfg.time_unit)?;
        let sigma = cfg.transition_noise;
        {
            let pos = &mut self.stack.derivatives[0];
            for x in pos.iter_mut().take(relevant) {
                *x += sigma * self.streams.state_noise.standard_normal();
            }
            for x in pos.iter_mut().skip(relevant) {
                *x += sigma * self.streams.irrelevant_noise.standard_normal();
            }
        }
        self.stack.clamp(cfg.state_space_max);
        let after = euclidean(&self.stack.position()[..relevant], &cfg.target_point);
        let reached = after < cfg.target_radius;

        let mut raw = if cfg.make_denser {
            before - after
        } else if reached {
            1.0
        } else {
            0.0
        };
        let action_norm = clipped[..relevant].iter().map(|a| a * a).sum::<f64>().sqrt();
        raw -= cfg.action_loss_weight * action_norm;
        let noise = cfg.reward_noise * self.streams.reward_noise.standard_normal();
        let mut reward = (raw + noise) * cfg.reward_scale + cfg.reward_shift;
        if reached {
            reward += cfg.term_state_reward;
        }
        self.done = reached || self.stack.steps() >= cfg.max_episode_steps;
        Ok(ContStepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            distance_to_target: after,
        })
    }

    fn observe(&self) -> Observation {
        if self.config.image_representations {
            let scene = Scene {
                agent: self.stack.position(),
                target: &self.config.target_point,
                target_radius: self.config.target_radius,
                terminals: &[],
                state_max: self.config.state_space_max,
            };
            let img = render_continuous(&scene, CanvasSpec::from_config(&self.config))
                .expect("config validation guarantees a 2-D scene");
            Observation::Image(img)
        } else {
            Observation::Vector(self.stack.position().to_vec())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cfg(doc: serde_json::Value) -> EnvConfig {
        let mut doc = doc;
        doc["state_space_type"] = json!("continuous");
        EnvConfig::validate_and_default(&doc).unwrap()
    }

    #[test]
    fn first_order_step() {
        let mut s = DerivativeStack::zeros(2, 1);
        s.integrate(&[1.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(s.position(), &[1.0, 0.0]);
    }

    #[test]
    fn second_order_hand_value() {
        let mut s = DerivativeStack::zeros(1, 2);
        s.integrate(&[4.0], 2.0, 0.5).unwrap();
        assert_eq!(s.level(2), &[2.0]);
        assert_eq!(s.level(1), &[1.0]);
        assert_eq!(s.position(), &[0.25]);
    }

    #[test]
    fn zero_action_fixed_point() {
        for order in 1..5 {
            let mut s = DerivativeStack::zeros(3, order);
            let before = s.clone();
            s.integrate(&[0.0; 3], 1.3, 0.7).unwrap();
            assert_eq!(s.derivatives, before.derivatives);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut s = DerivativeStack::zeros(2, 1);
        assert_eq!(
            s.integrate(&[1.0], 1.0, 1.0),
            Err(EnvError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn clamp_zeroes_higher_derivatives() {
        let mut s = DerivativeStack::from_levels(vec![vec![9.5, 0.0], vec![2.0, 1.0], vec![0.0, 0.0]]);
        s.integrate(&[0.0, 0.0], 1.0, 1.0).unwrap();
        s.clamp(10.0);
        assert_eq!(s.position(), &[10.0, 1.0]);
        assert_eq!(s.level(1), &[0.0, 1.0]);
    }

    #[test]
    fn dense_reward_is_distance_gained() {
        let c = cfg(json!({"make_denser": true, "action_space_max": 5.0}));
        let mut env = ContinuousEnv::from_config(&c).unwrap();
        env.reset_to(&[3.0, 4.0]);
        let r = env.step(&[-3.0, -1.0]).unwrap();
        assert_eq!(env.relevant_position(), &[0.0, 3.0]);
        assert!((r.reward - 2.0).abs() < 1e-12);
        assert!(!r.done);
    }

    #[test]
    fn start_on_target_is_done() {
        let c = cfg(json!({}));
        let mut env = ContinuousEnv::from_config(&c).unwrap();
        let r = env.reset_to(&[0.0, 0.0]);
        assert!(r.done);
        assert_eq!(env.step(&[0.0, 0.0]), Err(EnvError::SteppedAfterDone));
    }

    #[test]
    fn sparse_pays_on_entry_only() {
        let c = cfg(json!({"target_radius": 0.5, "reward_scale": 3.0, "term_state_reward": 1.0}));
        let mut env = ContinuousEnv::from_config(&c).unwrap();
        env.reset_to(&[2.0, 0.0]);
        assert_eq!(env.step(&[-1.0, 0.0]).unwrap().reward, 0.0);
        let r = env.step(&[-1.0, 0.0]).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, 4.0);
    }

    #[test]
    fn episode_cap() {
        let c = cfg(json!({"max_episode_steps": 5}));
        let mut env = ContinuousEnv::from_config(&c).unwrap();
        env.reset_to(&[5.0, 5.0]);
        for i in 0..5 {
            assert_eq!(env.step(&[0.0, 0.0]).unwrap().done, i == 4);
        }
    }

    #[test]
    fn reset_avoids_target_and_stays_in_box() {
        let c = cfg(json!({"target_radius": 3.0, "state_space_max": 10.0}));
        let mut env = ContinuousEnv::from_config(&c).unwrap();
        for _ in 0..10_000 {
            let r = env.reset().unwrap();
            assert!(r.distance_to_target >= 3.0);
            assert!(!r.done);
            assert!(env.relevant_position().iter().all(|x| (-10.0..=10.0).contains(x)));
        }
    }

    #[test]
    fn reset_deterministic() {
        let c = cfg(json!({"seed": 4}));
        let mut a = ContinuousEnv::from_config(&c).unwrap();
        let mut b = ContinuousEnv::from_config(&c).unwrap();
        for _ in 0..10 {
            assert_eq!(a.reset().unwrap(), b.reset().unwrap());
        }
    }

    #[test]
    fn action_clipping_equivalence() {
        let c = cfg(json!({"make_denser": true, "action_space_max": 0.5, "action_loss_weight": 0.3}));
        let mut a = ContinuousEnv::from_config(&c).unwrap();
        let mut b = ContinuousEnv::from_config(&c).unwrap();
        a.reset().unwrap();
        b.reset().unwrap();
        for _ in 0..20 {
            let ra = a.step(&[3.0, -7.0]).unwrap();
            let rb = b.step(&[0.5, -0.5]).unwrap();
            assert_eq!(ra, rb);
            if ra.done {
                break;
            }
        }
    }

    #[test]
    fn irrelevant_dims_do_not_touch_relevant_trajectory() {
        let base = json!({"make_denser": true, "transition_noise": 0.1, "reward_noise": 0.2, "seed": 8});
        let mut with = base.clone();
        with["irrelevant_features"] = json!(true);
        let mut plain = ContinuousEnv::from_config(&cfg(base)).unwrap();
        let mut irr = ContinuousEnv::from_config(&cfg(with)).unwrap();
        assert_eq!(irr.action_dim(), 4);
        plain.reset().unwrap();
        irr.reset().unwrap();
        assert_eq!(plain.relevant_position(), irr.relevant_position());
        for t in 0..100 {
            let a = [0.3 * (t as f64).sin(), -0.2];
            let rp = plain.step(&a).unwrap();
            let ri = irr.step(&[a[0], a[1], 1.0, -1.0]).unwrap();
            assert_eq!(rp.reward, ri.reward);
            assert_eq!(plain.relevant_position(), irr.relevant_position());
            if rp.done {
                break;
            }
        }
    }

    #[test]
    fn image_observation() {
        let c = cfg(json!({"image_representations": true, "image_width": 50, "image_height": 50}));
        let mut env = ContinuousEnv::from_config(&c).unwrap();
        let r = env.reset().unwrap();
        let img = r.observation.as_image().unwrap();
        assert_eq!((img.width, img.height), (50, 50));
    }

    #[test]
    fn discrete_config_rejected() {
        assert!(matches!(
            ContinuousEnv::from_config(&EnvConfig::discrete(8)),
            Err(EnvError::WrongStateSpaceType { .. })
        ));
    }
}
