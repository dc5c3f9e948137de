//! Discrete toy MDPs: generation and stepping.
//!
//! Generation builds a partite transition table, picks terminal states,
//! and samples the rewarded state sequences. Stepping keeps a rolling window
//! of the last `sequence_length + delay` states and pays when the window
//! ending `delay` steps back matches a rewarded sequence.

mod dump;
mod sequences;
mod table;

use std::collections::VecDeque;
use std::sync::Arc;

pub use dump::{EnvDump, DUMP_FORMAT};
pub use sequences::{
    compute_reward, enumerate_legal_sequences, legal_sequence_count, rewarded_count, sample_sequences,
    RewardableSequence, RewardableSequenceSet, ENUMERATION_LIMIT,
};
pub use table::TransitionTable;

use crate::config::EnvConfig;
use crate::env::{EnvError, Observation};
use crate::render::{render_discrete, sample_transform, CanvasSpec, ImageGrid, TransformParams};
use crate::rng::{derive_stream, RngStream};

/// The immutable part of a discrete environment.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    config: EnvConfig,
    transitions: TransitionTable,
    irrelevant: Option<TransitionTable>,
    is_terminal: Vec<bool>,
    initial_states: Vec<usize>,
    legal_sequences: u128,
    sequences: RewardableSequenceSet,
}

/// Terminal ids: the highest ids of each partition, taken round-robin
/// starting from the last partition.
pub fn terminal_states(num_states: usize, diameter: usize, count: usize) -> Vec<usize> {
    let per_partition = num_states / diameter;
    let mut taken = vec![0usize; diameter];
    let mut out: Vec<usize> = (0..count)
        .map(|k| {
            let p = diameter - 1 - (k % diameter);
            let id = (p + 1) * per_partition - 1 - taken[p];
            taken[p] += 1;
            id
        })
        .collect();
    out.sort_unstable();
    out
}

impl DiscreteModel {
    /// Generates the environment from the config's own seed.
    pub fn generate(config: &EnvConfig) -> Result<Self, EnvError> {
        Self::generate_with(config, &derive_stream(config.seed, "env-gen", 0))
    }

    pub fn generate_with(config: &EnvConfig, gen_stream: &RngStream) -> Result<Self, EnvError> {
        if !config.is_discrete() {
            return Err(EnvError::WrongStateSpaceType { expected: "discrete" });
        }
        let num_states = config.state_space_size;
        let terminals = terminal_states(num_states, config.diameter, config.terminal_count());
        let mut is_terminal = vec![false; num_states];
        for &t in &terminals {
            is_terminal[t] = true;
        }
        let available = num_states - terminals.len();
        let n = config.sequence_length;
        if n > available {
            return Err(EnvError::InfeasibleSequenceLength { length: n, available });
        }
        if config.reward_density <= 0.0 {
            return Err(EnvError::EmptyRewardSet {
                density: config.reward_density,
            });
        }

        let transitions = TransitionTable::generate(num_states, config.diameter, &mut gen_stream.fork("transitions"));
        let irrelevant = config
            .irrelevant_features
            .then(|| TransitionTable::generate(num_states, config.diameter, &mut gen_stream.fork("irrelevant")));

        let legal = legal_sequence_count(&transitions, &is_terminal, n);
        if legal == 0 {
            return Err(EnvError::NoLegalSequence(n));
        }
        let count = rewarded_count(config.reward_density, legal);
        let sampled = sample_sequences(
            &transitions,
            &is_terminal,
            n,
            count,
            config.reward_dist,
            &mut gen_stream.fork("sequences"),
            &mut gen_stream.fork("sequence-rewards"),
        );
        let initial_states = (0..num_states).filter(|&s| !is_terminal[s]).collect();
        Ok(Self {
            config: config.clone(),
            transitions,
            irrelevant,
            is_terminal,
            initial_states,
            legal_sequences: legal,
            sequences: RewardableSequenceSet::new(n, sampled),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn transitions(&self) -> &TransitionTable {
        &self.transitions
    }

    pub fn irrelevant_transitions(&self) -> Option<&TransitionTable> {
        self.irrelevant.as_ref()
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.is_terminal[state]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| self.is_terminal[s]).collect()
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.is_terminal
    }

    /// Support of the uniform start distribution.
    pub fn initial_states(&self) -> &[usize] {
        &self.initial_states
    }

    pub fn legal_sequence_count(&self) -> u128 {
        self.legal_sequences
    }

    pub fn sequences(&self) -> &RewardableSequenceSet {
        &self.sequences
    }

    pub fn num_states(&self) -> usize {
        self.transitions.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.num_actions()
    }

    /// The same model with different runtime-only settings (noise, reward
    /// shaping and transforms). Structure-defining fields are left alone.
    pub fn with_runtime(&self, runtime: &RuntimeParams) -> Self {
        let mut out = self.clone();
        runtime.apply_to(&mut out.config);
        out
    }
}

/// The config fields that only affect stepping, never generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeParams {
    pub transition_noise: f64,
    pub reward_noise: f64,
    pub make_denser: bool,
}

impl RuntimeParams {
    pub fn of(config: &EnvConfig) -> Self {
        Self {
            transition_noise: config.transition_noise,
            reward_noise: config.reward_noise,
            make_denser: config.make_denser,
        }
    }

    /// Evaluation settings: no noise, sparse rewards.
    pub fn evaluation() -> Self {
        Self {
            transition_noise: 0.0,
            reward_noise: 0.0,
            make_denser: false,
        }
    }

    fn apply_to(&self, config: &mut EnvConfig) {
        config.transition_noise = self.transition_noise;
        config.reward_noise = self.reward_noise;
        config.make_denser = self.make_denser;
    }
}

/// Result of `reset` or `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// The true relevant state after noise.
    pub augmented_state: usize,
}

#[derive(Debug, Clone)]
struct Streams {
    transition: RngStream,
    reward: RngStream,
    reset: RngStream,
    irrelevant_reset: RngStream,
    image: RngStream,
}

impl Streams {
    fn from_run(run: &RngStream) -> Self {
        Self {
            transition: run.fork("transition-noise"),
            reward: run.fork("reward-noise"),
            reset: run.fork("reset"),
            irrelevant_reset: run.fork("irrelevant-reset"),
            image: run.fork("image-transforms"),
        }
    }
}

/// A steppable discrete environment instance.
#[derive(Debug, Clone)]
pub struct DiscreteEnv {
    model: Arc<DiscreteModel>,
    streams: Streams,
    state: usize,
    irrelevant_state: usize,
    history: VecDeque<usize>,
    steps: usize,
    done: bool,
    started: bool,
}

impl DiscreteEnv {
    pub fn new(model: Arc<DiscreteModel>, run_stream: &RngStream) -> Self {
        let window = model.config.sequence_length + model.config.delay;
        Self {
            model,
            streams: Streams::from_run(run_stream),
            state: 0,
            irrelevant_state: 0,
            history: VecDeque::with_capacity(window + 1),
            steps: 0,
            done: false,
            started: false,
        }
    }

    /// Generates from `config` and seeds the runtime from `config.seed`.
    pub fn from_config(config: &EnvConfig) -> Result<Self, EnvError> {
        let model = Arc::new(DiscreteModel::generate(config)?);
        Ok(Self::new(model, &derive_stream(config.seed, "run", 0)))
    }

    /// Replaces the runtime streams. The next episode starts on `reset`.
    pub fn seed(&mut self, run_stream: &RngStream) {
        self.streams = Streams::from_run(run_stream);
        self.started = false;
    }

    pub fn model(&self) -> &Arc<DiscreteModel> {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.model.config
    }

    /// Size of the action space. With irrelevant features the action
    /// encodes `relevant + num_relevant_actions * irrelevant`.
    pub fn num_actions(&self) -> usize {
        let a = self.model.num_actions();
        if self.model.irrelevant.is_some() {
            a * a
        } else {
            a
        }
    }

    /// Size of the flattened observation space used by tabular agents.
    pub fn num_observations(&self) -> usize {
        let s = self.model.num_states();
        if self.model.irrelevant.is_some() {
            s * s
        } else {
            s
        }
    }

    /// Flattened state index: `relevant + |S| * irrelevant`.
    pub fn observation_index(&self) -> usize {
        if self.model.irrelevant.is_some() {
            self.state + self.model.num_states() * self.irrelevant_state
        } else {
            self.state
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn irrelevant_state(&self) -> Option<usize> {
        self.model.irrelevant.as_ref().map(|_| self.irrelevant_state)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Recent relevant states, oldest first.
    pub fn history(&self) -> Vec<usize> {
        self.history.iter().copied().collect()
    }

    pub fn reset(&mut self) -> StepResult {
        let starts = self.model.initial_states();
        self.state = starts[self.streams.reset.index(starts.len())];
        if self.model.irrelevant.is_some() {
            self.irrelevant_state = self.streams.irrelevant_reset.index(self.model.num_states());
        }
        self.history.clear();
        self.history.push_back(self.state);
        self.steps = 0;
        self.done = false;
        self.started = true;
        StepResult {
            observation: self.observe(),
            reward: 0.0,
            done: false,
            augmented_state: self.state,
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::SteppedAfterDone);
        }
        let num_actions = self.num_actions();
        if action >= num_actions {
            return Err(EnvError::ActionOutOfRange { action, num_actions });
        }
        let model = Arc::clone(&self.model);
        let cfg = &model.config;
        let relevant_action = action % model.num_actions();
        let irrelevant_action = action / model.num_actions();

        let mut next = model.transitions.next(self.state, relevant_action);
        if self.streams.transition.uniform() < cfg.transition_noise {
            let k = self.streams.transition.index(model.num_states() - 1);
            next = if k >= next { k + 1 } else { k };
        }
        self.state = next;
        self.steps += 1;
        self.history.push_back(next);
        if self.history.len() > cfg.sequence_length + cfg.delay {
            self.history.pop_front();
        }
        if let Some(irr) = &model.irrelevant {
            self.irrelevant_state = irr.next(self.irrelevant_state, irrelevant_action);
        }

        let window = self.history.make_contiguous();
        let raw = compute_reward(window, self.steps, &model.sequences, cfg.delay, cfg.make_denser);
        let noise = self.streams.reward.standard_normal() * cfg.reward_noise;
        let mut reward = (raw + noise) * cfg.reward_scale + cfg.reward_shift;
        if model.is_terminal[next] {
            reward += cfg.term_state_reward;
            self.done = true;
        }
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            augmented_state: next,
        })
    }

    fn observe(&mut self) -> Observation {
        let cfg = &self.model.config;
        if cfg.image_representations {
            let mut img = self.render_state(self.state);
            if self.model.irrelevant.is_some() {
                img = img.hconcat(&self.render_state(self.irrelevant_state));
            }
            return Observation::Image(img);
        }
        match self.model.irrelevant {
            Some(_) => Observation::Pair {
                relevant: self.state,
                irrelevant: self.irrelevant_state,
            },
            None => Observation::State(self.state),
        }
    }

    fn render_state(&mut self, state: usize) -> ImageGrid {
        let cfg = &self.model.config;
        let canvas = CanvasSpec::from_config(cfg);
        let params = TransformParams::from_config(cfg);
        let draw = sample_transform(&params, state, canvas, &mut self.streams.image);
        render_discrete(state, &draw, canvas).expect("sampled transforms keep the polygon on the canvas")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn cfg(doc: serde_json::Value) -> EnvConfig {
        EnvConfig::validate_and_default(&doc).unwrap()
    }

    fn env(doc: serde_json::Value, run_seed: u64) -> DiscreteEnv {
        let model = Arc::new(DiscreteModel::generate(&cfg(doc)).unwrap());
        DiscreteEnv::new(model, &derive_stream(run_seed, "run", 0))
    }

    #[test]
    fn vanilla_generation_shape() {
        let model = DiscreteModel::generate(&cfg(json!({"state_space_size": 8}))).unwrap();
        assert_eq!(model.terminal_states(), vec![6, 7]);
        assert_eq!(model.num_actions(), 8);
        model.transitions().check_partite_bijection().unwrap();
        assert_eq!(model.initial_states(), &[0, 1, 2, 3, 4, 5]);
        // 6 live single states at density 0.25 -> round(1.5) = 2.
        assert_eq!(model.sequences().len(), 2);
    }

    #[test]
    fn code_sample_sequence_count() {
        let model = DiscreteModel::generate(&cfg(json!({
            "action_space_size": 8, "delay": 1, "sequence_length": 3, "reward_density": 0.25
        })))
        .unwrap();
        assert_eq!(model.legal_sequence_count(), 120);
        assert_eq!(model.sequences().len(), 30);
        for seq in model.sequences().sequences() {
            assert_eq!(seq.states.len(), 3);
            assert!(seq.states.iter().all(|&s| !model.is_terminal(s)));
            assert_eq!(seq.reward, 1.0);
        }
    }

    #[test]
    fn terminal_round_robin() {
        assert_eq!(terminal_states(12, 3, 2), vec![7, 11]);
        assert_eq!(terminal_states(12, 3, 4), vec![3, 7, 10, 11]);
        assert_eq!(terminal_states(8, 1, 2), vec![6, 7]);
        assert_eq!(terminal_states(8, 2, 0), Vec::<usize>::new());
    }

    #[test]
    fn zero_density_is_signalled() {
        let err = DiscreteModel::generate(&cfg(json!({"reward_density": 0.0}))).unwrap_err();
        assert!(matches!(err, EnvError::EmptyRewardSet { .. }));
    }

    #[test]
    fn continuous_config_rejected() {
        let err = DiscreteModel::generate(&EnvConfig::continuous(2)).unwrap_err();
        assert!(matches!(err, EnvError::WrongStateSpaceType { .. }));
    }

    #[test]
    fn reset_is_deterministic_and_avoids_terminals() {
        let mut a = env(json!({}), 5);
        let mut b = env(json!({}), 5);
        for _ in 0..100 {
            let (ra, rb) = (a.reset(), b.reset());
            assert_eq!(ra, rb);
            assert!(!a.model().is_terminal(ra.augmented_state));
            assert_eq!(ra.reward, 0.0);
            assert!(!ra.done);
        }
    }

    #[test]
    fn reset_frequencies() {
        let mut e = env(json!({}), 11);
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            counts[e.reset().augmented_state] += 1;
        }
        assert_eq!(counts[6] + counts[7], 0);
        for &c in &counts[..6] {
            let f = c as f64 / 10_000.0;
            assert!((f - 1.0 / 6.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn step_contract_errors() {
        let mut e = env(json!({"terminal_state_density": 0.0}), 1);
        assert_eq!(e.step(0), Err(EnvError::NotReset));
        e.reset();
        assert_eq!(
            e.step(8),
            Err(EnvError::ActionOutOfRange {
                action: 8,
                num_actions: 8
            })
        );
        let mut e = env(json!({}), 1);
        e.reset();
        let terminal = e.model().terminal_states()[0];
        let a = (0..8).find(|&a| e.model().transitions().next(e.state(), a) == terminal).unwrap();
        assert!(e.step(a).unwrap().done);
        assert_eq!(e.step(0), Err(EnvError::SteppedAfterDone));
    }

    #[test]
    fn noiseless_steps_follow_table() {
        let mut e = env(json!({"terminal_state_density": 0.0}), 2);
        e.reset();
        let mut s = derive_stream(2, "actions", 0);
        for _ in 0..10_000 {
            let a = s.index(8);
            let expect = e.model().transitions().next(e.state(), a);
            assert_eq!(e.step(a).unwrap().augmented_state, expect);
        }
    }

    #[test]
    fn full_noise_never_follows_table() {
        let mut e = env(json!({"terminal_state_density": 0.0, "transition_noise": 1.0}), 3);
        e.reset();
        let mut s = derive_stream(3, "actions", 0);
        for _ in 0..10_000 {
            let a = s.index(8);
            let expect = e.model().transitions().next(e.state(), a);
            assert_ne!(e.step(a).unwrap().augmented_state, expect);
        }
    }

    #[test]
    fn reward_transform_order() {
        let mut e = env(
            json!({"terminal_state_density": 0.0, "reward_scale": 3.0, "reward_shift": -0.5}),
            4,
        );
        e.reset();
        let mut s = derive_stream(4, "actions", 0);
        let mut saw_reward = false;
        for _ in 0..500 {
            let r = e.step(s.index(8)).unwrap().reward;
            assert!(r == -0.5 || r == 2.5, "{r}");
            saw_reward |= r == 2.5;
        }
        assert!(saw_reward);
    }

    #[test]
    fn terminal_bonus_added_last() {
        let mut e = env(json!({"term_state_reward": 10.0, "reward_shift": 1.0}), 6);
        e.reset();
        let terminal = e.model().terminal_states()[0];
        let a = (0..8).find(|&a| e.model().transitions().next(e.state(), a) == terminal).unwrap();
        let r = e.step(a).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, 11.0);
    }

    #[test]
    fn irrelevant_features_observation_and_independence() {
        let base = json!({"terminal_state_density": 0.0, "seed": 3});
        let mut with_irr = base.clone();
        with_irr["irrelevant_features"] = json!(true);
        let mut plain = env(base, 9);
        let mut irr = env(with_irr, 9);
        assert_eq!(irr.num_actions(), 64);
        assert_eq!(irr.num_observations(), 64);
        // Same relevant generation: the irrelevant table uses its own stream.
        assert_eq!(plain.model().transitions(), irr.model().transitions());
        assert_eq!(plain.model().sequences(), irr.model().sequences());
        let r0 = irr.reset();
        assert!(matches!(r0.observation, Observation::Pair { .. }));
        let p0 = plain.reset();
        assert_eq!(p0.augmented_state, r0.augmented_state);
        let mut s = derive_stream(9, "actions", 0);
        for _ in 0..1_000 {
            let a = s.index(8);
            let b = s.index(8);
            let rp = plain.step(a).unwrap();
            let ri = irr.step(a + 8 * b).unwrap();
            assert_eq!(rp.reward, ri.reward);
            assert_eq!(rp.augmented_state, ri.augmented_state);
            assert_eq!(ri.observation.as_state(), Some(rp.augmented_state));
        }
    }

    #[test]
    fn image_observations() {
        let mut e = env(json!({"image_representations": true, "image_width": 40, "image_height": 40}), 1);
        let r = e.reset();
        let img = r.observation.as_image().unwrap();
        assert_eq!((img.width, img.height), (40, 40));
        let expect = render_discrete(r.augmented_state, &Default::default(), CanvasSpec::new(40, 40)).unwrap();
        assert_eq!(img, &expect);

        let mut e = env(
            json!({"image_representations": true, "irrelevant_features": true, "image_width": 40, "image_height": 40,
                   "image_transforms": ["shift", "rotate", "flip", "scale"], "image_ro_quant": 8, "image_sh_quant": 2}),
            1,
        );
        let r = e.reset();
        let img = r.observation.as_image().unwrap();
        assert_eq!((img.width, img.height), (80, 40));
        for _ in 0..50 {
            if e.step(0).unwrap().done {
                e.reset();
            }
        }
    }

    #[test]
    fn runtime_override_keeps_structure() {
        let model = DiscreteModel::generate(&cfg(json!({"transition_noise": 0.3, "make_denser": true}))).unwrap();
        let eval = model.with_runtime(&RuntimeParams::evaluation());
        assert_eq!(eval.transitions(), model.transitions());
        assert_eq!(eval.sequences(), model.sequences());
        assert_eq!(eval.config().transition_noise, 0.0);
        assert!(!eval.config().make_denser);
    }

    #[test]
    fn uniform_reward_dist() {
        let model = DiscreteModel::generate(&cfg(json!({
            "sequence_length": 2, "reward_dist": {"uniform": [2.0, 3.0]}
        })))
        .unwrap();
        for seq in model.sequences().sequences() {
            assert!((2.0..3.0).contains(&seq.reward));
        }
    }
}
