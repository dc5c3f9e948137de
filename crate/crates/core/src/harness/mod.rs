//! Experiment runner: sweeps a grid of config values across seeds, trains
//! an agent per run, evaluates the greedy policy on a noise-free copy of the
//! environment and aggregates learning-curve metrics.

mod analysis;
pub mod stats;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{AgentConfig, AgentError, AgentKind, QTable, TabularAgent, Transition};
use crate::config::{ConfigError, EnvConfig, CONFIG_KEYS};
use crate::continuous::ContinuousEnv;
use crate::discrete::{DiscreteEnv, DiscreteModel, RuntimeParams};
use crate::env::EnvError;
use crate::rng::{derive_stream, RngStream};

pub use analysis::{analyze_csv, Analysis};
pub use stats::{auc, average_ranks, mean, pearson, sample_std, spearman, StatsError};

pub const DEFAULT_TOTAL_STEPS: usize = 20_000;
pub const DEFAULT_EVAL_INTERVAL: usize = 1_000;
pub const DEFAULT_EVAL_EPISODES: usize = 10;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("policy `{policy}` cannot drive a {space} environment")]
    Unsupported { policy: &'static str, space: &'static str },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// What chooses actions during a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    QLearning,
    Sarsa,
    DoubleQ,
    /// Always action 0 (discrete) or the zero vector (continuous).
    FixedAction,
    /// Uniform over the action space; never learns.
    Random,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::QLearning => "q_learning",
            Policy::Sarsa => "sarsa",
            Policy::DoubleQ => "double_q",
            Policy::FixedAction => "fixed_action",
            Policy::Random => "random",
        }
    }

    pub fn tabular_kind(self) -> Option<AgentKind> {
        match self {
            Policy::QLearning => Some(AgentKind::QLearning),
            Policy::Sarsa => Some(AgentKind::Sarsa),
            Policy::DoubleQ => Some(AgentKind::DoubleQ),
            Policy::FixedAction | Policy::Random => None,
        }
    }
}

/// Training and evaluation budget of one run. Episodes are truncated at the
/// environment config's `max_episode_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub total_steps: usize,
    /// Evaluate after every this many training steps; 0 disables.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            total_steps: DEFAULT_TOTAL_STEPS,
            eval_interval: DEFAULT_EVAL_INTERVAL,
            eval_episodes: DEFAULT_EVAL_EPISODES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One finished episode. `timestep` is the training step count when the
/// episode ended (train) or when the evaluation round ran (eval).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub phase: Phase,
    pub timestep: usize,
    pub episodic_reward: f64,
    pub episode_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    /// Final greedy table for tabular learners.
    pub q_table: Option<QTable>,
}

impl RunOutput {
    pub fn train_rewards(&self) -> Vec<f64> {
        self.phase_rewards(Phase::Train)
    }

    pub fn phase_rewards(&self, phase: Phase) -> Vec<f64> {
        self.records.iter().filter(|r| r.phase == phase).map(|r| r.episodic_reward).collect()
    }

    /// Mean training reward; `None` if no training episode finished.
    pub fn auc(&self) -> Option<f64> {
        auc(&self.train_rewards()).ok()
    }

    /// Mean reward of the last evaluation round, or of the last tenth of
    /// training episodes when the run never evaluated.
    pub fn final_mean(&self) -> Option<f64> {
        let last_eval = self.records.iter().filter(|r| r.phase == Phase::Eval).map(|r| r.timestep).max();
        match last_eval {
            Some(t) => {
                let xs: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.phase == Phase::Eval && r.timestep == t)
                    .map(|r| r.episodic_reward)
                    .collect();
                mean(&xs).ok()
            }
            None => {
                let train = self.train_rewards();
                let k = train.len().div_ceil(10);
                mean(&train[train.len() - k..]).ok()
            }
        }
    }
}

/// The randomness root of run `(seed, point)`.
pub fn run_stream(seed: u64, point: usize) -> RngStream {
    derive_stream(seed, "run", point as u64)
}

/// Trains and evaluates one agent. The environment is generated from
/// `seed`, which replaces the config's own seed.
pub fn run_single(
    config: &EnvConfig,
    policy: Policy,
    agent: &AgentConfig,
    seed: u64,
    protocol: &Protocol,
) -> Result<RunOutput, RunError> {
    run_with_stream(config, policy, agent, seed, protocol, &run_stream(seed, 0))
}

pub fn run_with_stream(
    config: &EnvConfig,
    policy: Policy,
    agent: &AgentConfig,
    seed: u64,
    protocol: &Protocol,
    stream: &RngStream,
) -> Result<RunOutput, RunError> {
    let mut config = config.clone();
    config.seed = seed;
    if config.is_discrete() {
        run_discrete(&config, policy, agent, protocol, stream)
    } else {
        run_continuous(&config, policy, protocol, stream)
    }
}

enum DiscreteActor {
    Tabular(TabularAgent),
    Fixed,
    Random(RngStream),
}

impl DiscreteActor {
    fn act(&mut self, obs: usize, num_actions: usize) -> usize {
        match self {
            DiscreteActor::Tabular(a) => a.act(obs),
            DiscreteActor::Fixed => 0,
            DiscreteActor::Random(s) => s.index(num_actions),
        }
    }

    fn greedy(&mut self, obs: usize, num_actions: usize, ties: &mut RngStream) -> usize {
        match self {
            DiscreteActor::Tabular(a) => a.greedy(obs, ties),
            DiscreteActor::Fixed => 0,
            DiscreteActor::Random(s) => s.index(num_actions),
        }
    }
}

fn run_discrete(
    config: &EnvConfig,
    policy: Policy,
    agent_config: &AgentConfig,
    protocol: &Protocol,
    stream: &RngStream,
) -> Result<RunOutput, RunError> {
    let model = Arc::new(DiscreteModel::generate(config)?);
    run_discrete_model(model, policy, agent_config, protocol, stream)
}

/// Like [`run_single`] on an already generated (for example reloaded)
/// discrete environment. Its config seed is kept.
pub fn run_model(
    model: Arc<DiscreteModel>,
    policy: Policy,
    agent: &AgentConfig,
    seed: u64,
    protocol: &Protocol,
) -> Result<RunOutput, RunError> {
    run_discrete_model(model, policy, agent, protocol, &run_stream(seed, 0))
}

fn run_discrete_model(
    model: Arc<DiscreteModel>,
    policy: Policy,
    agent_config: &AgentConfig,
    protocol: &Protocol,
    stream: &RngStream,
) -> Result<RunOutput, RunError> {
    let eval_model = Arc::new(model.with_runtime(&RuntimeParams::evaluation()));
    let mut env = DiscreteEnv::new(Arc::clone(&model), &stream.fork("env"));
    let mut eval_env = DiscreteEnv::new(eval_model, &stream.fork("eval-env"));
    let mut eval_ties = stream.fork("eval-ties");
    let (num_obs, num_actions) = (env.num_observations(), env.num_actions());
    let mut actor = match policy.tabular_kind() {
        Some(kind) => DiscreteActor::Tabular(TabularAgent::new(
            kind,
            *agent_config,
            num_obs,
            num_actions,
            protocol.total_steps,
            &stream.fork("agent"),
        )?),
        None if policy == Policy::FixedAction => DiscreteActor::Fixed,
        None => DiscreteActor::Random(stream.fork("agent")),
    };
    let sarsa = policy == Policy::Sarsa;
    let cap = model.config().max_episode_steps;
    let mut records = Vec::new();

    if protocol.total_steps > 0 {
        env.reset();
        let mut obs = env.observation_index();
        let mut action = actor.act(obs, num_actions);
        let (mut ep_reward, mut ep_len) = (0.0, 0usize);
        for step in 1..=protocol.total_steps {
            let res = env.step(action)?;
            ep_reward += res.reward;
            ep_len += 1;
            let next_obs = env.observation_index();
            let episode_over = res.done || ep_len >= cap;
            let mut next_action = None;
            if let DiscreteActor::Tabular(agent) = &mut actor {
                if sarsa && !episode_over {
                    next_action = Some(agent.act(next_obs));
                }
                agent.learn(&Transition {
                    state: obs,
                    action,
                    reward: res.reward,
                    next_state: next_obs,
                    next_action,
                    done: res.done,
                })?;
            }
            if episode_over {
                records.push(EpisodeRecord {
                    phase: Phase::Train,
                    timestep: step,
                    episodic_reward: ep_reward,
                    episode_length: ep_len,
                });
                (ep_reward, ep_len) = (0.0, 0);
                env.reset();
                obs = env.observation_index();
                action = actor.act(obs, num_actions);
            } else {
                obs = next_obs;
                action = match next_action {
                    Some(a) => a,
                    None => actor.act(obs, num_actions),
                };
            }
            if protocol.eval_interval > 0 && step % protocol.eval_interval == 0 {
                for _ in 0..protocol.eval_episodes {
                    eval_env.reset();
                    let (mut total, mut len) = (0.0, 0usize);
                    while len < cap {
                        let a = actor.greedy(eval_env.observation_index(), num_actions, &mut eval_ties);
                        let r = eval_env.step(a)?;
                        total += r.reward;
                        len += 1;
                        if r.done {
                            break;
                        }
                    }
                    records.push(EpisodeRecord {
                        phase: Phase::Eval,
                        timestep: step,
                        episodic_reward: total,
                        episode_length: len,
                    });
                }
            }
        }
    }
    let q_table = match actor {
        DiscreteActor::Tabular(a) => Some(a.q_table()),
        _ => None,
    };
    Ok(RunOutput { records, q_table })
}

fn run_continuous(
    config: &EnvConfig,
    policy: Policy,
    protocol: &Protocol,
    stream: &RngStream,
) -> Result<RunOutput, RunError> {
    if policy.tabular_kind().is_some() {
        return Err(RunError::Unsupported {
            policy: policy.name(),
            space: "continuous",
        });
    }
    let mut eval_config = config.clone();
    eval_config.transition_noise = 0.0;
    eval_config.reward_noise = 0.0;
    eval_config.make_denser = false;
    let mut env = ContinuousEnv::new(config, &stream.fork("env"))?;
    let mut eval_env = ContinuousEnv::new(&eval_config, &stream.fork("eval-env"))?;
    let mut actions = stream.fork("agent");
    let dim = env.action_dim();
    let bound = config.action_space_max;
    let act = |rng: &mut RngStream| -> Vec<f64> {
        match policy {
            Policy::Random => (0..dim).map(|_| rng.uniform_range(-bound, bound)).collect(),
            _ => vec![0.0; dim],
        }
    };
    let cap = config.max_episode_steps;
    let mut records = Vec::new();
    if protocol.total_steps > 0 {
        let mut done = env.reset()?.done;
        let (mut ep_reward, mut ep_len) = (0.0, 0usize);
        for step in 1..=protocol.total_steps {
            // The start can never lie inside the target, so `done` here
            // only follows an explicit reset into the goal.
            if !done {
                let res = env.step(&act(&mut actions))?;
                ep_reward += res.reward;
                ep_len += 1;
                done = res.done;
            }
            if done || ep_len >= cap {
                records.push(EpisodeRecord {
                    phase: Phase::Train,
                    timestep: step,
                    episodic_reward: ep_reward,
                    episode_length: ep_len,
                });
                (ep_reward, ep_len) = (0.0, 0);
                done = env.reset()?.done;
            }
            if protocol.eval_interval > 0 && step % protocol.eval_interval == 0 {
                for _ in 0..protocol.eval_episodes {
                    let mut over = eval_env.reset()?.done;
                    let (mut total, mut len) = (0.0, 0usize);
                    while !over && len < cap {
                        let r = eval_env.step(&act(&mut actions))?;
                        total += r.reward;
                        len += 1;
                        over = r.done;
                    }
                    records.push(EpisodeRecord {
                        phase: Phase::Eval,
                        timestep: step,
                        episodic_reward: total,
                        episode_length: len,
                    });
                }
            }
        }
    }
    Ok(RunOutput { records, q_table: None })
}

/// A grid of config overrides crossed with seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    /// Base config document; axis values are written on top of it.
    pub base: Value,
    /// Config key to the values it takes. Points enumerate the cartesian
    /// product in key order, the last key varying fastest.
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
    #[serde(default = "default_policy")]
    pub agent: Policy,
    #[serde(default)]
    pub agent_config: AgentConfig,
    /// Must be non-empty by the time the grid runs.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub protocol: Protocol,
}

fn default_policy() -> Policy {
    Policy::QLearning
}

impl SweepGrid {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let grid = Self::parse_unvalidated(text)?;
        grid.validate()?;
        Ok(grid)
    }

    /// Parses without the semantic checks, for callers that patch fields
    /// (such as the seed list) before validating.
    pub fn parse_unvalidated(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::InvalidGrid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !self.base.is_object() {
            return Err(HarnessError::InvalidGrid("`base` must be a config object".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidGrid("`seeds` must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(HarnessError::InvalidGrid("`seeds` contains duplicates".into()));
        }
        for (key, values) in &self.axes {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone()).into());
            }
            if key == "seed" {
                return Err(HarnessError::InvalidGrid("sweep seeds through `seeds`, not an axis".into()));
            }
            if values.is_empty() {
                return Err(HarnessError::InvalidGrid(format!("axis `{key}` has no values")));
            }
        }
        self.agent_config
            .validate()
            .map_err(|e| HarnessError::InvalidGrid(e.to_string()))?;
        // Every point must be a valid config before anything runs.
        for point in self.points() {
            self.point_config(&point)?;
        }
        Ok(())
    }

    pub fn axis_keys(&self) -> Vec<String> {
        self.axes.keys().cloned().collect()
    }

    /// Axis values of every grid point, in run order.
    pub fn points(&self) -> Vec<Vec<Value>> {
        let mut points = vec![Vec::new()];
        for values in self.axes.values() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v.clone());
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn point_config(&self, point: &[Value]) -> Result<EnvConfig, ConfigError> {
        let mut doc = self.base.clone();
        let map = doc.as_object_mut().expect("validated base is an object");
        for (key, value) in self.axes.keys().zip(point) {
            map.insert(key.clone(), value.clone());
        }
        EnvConfig::validate_and_default(&doc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub point: usize,
    pub seed: u64,
    pub record: EpisodeRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub point: usize,
    pub axes: BTreeMap<String, Value>,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub axes: BTreeMap<String, Value>,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub final_mean: Option<f64>,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_keys: Vec<String>,
    pub seeds: Vec<u64>,
    pub points: Vec<Vec<Value>>,
    pub records: Vec<SweepRecord>,
    pub summary: Vec<PointSummary>,
    pub failures: Vec<RunFailure>,
}

/// Runs every (point, seed) pair on up to `parallelism` threads. Results
/// come back in point-major, seed-minor order whatever the schedule.
pub fn run_sweep(grid: &SweepGrid, parallelism: usize) -> Result<SweepResult, HarnessError> {
    grid.validate()?;
    let points = grid.points();
    let configs: Vec<EnvConfig> = points.iter().map(|p| grid.point_config(p)).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| grid.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let outputs: Vec<Result<RunOutput, RunError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, seed)| {
                run_with_stream(&configs[p], grid.agent, &grid.agent_config, seed, &grid.protocol, &run_stream(seed, p))
            })
            .collect()
    });

    let keys = grid.axis_keys();
    let axes_of = |p: usize| -> BTreeMap<String, Value> { keys.iter().cloned().zip(points[p].iter().cloned()).collect() };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut per_point: Vec<Vec<RunOutput>> = vec![Vec::new(); points.len()];
    for (&(point, seed), out) in jobs.iter().zip(outputs) {
        match out {
            Ok(out) => {
                records.extend(out.records.iter().map(|&record| SweepRecord { point, seed, record }));
                per_point[point].push(out);
            }
            Err(e) => failures.push(RunFailure {
                point,
                axes: axes_of(point),
                seed,
                error: e.to_string(),
            }),
        }
    }
    let summary = per_point
        .iter()
        .enumerate()
        .map(|(p, runs)| summarize_point(axes_of(p), runs))
        .collect();
    Ok(SweepResult {
        axis_keys: keys,
        seeds: grid.seeds.clone(),
        points,
        records,
        summary,
        failures,
    })
}

pub(crate) fn summarize_point(axes: BTreeMap<String, Value>, runs: &[RunOutput]) -> PointSummary {
    let aucs: Vec<f64> = runs.iter().filter_map(RunOutput::auc).collect();
    let finals: Vec<f64> = runs.iter().filter_map(RunOutput::final_mean).collect();
    PointSummary {
        axes,
        auc_mean: mean(&aucs).ok(),
        auc_std: sample_std(&aucs).ok(),
        final_mean: mean(&finals).ok(),
        n_seeds: aucs.len(),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SweepResult {
    /// Wraps one run as an axis-free sweep, so it shares the CSV format.
    pub fn from_single(seed: u64, output: &RunOutput) -> Self {
        let runs = vec![output.clone()];
        SweepResult {
            axis_keys: Vec::new(),
            seeds: vec![seed],
            points: vec![Vec::new()],
            records: output.records.iter().map(|&record| SweepRecord { point: 0, seed, record }).collect(),
            summary: vec![summarize_point(BTreeMap::new(), &runs)],
            failures: Vec::new(),
        }
    }

    /// One row per episode record: axis values, seed, phase, timestep,
    /// episodic_reward, episode_length.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.axis_keys.iter().map(String::as_str).collect();
        header.extend(["seed", "phase", "timestep", "episodic_reward", "episode_length"]);
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = self.points[r.point].iter().map(cell).collect();
            row.push(r.seed.to_string());
            row.push(r.record.phase.as_str().to_string());
            row.push(r.record.timestep.to_string());
            row.push(r.record.episodic_reward.to_string());
            row.push(r.record.episode_length.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn summary_json(&self) -> Value {
        json!({
            "axis_keys": self.axis_keys,
            "seeds": self.seeds,
            "points": self.summary,
            "failures": self.failures,
        })
    }

    /// Mean AUC per point, `None` where every seed failed.
    pub fn auc_means(&self) -> Vec<Option<f64>> {
        self.summary.iter().map(|s| s.auc_mean).collect()
    }
}
