//! Tabular baselines: Q-learning, SARSA and double Q-learning with
//! epsilon-greedy exploration, plus value iteration as a ground-truth
//! oracle for Markov configurations.

mod value_iteration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

pub use value_iteration::{bellman_sweep, value_iteration, value_iteration_on, ValueIterationResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("index out of range: state {state} / action {action} for a {num_states}x{num_actions} table")]
    IndexOutOfRange {
        state: usize,
        action: usize,
        num_states: usize,
        num_actions: usize,
    },
    #[error("value iteration needs a Markov configuration (delay 0, sequence length 1); got delay {delay}, sequence length {sequence_length}")]
    NotMarkovConfiguration { delay: usize, sequence_length: usize },
    #[error("value iteration did not reach tolerance {tol} in {iterations} sweeps")]
    NotConverged { tol: f64, iterations: usize },
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    QLearning,
    Sarsa,
    DoubleQ,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::QLearning => "q_learning",
            AgentKind::Sarsa => "sarsa",
            AgentKind::DoubleQ => "double_q",
        }
    }
}

/// Learning hyperparameters. The discount lives here, not in the
/// environment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    /// Steps over which epsilon decays linearly. `None` means half of the
    /// run's training budget.
    pub epsilon_decay_steps: Option<usize>,
    pub initial_q: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.99,
            epsilon_initial: 1.0,
            epsilon_final: 0.01,
            epsilon_decay_steps: None,
            initial_q: 0.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        for e in [self.epsilon_initial, self.epsilon_final] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon values must lie in [0, 1]");
            }
        }
        if !self.initial_q.is_finite() {
            return bad("initial_q must be finite");
        }
        Ok(())
    }

    /// Linear decay from `epsilon_initial` to `epsilon_final`.
    pub fn epsilon_at(&self, step: usize, decay_steps: usize) -> f64 {
        if decay_steps == 0 || step >= decay_steps {
            return self.epsilon_final;
        }
        let frac = step as f64 / decay_steps as f64;
        self.epsilon_initial + (self.epsilon_final - self.epsilon_initial) * frac
    }
}

/// Dense action-value table with visit counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QTableDump", into = "QTableDump")]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct QTableDump {
    num_states: usize,
    num_actions: usize,
    values: Vec<Vec<f64>>,
    visits: Vec<Vec<u64>>,
}

impl From<QTable> for QTableDump {
    fn from(q: QTable) -> Self {
        QTableDump {
            num_states: q.num_states,
            num_actions: q.num_actions,
            values: q.values.chunks(q.num_actions).map(<[f64]>::to_vec).collect(),
            visits: q.visits.chunks(q.num_actions).map(<[u64]>::to_vec).collect(),
        }
    }
}

impl TryFrom<QTableDump> for QTable {
    type Error = String;

    fn try_from(d: QTableDump) -> Result<Self, String> {
        let shape_ok = |lens: Vec<usize>| lens.len() == d.num_states && lens.iter().all(|&l| l == d.num_actions);
        if !shape_ok(d.values.iter().map(Vec::len).collect()) || !shape_ok(d.visits.iter().map(Vec::len).collect()) {
            return Err("Q-table rows do not match the declared shape".into());
        }
        let values: Vec<f64> = d.values.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err("Q-table entries must be finite".into());
        }
        Ok(QTable {
            num_states: d.num_states,
            num_actions: d.num_actions,
            values,
            visits: d.visits.into_iter().flatten().collect(),
        })
    }
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize, initial: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![initial; num_states * num_actions],
            visits: vec![0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn check(&self, state: usize, action: usize) -> Result<usize, AgentError> {
        if state >= self.num_states || action >= self.num_actions {
            return Err(AgentError::IndexOutOfRange {
                state,
                action,
                num_states: self.num_states,
                num_actions: self.num_actions,
            });
        }
        Ok(state * self.num_actions + action)
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, v: f64) {
        self.values[state * self.num_actions + action] = v;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.num_actions + action]
    }

    pub fn max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index maximiser.
    pub fn argmax_first(&self, state: usize) -> usize {
        argmax_first(self.row(state))
    }

    /// Uniformly random maximiser.
    pub fn argmax_random(&self, state: usize, rng: &mut RngStream) -> usize {
        argmax_random(self.row(state), rng)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("Q-table serializes");
        s.push('\n');
        s
    }
}

pub fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_random(row: &[f64], rng: &mut RngStream) -> usize {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..row.len()).filter(|&i| row[i] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.index(ties.len())]
    }
}

/// `Q[s,a] += alpha * (r + gamma * max_a' Q[s',a'] * (1 - done) - Q[s,a])`.
#[allow(clippy::too_many_arguments)]
pub fn q_learning_update(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    done: bool,
    alpha: f64,
    gamma: f64,
) -> Result<(), AgentError> {
    let idx = q.check(state, action)?;
    q.check(next_state, 0)?;
    let bootstrap = if done { 0.0 } else { q.max(next_state) };
    q.values[idx] += alpha * (reward + gamma * bootstrap - q.values[idx]);
    q.visits[idx] += 1;
    Ok(())
}

/// On-policy update bootstrapping from the action actually chosen next.
#[allow(clippy::too_many_arguments)]
pub fn sarsa_update(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    next_action: usize,
    done: bool,
    alpha: f64,
    gamma: f64,
) -> Result<(), AgentError> {
    let idx = q.check(state, action)?;
    let next_idx = q.check(next_state, next_action)?;
    let bootstrap = if done { 0.0 } else { q.values[next_idx] };
    q.values[idx] += alpha * (reward + gamma * bootstrap - q.values[idx]);
    q.visits[idx] += 1;
    Ok(())
}

/// Double Q-learning step. `update_first` picks which table learns; the
/// learner selects the next action by its own argmax and the other table
/// supplies that action's value.
#[allow(clippy::too_many_arguments)]
pub fn double_q_update(
    first: &mut QTable,
    second: &mut QTable,
    update_first: bool,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    done: bool,
    alpha: f64,
    gamma: f64,
) -> Result<(), AgentError> {
    let (learner, evaluator) = if update_first { (first, &*second) } else { (second, &*first) };
    let idx = learner.check(state, action)?;
    learner.check(next_state, 0)?;
    let bootstrap = if done {
        0.0
    } else {
        evaluator.get(next_state, learner.argmax_first(next_state))
    };
    learner.values[idx] += alpha * (reward + gamma * bootstrap - learner.values[idx]);
    learner.visits[idx] += 1;
    Ok(())
}

/// One transition as seen by a learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// The action the behaviour policy will take in `next_state`, if the
    /// episode continues. SARSA needs it; the others ignore it.
    pub next_action: Option<usize>,
    pub done: bool,
}

/// An epsilon-greedy tabular learner.
#[derive(Debug, Clone)]
pub struct TabularAgent {
    kind: AgentKind,
    config: AgentConfig,
    decay_steps: usize,
    q: QTable,
    q2: Option<QTable>,
    explore: RngStream,
    ties: RngStream,
    coins: RngStream,
    steps: usize,
}

impl TabularAgent {
    pub fn new(
        kind: AgentKind,
        config: AgentConfig,
        num_states: usize,
        num_actions: usize,
        total_steps: usize,
        stream: &RngStream,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let q = QTable::new(num_states, num_actions, config.initial_q);
        let q2 = (kind == AgentKind::DoubleQ).then(|| q.clone());
        Ok(Self {
            kind,
            config,
            decay_steps: config.epsilon_decay_steps.unwrap_or(total_steps / 2),
            q,
            q2,
            explore: stream.fork("explore"),
            ties: stream.fork("ties"),
            coins: stream.fork("double-q-coins"),
            steps: 0,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// The table the greedy policy reads. For double Q-learning this is the
    /// sum of both tables.
    pub fn q_table(&self) -> QTable {
        match &self.q2 {
            None => self.q.clone(),
            Some(q2) => {
                let mut sum = self.q.clone();
                for (v, w) in sum.values.iter_mut().zip(&q2.values) {
                    *v += w;
                }
                for (v, w) in sum.visits.iter_mut().zip(&q2.visits) {
                    *v += w;
                }
                sum
            }
        }
    }

    pub fn tables(&self) -> (&QTable, Option<&QTable>) {
        (&self.q, self.q2.as_ref())
    }

    /// Swaps the coin stream, used to check that neither table is favoured.
    pub fn set_coin_stream(&mut self, stream: RngStream) {
        self.coins = stream;
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon_at(self.steps, self.decay_steps)
    }

    fn acting_row(&self, state: usize) -> Vec<f64> {
        match &self.q2 {
            None => self.q.row(state).to_vec(),
            Some(q2) => self.q.row(state).iter().zip(q2.row(state)).map(|(a, b)| a + b).collect(),
        }
    }

    /// Epsilon-greedy behaviour action.
    pub fn act(&mut self, state: usize) -> usize {
        let eps = self.epsilon();
        if self.explore.uniform() < eps {
            self.explore.index(self.q.num_actions())
        } else {
            let row = self.acting_row(state);
            argmax_random(&row, &mut self.ties)
        }
    }

    /// Greedy action with random tie-breaking from `ties`.
    pub fn greedy(&self, state: usize, ties: &mut RngStream) -> usize {
        argmax_random(&self.acting_row(state), ties)
    }

    pub fn learn(&mut self, t: &Transition) -> Result<(), AgentError> {
        let (alpha, gamma) = (self.config.learning_rate, self.config.discount);
        match self.kind {
            AgentKind::QLearning => {
                q_learning_update(&mut self.q, t.state, t.action, t.reward, t.next_state, t.done, alpha, gamma)?
            }
            AgentKind::Sarsa => {
                let next_action = match (t.done, t.next_action) {
                    (true, _) => 0,
                    (false, Some(a)) => a,
                    // Truncated without a chosen follow-up: bootstrap greedily.
                    (false, None) => self.q.argmax_first(t.next_state),
                };
                sarsa_update(&mut self.q, t.state, t.action, t.reward, t.next_state, next_action, t.done, alpha, gamma)?
            }
            AgentKind::DoubleQ => {
                let coin = self.coins.coin();
                let q2 = self.q2.as_mut().expect("double Q keeps two tables");
                double_q_update(&mut self.q, q2, coin, t.state, t.action, t.reward, t.next_state, t.done, alpha, gamma)?
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn q_update_hand_value() {
        let mut q = QTable::new(2, 2, 0.0);
        q_learning_update(&mut q, 0, 1, 1.0, 1, false, 0.5, 0.9).unwrap();
        assert_eq!(q.get(0, 1), 0.5);
        assert_eq!(q.visits(0, 1), 1);
    }

    #[test]
    fn terminal_update_ignores_successor() {
        let mut q = QTable::new(2, 2, 0.0);
        q.set(1, 0, 100.0);
        q_learning_update(&mut q, 0, 0, 2.0, 1, true, 1.0, 0.9).unwrap();
        assert_eq!(q.get(0, 0), 2.0);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut q = QTable::new(2, 2, 0.3);
        let before = q.clone();
        q_learning_update(&mut q, 0, 0, 5.0, 1, false, 0.0, 0.9).unwrap();
        sarsa_update(&mut q, 0, 0, 5.0, 1, 1, false, 0.0, 0.9).unwrap();
        assert_eq!(q.values, before.values);
        let (mut a, mut b) = (before.clone(), before.clone());
        double_q_update(&mut a, &mut b, true, 0, 0, 5.0, 1, false, 0.0, 0.9).unwrap();
        double_q_update(&mut a, &mut b, false, 0, 0, 5.0, 1, false, 0.0, 0.9).unwrap();
        assert_eq!(a.values, before.values);
        assert_eq!(b.values, before.values);
    }

    #[test]
    fn index_errors() {
        let mut q = QTable::new(2, 2, 0.0);
        assert!(matches!(
            q_learning_update(&mut q, 2, 0, 0.0, 0, false, 0.1, 0.9),
            Err(AgentError::IndexOutOfRange { .. })
        ));
        assert!(q_learning_update(&mut q, 0, 0, 0.0, 5, false, 0.1, 0.9).is_err());
        assert!(sarsa_update(&mut q, 0, 0, 0.0, 1, 2, false, 0.1, 0.9).is_err());
    }

    #[test]
    fn sarsa_on_greedy_action_matches_q_learning() {
        let mut base = QTable::new(3, 3, 0.0);
        let mut s = derive_stream(1, "q", 0);
        for v in base.values.iter_mut() {
            *v = s.uniform();
        }
        let greedy = base.argmax_first(2);
        let mut a = base.clone();
        let mut b = base.clone();
        q_learning_update(&mut a, 0, 1, 0.7, 2, false, 0.3, 0.95).unwrap();
        sarsa_update(&mut b, 0, 1, 0.7, 2, greedy, false, 0.3, 0.95).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn double_q_symmetric_start_matches_q_learning() {
        // Two states, two actions. With identical tables, whichever table
        // learns produces the Q-learning target, so the averaged table
        // equals half the Q-learning increment on either coin.
        let mut base = QTable::new(2, 2, 0.0);
        base.set(1, 0, 0.4);
        base.set(1, 1, 0.9);
        let mut plain = base.clone();
        q_learning_update(&mut plain, 0, 0, 1.0, 1, false, 0.5, 0.8).unwrap();
        for coin in [true, false] {
            let (mut a, mut b) = (base.clone(), base.clone());
            double_q_update(&mut a, &mut b, coin, 0, 0, 1.0, 1, false, 0.5, 0.8).unwrap();
            let learned = if coin { a.get(0, 0) } else { b.get(0, 0) };
            assert_eq!(learned, plain.get(0, 0));
            let expected_mean = 0.5 * (learned + 0.0);
            assert_eq!(0.5 * (a.get(0, 0) + b.get(0, 0)), expected_mean);
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig::default();
        assert_eq!(cfg.epsilon_at(0, 100), 1.0);
        assert!((cfg.epsilon_at(50, 100) - 0.505).abs() < 1e-12);
        assert_eq!(cfg.epsilon_at(100, 100), 0.01);
        assert_eq!(cfg.epsilon_at(10_000, 100), 0.01);
    }

    #[test]
    fn greedy_with_optimism_never_picks_below_max() {
        let cfg = AgentConfig {
            epsilon_initial: 0.0,
            epsilon_final: 0.0,
            initial_q: 5.0,
            ..AgentConfig::default()
        };
        let mut agent = TabularAgent::new(AgentKind::QLearning, cfg, 4, 3, 1000, &derive_stream(0, "a", 0)).unwrap();
        let mut s = derive_stream(0, "trace", 0);
        let mut state = 0;
        for _ in 0..2_000 {
            let a = agent.act(state);
            let row = agent.q_table().row(state).to_vec();
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(row[a], best);
            let next = s.index(4);
            agent
                .learn(&Transition {
                    state,
                    action: a,
                    reward: s.uniform() - 0.5,
                    next_state: next,
                    next_action: None,
                    done: false,
                })
                .unwrap();
            state = next;
        }
    }

    #[test]
    fn ties_broken_uniformly() {
        let mut s = derive_stream(0, "ties", 0);
        let row = [1.0, 3.0, 3.0, 0.0, 3.0];
        let mut counts = [0usize; 5];
        for _ in 0..3_000 {
            counts[argmax_random(&row, &mut s)] += 1;
        }
        assert_eq!(counts[0] + counts[3], 0);
        assert!(counts[1] > 900 && counts[2] > 900 && counts[4] > 900);
        assert_eq!(argmax_first(&row), 1);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = AgentConfig {
            learning_rate: 0.0,
            ..AgentConfig::default()
        };
        assert!(TabularAgent::new(AgentKind::Sarsa, cfg, 2, 2, 10, &derive_stream(0, "a", 0)).is_err());
        let cfg = AgentConfig {
            discount: 1.5,
            ..AgentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn q_table_json_round_trip() {
        let mut q = QTable::new(3, 2, 0.0);
        q_learning_update(&mut q, 1, 1, 0.25, 2, false, 0.5, 0.9).unwrap();
        let back: QTable = serde_json::from_str(&q.to_json()).unwrap();
        assert_eq!(back, q);
        assert!(serde_json::from_str::<QTable>(r#"{"num_states":1,"num_actions":2,"values":[[0.0]],"visits":[[0,0]]}"#).is_err());
    }
}
