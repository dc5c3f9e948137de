use super::{argmax_first, AgentError, QTable};
use crate::discrete::{DiscreteModel, TransitionTable};

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    /// Greedy policy; ties go to the lowest action index.
    pub policy: Vec<usize>,
    pub q: QTable,
    pub sweeps: usize,
    pub residual: f64,
}

/// Expected one-step return of every action in `state` given `values`.
fn action_values(
    state: usize,
    values: &[f64],
    table: &TransitionTable,
    is_terminal: &[bool],
    entry_reward: &dyn Fn(usize) -> f64,
    transition_noise: f64,
    gamma: f64,
) -> Vec<f64> {
    let n = table.num_states();
    let backup = |s: usize| {
        let future = if is_terminal[s] { 0.0 } else { gamma * values[s] };
        entry_reward(s) + future
    };
    let total: f64 = if transition_noise > 0.0 && n > 1 { (0..n).map(backup).sum() } else { 0.0 };
    table
        .row(state)
        .iter()
        .map(|&intended| {
            let hit = backup(intended);
            if transition_noise > 0.0 && n > 1 {
                let others = (total - hit) / (n - 1) as f64;
                (1.0 - transition_noise) * hit + transition_noise * others
            } else {
                hit
            }
        })
        .collect()
}

/// One synchronous Bellman optimality backup. Terminal states keep value 0.
pub fn bellman_sweep(
    values: &[f64],
    table: &TransitionTable,
    is_terminal: &[bool],
    entry_reward: &dyn Fn(usize) -> f64,
    transition_noise: f64,
    gamma: f64,
) -> Vec<f64> {
    (0..table.num_states())
        .map(|s| {
            if is_terminal[s] {
                0.0
            } else {
                action_values(s, values, table, is_terminal, entry_reward, transition_noise, gamma)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// Value iteration on an explicit table. `entry_reward(s)` is the expected
/// reward for a step that lands in `s`; off-target transitions are spread
/// uniformly over the other states with total mass `transition_noise`.
pub fn value_iteration_on(
    table: &TransitionTable,
    is_terminal: &[bool],
    entry_reward: &dyn Fn(usize) -> f64,
    transition_noise: f64,
    gamma: f64,
    tol: f64,
) -> Result<ValueIterationResult, AgentError> {
    let n = table.num_states();
    let mut values = vec![0.0; n];
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while residual > tol {
        if sweeps == MAX_SWEEPS {
            return Err(AgentError::NotConverged { tol, iterations: sweeps });
        }
        let next = bellman_sweep(&values, table, is_terminal, entry_reward, transition_noise, gamma);
        residual = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        sweeps += 1;
    }
    let mut q = QTable::new(n, table.num_actions(), 0.0);
    let mut policy = vec![0; n];
    for s in 0..n {
        if is_terminal[s] {
            continue;
        }
        let row = action_values(s, &values, table, is_terminal, entry_reward, transition_noise, gamma);
        policy[s] = argmax_first(&row);
        for (a, v) in row.into_iter().enumerate() {
            q.set(s, a, v);
        }
    }
    Ok(ValueIterationResult {
        values,
        policy,
        q,
        sweeps,
        residual,
    })
}

/// Optimal values of a generated discrete environment. Only defined when
/// rewards depend on the current step alone.
pub fn value_iteration(model: &DiscreteModel, gamma: f64, tol: f64) -> Result<ValueIterationResult, AgentError> {
    let cfg = model.config();
    if cfg.delay != 0 || cfg.sequence_length != 1 {
        return Err(AgentError::NotMarkovConfiguration {
            delay: cfg.delay,
            sequence_length: cfg.sequence_length,
        });
    }
    let seqs = model.sequences();
    let entry_reward = |s: usize| {
        let raw = match seqs.reward_of(&[s]) {
            Some(_) if cfg.make_denser => 1.0,
            Some(r) => r,
            None => 0.0,
        };
        let term = if model.is_terminal(s) { cfg.term_state_reward } else { 0.0 };
        raw * cfg.reward_scale + cfg.reward_shift + term
    };
    value_iteration_on(
        model.transitions(),
        model.terminal_mask(),
        &entry_reward,
        cfg.transition_noise,
        gamma,
        tol,
    )
}
