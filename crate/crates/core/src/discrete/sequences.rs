use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::table::TransitionTable;
use crate::config::RewardDist;
use crate::rng::RngStream;

/// Above this many legal sequences, rewardable ones are drawn by rejection
/// instead of from a full enumeration.
pub const ENUMERATION_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardableSequence {
    pub states: Vec<usize>,
    pub reward: f64,
}

/// The rewarded state sequences, indexed by full sequence and by prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardableSequenceSet {
    length: usize,
    sequences: Vec<RewardableSequence>,
    by_sequence: HashMap<Vec<usize>, f64>,
    prefixes: HashSet<Vec<usize>>,
}

impl RewardableSequenceSet {
    pub fn new(length: usize, sequences: Vec<RewardableSequence>) -> Self {
        let mut by_sequence = HashMap::with_capacity(sequences.len());
        let mut prefixes = HashSet::new();
        for seq in &sequences {
            debug_assert_eq!(seq.states.len(), length);
            by_sequence.insert(seq.states.clone(), seq.reward);
            for i in 1..=length {
                prefixes.insert(seq.states[..i].to_vec());
            }
        }
        Self {
            length,
            sequences,
            by_sequence,
            prefixes,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequences(&self) -> &[RewardableSequence] {
        &self.sequences
    }

    pub fn reward_of(&self, states: &[usize]) -> Option<f64> {
        self.by_sequence.get(states).copied()
    }

    /// Whether `states` is a (possibly full) prefix of some sequence.
    pub fn is_prefix(&self, states: &[usize]) -> bool {
        self.prefixes.contains(states)
    }
}

/// Number of non-repeating, non-terminal sequences of length `n` that the
/// transition graph can realise.
///
/// With `D` partitions, position `k` of a path started in partition `p`
/// lies in partition `(p + k) % D`, and the earlier positions sharing that
/// partition are exactly `k / D` in number. The count of free choices at
/// each position therefore depends only on the start partition.
pub fn legal_sequence_count(table: &TransitionTable, is_terminal: &[bool], n: usize) -> u128 {
    let diameter = table.diameter();
    let live: Vec<u128> = (0..diameter)
        .map(|p| table.partition_members(p).filter(|&s| !is_terminal[s]).count() as u128)
        .collect();
    (0..diameter)
        .map(|start| {
            (0..n)
                .map(|k| live[(start + k) % diameter].saturating_sub((k / diameter) as u128))
                .product::<u128>()
        })
        .sum()
}

/// Every legal sequence, in lexicographic order.
pub fn enumerate_legal_sequences(table: &TransitionTable, is_terminal: &[bool], n: usize) -> Vec<Vec<usize>> {
    fn extend(
        table: &TransitionTable,
        is_terminal: &[bool],
        n: usize,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if path.len() == n {
            out.push(path.clone());
            return;
        }
        let last = *path.last().expect("path starts non-empty");
        let mut next: Vec<usize> = table.row(last).to_vec();
        next.sort_unstable();
        for s in next {
            if !is_terminal[s] && !path.contains(&s) {
                path.push(s);
                extend(table, is_terminal, n, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    for start in 0..table.num_states() {
        if !is_terminal[start] {
            let mut path = vec![start];
            extend(table, is_terminal, n, &mut path, &mut out);
        }
    }
    out
}

/// Uniform draw from the legal sequences, given their per-start-partition
/// counts.
fn random_legal_sequence(
    table: &TransitionTable,
    is_terminal: &[bool],
    n: usize,
    per_start: &[u128],
    total: u128,
    stream: &mut RngStream,
) -> Vec<usize> {
    let diameter = table.diameter();
    // Pick the start partition proportionally to its completions. Totals are
    // below 2^64 whenever this path is reachable in practice.
    let mut pick = u128::from(stream.below(u64::try_from(total).unwrap_or(u64::MAX)));
    let mut start = 0;
    while pick >= per_start[start] {
        pick -= per_start[start];
        start += 1;
    }
    let mut path = Vec::with_capacity(n);
    for k in 0..n {
        let part = (start + k) % diameter;
        let free: Vec<usize> = table
            .partition_members(part)
            .filter(|s| !is_terminal[*s] && !path.contains(s))
            .collect();
        path.push(free[stream.index(free.len())]);
    }
    path
}

fn round_half_up(x: f64) -> u128 {
    (x + 0.5).floor() as u128
}

/// How many sequences to reward for density `rd` over `legal` candidates.
pub fn rewarded_count(reward_density: f64, legal: u128) -> u128 {
    if reward_density <= 0.0 || legal == 0 {
        return 0;
    }
    round_half_up(reward_density * legal as f64).clamp(1, legal)
}

/// Samples the rewarded subset and its per-sequence rewards.
pub fn sample_sequences(
    table: &TransitionTable,
    is_terminal: &[bool],
    n: usize,
    count: u128,
    reward_dist: RewardDist,
    sequence_stream: &mut RngStream,
    reward_stream: &mut RngStream,
) -> Vec<RewardableSequence> {
    let legal = legal_sequence_count(table, is_terminal, n);
    let count = count.min(legal);
    let mut chosen: Vec<Vec<usize>> = if legal <= ENUMERATION_LIMIT {
        let mut all = enumerate_legal_sequences(table, is_terminal, n);
        // Partial Fisher-Yates: the first `count` slots are a uniform subset.
        for i in 0..count as usize {
            let j = i + sequence_stream.index(all.len() - i);
            all.swap(i, j);
        }
        all.truncate(count as usize);
        all
    } else {
        let diameter = table.diameter();
        let per_start: Vec<u128> = (0..diameter)
            .map(|start| {
                (0..n)
                    .map(|k| {
                        let part = (start + k) % diameter;
                        let live = table.partition_members(part).filter(|&s| !is_terminal[s]).count() as u128;
                        live.saturating_sub((k / diameter) as u128)
                    })
                    .product()
            })
            .collect();
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(count as usize);
        while (out.len() as u128) < count {
            let seq = random_legal_sequence(table, is_terminal, n, &per_start, legal, sequence_stream);
            if seen.insert(seq.clone()) {
                out.push(seq);
            }
        }
        out
    };
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|states| {
            let reward = match reward_dist {
                RewardDist::ConstantOne => 1.0,
                RewardDist::Uniform(lo, hi) => reward_stream.uniform_range(lo, hi),
            };
            RewardableSequence { states, reward }
        })
        .collect()
}

/// Raw (unscaled, noise-free) reward for the step that produced the last
/// entry of `history`.
///
/// `history` holds the most recent visited states, oldest first, including
/// the episode's start state; `steps` is the number of steps taken so far.
/// The window examined ends `delay` steps before the newest state. Nothing
/// is paid for windows ending at the start state, so the first `delay`
/// steps of an episode always earn zero.
pub fn compute_reward(
    history: &[usize],
    steps: usize,
    sequences: &RewardableSequenceSet,
    delay: usize,
    make_denser: bool,
) -> f64 {
    if steps <= delay || history.len() <= delay {
        return 0.0;
    }
    let n = sequences.length();
    let end = history.len() - delay;
    if make_denser {
        // Longest matching prefix only.
        for i in (1..=n.min(end)).rev() {
            if sequences.is_prefix(&history[end - i..end]) {
                return i as f64 / n as f64;
            }
        }
        0.0
    } else if end >= n {
        sequences.reward_of(&history[end - n..end]).unwrap_or(0.0)
    } else {
        0.0
    }
}
