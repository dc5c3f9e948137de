use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

/// Deterministic transition function over a `diameter`-partite graph.
///
/// States are split into `diameter` consecutive blocks of `num_actions`
/// ids. Every action from a state in block `i` leads into block
/// `(i + 1) % diameter`, and the actions of one state hit every state of
/// that block exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableRows", into = "TableRows")]
pub struct TransitionTable {
    num_states: usize,
    num_actions: usize,
    diameter: usize,
    next_state: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TableRows {
    diameter: usize,
    next_state: Vec<Vec<usize>>,
}

impl TryFrom<TableRows> for TransitionTable {
    type Error = String;

    fn try_from(rows: TableRows) -> Result<Self, String> {
        TransitionTable::from_rows(rows.next_state, rows.diameter)
    }
}

impl From<TransitionTable> for TableRows {
    fn from(t: TransitionTable) -> Self {
        TableRows {
            diameter: t.diameter,
            next_state: t.rows().map(<[usize]>::to_vec).collect(),
        }
    }
}

impl TransitionTable {
    /// Samples a table: for each state, the successor block is shuffled and
    /// dealt out to the actions in order.
    pub fn generate(num_states: usize, diameter: usize, stream: &mut RngStream) -> Self {
        assert!(diameter > 0 && num_states % diameter == 0 && num_states > 0);
        let num_actions = num_states / diameter;
        let mut next_state = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            let block = (s / num_actions + 1) % diameter;
            let mut successors: Vec<usize> = (block * num_actions..(block + 1) * num_actions).collect();
            stream.shuffle(&mut successors);
            next_state.extend(successors);
        }
        Self {
            num_states,
            num_actions,
            diameter,
            next_state,
        }
    }

    /// Builds a table from explicit rows, checking the partition invariant.
    pub fn from_rows(rows: Vec<Vec<usize>>, diameter: usize) -> Result<Self, String> {
        let num_states = rows.len();
        if num_states == 0 || diameter == 0 || num_states % diameter != 0 {
            return Err(format!("{num_states} states cannot be split into {diameter} partitions"));
        }
        let num_actions = num_states / diameter;
        if let Some((s, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != num_actions) {
            return Err(format!("state {s} has {} actions, expected {num_actions}", row.len()));
        }
        let table = Self {
            num_states,
            num_actions,
            diameter,
            next_state: rows.into_iter().flatten().collect(),
        };
        table.check_partite_bijection()?;
        Ok(table)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    #[inline]
    pub fn next(&self, state: usize, action: usize) -> usize {
        self.next_state[state * self.num_actions + action]
    }

    pub fn row(&self, state: usize) -> &[usize] {
        &self.next_state[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.next_state.chunks(self.num_actions)
    }

    #[inline]
    pub fn partition_of(&self, state: usize) -> usize {
        state / self.num_actions
    }

    pub fn partition_members(&self, partition: usize) -> std::ops::Range<usize> {
        partition * self.num_actions..(partition + 1) * self.num_actions
    }

    /// Whether some action moves `from` to `to`.
    pub fn connects(&self, from: usize, to: usize) -> bool {
        self.partition_of(to) == (self.partition_of(from) + 1) % self.diameter
    }

    /// Verifies that every row is a permutation of the next partition.
    pub fn check_partite_bijection(&self) -> Result<(), String> {
        for s in 0..self.num_states {
            let target = (self.partition_of(s) + 1) % self.diameter;
            let mut row = self.row(s).to_vec();
            row.sort_unstable();
            if !row.iter().copied().eq(self.partition_members(target)) {
                return Err(format!(
                    "state {s}: successors {:?} are not a permutation of partition {target}",
                    self.row(s)
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn full_rows_are_permutations() {
        let mut s = derive_stream(1, "t", 0);
        let t = TransitionTable::generate(8, 1, &mut s);
        assert_eq!(t.num_actions(), 8);
        for row in t.rows() {
            let mut r = row.to_vec();
            r.sort_unstable();
            assert_eq!(r, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn single_action_cycle() {
        let mut s = derive_stream(1, "t", 0);
        let t = TransitionTable::generate(4, 4, &mut s);
        assert_eq!(t.num_actions(), 1);
        let mut state = 0;
        let mut visited = vec![state];
        for _ in 0..4 {
            state = t.next(state, 0);
            visited.push(state);
        }
        assert_eq!(visited, vec![0, 1, 2, 3, 0]);
    }

    #[test]
    fn partite_structure() {
        let mut s = derive_stream(2, "t", 0);
        let t = TransitionTable::generate(12, 3, &mut s);
        t.check_partite_bijection().unwrap();
        for st in 0..12 {
            for a in 0..4 {
                assert_eq!(t.partition_of(t.next(st, a)), (t.partition_of(st) + 1) % 3);
            }
        }
    }

    #[test]
    fn rejects_broken_rows() {
        assert!(TransitionTable::from_rows(vec![vec![1, 1], vec![0, 1]], 1).is_err());
        assert!(TransitionTable::from_rows(vec![vec![0], vec![1]], 2).is_err());
        assert!(TransitionTable::from_rows(vec![vec![1], vec![0]], 2).is_ok());
        assert!(TransitionTable::from_rows(vec![vec![0, 1]], 1).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let mut s = derive_stream(3, "t", 0);
        let t = TransitionTable::generate(6, 2, &mut s);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<TransitionTable>(&json).unwrap(), t);
        let broken = r#"{"diameter":1,"next_state":[[0,0],[1,0]]}"#;
        assert!(serde_json::from_str::<TransitionTable>(broken).is_err());
    }
}
