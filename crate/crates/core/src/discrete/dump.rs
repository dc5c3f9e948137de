use serde::{Deserialize, Serialize};

use super::sequences::{RewardableSequence, RewardableSequenceSet};
use super::table::TransitionTable;
use super::{terminal_states, DiscreteModel};
use crate::config::EnvConfig;
use crate::env::EnvError;

pub const DUMP_FORMAT: &str = "mdp-forge/discrete-env/1";

/// JSON form of a generated discrete environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDump {
    pub format: String,
    pub config: serde_json::Value,
    pub transitions: TransitionTable,
    pub partition_of: Vec<usize>,
    pub irrelevant_transitions: Option<TransitionTable>,
    pub terminal_states: Vec<usize>,
    pub initial_states: Vec<usize>,
    pub legal_sequence_count: u128,
    pub rewardable_sequences: Vec<RewardableSequence>,
}

impl EnvDump {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dump serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        serde_json::from_str(text).map_err(|e| EnvError::InvalidDump(e.to_string()))
    }
}

impl DiscreteModel {
    pub fn to_dump(&self) -> EnvDump {
        EnvDump {
            format: DUMP_FORMAT.to_string(),
            config: self.config.to_value(),
            partition_of: (0..self.num_states()).map(|s| self.transitions.partition_of(s)).collect(),
            transitions: self.transitions.clone(),
            irrelevant_transitions: self.irrelevant.clone(),
            terminal_states: self.terminal_states(),
            initial_states: self.initial_states.clone(),
            legal_sequence_count: self.legal_sequences,
            rewardable_sequences: self.sequences.sequences().to_vec(),
        }
    }

    /// Rebuilds a model from a dump, re-checking every structural invariant.
    pub fn from_dump(dump: EnvDump) -> Result<Self, EnvError> {
        let bad = |m: String| EnvError::InvalidDump(m);
        if dump.format != DUMP_FORMAT {
            return Err(bad(format!("unsupported format `{}`", dump.format)));
        }
        let config = EnvConfig::validate_and_default(&dump.config)?;
        if !config.is_discrete() {
            return Err(EnvError::WrongStateSpaceType { expected: "discrete" });
        }
        let table = dump.transitions;
        if table.num_states() != config.state_space_size || table.diameter() != config.diameter {
            return Err(bad("transition table shape disagrees with config".into()));
        }
        let partitions: Vec<usize> = (0..table.num_states()).map(|s| table.partition_of(s)).collect();
        if partitions != dump.partition_of {
            return Err(bad("partition_of disagrees with the transition table".into()));
        }
        match (&dump.irrelevant_transitions, config.irrelevant_features) {
            (Some(irr), true) if irr.num_states() == table.num_states() && irr.diameter() == table.diameter() => {}
            (None, false) => {}
            _ => return Err(bad("irrelevant transition table disagrees with config".into())),
        }
        let expected_terminals = terminal_states(table.num_states(), table.diameter(), config.terminal_count());
        if dump.terminal_states != expected_terminals {
            return Err(bad(format!(
                "terminal states {:?} differ from the placement rule {:?}",
                dump.terminal_states, expected_terminals
            )));
        }
        let mut is_terminal = vec![false; table.num_states()];
        for &t in &dump.terminal_states {
            is_terminal[t] = true;
        }
        let initial: Vec<usize> = (0..table.num_states()).filter(|&s| !is_terminal[s]).collect();
        if dump.initial_states != initial {
            return Err(bad("initial states must be exactly the non-terminal states".into()));
        }
        let n = config.sequence_length;
        let legal = super::legal_sequence_count(&table, &is_terminal, n);
        if legal != dump.legal_sequence_count {
            return Err(bad(format!(
                "legal sequence count {} does not match the table ({legal})",
                dump.legal_sequence_count
            )));
        }
        for seq in &dump.rewardable_sequences {
            let s = &seq.states;
            if s.len() != n {
                return Err(bad(format!("sequence {s:?} has length {}, expected {n}", s.len())));
            }
            if s.iter().any(|&x| x >= table.num_states() || is_terminal[x]) {
                return Err(bad(format!("sequence {s:?} leaves the live states")));
            }
            if (1..s.len()).any(|i| s[..i].contains(&s[i])) {
                return Err(bad(format!("sequence {s:?} repeats a state")));
            }
            if s.windows(2).any(|w| !table.connects(w[0], w[1])) {
                return Err(bad(format!("sequence {s:?} is not realisable")));
            }
            if !seq.reward.is_finite() {
                return Err(bad(format!("sequence {s:?} has a non-finite reward")));
            }
        }
        Ok(Self {
            config,
            transitions: table,
            irrelevant: dump.irrelevant_transitions,
            is_terminal,
            initial_states: initial,
            legal_sequences: legal,
            sequences: RewardableSequenceSet::new(n, dump.rewardable_sequences),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let cfg = EnvConfig::validate_and_default(&serde_json::json!({
            "state_space_size": 9, "diameter": 3, "sequence_length": 2, "irrelevant_features": true
        }))
        .unwrap();
        let model = DiscreteModel::generate(&cfg).unwrap();
        let text = model.to_dump().to_json();
        let back = DiscreteModel::from_dump(EnvDump::from_json(&text).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_dump().to_json(), text);
    }

    #[test]
    fn tampered_dumps_rejected() {
        let model = DiscreteModel::generate(&EnvConfig::discrete(8)).unwrap();
        let mut dump = model.to_dump();
        dump.terminal_states = vec![0, 1];
        assert!(DiscreteModel::from_dump(dump).is_err());

        let mut dump = model.to_dump();
        dump.rewardable_sequences[0].states = vec![7];
        assert!(DiscreteModel::from_dump(dump).is_err());

        let mut dump = model.to_dump();
        dump.format = "other".into();
        assert!(DiscreteModel::from_dump(dump).is_err());

        let text = model.to_dump().to_json().replace("\"diameter\": 1,\n    \"next_state\"", "\"diameter\": 2,\n    \"next_state\"");
        assert!(EnvDump::from_json(&text).is_err());
    }
}
