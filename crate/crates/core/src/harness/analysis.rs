use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;
use serde_json::Value;

use super::{spearman, summarize_point, EpisodeRecord, HarnessError, Phase, PointSummary, RunOutput};

/// Summary recomputed from a records CSV alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub axis_keys: Vec<String>,
    pub points: Vec<PointSummary>,
    /// Rank correlation between the single numeric axis and mean AUC.
    pub spearman_auc: Option<f64>,
}

const TRAILING: [&str; 5] = ["seed", "phase", "timestep", "episodic_reward", "episode_length"];

fn parse_cell(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Groups rows by axis point and seed (in order of first appearance) and
/// recomputes the per-point AUC and final-window statistics.
pub fn analyze_csv<R: Read>(input: R) -> Result<Analysis, HarnessError> {
    let bad = |m: String| HarnessError::InvalidGrid(m);
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < TRAILING.len() || header[header.len() - TRAILING.len()..] != TRAILING {
        return Err(bad(format!("records header must end with {}", TRAILING.join(","))));
    }
    let n_axes = header.len() - TRAILING.len();
    let axis_keys = header[..n_axes].to_vec();

    let mut points: Vec<Vec<String>> = Vec::new();
    let mut runs: Vec<Vec<(u64, RunOutput)>> = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or_default();
        let num_err = |what: &str| bad(format!("row {}: bad {what}", line + 2));
        let point: Vec<String> = (0..n_axes).map(|i| field(i).to_string()).collect();
        let seed: u64 = field(n_axes).parse().map_err(|_| num_err("seed"))?;
        let phase = match field(n_axes + 1) {
            "train" => Phase::Train,
            "eval" => Phase::Eval,
            _ => return Err(num_err("phase")),
        };
        let record = EpisodeRecord {
            phase,
            timestep: field(n_axes + 2).parse().map_err(|_| num_err("timestep"))?,
            episodic_reward: field(n_axes + 3).parse().map_err(|_| num_err("episodic_reward"))?,
            episode_length: field(n_axes + 4).parse().map_err(|_| num_err("episode_length"))?,
        };
        let p = match points.iter().position(|q| *q == point) {
            Some(p) => p,
            None => {
                points.push(point);
                runs.push(Vec::new());
                points.len() - 1
            }
        };
        let seed_runs = &mut runs[p];
        let r = match seed_runs.iter().position(|(s, _)| *s == seed) {
            Some(r) => r,
            None => {
                seed_runs.push((
                    seed,
                    RunOutput {
                        records: Vec::new(),
                        q_table: None,
                    },
                ));
                seed_runs.len() - 1
            }
        };
        seed_runs[r].1.records.push(record);
    }

    let summaries: Vec<PointSummary> = points
        .iter()
        .zip(&runs)
        .map(|(point, seed_runs)| {
            let axes: BTreeMap<String, Value> = axis_keys.iter().cloned().zip(point.iter().map(|c| parse_cell(c))).collect();
            let outputs: Vec<RunOutput> = seed_runs.iter().map(|(_, o)| o.clone()).collect();
            summarize_point(axes, &outputs)
        })
        .collect();

    let spearman_auc = if n_axes == 1 {
        let xs: Option<Vec<f64>> = summaries.iter().map(|s| s.axes[&axis_keys[0]].as_f64()).collect();
        let ys: Option<Vec<f64>> = summaries.iter().map(|s| s.auc_mean).collect();
        match (xs, ys) {
            (Some(xs), Some(ys)) if xs.len() >= 2 => spearman(&xs, &ys).ok(),
            _ => None,
        }
    } else {
        None
    };
    Ok(Analysis {
        axis_keys,
        points: summaries,
        spearman_auc,
    })
}
