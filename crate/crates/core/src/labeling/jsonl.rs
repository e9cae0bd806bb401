//! JSON-lines trajectory files.
//!
//! Input: one state per line, `{"index": 0, "state": <any>, "truth_label": 1}`
//! with `truth_label` optional. Output: the same lines with `label` filled,
//! followed by one summary line `{"n": .., "queries": .., "correct_fraction": ..}`.
//! `correct_fraction` covers only the lines that carry a `truth_label`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{boundary_search, majority_probe, ReversibilityOracle};
use crate::env::{EnvState, GroundTruth, Observation};
use crate::error::{input, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub index: usize,
    pub state: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl TrajectoryLine {
    fn observation(&self) -> Observation {
        match &self.state {
            serde_json::Value::Number(n) if n.as_u64().is_some() => {
                Observation::Discrete(n.as_u64().expect("checked") as usize)
            }
            serde_json::Value::Array(items) if items.iter().all(serde_json::Value::is_number) => {
                Observation::Continuous(items.iter().filter_map(serde_json::Value::as_f64).collect())
            }
            _ => Observation::Discrete(self.index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub n: usize,
    pub queries: u64,
    pub correct_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileLabeler {
    BinarySearch,
    Robust(usize),
}

pub fn read_lines(reader: impl BufRead) -> Result<Vec<TrajectoryLine>> {
    let mut lines = Vec::new();
    for (number, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajectoryLine = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("line {}: {e}", number + 1)))?;
        if parsed.truth_label.is_some_and(|t| t > 1) {
            return input(format!("line {}: truth_label must be 0 or 1", number + 1));
        }
        lines.push(parsed);
    }
    lines.sort_by_key(|l| l.index);
    Ok(lines)
}

/// Labels the file's states in order. Only probed states need a
/// `truth_label`; probing one without it is an input error.
pub fn label_lines(
    lines: &mut [TrajectoryLine],
    labeler: FileLabeler,
    oracle: &mut ReversibilityOracle,
) -> Result<LabelSummary> {
    let truths: Vec<Option<bool>> = lines.iter().map(|l| l.truth_label.map(|t| t == 1)).collect();
    let known: Vec<bool> = truths.iter().flatten().copied().collect();
    if known.windows(2).any(|w| !w[0] && w[1]) && !oracle.noise().is_noisy() {
        return Err(Error::Integrity(
            "truth labels return to reversible after an irreversible state".into(),
        ));
    }
    let states: Vec<EnvState> = lines
        .iter()
        .zip(&truths)
        .map(|(line, truth)| {
            let t = if truth.unwrap_or(true) {
                GroundTruth::reversible()
            } else {
                GroundTruth::irreversible()
            };
            EnvState::new(line.observation(), line.index as u64, t)
        })
        .collect();
    let ask = |oracle: &mut ReversibilityOracle, i: usize| -> Result<bool> {
        if truths[i].is_none() {
            return input(format!("state at index {} was probed but has no truth_label", lines[i].index));
        }
        Ok(oracle.query(&states[i]))
    };
    let before = oracle.query_count();
    let (labels, _) = match labeler {
        FileLabeler::BinarySearch => boundary_search(states.len(), |m| ask(oracle, m))?,
        FileLabeler::Robust(window) => {
            if window == 0 || window % 2 == 0 {
                return input(format!("majority window must be a positive odd number, got {window}"));
            }
            boundary_search(states.len(), |m| majority_probe(states.len(), m, window / 2, |i| ask(oracle, i)))?
        }
    };
    for (line, label) in lines.iter_mut().zip(&labels) {
        line.label = Some(u8::from(*label));
    }
    let scored: Vec<bool> = truths
        .iter()
        .zip(&labels)
        .filter_map(|(t, l)| t.map(|t| t == *l))
        .collect();
    let correct_fraction = (!scored.is_empty())
        .then(|| scored.iter().filter(|c| **c).count() as f64 / scored.len() as f64);
    Ok(LabelSummary {
        n: lines.len(),
        queries: oracle.query_count() - before,
        correct_fraction,
    })
}

pub fn write_labeled(mut out: impl Write, lines: &[TrajectoryLine], summary: &LabelSummary) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut out, summary)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIVE: &str = r#"{"index": 0, "state": 10, "truth_label": 1}
{"index": 1, "state": 11, "truth_label": 1}
{"index": 2, "state": 12, "truth_label": 1}
{"index": 3, "state": 13, "truth_label": 0}
{"index": 4, "state": 14, "truth_label": 0}
"#;

    #[test]
    fn five_state_file() {
        let mut lines = read_lines(FIVE.as_bytes()).unwrap();
        let summary = label_lines(&mut lines, FileLabeler::BinarySearch, &mut ReversibilityOracle::noise_free()).unwrap();
        assert_eq!(summary.queries, 3);
        assert_eq!(summary.n, 5);
        assert_eq!(summary.correct_fraction, Some(1.0));
        let labels: Vec<u8> = lines.iter().map(|l| l.label.unwrap()).collect();
        assert_eq!(labels, vec![1, 1, 1, 0, 0]);

        let mut out = Vec::new();
        write_labeled(&mut out, &lines, &summary).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().last().unwrap().contains("\"queries\":3"));
    }

    #[test]
    fn probing_unlabeled_state_is_an_error() {
        let text = r#"{"index": 0, "state": [0.1, 0.2]}"#;
        let mut lines = read_lines(text.as_bytes()).unwrap();
        assert!(label_lines(&mut lines, FileLabeler::BinarySearch, &mut ReversibilityOracle::noise_free()).is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_lines("not json\n".as_bytes()).is_err());
        assert!(read_lines(r#"{"index": 0, "state": 1, "truth_label": 3}"#.as_bytes()).is_err());
    }
}
