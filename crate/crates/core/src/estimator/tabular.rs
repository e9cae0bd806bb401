use std::collections::HashMap;

use super::{EstimatorSnapshot, LabelStore, ReversibilityEstimator, TrainReport};
use crate::env::{Observation, StateKey};
use crate::error::Result;

/// Per-state label counts smoothed by a Beta prior:
/// `p(s) = (pos + alpha) / (pos + neg + alpha + beta)`.
#[derive(Debug, Clone)]
pub struct TabularEstimator {
    alpha: f64,
    beta: f64,
    counts: HashMap<StateKey, (u32, u32)>,
}

impl Default for TabularEstimator {
    fn default() -> Self {
        TabularEstimator::new(1.0, 1.0)
    }
}

impl TabularEstimator {
    pub fn new(alpha: f64, beta: f64) -> Self {
        assert!(alpha > 0.0 && beta > 0.0, "prior pseudo-counts must be positive");
        TabularEstimator {
            alpha,
            beta,
            counts: HashMap::new(),
        }
    }

    pub fn from_counts(alpha: f64, beta: f64, counts: impl IntoIterator<Item = (StateKey, u32, u32)>) -> Self {
        let mut est = TabularEstimator::new(alpha, beta);
        est.counts = counts.into_iter().map(|(k, p, n)| (k, (p, n))).collect();
        est
    }

    pub fn counts(&self, key: &StateKey) -> (u32, u32) {
        self.counts.get(key).copied().unwrap_or((0, 0))
    }
}

impl ReversibilityEstimator for TabularEstimator {
    fn predict(&self, obs: &Observation) -> f64 {
        let (pos, neg) = self.counts(&obs.key());
        (f64::from(pos) + self.alpha) / (f64::from(pos) + f64::from(neg) + self.alpha + self.beta)
    }

    fn train(&mut self, data: &LabelStore) -> Result<TrainReport> {
        if data.is_empty() {
            return Ok(TrainReport {
                empty_dataset: true,
                ..TrainReport::default()
            });
        }
        self.counts = data
            .entries()
            .iter()
            .map(|e| (e.obs.key(), (e.positives, e.negatives)))
            .collect();
        let mut loss = 0.0;
        let mut weight = 0.0;
        for e in data.entries() {
            let p = self.predict(&e.obs);
            loss -= f64::from(e.positives) * p.ln() + f64::from(e.negatives) * (1.0 - p).ln();
            weight += f64::from(e.positives + e.negatives);
        }
        Ok(TrainReport {
            final_loss: loss / weight,
            samples: weight as usize,
            empty_dataset: false,
        })
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        let mut counts: Vec<_> = self.counts.iter().map(|(k, &(p, n))| (k.clone(), p, n)).collect();
        counts.sort();
        EstimatorSnapshot::Tabular {
            alpha: self.alpha,
            beta: self.beta,
            counts,
        }
    }
}
