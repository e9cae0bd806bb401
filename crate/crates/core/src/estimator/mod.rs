//! Learned reversibility estimators, mapping a state to a value in `(0, 1)`.
//!
//! Every estimator is trained by refitting on the full label store, which
//! holds every label received so far, old and new.

mod ensemble;
mod logistic;
mod tabular;

use std::collections::HashMap;
use std::sync::Arc;

pub use ensemble::Ensemble;
pub use logistic::{gradient_check, FeatureMap, LogisticConfig, LogisticEstimator};
pub use tabular::TabularEstimator;

use serde::{Deserialize, Serialize};

use crate::env::{Observation, StateKey};
use crate::error::{input, Result};

/// Predictions are kept this far away from 0 and 1.
pub const PROB_FLOOR: f64 = 1e-9;

pub trait ReversibilityEstimator: Send + Sync {
    /// Estimated probability that the state is reversible.
    fn predict(&self, obs: &Observation) -> f64;

    /// Epistemic spread across ensemble members, if this estimator has any.
    fn spread(&self, _obs: &Observation) -> Option<f64> {
        None
    }

    /// Refits on every label in `data`.
    fn train(&mut self, _data: &LabelStore) -> Result<TrainReport> {
        Ok(TrainReport::default())
    }

    fn snapshot(&self) -> EstimatorSnapshot;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean binary cross-entropy after training.
    pub final_loss: f64,
    pub samples: usize,
    /// Set when training was skipped because there was nothing to fit.
    pub empty_dataset: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledState {
    pub obs: Observation,
    pub positives: u32,
    pub negatives: u32,
}

/// All labels received so far, merged per state identity.
#[derive(Debug, Clone, Default)]
pub struct LabelStore {
    entries: Vec<LabeledState>,
    index: HashMap<StateKey, usize>,
    total: u64,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store from raw `(state, label)` pairs with labels in `{0, 1}`.
    pub fn from_pairs(pairs: &[(Observation, u8)]) -> Result<Self> {
        let mut store = LabelStore::new();
        for (obs, label) in pairs {
            match label {
                0 => store.add(obs.clone(), false),
                1 => store.add(obs.clone(), true),
                other => return input(format!("labels must be 0 or 1, got {other}")),
            }
        }
        Ok(store)
    }

    pub fn add(&mut self, obs: Observation, reversible: bool) {
        let key = obs.key();
        let idx = *self.index.entry(key).or_insert_with(|| {
            self.entries.push(LabeledState {
                obs,
                positives: 0,
                negatives: 0,
            });
            self.entries.len() - 1
        });
        let entry = &mut self.entries[idx];
        if reversible {
            entry.positives += 1;
        } else {
            entry.negatives += 1;
        }
        self.total += 1;
    }

    /// Majority label for a state, ties counting as reversible.
    pub fn label_of(&self, key: &StateKey) -> Option<bool> {
        self.index.get(key).map(|&i| {
            let e = &self.entries[i];
            e.positives >= e.negatives
        })
    }

    pub fn entries(&self) -> &[LabeledState] {
        &self.entries
    }

    /// Distinct labeled states.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Labels received, counting repeats.
    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Serialisable estimator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSnapshot {
    Constant {
        value: f64,
    },
    Perfect,
    Tabular {
        alpha: f64,
        beta: f64,
        counts: Vec<(StateKey, u32, u32)>,
    },
    Logistic {
        features: FeatureMap,
        weights: Vec<f64>,
        bias: f64,
    },
    Ensemble {
        members: Vec<EstimatorSnapshot>,
    },
}

impl EstimatorSnapshot {
    /// Rebuilds a prediction-capable estimator from saved parameters.
    pub fn restore(&self) -> Result<Box<dyn ReversibilityEstimator>> {
        Ok(match self {
            EstimatorSnapshot::Constant { value } => Box::new(ConstantEstimator(*value)),
            EstimatorSnapshot::Perfect => return input("a perfect estimator cannot be restored from parameters"),
            EstimatorSnapshot::Tabular { alpha, beta, counts } => {
                Box::new(TabularEstimator::from_counts(*alpha, *beta, counts.iter().cloned()))
            }
            EstimatorSnapshot::Logistic {
                features,
                weights,
                bias,
            } => Box::new(LogisticEstimator::from_parameters(features.clone(), weights.clone(), *bias)?),
            EstimatorSnapshot::Ensemble { members } => {
                let members = members.iter().map(|m| m.restore()).collect::<Result<Vec<_>>>()?;
                Box::new(Ensemble::new(members)?)
            }
        })
    }
}

/// Predicts the same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimator(pub f64);

impl ReversibilityEstimator for ConstantEstimator {
    fn predict(&self, _obs: &Observation) -> f64 {
        self.0.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot::Constant { value: self.0 }
    }
}

/// Reads ground truth through a lookup. Stands in for a fully trained
/// classifier in tests and soundness experiments.
#[derive(Clone)]
pub struct PerfectEstimator {
    truth: Arc<dyn Fn(&Observation) -> bool + Send + Sync>,
}

impl PerfectEstimator {
    pub fn new(truth: impl Fn(&Observation) -> bool + Send + Sync + 'static) -> Self {
        PerfectEstimator { truth: Arc::new(truth) }
    }
}

impl std::fmt::Debug for PerfectEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PerfectEstimator")
    }
}

impl ReversibilityEstimator for PerfectEstimator {
    fn predict(&self, obs: &Observation) -> f64 {
        if (self.truth)(obs) {
            1.0 - PROB_FLOOR
        } else {
            PROB_FLOOR
        }
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot::Perfect
    }
}
