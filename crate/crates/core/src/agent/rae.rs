use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::estimator::FeatureMap;

/// Ordered index pairs `(i, j)` with `0 < j - i < window` in a trajectory of
/// `n` states. These are the positives; their reversals are the negatives.
pub fn window_pairs(n: usize, window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n.min(i + window) {
            pairs.push((i, j));
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaeConfig {
    pub window: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// Most recent positive pairs kept for training.
    pub max_pairs: usize,
}

impl Default for RaeConfig {
    fn default() -> Self {
        RaeConfig {
            window: 10,
            learning_rate: 0.5,
            epochs: 50,
            l2: 1e-3,
            max_pairs: 5000,
        }
    }
}

/// Self-supervised temporal-order classifier. `psi(s, s')` estimates the
/// probability that `s` came before `s'`; it is antisymmetric by
/// construction, `psi(s, s') = sigmoid(w . (phi(s') - phi(s)))`.
#[derive(Debug, Clone)]
pub struct RaeEstimator {
    features: FeatureMap,
    weights: Vec<f64>,
    config: RaeConfig,
    diffs: Vec<Vec<f64>>,
    cursor: usize,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-30.0, 30.0)).exp())
}

impl RaeEstimator {
    pub fn new(features: FeatureMap, config: RaeConfig) -> Self {
        RaeEstimator {
            weights: vec![0.0; features.dim()],
            features,
            config,
            diffs: Vec::new(),
            cursor: 0,
        }
    }

    pub fn config(&self) -> &RaeConfig {
        &self.config
    }

    pub fn precedes(&self, from: &Observation, to: &Observation) -> f64 {
        let a = self.features.features(from);
        let b = self.features.features(to);
        let z: f64 = self.weights.iter().zip(b.iter().zip(&a)).map(|(w, (y, x))| w * (y - x)).sum();
        sigmoid(z)
    }

    /// Reversibility of the transition `from -> to`: 1 when both orders look
    /// equally likely, falling to 0 as the forward order becomes certain.
    pub fn transition_reversibility(&self, from: &Observation, to: &Observation) -> f64 {
        (2.0 * (1.0 - self.precedes(from, to))).clamp(0.0, 1.0)
    }

    /// Adds the window pairs of one trajectory.
    pub fn add_trajectory(&mut self, states: &[Observation]) {
        let phis: Vec<Vec<f64>> = states.iter().map(|s| self.features.features(s)).collect();
        for (i, j) in window_pairs(states.len(), self.config.window) {
            let d: Vec<f64> = phis[j].iter().zip(&phis[i]).map(|(b, a)| b - a).collect();
            if self.diffs.len() < self.config.max_pairs {
                self.diffs.push(d);
            } else {
                self.diffs[self.cursor] = d;
                self.cursor = (self.cursor + 1) % self.config.max_pairs;
            }
        }
    }

    pub fn pair_count(&self) -> usize {
        self.diffs.len()
    }

    /// Full-batch gradient descent on the stored pairs, each used once as a
    /// positive and once reversed as a negative.
    pub fn train(&mut self) {
        if self.diffs.is_empty() {
            return;
        }
        let n = self.diffs.len() as f64;
        for _ in 0..self.config.epochs {
            let mut grad: Vec<f64> = self.weights.iter().map(|w| self.config.l2 * w).collect();
            for d in &self.diffs {
                let z: f64 = self.weights.iter().zip(d).map(|(w, x)| w * x).sum();
                // positive (d, 1) and negative (-d, 0) have the same gradient
                let residual = sigmoid(z) - 1.0;
                for (g, x) in grad.iter_mut().zip(d) {
                    *g += residual * x / n;
                }
            }
            for (w, g) in self.weights.iter_mut().zip(&grad) {
                *w -= self.config.learning_rate * g;
            }
        }
    }
}
