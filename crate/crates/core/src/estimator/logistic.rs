use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EstimatorSnapshot, LabelStore, ReversibilityEstimator, TrainReport};
use crate::env::Observation;
use crate::error::{input, Result};
use crate::rng::Rng;

/// Logits are clamped to this magnitude so predictions never reach 0 or 1.
const LOGIT_CLAMP: f64 = 30.0;

/// Maps an observation to the logistic model's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// Observation coordinates as-is. Discrete states become `[index]`.
    Raw { dim: usize },
    /// Position in the unit square plus a `grid x grid` lattice of Gaussian
    /// bumps. Discrete states are placed at their cell centre on a
    /// `width x height` grid.
    Rbf {
        grid: usize,
        sigma: f64,
        cells: Option<(usize, usize)>,
    },
}

impl FeatureMap {
    pub fn rbf_unit_square(grid: usize) -> Self {
        FeatureMap::Rbf {
            grid,
            sigma: 1.0 / grid as f64,
            cells: None,
        }
    }

    pub fn rbf_grid_cells(grid: usize, width: usize, height: usize) -> Self {
        FeatureMap::Rbf {
            grid,
            sigma: 1.0 / grid as f64,
            cells: Some((width, height)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Raw { dim } => *dim,
            FeatureMap::Rbf { grid, .. } => 2 + grid * grid,
        }
    }

    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        match self {
            FeatureMap::Raw { dim } => {
                let mut x = match obs {
                    Observation::Discrete(i) => vec![*i as f64],
                    Observation::Continuous(v) => v.clone(),
                };
                x.resize(*dim, 0.0);
                x
            }
            FeatureMap::Rbf { grid, sigma, cells } => {
                let p = match (obs, cells) {
                    (Observation::Continuous(v), _) => [v[0], v[1]],
                    (Observation::Discrete(i), Some((w, h))) => {
                        [((i % w) as f64 + 0.5) / *w as f64, ((i / w) as f64 + 0.5) / *h as f64]
                    }
                    (Observation::Discrete(i), None) => [*i as f64, 0.0],
                };
                let mut out = Vec::with_capacity(self.dim());
                out.extend_from_slice(&p);
                let denom = 2.0 * sigma * sigma;
                for gy in 0..*grid {
                    let cy = (gy as f64 + 0.5) / *grid as f64;
                    for gx in 0..*grid {
                        let cx = (gx as f64 + 0.5) / *grid as f64;
                        let d2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
                        out.push((-d2 / denom).exp());
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub l2: f64,
    /// Full-batch gradient steps per `train` call.
    pub epochs: usize,
    /// Scale of the random initial weights; zero gives an all-zero start.
    pub init_scale: f64,
    /// Upper bound on distinct states per fit. Larger stores are thinned by
    /// a deterministic stride.
    pub max_samples: usize,
    /// Reweight so both classes carry equal total weight.
    #[serde(default)]
    pub balance_classes: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.5,
            l2: 1e-4,
            epochs: 200,
            init_scale: 0.0,
            max_samples: 4096,
            balance_classes: false,
        }
    }
}

/// `sigmoid(w . phi(s) + b)` trained by full-batch gradient descent on
/// binary cross-entropy.
#[derive(Debug, Clone)]
pub struct LogisticEstimator {
    features: FeatureMap,
    weights: Vec<f64>,
    bias: f64,
    config: LogisticConfig,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Batch {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Batch {
    fn from_store(features: &FeatureMap, data: &LabelStore, cap: usize, balance: bool) -> Self {
        let entries = data.entries();
        let stride = entries.len().div_ceil(cap.max(1)).max(1);
        let mut batch = Batch {
            x: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
        };
        for e in entries.iter().step_by(stride) {
            let phi = features.features(&e.obs);
            if e.positives > 0 {
                batch.x.push(phi.clone());
                batch.y.push(1.0);
                batch.w.push(f64::from(e.positives));
            }
            if e.negatives > 0 {
                batch.x.push(phi);
                batch.y.push(0.0);
                batch.w.push(f64::from(e.negatives));
            }
        }
        if balance {
            batch.balance();
        }
        batch
    }

    fn balance(&mut self) {
        let pos: f64 = self.w.iter().zip(&self.y).filter(|(_, &y)| y > 0.5).map(|(w, _)| w).sum();
        let neg: f64 = self.w.iter().zip(&self.y).filter(|(_, &y)| y < 0.5).map(|(w, _)| w).sum();
        if pos == 0.0 || neg == 0.0 {
            return;
        }
        let half = 0.5 * (pos + neg);
        for (w, &y) in self.w.iter_mut().zip(&self.y) {
            *w *= if y > 0.5 { half / pos } else { half / neg };
        }
    }
}

impl LogisticEstimator {
    pub fn new(features: FeatureMap, config: LogisticConfig, rng: &mut Rng) -> Self {
        let weights = (0..features.dim())
            .map(|_| config.init_scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let bias = config.init_scale * (2.0 * rng.random::<f64>() - 1.0);
        LogisticEstimator {
            features,
            weights,
            bias,
            config,
        }
    }

    pub fn zeros(features: FeatureMap, config: LogisticConfig) -> Self {
        LogisticEstimator {
            weights: vec![0.0; features.dim()],
            bias: 0.0,
            features,
            config,
        }
    }

    pub fn from_parameters(features: FeatureMap, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.len() != features.dim() {
            return input(format!(
                "feature map has {} dimensions but {} weights were given",
                features.dim(),
                weights.len()
            ));
        }
        Ok(LogisticEstimator {
            features,
            weights,
            bias,
            config: LogisticConfig::default(),
        })
    }

    pub fn with_config(mut self, config: LogisticConfig) -> Self {
        self.config = config;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    fn logit(&self, phi: &[f64]) -> f64 {
        (dot(&self.weights, phi) + self.bias).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }

    /// Weighted mean BCE plus `l2/2 * |w|^2`, and its gradient with respect
    /// to `[weights..., bias]`.
    fn objective(&self, batch: &Batch) -> (f64, Vec<f64>) {
        let dim = self.weights.len();
        let mut grad = vec![0.0; dim + 1];
        let total: f64 = batch.w.iter().sum();
        let mut loss = 0.0;
        if total > 0.0 {
            for ((phi, &y), &w) in batch.x.iter().zip(&batch.y).zip(&batch.w) {
                let z = self.logit(phi);
                // log(1 + e^z) evaluated stably
                let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
                loss += w * (softplus - y * z);
                let residual = w * (sigmoid(z) - y);
                for (g, x) in grad.iter_mut().zip(phi) {
                    *g += residual * x;
                }
                grad[dim] += residual;
            }
            loss /= total;
            grad.iter_mut().for_each(|g| *g /= total);
        }
        let l2 = self.config.l2;
        loss += 0.5 * l2 * dot(&self.weights, &self.weights);
        for (g, w) in grad.iter_mut().zip(&self.weights) {
            *g += l2 * w;
        }
        (loss, grad)
    }

    fn parameters(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    fn set_parameters(&mut self, p: &[f64]) {
        let dim = self.weights.len();
        self.weights.copy_from_slice(&p[..dim]);
        self.bias = p[dim];
    }

    /// Mean BCE (with the L2 term) on a label store, without training.
    pub fn loss(&self, data: &LabelStore) -> f64 {
        self.objective(&Batch::from_store(&self.features, data, usize::MAX, self.config.balance_classes)).0
    }

    /// Runs `epochs` full-batch steps and returns the loss after each one.
    pub fn fit_epochs(&mut self, data: &LabelStore, epochs: usize) -> Vec<f64> {
        let batch = Batch::from_store(&self.features, data, self.config.max_samples, self.config.balance_classes);
        let mut history = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let (_, grad) = self.objective(&batch);
            let lr = self.config.learning_rate;
            for (w, g) in self.weights.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
            self.bias -= lr * grad[grad.len() - 1];
            history.push(self.objective(&batch).0);
        }
        history
    }
}

impl ReversibilityEstimator for LogisticEstimator {
    fn predict(&self, obs: &Observation) -> f64 {
        sigmoid(self.logit(&self.features.features(obs)))
    }

    fn train(&mut self, data: &LabelStore) -> Result<TrainReport> {
        if data.is_empty() {
            return Ok(TrainReport {
                empty_dataset: true,
                ..TrainReport::default()
            });
        }
        let history = self.fit_epochs(data, self.config.epochs);
        let final_loss = history
            .last()
            .copied()
            .unwrap_or_else(|| self.objective(&Batch::from_store(&self.features, data, self.config.max_samples, self.config.balance_classes)).0);
        Ok(TrainReport {
            final_loss,
            samples: data.total() as usize,
            empty_dataset: false,
        })
    }

    fn snapshot(&self) -> EstimatorSnapshot {
        EstimatorSnapshot::Logistic {
            features: self.features.clone(),
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }
}

/// Largest relative disagreement between the analytic gradient and a
/// central finite difference with step `h = 1e-5`, over every parameter.
/// An empty batch returns 0.
pub fn gradient_check(estimator: &LogisticEstimator, batch: &[(Observation, bool)]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    const H: f64 = 1e-5;
    let mut store = LabelStore::new();
    for (obs, label) in batch {
        store.add(obs.clone(), *label);
    }
    let data = Batch::from_store(&estimator.features, &store, usize::MAX, estimator.config.balance_classes);
    let (_, analytic) = estimator.objective(&data);
    let base = estimator.parameters();
    let mut probe = estimator.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + H;
        probe.set_parameters(&p);
        let up = probe.objective(&data).0;
        p[i] = base[i] - H;
        probe.set_parameters(&p);
        let down = probe.objective(&data).0;
        let numeric = (up - down) / (2.0 * H);
        let scale = g.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((g - numeric).abs() / scale);
    }
    worst
}
