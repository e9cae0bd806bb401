//! The simulated supervisor and the trajectory labelers built on it.
//!
//! Irreversible-closure guarantees that the ground-truth labels of any
//! trajectory read `1…1 0…0`, so a single boundary search labels the whole
//! trajectory in at most `ceil(log2(n + 1))` oracle queries.

pub mod jsonl;

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::{EnvState, StateKey};
use crate::error::{input, Error, Result};
use crate::estimator::ReversibilityEstimator;
use crate::rng::{self, Rng};

/// Where a noise model is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseRegion {
    Everywhere,
    /// Reversible states bordering an irreversible region.
    NearHazard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    None,
    /// Irreversible states in the region answer 1 with probability `p`.
    FalsePositive { p: f64, region: NoiseRegion },
    /// Reversible states in the region answer 0 with probability `p`.
    FalseNegative { p: f64, region: NoiseRegion },
    /// Every answer is flipped with probability `p`.
    Symmetric { p: f64 },
}

impl NoiseModel {
    fn flip_probability(&self, state: &EnvState) -> f64 {
        let truth = state.ground_truth();
        let in_region = |region: NoiseRegion| match region {
            NoiseRegion::Everywhere => true,
            NoiseRegion::NearHazard => truth.near_hazard,
        };
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::FalsePositive { p, region } if !truth.reversible && in_region(region) => p,
            NoiseModel::FalseNegative { p, region } if truth.reversible && in_region(region) => p,
            NoiseModel::Symmetric { p } => p,
            _ => 0.0,
        }
    }

    pub fn is_noisy(&self) -> bool {
        !matches!(self, NoiseModel::None)
    }
}

/// Answers reversibility queries and counts what they cost.
///
/// Noise-free answers are cached per state identity, so repeats are free.
/// Noisy answers are independent draws and are never cached: majority
/// voting relies on that independence.
#[derive(Debug, Clone)]
pub struct ReversibilityOracle {
    noise: NoiseModel,
    rng: Rng,
    cache: Option<HashMap<StateKey, bool>>,
    query_count: u64,
}

impl ReversibilityOracle {
    pub fn new(noise: NoiseModel, seed: u64) -> Self {
        ReversibilityOracle {
            cache: (!noise.is_noisy()).then(HashMap::new),
            noise,
            rng: rng::stream(seed, rng::Stream::OracleNoise),
            query_count: 0,
        }
    }

    pub fn noise_free() -> Self {
        Self::new(NoiseModel::None, 0)
    }

    /// Oracle that charges every query, repeats included.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn is_cached(&self, state: &EnvState) -> bool {
        self.cache.as_ref().is_some_and(|c| c.contains_key(&state.key()))
    }

    pub fn query(&mut self, state: &EnvState) -> bool {
        let key = self.cache.is_some().then(|| state.key());
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(&answer) = cache.get(key) {
                return answer;
            }
        }
        self.query_count += 1;
        let truth = state.ground_truth().reversible;
        let p = self.noise.flip_probability(state);
        let answer = if p > 0.0 && self.rng.random::<f64>() < p {
            !truth
        } else {
            truth
        };
        if let (Some(cache), Some(key)) = (&mut self.cache, key) {
            cache.insert(key, answer);
        }
        answer
    }

    /// Supervisor-side audit that a trajectory's ground truth is monotone.
    /// Free of charge; only meaningful for noise-free oracles.
    pub fn audit_structure(&self, states: &[EnvState]) -> Result<()> {
        if self.noise.is_noisy() {
            return Ok(());
        }
        if let Some(i) = states
            .windows(2)
            .position(|w| !w[0].ground_truth().reversible && w[1].ground_truth().reversible)
        {
            return Err(Error::Integrity(format!(
                "trajectory returns to a reversible state at index {} after an irreversible one",
                i + 1
            )));
        }
        Ok(())
    }
}

/// Ordered states with optional per-state labels (`true` = reversible).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EnvState>,
    pub labels: Vec<Option<bool>>,
}

impl Trajectory {
    pub fn new(states: Vec<EnvState>) -> Self {
        let labels = vec![None; states.len()];
        Trajectory { states, labels }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: EnvState) {
        self.states.push(state);
        self.labels.push(None);
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Number of leading reversible states, i.e. `k + 1` where `k` is the
    /// last reversible index. `None` until the trajectory is fully labeled.
    pub fn reversible_len(&self) -> Option<usize> {
        if !self.is_fully_labeled() {
            return None;
        }
        Some(self.labels.iter().take_while(|l| **l == Some(true)).count())
    }

    pub fn is_monotone(&self) -> bool {
        self.labels
            .windows(2)
            .all(|w| !(w[0] == Some(false) && w[1] == Some(true)))
    }

    /// Fraction of labels matching ground truth.
    pub fn correct_fraction(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let correct = self
            .states
            .iter()
            .zip(&self.labels)
            .filter(|(s, l)| **l == Some(s.ground_truth().reversible))
            .count();
        correct as f64 / self.len() as f64
    }
}

/// Bookkeeping returned by every labeler.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    /// Oracle queries charged during this call.
    pub queries: u64,
    /// Boundary-search probes made.
    pub probes: u64,
    /// Probes answered by the estimator instead of the oracle.
    pub substituted: u64,
}

/// Upper bound on binary-search probes for a trajectory of `n` states.
pub fn query_bound(n: usize) -> u64 {
    // ceil(log2(n + 1)) == bit length of n
    u64::from(usize::BITS - n.leading_zeros())
}

/// Boundary search over `n` positions. `probe(m)` answers whether index
/// `m` is reversible. Each answered index is labeled immediately and the
/// search continues on the strict sub-window, so no index is probed twice.
fn boundary_search<F>(n: usize, mut probe: F) -> Result<(Vec<bool>, u64)>
where
    F: FnMut(usize) -> Result<bool>,
{
    let mut labels = vec![false; n];
    let (mut lo, mut hi) = (0, n);
    let mut probes = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        probes += 1;
        if probe(mid)? {
            labels[lo..=mid].fill(true);
            lo = mid + 1;
        } else {
            labels[mid..hi].fill(false);
            hi = mid;
        }
    }
    Ok((labels, probes))
}

fn apply(trajectory: &mut Trajectory, labels: Vec<bool>) {
    trajectory.labels = labels.into_iter().map(Some).collect();
}

/// Labels every state with `O(log n)` oracle queries.
pub fn binary_search_label(trajectory: &mut Trajectory, oracle: &mut ReversibilityOracle) -> Result<LabelReport> {
    oracle.audit_structure(&trajectory.states)?;
    let before = oracle.query_count();
    let states = &trajectory.states;
    let (labels, probes) = boundary_search(states.len(), |m| Ok(oracle.query(&states[m])))?;
    apply(trajectory, labels);
    Ok(LabelReport {
        queries: oracle.query_count() - before,
        probes,
        substituted: 0,
    })
}

/// Queries every state individually.
pub fn per_state_label(trajectory: &mut Trajectory, oracle: &mut ReversibilityOracle) -> LabelReport {
    let before = oracle.query_count();
    let labels: Vec<bool> = trajectory.states.iter().map(|s| oracle.query(s)).collect();
    let n = labels.len() as u64;
    apply(trajectory, labels);
    LabelReport {
        queries: oracle.query_count() - before,
        probes: n,
        substituted: 0,
    }
}

/// Majority answer over the states within `half` of `m`. Near the ends the
/// radius shrinks so the window stays symmetric, which keeps the answer exact
/// for noise-free monotone truth.
pub(crate) fn majority_probe(
    n: usize,
    m: usize,
    half: usize,
    mut ask: impl FnMut(usize) -> Result<bool>,
) -> Result<bool> {
    let radius = half.min(m).min(n - 1 - m);
    let mut yes = 0usize;
    for i in m - radius..=m + radius {
        yes += usize::from(ask(i)?);
    }
    Ok(2 * yes > 2 * radius + 1)
}

/// Binary search where each probe is the majority answer over the `window`
/// states centred on it.
pub fn robust_label(
    trajectory: &mut Trajectory,
    oracle: &mut ReversibilityOracle,
    window: usize,
) -> Result<LabelReport> {
    if window == 0 || window % 2 == 0 {
        return input(format!("majority window must be a positive odd number, got {window}"));
    }
    oracle.audit_structure(&trajectory.states)?;
    let before = oracle.query_count();
    let states = &trajectory.states;
    let (labels, probes) = boundary_search(states.len(), |m| {
        majority_probe(states.len(), m, window / 2, |i| Ok(oracle.query(&states[i])))
    })?;
    apply(trajectory, labels);
    Ok(LabelReport {
        queries: oracle.query_count() - before,
        probes,
        substituted: 0,
    })
}

/// When the estimator may stand in for the supervisor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateMode {
    /// Confident when `|p - 0.5| >= margin`.
    Margin(f64),
    /// Confident when the ensemble standard deviation is `<= threshold`.
    EnsembleStd(f64),
}

/// Binary search that skips the oracle at probes where the estimator is
/// confident, using its thresholded prediction instead.
pub fn confidence_gated_label(
    trajectory: &mut Trajectory,
    oracle: &mut ReversibilityOracle,
    estimator: &dyn ReversibilityEstimator,
    mode: GateMode,
) -> Result<LabelReport> {
    let threshold = match mode {
        GateMode::Margin(p) | GateMode::EnsembleStd(p) => p,
    };
    if !(threshold > 0.0) {
        return input(format!("gate threshold must be positive, got {threshold}"));
    }
    let before = oracle.query_count();
    let mut substituted = 0;
    let states = &trajectory.states;
    let (labels, probes) = boundary_search(states.len(), |m| {
        let obs = &states[m].obs;
        let prediction = estimator.predict(obs);
        let confident = match mode {
            GateMode::Margin(p) => (prediction - 0.5).abs() >= p,
            GateMode::EnsembleStd(p) => estimator.spread(obs).is_some_and(|std| std <= p),
        };
        if confident {
            substituted += 1;
            Ok(prediction >= 0.5)
        } else {
            Ok(oracle.query(&states[m]))
        }
    })?;
    apply(trajectory, labels);
    Ok(LabelReport {
        queries: oracle.query_count() - before,
        probes,
        substituted,
    })
}
