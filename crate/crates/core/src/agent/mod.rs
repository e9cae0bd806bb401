//! Control loops that decide when to ask for help.
//!
//! The agent acts until its reversibility estimate for the current state
//! drops below a threshold, explores at random for a while, then requests
//! a reset. Every state visited since the previous reset is labeled in one
//! batch at the reset, and the estimator is refit on all labels so far.

mod continuing;
mod episodic;
mod qlearner;
mod rae;

pub use continuing::{run_continuing, ContinuingRun, ContinuingVariant, Phase, StepReport};
pub use episodic::{run_episodic, EpisodicVariant};
pub use qlearner::{Experience, QConfig, QLearner};
pub use rae::{window_pairs, RaeConfig, RaeEstimator};

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Observation};
use crate::error::{input, Result};
use crate::estimator::{LabelStore, ReversibilityEstimator};
use crate::labeling::GateMode;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelingMode {
    BinarySearch,
    /// Every visited state is queried as soon as it is reached.
    PerStep,
    /// Binary search with a majority vote over an odd window.
    Robust(usize),
    Gated(GateMode),
}

/// Stand-in reversibility for states whose labels have not arrived yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelMode {
    Estimator,
    AssumeReversible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaintConfig {
    /// Help is requested once the estimate falls below this value.
    pub threshold: f64,
    /// Random steps taken after a detection before the reset. `None` means
    /// the rest of the episode.
    pub explore_steps: Option<usize>,
    pub horizon: usize,
    /// Continuing runs force a reset after this many consecutive steps in a
    /// truly irreversible state, logging a missed detection.
    pub max_trial_steps: usize,
    /// Steps per forward or backward phase in continuing runs.
    pub switch_period: usize,
    pub pseudo_label_mode: PseudoLabelMode,
    pub labeling_mode: LabelingMode,
    /// Penalty margin `eps` in `(R_min - eps) / (1 - gamma)`.
    pub epsilon: f64,
    pub gamma: f64,
    pub eval_episodes: usize,
}

impl PaintConfig {
    pub fn episodic(horizon: usize) -> Self {
        PaintConfig {
            threshold: 0.5,
            explore_steps: None,
            horizon,
            max_trial_steps: 10 * horizon,
            switch_period: 300,
            pseudo_label_mode: PseudoLabelMode::Estimator,
            labeling_mode: LabelingMode::BinarySearch,
            epsilon: 0.0,
            gamma: 0.95,
            eval_episodes: 10,
        }
    }

    pub fn continuing(horizon: usize, explore_steps: usize) -> Self {
        PaintConfig {
            explore_steps: Some(explore_steps),
            ..PaintConfig::episodic(horizon)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return input(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if self.horizon == 0 || self.max_trial_steps == 0 || self.switch_period == 0 {
            return input("horizon, max_trial_steps and switch_period must be positive");
        }
        if let LabelingMode::Robust(w) = self.labeling_mode {
            if w == 0 || w % 2 == 0 {
                return input(format!("robust window must be a positive odd number, got {w}"));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return input(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.epsilon < 0.0 {
            return input("epsilon must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// The estimate fell below the threshold.
    Classifier,
    /// The episode ran out.
    Horizon,
    /// Diagnostic force-reset after sitting in an irreversible state.
    TruthStuckTimeout,
    /// The backward controller did not get back near the start.
    ReturnCheck,
    /// Unconditional reset on a fixed schedule.
    Periodic,
}

/// One reset, logged to the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    /// Environment step at which the reset was requested.
    pub step_index: u64,
    pub episode_or_trial: u64,
    pub trigger: Trigger,
    /// Step and estimate at the detection that started exploration.
    pub detected_at: Option<u64>,
    pub detection_estimate: Option<f64>,
    pub states_labeled: usize,
    pub queries_used: u64,
}

/// One row of a run's learning curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub env_step: u64,
    pub episode_or_trial: u64,
    pub interventions_cum: u64,
    pub labels_cum: u64,
    pub eval_success_rate: f64,
    pub online_return: f64,
    pub missed_detections_cum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
    pub events: Vec<InterventionEvent>,
    /// Fingerprint of the environment's first random draws.
    pub stream_digest: u64,
}

impl RunRecord {
    pub fn last(&self) -> Option<&RecordRow> {
        self.rows.last()
    }

    pub fn final_success(&self) -> f64 {
        self.last().map_or(0.0, |r| r.eval_success_rate)
    }

    pub fn total_steps(&self) -> u64 {
        self.last().map_or(0, |r| r.env_step)
    }

    pub fn total_queries(&self) -> u64 {
        self.last().map_or(0, |r| r.labels_cum)
    }

    pub fn interventions(&self) -> u64 {
        self.last().map_or(0, |r| r.interventions_cum)
    }
}

/// Reversibility used in a learning target: the label when one exists,
/// otherwise the pseudo-label.
pub fn target_reversibility(
    store: &LabelStore,
    estimator: &dyn ReversibilityEstimator,
    mode: PseudoLabelMode,
    obs: &Observation,
) -> f64 {
    match store.label_of(&obs.key()) {
        Some(true) => 1.0,
        Some(false) => 0.0,
        None => match mode {
            PseudoLabelMode::Estimator => estimator.predict(obs),
            PseudoLabelMode::AssumeReversible => 1.0,
        },
    }
}

/// Fraction of greedy rollouts that reach the goal within the horizon.
/// Rollouts run on forks of `env`, so the training stream is untouched.
pub fn evaluate_greedy(env: &dyn Environment, learner: &QLearner, episodes: usize, seed: u64, round: u64) -> f64 {
    if episodes == 0 {
        return 0.0;
    }
    let mut successes = 0;
    for k in 0..episodes {
        let fork_seed = rng::derive_seed(seed, Stream::Eval, round * episodes as u64 + k as u64);
        let mut eval_env = env.fork(fork_seed);
        let mut state = eval_env.reset();
        for _ in 0..eval_env.horizon() {
            if eval_env.is_success(&state.obs) {
                break;
            }
            let a = learner.greedy(eval_env.cell(&state.obs));
            match eval_env.step(&eval_env.action(a)) {
                Ok(t) => state = t.next,
                Err(_) => break,
            }
        }
        if eval_env.is_success(&state.obs) {
            successes += 1;
        }
    }
    successes as f64 / episodes as f64
}
