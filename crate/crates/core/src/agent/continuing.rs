use serde::{Deserialize, Serialize};

use super::episodic::label_batch;
use super::{
    evaluate_greedy, target_reversibility, Experience, InterventionEvent, PaintConfig, PseudoLabelMode, QLearner,
    RecordRow, RunRecord, Trigger,
};
use crate::env::{EnvState, Environment};
use crate::error::Result;
use crate::estimator::{LabelStore, ReversibilityEstimator};
use crate::labeling::ReversibilityOracle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuingVariant {
    /// Classifier-triggered exploration then reset; labels at each reset.
    Paint,
    /// Label-free: reset when a backward phase ends farther than `distance`
    /// from the start.
    ReturnCheckLnt { distance: f64 },
    /// Label-free: reset every `period` steps.
    PeriodicReset { period: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
}

/// Outcome of one call to [`ContinuingRun::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Whether an environment step was taken.
    pub stepped: bool,
    pub reward: f64,
    pub intervention: Option<Trigger>,
    /// Ground truth of the state reached, for diagnostics.
    pub entered_irreversible: bool,
}

/// A reset-free run in which a forward controller (task reward) and a
/// backward controller (negative distance to the start) take turns. Both
/// learn off-policy from every transition.
pub struct ContinuingRun<'a> {
    variant: ContinuingVariant,
    env: &'a mut dyn Environment,
    forward: &'a mut QLearner,
    backward: &'a mut QLearner,
    estimator: &'a mut dyn ReversibilityEstimator,
    oracle: &'a mut ReversibilityOracle,
    config: PaintConfig,
    store: LabelStore,
    trial: Vec<EnvState>,
    trial_index: u64,
    phase: Phase,
    phase_steps: usize,
    since_reset: usize,
    explore_left: Option<usize>,
    detection: Option<(u64, f64)>,
    stuck: usize,
    env_step: u64,
    interventions: u64,
    missed: u64,
    start_queries: u64,
    events: Vec<InterventionEvent>,
}

impl<'a> ContinuingRun<'a> {
    pub fn new(
        variant: ContinuingVariant,
        env: &'a mut dyn Environment,
        forward: &'a mut QLearner,
        backward: &'a mut QLearner,
        estimator: &'a mut dyn ReversibilityEstimator,
        oracle: &'a mut ReversibilityOracle,
        config: PaintConfig,
    ) -> Result<Self> {
        config.validate()?;
        let start = env.reset();
        let start_queries = oracle.query_count();
        Ok(ContinuingRun {
            variant,
            env,
            forward,
            backward,
            estimator,
            oracle,
            config,
            store: LabelStore::new(),
            trial: vec![start],
            trial_index: 0,
            phase: Phase::Forward,
            phase_steps: 0,
            since_reset: 0,
            explore_left: None,
            detection: None,
            stuck: 0,
            env_step: 0,
            interventions: 0,
            missed: 0,
            start_queries,
            events: Vec::new(),
        })
    }

    pub fn env_step(&self) -> u64 {
        self.env_step
    }

    pub fn interventions(&self) -> u64 {
        self.interventions
    }

    pub fn missed_detections(&self) -> u64 {
        self.missed
    }

    pub fn queries(&self) -> u64 {
        self.oracle.query_count() - self.start_queries
    }

    pub fn events(&self) -> &[InterventionEvent] {
        &self.events
    }

    pub fn labels(&self) -> &LabelStore {
        &self.store
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_exploring(&self) -> bool {
        self.explore_left.is_some()
    }

    pub fn trial_index(&self) -> u64 {
        self.trial_index
    }

    pub fn current(&self) -> &EnvState {
        self.env.current()
    }

    pub fn forward(&self) -> &QLearner {
        self.forward
    }

    /// Greedy success rate of the forward controller.
    pub fn evaluate(&self, seed: u64, round: u64) -> f64 {
        evaluate_greedy(&*self.env, self.forward, self.config.eval_episodes, seed, round)
    }

    fn uses_labels(&self) -> bool {
        matches!(self.variant, ContinuingVariant::Paint)
    }

    /// Advances the run by at most one environment step. `scripted`
    /// replaces the active controller's choice when the run is not
    /// exploring; the detection and reset rules apply unchanged.
    pub fn step(&mut self, scripted: Option<usize>) -> Result<StepReport> {
        let state = self.env.current().clone();
        // the reset state is reversible by definition and is never flagged
        if self.uses_labels() && self.explore_left.is_none() && self.trial.len() > 1 {
            let estimate = self.estimator.predict(&state.obs);
            if estimate < self.config.threshold {
                self.detection = Some((self.env_step, estimate));
                self.explore_left = Some(self.config.explore_steps.unwrap_or(0));
            }
        }
        if self.explore_left == Some(0) {
            self.intervene(Trigger::Classifier)?;
            return Ok(StepReport {
                stepped: false,
                reward: 0.0,
                intervention: Some(Trigger::Classifier),
                entered_irreversible: false,
            });
        }

        let cell = self.env.cell(&state.obs);
        let action = if self.explore_left.is_some() {
            self.forward.random_action()
        } else if let Some(a) = scripted {
            a
        } else {
            match self.phase {
                Phase::Forward => self.forward.act(cell),
                Phase::Backward => self.backward.act(cell),
            }
        };
        let transition = self.env.step(&self.env.action(action))?;
        self.env_step += 1;
        self.since_reset += 1;
        let next = transition.next;
        let next_cell = self.env.cell(&next.obs);
        let back_reward = -self.env.distance_to_start(&next.obs);
        let mode = if self.uses_labels() {
            self.config.pseudo_label_mode
        } else {
            PseudoLabelMode::AssumeReversible
        };
        for (learner, reward) in [(&mut *self.forward, transition.reward), (&mut *self.backward, back_reward)] {
            let experience = Experience {
                cell,
                action,
                reward,
                next_cell,
                obs: state.obs.clone(),
                next_obs: next.obs.clone(),
            };
            let (store, est) = (&self.store, &*self.estimator);
            learner.learn(experience, &mut |e| target_reversibility(store, est, mode, &e.next_obs));
        }
        let entered_irreversible = !next.ground_truth().reversible;
        self.trial.push(next.clone());
        let mut report = StepReport {
            stepped: true,
            reward: transition.reward,
            intervention: None,
            entered_irreversible,
        };

        if let Some(k) = self.explore_left {
            self.explore_left = Some(k - 1);
            if k == 1 {
                self.intervene(Trigger::Classifier)?;
                report.intervention = Some(Trigger::Classifier);
                return Ok(report);
            }
        }
        self.stuck = if entered_irreversible { self.stuck + 1 } else { 0 };
        if self.stuck >= self.config.max_trial_steps {
            self.missed += 1;
            self.intervene(Trigger::TruthStuckTimeout)?;
            report.intervention = Some(Trigger::TruthStuckTimeout);
            return Ok(report);
        }
        self.phase_steps += 1;
        if self.phase_steps >= self.config.switch_period {
            if let (Phase::Backward, ContinuingVariant::ReturnCheckLnt { distance }) = (self.phase, self.variant) {
                if self.env.distance_to_start(&next.obs) > distance {
                    self.intervene(Trigger::ReturnCheck)?;
                    report.intervention = Some(Trigger::ReturnCheck);
                    return Ok(report);
                }
            }
            self.phase = match self.phase {
                Phase::Forward => Phase::Backward,
                Phase::Backward => Phase::Forward,
            };
            self.phase_steps = 0;
        }
        if let ContinuingVariant::PeriodicReset { period } = self.variant {
            if self.since_reset >= period {
                self.intervene(Trigger::Periodic)?;
                report.intervention = Some(Trigger::Periodic);
            }
        }
        Ok(report)
    }

    fn intervene(&mut self, trigger: Trigger) -> Result<()> {
        let before = self.oracle.query_count();
        let states = std::mem::take(&mut self.trial);
        let states_labeled = if self.uses_labels() {
            let n = label_batch(
                states,
                self.config.labeling_mode,
                self.oracle,
                &*self.estimator,
                &mut self.store,
            )?
            .0;
            self.estimator.train(&self.store)?;
            n
        } else {
            0
        };
        self.events.push(InterventionEvent {
            step_index: self.env_step,
            episode_or_trial: self.trial_index,
            trigger,
            detected_at: self.detection.map(|d| d.0),
            detection_estimate: self.detection.map(|d| d.1),
            states_labeled,
            queries_used: self.oracle.query_count() - before,
        });
        self.interventions += 1;
        self.trial = vec![self.env.reset()];
        self.trial_index += 1;
        self.explore_left = None;
        self.detection = None;
        self.stuck = 0;
        self.phase = Phase::Forward;
        self.phase_steps = 0;
        self.since_reset = 0;
        Ok(())
    }

    fn into_events(self) -> (Vec<InterventionEvent>, u64) {
        (self.events, self.env.stream_digest())
    }
}

/// Runs `total_steps` environment steps, recording a row at the start and
/// every `eval_every` steps after it.
#[allow(clippy::too_many_arguments)]
pub fn run_continuing(
    variant: ContinuingVariant,
    env: &mut dyn Environment,
    forward: &mut QLearner,
    backward: &mut QLearner,
    estimator: &mut dyn ReversibilityEstimator,
    oracle: &mut ReversibilityOracle,
    config: &PaintConfig,
    total_steps: u64,
    eval_every: u64,
    seed: u64,
) -> Result<RunRecord> {
    let eval_every = eval_every.max(1);
    let mut run = ContinuingRun::new(variant, env, forward, backward, estimator, oracle, *config)?;
    let mut rows = vec![RecordRow {
        eval_success_rate: run.evaluate(seed, 0),
        ..RecordRow::default()
    }];
    let mut next_row = eval_every;
    let mut online_return = 0.0;
    while run.env_step() < total_steps {
        let report = run.step(None)?;
        online_return += report.reward;
        if run.env_step() >= next_row {
            rows.push(RecordRow {
                env_step: run.env_step(),
                episode_or_trial: run.trial_index(),
                interventions_cum: run.interventions(),
                labels_cum: run.queries(),
                eval_success_rate: run.evaluate(seed, rows.len() as u64),
                online_return,
                missed_detections_cum: run.missed_detections(),
            });
            online_return = 0.0;
            next_row += eval_every;
        }
    }
    let (events, stream_digest) = run.into_events();
    Ok(RunRecord {
        rows,
        events,
        stream_digest,
    })
}
