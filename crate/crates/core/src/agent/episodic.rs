use serde::{Deserialize, Serialize};

use super::{
    evaluate_greedy, target_reversibility, Experience, InterventionEvent, LabelingMode, PaintConfig, QLearner,
    RaeEstimator, RecordRow, RunRecord, Trigger,
};
use crate::env::{EnvState, Environment, Observation};
use crate::error::Result;
use crate::estimator::{LabelStore, ReversibilityEstimator};
use crate::labeling::{binary_search_label, confidence_gated_label, robust_label, ReversibilityOracle, Trajectory};

/// Which episodic loop to run. All share the environment, learner and
/// evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodicVariant {
    /// Abort to random exploration on detection; label at episode end.
    Paint,
    /// PAINT with the abort rule removed.
    NoEarlyTermination,
    /// Query every state as it is reached; abort on an irreversible label.
    PerStepLabel,
    /// Label-free temporal-order classifier drives penalty and abort.
    SelfSupervisedRae,
}

/// Labels a finished batch with the configured labeler and records every
/// state in the store. Returns `(states labeled, queries used)`.
pub(crate) fn label_batch(
    states: Vec<EnvState>,
    mode: LabelingMode,
    oracle: &mut ReversibilityOracle,
    estimator: &dyn ReversibilityEstimator,
    store: &mut LabelStore,
) -> Result<(usize, u64)> {
    let mut traj = Trajectory::new(states);
    let report = match mode {
        LabelingMode::BinarySearch | LabelingMode::PerStep => binary_search_label(&mut traj, oracle)?,
        LabelingMode::Robust(w) => robust_label(&mut traj, oracle, w)?,
        LabelingMode::Gated(g) => confidence_gated_label(&mut traj, oracle, estimator, g)?,
    };
    for (state, label) in traj.states.iter().zip(&traj.labels) {
        store.add(state.obs.clone(), label.expect("labelers fill every label"));
    }
    Ok((traj.len(), report.queries))
}

/// Runs `episodes` episodes of length `config.horizon`. A row is recorded
/// before training and after every episode; each episode end counts as one intervention.
#[allow(clippy::too_many_arguments)]
pub fn run_episodic(
    variant: EpisodicVariant,
    env: &mut dyn Environment,
    learner: &mut QLearner,
    estimator: &mut dyn ReversibilityEstimator,
    oracle: &mut ReversibilityOracle,
    rae: Option<&mut RaeEstimator>,
    config: &PaintConfig,
    episodes: usize,
    seed: u64,
) -> Result<RunRecord> {
    config.validate()?;
    let mut rae = rae;
    if variant == EpisodicVariant::SelfSupervisedRae && rae.is_none() {
        return crate::error::input("the RAE baseline needs a temporal-order classifier");
    }
    let mut store = LabelStore::new();
    let mut record = RunRecord::default();
    let mut env_step = 0u64;
    let start_queries = oracle.query_count();
    record.rows.push(RecordRow {
        eval_success_rate: evaluate_greedy(&*env, learner, config.eval_episodes, seed, 0),
        ..RecordRow::default()
    });

    for episode in 0..episodes as u64 {
        let episode_queries = oracle.query_count();
        let mut state = env.reset();
        let mut visited = vec![state.clone()];
        let mut aborted: Option<(u64, f64)> = None;
        let mut online_return = 0.0;
        let mut prev_obs: Option<Observation> = None;

        for _ in 0..config.horizon {
            if aborted.is_none() {
                let estimate = match variant {
                    EpisodicVariant::Paint => Some(estimator.predict(&state.obs)),
                    EpisodicVariant::NoEarlyTermination => None,
                    EpisodicVariant::PerStepLabel => store
                        .label_of(&state.obs.key())
                        .map(|l| if l { 1.0 } else { 0.0 }),
                    EpisodicVariant::SelfSupervisedRae => prev_obs.as_ref().map(|p| {
                        rae.as_deref().expect("checked").transition_reversibility(p, &state.obs)
                    }),
                };
                if let Some(e) = estimate.filter(|e| *e < config.threshold) {
                    aborted = Some((env_step, e));
                }
            }
            let cell = env.cell(&state.obs);
            let action = if aborted.is_some() {
                learner.random_action()
            } else {
                learner.act(cell)
            };
            let transition = env.step(&env.action(action))?;
            env_step += 1;
            online_return += transition.reward;
            let next = transition.next;
            if variant == EpisodicVariant::PerStepLabel {
                let label = oracle.query(&next);
                store.add(next.obs.clone(), label);
            }
            let experience = Experience {
                cell,
                action,
                reward: transition.reward,
                next_cell: env.cell(&next.obs),
                obs: state.obs.clone(),
                next_obs: next.obs.clone(),
            };
            match variant {
                EpisodicVariant::SelfSupervisedRae => {
                    let rae = rae.as_deref().expect("checked");
                    learner.learn(experience, &mut |e| rae.transition_reversibility(&e.obs, &e.next_obs));
                }
                _ => {
                    let (store, est, mode) = (&store, &*estimator, config.pseudo_label_mode);
                    learner.learn(experience, &mut |e| target_reversibility(store, est, mode, &e.next_obs));
                }
            }
            prev_obs = Some(state.obs);
            visited.push(next.clone());
            state = next;
        }

        let states_labeled = match variant {
            EpisodicVariant::Paint | EpisodicVariant::NoEarlyTermination => {
                label_batch(visited, config.labeling_mode, oracle, &*estimator, &mut store)?.0
            }
            EpisodicVariant::PerStepLabel => visited.len(),
            EpisodicVariant::SelfSupervisedRae => {
                let rae = rae.as_deref_mut().expect("checked");
                let obs: Vec<Observation> = visited.into_iter().map(|s| s.obs).collect();
                rae.add_trajectory(&obs);
                rae.train();
                0
            }
        };
        if variant != EpisodicVariant::SelfSupervisedRae {
            estimator.train(&store)?;
        }
        let batch_queries = oracle.query_count() - episode_queries;
        record.events.push(InterventionEvent {
            step_index: env_step,
            episode_or_trial: episode,
            trigger: if aborted.is_some() {
                Trigger::Classifier
            } else {
                Trigger::Horizon
            },
            detected_at: aborted.map(|a| a.0),
            detection_estimate: aborted.map(|a| a.1),
            states_labeled,
            queries_used: batch_queries,
        });
        record.rows.push(RecordRow {
            env_step,
            episode_or_trial: episode,
            interventions_cum: episode + 1,
            labels_cum: oracle.query_count() - start_queries,
            eval_success_rate: evaluate_greedy(&*env, learner, config.eval_episodes, seed, episode + 1),
            online_return,
            missed_detections_cum: 0,
        });
    }
    record.stream_digest = env.stream_digest();
    Ok(record)
}
