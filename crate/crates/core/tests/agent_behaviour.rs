mod common;

use common::log2_ceil_plus_one;
use paint::agent::{
    run_continuing, run_episodic, ContinuingRun, ContinuingVariant, EpisodicVariant, PaintConfig, QConfig, QLearner,
    Trigger,
};
use paint::env::{Environment, GridMaze};
use paint::estimator::{ConstantEstimator, PerfectEstimator, TabularEstimator};
use paint::harness::presets::STANDARD_GRID;
use paint::labeling::{query_bound, ReversibilityOracle};
use paint::penalized::PenaltyParams;
use paint::rng::{self, Stream};

const RIGHT: usize = 1;
const DOWN: usize = 2;

fn learners(env: &dyn Environment, seed: u64) -> (QLearner, QLearner) {
    let (n, a) = (env.n_cells(), env.n_actions());
    let forward = PenaltyParams::new(0.95, 0.0, 1.0, 0.1).unwrap();
    let backward = PenaltyParams::new(0.95, -1.0, 0.0, 0.1).unwrap();
    (
        QLearner::new(n, a, forward, QConfig::default(), rng::stream(seed, Stream::Agent)),
        QLearner::new(n, a, backward, QConfig::default(), rng::indexed_stream(seed, Stream::Agent, 1)),
    )
}

#[test]
fn confident_estimator_never_aborts_and_labels_logarithmically() {
    let horizon = 50;
    let mut env = GridMaze::from_ascii(&["S.........", "..........", ".........G"], 0.0, horizon, 1).unwrap();
    let (mut learner, _) = learners(&env, 1);
    let mut oracle = ReversibilityOracle::noise_free();
    let config = PaintConfig::episodic(horizon);
    let record = run_episodic(
        EpisodicVariant::Paint,
        &mut env,
        &mut learner,
        &mut ConstantEstimator(1.0),
        &mut oracle,
        None,
        &config,
        20,
        1,
    )
    .unwrap();
    assert_eq!(record.events.len(), 20);
    for e in &record.events {
        assert_eq!(e.trigger, Trigger::Horizon);
        assert_eq!(e.states_labeled, horizon + 1);
        assert!(e.queries_used <= log2_ceil_plus_one(horizon));
        assert!(e.queries_used <= query_bound(horizon + 1));
    }
}

#[test]
fn pessimistic_estimator_aborts_at_the_first_step() {
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.0, 40, 2).unwrap();
    let (mut learner, _) = learners(&env, 2);
    let record = run_episodic(
        EpisodicVariant::Paint,
        &mut env,
        &mut learner,
        &mut ConstantEstimator(0.0),
        &mut ReversibilityOracle::noise_free(),
        None,
        &PaintConfig::episodic(40),
        5,
        2,
    )
    .unwrap();
    for (k, e) in record.events.iter().enumerate() {
        assert_eq!(e.trigger, Trigger::Classifier);
        assert_eq!(e.detected_at, Some(40 * k as u64), "abort must happen before the first action");
        assert!(e.detection_estimate.unwrap() < 0.5);
    }
}

#[test]
fn per_step_baseline_queries_every_step() {
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.05, 60, 3).unwrap();
    let (mut learner, _) = learners(&env, 3);
    let mut oracle = ReversibilityOracle::noise_free().without_cache();
    let record = run_episodic(
        EpisodicVariant::PerStepLabel,
        &mut env,
        &mut learner,
        &mut TabularEstimator::default(),
        &mut oracle,
        None,
        &PaintConfig::episodic(60),
        10,
        3,
    )
    .unwrap();
    assert_eq!(record.total_steps(), 600);
    assert_eq!(record.total_queries(), 600);
}

#[test]
fn perfect_estimator_resets_exactly_after_the_exploration_budget() {
    let explore = 7;
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.0, 200, 4).unwrap();
    let truth = env.clone();
    let mut estimator = PerfectEstimator::new(move |obs| truth.truth(obs.index().unwrap()).reversible);
    let (mut forward, mut backward) = learners(&env, 4);
    let mut oracle = ReversibilityOracle::noise_free();
    let mut run = ContinuingRun::new(
        ContinuingVariant::Paint,
        &mut env,
        &mut forward,
        &mut backward,
        &mut estimator,
        &mut oracle,
        PaintConfig::continuing(200, explore),
    )
    .unwrap();
    let script = [RIGHT, RIGHT, DOWN, DOWN];
    for _ in 0..5 {
        let mut entered = None;
        for i in 0.. {
            let report = run.step(script.get(i).copied()).unwrap();
            if report.entered_irreversible && entered.is_none() {
                entered = Some(run.env_step());
            }
            if report.intervention.is_some() {
                assert_eq!(run.env_step() - entered.unwrap(), explore as u64);
                break;
            }
        }
    }
    assert_eq!(run.interventions(), 5);
    assert_eq!(run.missed_detections(), 0);
}

#[test]
fn blind_estimator_is_rescued_by_the_stuck_timeout() {
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.0, 20, 5).unwrap();
    let (mut forward, mut backward) = learners(&env, 5);
    let mut estimator = ConstantEstimator(1.0);
    let mut oracle = ReversibilityOracle::noise_free();
    let mut config = PaintConfig::continuing(20, 5);
    config.max_trial_steps = 30;
    let mut run = ContinuingRun::new(
        ContinuingVariant::Paint,
        &mut env,
        &mut forward,
        &mut backward,
        &mut estimator,
        &mut oracle,
        config,
    )
    .unwrap();
    let mut trigger = None;
    for i in 0..200 {
        // walk into the trench, then keep pushing right inside it
        let a = if (2..4).contains(&i) { DOWN } else { RIGHT };
        if let Some(t) = run.step(Some(a)).unwrap().intervention {
            trigger = Some(t);
            break;
        }
    }
    assert_eq!(trigger, Some(Trigger::TruthStuckTimeout));
    assert_eq!(run.missed_detections(), 1);
}

#[test]
fn label_batches_cover_each_visit_once_and_respect_the_threshold() {
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.05, 200, 6).unwrap();
    let (mut forward, mut backward) = learners(&env, 6);
    let mut estimator = TabularEstimator::default();
    let mut oracle = ReversibilityOracle::noise_free();
    let config = PaintConfig::continuing(200, 20);
    let record = run_continuing(
        ContinuingVariant::Paint,
        &mut env,
        &mut forward,
        &mut backward,
        &mut estimator,
        &mut oracle,
        &config,
        30_000,
        10_000,
        6,
    )
    .unwrap();
    assert!(!record.events.is_empty());
    // every trial holds its reset state plus one state per step
    let mut previous_step = 0;
    for e in &record.events {
        assert_eq!(e.states_labeled as u64, e.step_index - previous_step + 1);
        previous_step = e.step_index;
        if e.trigger == Trigger::Classifier {
            assert!(e.detection_estimate.unwrap() < config.threshold);
        }
    }
}

#[test]
fn compared_agents_see_the_same_environment_stream() {
    let digest = |variant: EpisodicVariant| {
        let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.1, 100, 77).unwrap();
        let (mut learner, _) = learners(&env, 9);
        let mut oracle = ReversibilityOracle::noise_free().without_cache();
        run_episodic(
            variant,
            &mut env,
            &mut learner,
            &mut TabularEstimator::default(),
            &mut oracle,
            None,
            &PaintConfig::episodic(100),
            12,
            9,
        )
        .unwrap()
        .stream_digest
    };
    let paint = digest(EpisodicVariant::Paint);
    assert_eq!(paint, digest(EpisodicVariant::PerStepLabel));
    assert_eq!(paint, digest(EpisodicVariant::NoEarlyTermination));
}
