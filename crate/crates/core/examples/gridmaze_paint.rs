//! Episodic agent on the 10x10 trench grid, wired up by hand: environment,
//! penalized Q-learner, tabular estimator and a noise-free supervisor.
//!
//! `cargo run --release --example gridmaze_paint [seed]`

use paint::agent::{run_episodic, EpisodicVariant, PaintConfig, QConfig, QLearner};
use paint::env::{Environment, GridMaze};
use paint::estimator::TabularEstimator;
use paint::harness::{grid_success_optimum, presets::STANDARD_GRID};
use paint::labeling::ReversibilityOracle;
use paint::penalized::PenaltyParams;
use paint::rng::{self, Stream};

fn main() -> paint::Result<()> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let (episodes, horizon) = (300, 200);
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.05, horizon, rng::derive_seed(seed, Stream::Env, 0))?;
    let mut config = PaintConfig::episodic(horizon);
    config.epsilon = 0.1;
    let params = PenaltyParams::new(config.gamma, 0.0, 1.0, config.epsilon)?;
    let q = QConfig {
        learning_rate: 0.1,
        replay_updates: 16,
        initial_q: 1.0,
        anneal_steps: (episodes * horizon / 2) as u64,
        ..QConfig::default()
    };
    let mut learner = QLearner::new(env.n_cells(), env.n_actions(), params, q, rng::stream(seed, Stream::Agent));
    let mut estimator = TabularEstimator::default();
    let mut oracle = ReversibilityOracle::noise_free();

    let record = run_episodic(
        EpisodicVariant::Paint,
        &mut env,
        &mut learner,
        &mut estimator,
        &mut oracle,
        None,
        &config,
        episodes,
        seed,
    )?;

    println!("optimal success within the horizon: {:.4}", grid_success_optimum(&env));
    println!("{:>8} {:>8} {:>8} {:>8}", "episode", "steps", "queries", "success");
    for row in record.rows.iter().step_by(30).chain(record.last()) {
        println!(
            "{:>8} {:>8} {:>8} {:>8.2}",
            row.interventions_cum, row.env_step, row.labels_cum, row.eval_success_rate
        );
    }
    let aborted = record.events.iter().filter(|e| e.detected_at.is_some()).count();
    println!(
        "{aborted} of {episodes} episodes cut short; {:.2}% of steps needed a label",
        100.0 * record.total_queries() as f64 / record.total_steps() as f64
    );
    Ok(())
}
