//! Drives the agent into a trench on purpose, with a perfect estimator, and
//! reports how many steps pass between entering the trench and the reset.
//!
//! `cargo run --example intervention_soundness`

use paint::agent::{ContinuingRun, ContinuingVariant, PaintConfig, QConfig, QLearner};
use paint::env::{Environment, GridMaze};
use paint::estimator::PerfectEstimator;
use paint::harness::presets::STANDARD_GRID;
use paint::labeling::ReversibilityOracle;
use paint::penalized::PenaltyParams;
use paint::rng::{self, Stream};

const RIGHT: usize = 1;
const DOWN: usize = 2;

fn main() -> paint::Result<()> {
    let explore_steps = 5;
    let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.0, 200, 1)?;
    let truth = env.clone();
    let mut estimator = PerfectEstimator::new(move |obs| truth.truth(obs.index().expect("grid state")).reversible);
    let params = PenaltyParams::new(0.95, 0.0, 1.0, 0.1)?;
    let back = PenaltyParams::new(0.95, -1.0, 0.0, 0.1)?;
    let (n, a) = (env.n_cells(), env.n_actions());
    let mut forward = QLearner::new(n, a, params, QConfig::default(), rng::stream(0, Stream::Agent));
    let mut backward = QLearner::new(n, a, back, QConfig::default(), rng::indexed_stream(0, Stream::Agent, 1));
    let mut oracle = ReversibilityOracle::noise_free();
    let mut run = ContinuingRun::new(
        ContinuingVariant::Paint,
        &mut env,
        &mut forward,
        &mut backward,
        &mut estimator,
        &mut oracle,
        PaintConfig::continuing(200, explore_steps),
    )?;

    // Right twice, then down into the upper trench band.
    let script = [RIGHT, RIGHT, DOWN, DOWN];
    let mut worst = 0;
    for incursion in 0..10 {
        let mut entered_at = None;
        let mut i = 0;
        loop {
            let report = run.step(script.get(i).copied())?;
            i += 1;
            if report.entered_irreversible && entered_at.is_none() {
                entered_at = Some(run.env_step());
            }
            if report.intervention.is_some() {
                let delay = run.env_step() - entered_at.expect("reset only after entering the trench");
                worst = worst.max(delay);
                println!("incursion {incursion}: reset {delay} steps after entering the trench");
                break;
            }
        }
    }
    println!("worst delay {worst}, allowed {}", explore_steps + 1);
    Ok(())
}
