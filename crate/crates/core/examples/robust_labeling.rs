//! Majority-vote labeling against a supervisor that flips 20% of answers.
//!
//! `cargo run --release --example robust_labeling`

use paint::env::{EnvState, GroundTruth, Observation};
use paint::labeling::{robust_label, NoiseModel, ReversibilityOracle, Trajectory};
use paint::rng::{self, Stream};
use rand::Rng;

fn main() -> paint::Result<()> {
    let trials = 200;
    let length = 256;
    println!("{:>6} {:>16} {:>16}", "window", "correct labels", "queries / traj");
    for window in [1, 3, 5, 7, 11, 15] {
        let mut oracle = ReversibilityOracle::new(NoiseModel::Symmetric { p: 0.2 }, 7);
        let mut gen = rng::stream(3, Stream::Generator);
        let (mut correct, mut queries) = (0.0, 0);
        for _ in 0..trials {
            let prefix = gen.random_range(0..=length);
            let states = (0..length)
                .map(|i| {
                    let truth = if i < prefix {
                        GroundTruth::reversible()
                    } else {
                        GroundTruth::irreversible()
                    };
                    EnvState::new(Observation::Discrete(i), i as u64, truth)
                })
                .collect();
            let mut traj = Trajectory::new(states);
            queries += robust_label(&mut traj, &mut oracle, window)?.queries;
            correct += traj.correct_fraction();
        }
        println!(
            "{window:>6} {:>15.1}% {:>16.1}",
            100.0 * correct / trials as f64,
            queries as f64 / trials as f64
        );
    }
    Ok(())
}
