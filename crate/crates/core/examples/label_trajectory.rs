//! Labels one trajectory three ways and compares the supervisor cost.
//!
//! `cargo run --example label_trajectory`

use paint::env::{EnvState, GroundTruth, Observation};
use paint::labeling::{binary_search_label, per_state_label, query_bound, ReversibilityOracle, Trajectory};

fn trajectory(n: usize, reversible_prefix: usize) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|i| {
                let truth = if i < reversible_prefix {
                    GroundTruth::reversible()
                } else {
                    GroundTruth::irreversible()
                };
                EnvState::new(Observation::Discrete(i), i as u64, truth)
            })
            .collect(),
    )
}

fn main() -> paint::Result<()> {
    println!("{:>6} {:>8} {:>14} {:>10} {:>8}", "length", "prefix", "binary search", "per state", "bound");
    for (n, prefix) in [(5, 3), (100, 37), (500, 500), (1024, 1), (1024, 700)] {
        let mut fast = trajectory(n, prefix);
        let report = binary_search_label(&mut fast, &mut ReversibilityOracle::noise_free())?;
        let mut slow = trajectory(n, prefix);
        let exhaustive = per_state_label(&mut slow, &mut ReversibilityOracle::noise_free());
        assert_eq!(fast.labels, slow.labels);
        println!(
            "{n:>6} {prefix:>8} {:>14} {:>10} {:>8}",
            report.queries,
            exhaustive.queries,
            query_bound(n)
        );
    }
    Ok(())
}
