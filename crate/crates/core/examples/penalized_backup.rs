//! Penalized value iteration on a random MDP, and how far a plan made with
//! a noisy reversibility estimate falls short of the true optimum.
//!
//! `cargo run --release --example penalized_backup`

use paint::mdp::random_tabular_mdp;
use paint::penalized::theorems::{adversarial_estimate, suboptimality_bound, verify_suboptimality_bound};
use paint::penalized::{value_iteration, BackupSpec, PenaltyParams};

fn main() -> paint::Result<()> {
    let epsilon = 0.1;
    let mdp = random_tabular_mdp(11, 8, 3, 0.25, 0.9)?;
    let params = PenaltyParams::for_mdp(&mdp, epsilon)?;
    println!("penalty value (R_min - eps) / (1 - gamma) = {:.3}", params.penalty());

    let vi = value_iteration(&mdp, &BackupSpec::true_labels(&mdp, epsilon)?, 1e-10)?;
    println!("value iteration converged in {} sweeps", vi.iterations);
    for s in 0..mdp.n_states {
        let kind = if mdp.reversible_mask[s] { "reversible" } else { "irreversible" };
        let v = (0..mdp.n_actions).map(|a| vi.q.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
        println!("  state {s} ({kind:>12}): V = {v:7.3}, greedy action {}", vi.policy[s]);
    }

    println!("\n{:>6} {:>14} {:>10}", "delta", "observed gap", "bound");
    for delta in [0.0, 0.02, 0.05, 0.1, 0.2] {
        let check = verify_suboptimality_bound(&mdp, &adversarial_estimate(&mdp, delta), epsilon, &[])?;
        println!("{delta:>6.2} {:>14.4} {:>10.3}", check.observed_gap, check.bound);
    }
    println!(
        "\nbound at delta=0.1, eps=0.1, gamma=0.9, unit reward range: {}",
        suboptimality_bound(0.1, 0.0, 1.0, 0.1, 0.9)
    );
    Ok(())
}
