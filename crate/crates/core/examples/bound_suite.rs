//! Runs the randomized guarantee checks and prints one line per check.
//!
//! `cargo run --release --example bound_suite [instances]`

use paint::penalized::theorems::run_bound_suite;

fn main() -> paint::Result<()> {
    let instances = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    for report in run_bound_suite(0, instances)? {
        println!(
            "{:<26} {:>4} instances  {}  worst slack {:.3e}",
            report.theorem,
            report.instances,
            if report.pass { "pass" } else { "FAIL" },
            report.worst_margin
        );
    }
    Ok(())
}
