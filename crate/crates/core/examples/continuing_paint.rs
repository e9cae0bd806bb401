//! Reset-free training on the trench grid: forward and backward controllers
//! alternate, and the agent asks for a reset only when its estimate says it
//! is stuck. Prints how the reset rate falls over training.
//!
//! `cargo run --release --example continuing_paint [seed]`

use paint::agent::Trigger;
use paint::harness::{run_cell, ExperimentConfig, Settings};

fn main() -> paint::Result<()> {
    let seed = std::env::args().nth(1).unwrap_or_else(|| "0".into());
    let mut settings = Settings::preset("continuing_paint")?;
    settings.set("agents", "paint")?;
    settings.set("seeds", &seed)?;
    let config = ExperimentConfig::from_settings(settings)?;
    let cell = &config.cells[0];
    let result = run_cell(cell)?;
    let record = &result.record;

    let quarter = cell.total_steps / 4;
    for q in 0..4 {
        let (lo, hi) = (q * quarter, (q + 1) * quarter);
        let resets = record.events.iter().filter(|e| e.step_index > lo && e.step_index <= hi).count();
        println!("steps {lo:>6}..{hi:>6}: {resets:>4} resets");
    }
    let missed = record.events.iter().filter(|e| e.trigger == Trigger::TruthStuckTimeout).count();
    println!(
        "final success {:.2}, {} labels over {} steps, {missed} missed detections",
        record.final_success(),
        record.total_queries(),
        record.total_steps()
    );
    Ok(())
}
