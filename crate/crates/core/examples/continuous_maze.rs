//! Point-mass maze with a logistic estimator on radial-basis features.
//! Trains the episodic agent, then prints the learned reversibility map
//! next to the true trench layout.
//!
//! `cargo run --release --example continuous_maze [seed]`

use paint::env::Observation;
use paint::harness::{presets::standard_continuous_layout, run_cell, ExperimentConfig, Settings};

fn main() -> paint::Result<()> {
    let seed = std::env::args().nth(1).unwrap_or_else(|| "0".into());
    let mut settings = Settings::preset("cmaze_paint")?;
    settings.set("agents", "paint")?;
    settings.set("seeds", &seed)?;
    let config = ExperimentConfig::from_settings(settings)?;
    let result = run_cell(&config.cells[0])?;
    println!(
        "final success {:.2}, {} labels over {} steps",
        result.record.final_success(),
        result.record.total_queries(),
        result.record.total_steps()
    );

    let estimator = result.estimator.restore()?;
    let layout = standard_continuous_layout();
    println!("\nlearned estimate (digits = tenths)      true layout (# = trench)");
    let n = 20;
    for row in 0..n {
        let y = 1.0 - (row as f64 + 0.5) / n as f64;
        let mut learned = String::new();
        let mut truth = String::new();
        for col in 0..n {
            let x = (col as f64 + 0.5) / n as f64;
            let p = estimator.predict(&Observation::Continuous(vec![x, y]));
            learned.push(char::from_digit(((p * 10.0) as u32).min(9), 10).expect("digit"));
            let inside = layout.trench_rects.iter().any(|r| x >= r[0] && x <= r[2] && y >= r[1] && y <= r[3]);
            truth.push(if inside { '#' } else { '.' });
        }
        println!("{learned}                    {truth}");
    }
    Ok(())
}
