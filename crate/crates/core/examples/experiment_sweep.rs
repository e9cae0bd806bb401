//! Runs a small config-file experiment through the harness and prints the
//! summary table. Results land in a temporary directory.
//!
//! `cargo run --release --example experiment_sweep`

use paint::harness::{run_experiment, ExperimentConfig, Settings};

const CONFIG: &str = "
name = example_sweep
env = gridmaze
episodes = 150
agents = paint, no_early_termination
labeling = binary_search, margin:0.4
seeds = 0..3
";

fn main() -> paint::Result<()> {
    let mut settings = Settings::parse(CONFIG)?;
    let out = std::env::temp_dir().join("paint-example-sweep");
    settings.set("output_dir", &out.to_string_lossy())?;
    let config = ExperimentConfig::from_settings(settings)?;
    println!("{} cells in {} variants", config.cells.len(), config.variants().len());
    let output = run_experiment(&config)?;
    print!("{}", output.summary.table());
    println!("results in {}", output.dir.display());
    Ok(())
}
