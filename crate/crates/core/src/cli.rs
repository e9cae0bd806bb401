//! Command-line front end.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, Settings};
use crate::labeling::jsonl::{label_lines, read_lines, write_labeled, FileLabeler};
use crate::labeling::{NoiseModel, ReversibilityOracle};
use crate::penalized::theorems::{run_bound_suite, BoundReport};

#[derive(Debug, Parser)]
#[command(name = "paint", version, about = "Reversibility-aware RL experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a config file or a preset.
    Run {
        /// Flat `key = value` config file.
        config: Option<PathBuf>,
        /// Start from a named preset; keys in `config` and `--set` override it.
        #[arg(long)]
        preset: Option<String>,
        /// Run this single seed instead of the configured ones.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root [default: $PAINT_OUT_DIR, else `runs`].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` settings, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Only list the cells the config expands to.
        #[arg(long)]
        dry_run: bool,
    },
    /// Label a JSON-lines trajectory with the fewest supervisor queries.
    Label {
        file: PathBuf,
        /// Majority-vote window (odd); 1 is plain binary search.
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Flip each supervisor answer with this probability.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Seed for the flip noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the penalized-backup guarantees on random MDPs. Exits 1 if
    /// any check fails.
    EvalBounds {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Write the JSON report here as well as to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute `summary.json` of a finished run directory.
    Report { dir: PathBuf },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code: 0 success, 1 failure, 2 usage error.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{rendered}")
            } else {
                write!(stderr, "{rendered}")
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Run {
            config,
            preset,
            seed,
            out,
            set,
            dry_run,
        } => run(config.as_deref(), preset.as_deref(), seed, out, &set, dry_run, stdout, stderr),
        Command::Label {
            file,
            window,
            noise,
            seed,
            out,
        } => label(&file, window, noise, seed, out.as_deref(), stdout),
        Command::EvalBounds { seed, instances, out } => eval_bounds(seed, instances, out.as_deref(), stdout),
        Command::Report { dir } => {
            let summary = harness::report(&dir)?;
            write!(stdout, "{}", summary.table())?;
            Ok(0)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<&Path>,
    preset: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    set: &[String],
    dry_run: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32> {
    let mut settings = match preset {
        Some(name) => Settings::preset(name)?,
        None => Settings::default(),
    };
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            settings.overlay(&Settings::parse(&text)?);
        }
        None if preset.is_none() => {
            return Err(Error::Config("give a config file or --preset <name>".into()));
        }
        None => {}
    }
    settings.apply_overrides(set)?;
    if let Some(s) = seed {
        settings.set("seeds", &s.to_string())?;
    }
    if let Some(dir) = out {
        settings.set("output_dir", &dir.to_string_lossy())?;
    }
    let config = ExperimentConfig::from_settings(settings)?;
    if dry_run {
        for cell in &config.cells {
            writeln!(stdout, "{} steps={}", cell.file_stem(), cell.step_budget())?;
        }
        return Ok(0);
    }
    let total = config.cells.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let output = harness::run_experiment_with(&config, &|cell| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
        let status = match &cell.error {
            Some(e) => format!("FAILED: {e}"),
            None => format!("{:.1}s", cell.elapsed_seconds),
        };
        eprintln!("[{n}/{total}] {}/seed-{} {status}", cell.variant, cell.seed);
    })?;
    write!(stdout, "{}", output.summary.table())?;
    writeln!(stdout, "results in {}", output.dir.display())?;
    let failed = output.manifest.cells.iter().filter(|c| c.error.is_some()).count();
    if failed > 0 {
        writeln!(stderr, "{failed} of {total} cells failed; see manifest.json")?;
        return Ok(1);
    }
    Ok(0)
}

fn label(file: &Path, window: usize, noise: f64, seed: u64, out: Option<&Path>, stdout: &mut dyn Write) -> Result<i32> {
    let reader = File::open(file).map_err(|e| Error::Input(format!("cannot open {}: {e}", file.display())))?;
    let mut lines = read_lines(BufReader::new(reader))?;
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Input(format!("noise must lie in [0, 1], got {noise}")));
    }
    let model = if noise > 0.0 {
        NoiseModel::Symmetric { p: noise }
    } else {
        NoiseModel::None
    };
    let mut oracle = ReversibilityOracle::new(model, seed);
    let labeler = if window == 1 {
        FileLabeler::BinarySearch
    } else {
        FileLabeler::Robust(window)
    };
    let summary = label_lines(&mut lines, labeler, &mut oracle)?;
    match out {
        Some(path) => write_labeled(std::io::BufWriter::new(File::create(path)?), &lines, &summary)?,
        None => write_labeled(&mut *stdout, &lines, &summary)?,
    }
    Ok(0)
}

#[derive(Serialize)]
struct BoundsOutput {
    seed: u64,
    instances: usize,
    pass: bool,
    checks: Vec<BoundReport>,
}

fn eval_bounds(seed: u64, instances: usize, out: Option<&Path>, stdout: &mut dyn Write) -> Result<i32> {
    if instances == 0 {
        return Err(Error::Input("--instances must be positive".into()));
    }
    let checks = run_bound_suite(seed, instances)?;
    let report = BoundsOutput {
        seed,
        instances,
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    let text = serde_json::to_string_pretty(&report)?;
    writeln!(stdout, "{text}")?;
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(if report.pass { 0 } else { 1 })
}
