//! Flat `key = value` experiment files.
//!
//! One setting per line, `#` starts a comment, list values are
//! comma-separated. Keys marked *sweepable* may hold several values; every
//! combination of them becomes its own variant, crossed with `agents` and
//! `seeds`.
//!
//! | key | values | default |
//! |---|---|---|
//! | `name` | free text | preset name or `experiment` |
//! | `env` | `gridmaze`, `continuous_maze` | `gridmaze` |
//! | `layout` | `standard` or a path (ASCII rows for the grid, JSON for the continuous maze) | `standard` |
//! | `slip` | grid slip probability | `0.05` |
//! | `horizon` | steps per episode, also the evaluation horizon | 200 grid, 500 continuous |
//! | `action_noise` *sweepable* | `none`, `uniform:<f>`, `gaussian:<f>`, with `f` a fraction of the action bound | `uniform:0.25` continuous |
//! | `protocol` | `episodic`, `continuing` | `episodic` |
//! | `episodes` | episodic training episodes | `300` |
//! | `total_steps`, `eval_every` | continuing budget and row cadence | `200000`, `5000` |
//! | `agents` | `paint`, `no_early_termination`, `per_step_label`, `self_supervised_rae`, `return_check_lnt`, `periodic_reset` | `paint` |
//! | `seeds` | list, or a range `a..b` | `0..5` |
//! | `threshold` *sweepable* | in (0, 1) | `0.5` |
//! | `explore_steps` | continuing random steps after a detection | `50` |
//! | `switch_period` | continuing forward/backward phase length | `300` |
//! | `max_trial_steps` | stuck-in-hazard force-reset cap | `10 * horizon` |
//! | `pseudo_labels` *sweepable* | `estimator`, `assume_reversible` | `estimator` |
//! | `labeling` *sweepable* | `binary_search`, `robust:<odd w>`, `margin:<p>`, `ensemble_std:<p>` | `binary_search` |
//! | `label_noise` *sweepable* | `none`, `false_positive:<p>`, `false_negative:<p>`, `symmetric:<p>` | `none` |
//! | `estimator` *sweepable* | `tabular`, `logistic`, `ensemble:<k>` | tabular grid, logistic continuous |
//! | `rbf_grid`, `estimator_epochs`, `balance_classes` | logistic settings | `8`, `50`, `true` |
//! | `epsilon`, `gamma` | penalty margin and discount | `0.1`, `0.95` |
//! | `learning_rate`, `replay_updates`, `initial_q`, `anneal_fraction`, `epsilon_end` | Q-learning | `0.1`, `16`, 1 grid / 0.5 continuous, `0.5`, `0.05` |
//! | `eval_episodes` | greedy rollouts per evaluation | `10` |
//! | `lnt_distance` | return-check reset distance | `0.1` |
//! | `reset_period` | periodic-reset interval | `horizon` |
//! | `rae_window` | temporal-order window | `10` |
//! | `rae_epsilon` | penalty margin used by the temporal-order baseline in place of `epsilon` | `0` |
//! | `output_dir` | where results go | `PAINT_OUT_DIR` or `runs` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{ContinuingVariant, EpisodicVariant, LabelingMode, PaintConfig, PseudoLabelMode, QConfig};
use crate::env::{ActionNoise, GridMaze, MazeLayout};
use crate::error::{Error, Result};
use crate::labeling::{GateMode, NoiseModel, NoiseRegion};

use super::presets;

pub const SWEEPABLE: [&str; 7] = [
    "action_noise",
    "threshold",
    "pseudo_labels",
    "labeling",
    "label_noise",
    "estimator",
    "slip",
];

const KNOWN: [&str; 37] = [
    "name",
    "preset",
    "env",
    "layout",
    "slip",
    "horizon",
    "action_noise",
    "protocol",
    "episodes",
    "total_steps",
    "eval_every",
    "agents",
    "seeds",
    "threshold",
    "explore_steps",
    "switch_period",
    "max_trial_steps",
    "pseudo_labels",
    "labeling",
    "label_noise",
    "estimator",
    "rbf_grid",
    "estimator_epochs",
    "balance_classes",
    "epsilon",
    "gamma",
    "learning_rate",
    "replay_updates",
    "initial_q",
    "anneal_fraction",
    "epsilon_end",
    "eval_episodes",
    "lnt_distance",
    "reset_period",
    "rae_window",
    "rae_epsilon",
    "output_dir",
];

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Raw settings: key to one or more values, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Vec<String>>,
}

impl Settings {
    /// Parses the flat format. A `preset` key pulls in that preset first;
    /// keys in the text override it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut own = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!("line {}: expected `key = value`, got `{}`", lineno + 1, raw.trim()));
            };
            own.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_prefix(e))))?;
        }
        match own.values.get("preset").cloned() {
            Some(names) => {
                let [name] = names.as_slice() else {
                    return config_err("`preset` takes a single name");
                };
                let mut merged = Settings::preset(name)?;
                merged.overlay(&own);
                Ok(merged)
            }
            None => Ok(own),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Settings::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let Some(text) = presets::text(name) else {
            return config_err(format!(
                "unknown preset `{name}`; known presets: {}",
                presets::NAMES.join(", ")
            ));
        };
        let mut settings = Settings::parse(text)?;
        if !settings.values.contains_key("name") {
            settings.set("name", name)?;
        }
        Ok(settings)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN.contains(&key) {
            return config_err(format!("unknown key `{key}`"));
        }
        let items: Vec<String> = value
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return config_err(format!("key `{key}` has no value"));
        }
        let list_ok = key == "agents" || key == "seeds" || SWEEPABLE.contains(&key);
        if items.len() > 1 && !list_ok {
            return config_err(format!("key `{key}` takes a single value"));
        }
        self.values.insert(key.to_string(), items);
        Ok(())
    }

    /// Applies `key=value` overrides as given on a command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let Some((k, v)) = o.split_once('=') else {
                return config_err(format!("override `{o}` is not of the form key=value"));
            };
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Copies every key of `other` over this one.
    pub fn overlay(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            if k != "preset" {
                self.values.insert(k.clone(), v.clone());
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).and_then(|v| v.first()).map(String::as_str)
    }

    fn list(&self, key: &str) -> Option<&[String]> {
        self.values.get(key).map(Vec::as_slice)
    }

    /// Writes the settings back in the flat format.
    pub fn to_text(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| k.as_str() != "preset")
            .map(|(k, v)| format!("{k} = {}\n", v.join(", ")))
            .collect()
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => config_err(format!("key `{key}`: expected true or false, got `{v}`")),
    }
}

/// `name:number` values such as `robust:11`.
fn tagged(key: &str, v: &str) -> Result<(String, Option<f64>)> {
    match v.split_once(':') {
        Some((tag, num)) => Ok((tag.to_string(), Some(parse_num(key, num)?))),
        None => Ok((v.to_string(), None)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Episodic,
    Continuing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Paint,
    NoEarlyTermination,
    PerStepLabel,
    SelfSupervisedRae,
    ReturnCheckLnt,
    PeriodicReset,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Paint => "paint",
            AgentKind::NoEarlyTermination => "no_early_termination",
            AgentKind::PerStepLabel => "per_step_label",
            AgentKind::SelfSupervisedRae => "self_supervised_rae",
            AgentKind::ReturnCheckLnt => "return_check_lnt",
            AgentKind::PeriodicReset => "periodic_reset",
        }
    }

    fn parse(v: &str) -> Result<Self> {
        Ok(match v {
            "paint" => AgentKind::Paint,
            "no_early_termination" => AgentKind::NoEarlyTermination,
            "per_step_label" => AgentKind::PerStepLabel,
            "self_supervised_rae" => AgentKind::SelfSupervisedRae,
            "return_check_lnt" => AgentKind::ReturnCheckLnt,
            "periodic_reset" => AgentKind::PeriodicReset,
            _ => return config_err(format!("unknown agent `{v}`")),
        })
    }

    pub fn episodic_variant(self) -> Option<EpisodicVariant> {
        match self {
            AgentKind::Paint => Some(EpisodicVariant::Paint),
            AgentKind::NoEarlyTermination => Some(EpisodicVariant::NoEarlyTermination),
            AgentKind::PerStepLabel => Some(EpisodicVariant::PerStepLabel),
            AgentKind::SelfSupervisedRae => Some(EpisodicVariant::SelfSupervisedRae),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    GridMaze { rows: Vec<String>, slip: f64, horizon: usize },
    ContinuousMaze { layout: MazeLayout, noise: ActionNoise },
}

impl EnvSpec {
    pub fn horizon(&self) -> usize {
        match self {
            EnvSpec::GridMaze { horizon, .. } => *horizon,
            EnvSpec::ContinuousMaze { layout, .. } => layout.horizon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    Tabular,
    Logistic,
    Ensemble { members: usize },
}

/// Everything needed to run one (variant, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    /// Variant label shared by all seeds of the same settings.
    pub variant: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub env: EnvSpec,
    pub protocol: Protocol,
    pub episodes: usize,
    pub total_steps: u64,
    pub eval_every: u64,
    pub paint: PaintConfig,
    pub q: QConfig,
    pub anneal_fraction: f64,
    pub estimator: EstimatorKind,
    pub rbf_grid: usize,
    pub estimator_epochs: usize,
    pub balance_classes: bool,
    pub label_noise: NoiseModel,
    pub lnt_distance: f64,
    pub reset_period: usize,
    pub rae_window: usize,
}

impl CellSpec {
    pub fn file_stem(&self) -> String {
        format!("{}/seed-{}", self.variant, self.seed)
    }

    pub fn continuing_variant(&self) -> Option<ContinuingVariant> {
        match self.agent {
            AgentKind::Paint => Some(ContinuingVariant::Paint),
            AgentKind::ReturnCheckLnt => Some(ContinuingVariant::ReturnCheckLnt {
                distance: self.lnt_distance,
            }),
            AgentKind::PeriodicReset => Some(ContinuingVariant::PeriodicReset {
                period: self.reset_period,
            }),
            _ => None,
        }
    }

    /// Environment steps the run will take.
    pub fn step_budget(&self) -> u64 {
        match self.protocol {
            Protocol::Episodic => (self.episodes * self.env.horizon()) as u64,
            Protocol::Continuing => self.total_steps,
        }
    }
}

/// A parsed, validated experiment: the settings it came from plus every
/// cell it expands to.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub settings: Settings,
    pub output_dir: PathBuf,
    pub cells: Vec<CellSpec>,
}

impl ExperimentConfig {
    pub fn from_settings(settings: Settings) -> Result<Self> {
        let name = settings.get("name").unwrap_or("experiment").to_string();
        let output_dir = match settings.get("output_dir") {
            Some(d) => PathBuf::from(d),
            None => default_output_dir(),
        };
        let seeds = parse_seeds(settings.list("seeds").unwrap_or(&["0..5".to_string()]))?;
        let agents: Vec<AgentKind> = settings
            .list("agents")
            .unwrap_or(&["paint".to_string()])
            .iter()
            .map(|a| AgentKind::parse(a))
            .collect::<Result<_>>()?;
        let mut seen = Vec::new();
        for a in &agents {
            if seen.contains(a) {
                return config_err(format!("agent `{}` listed twice", a.name()));
            }
            seen.push(*a);
        }

        let swept: Vec<&str> = SWEEPABLE
            .iter()
            .copied()
            .filter(|k| settings.list(k).is_some_and(|v| v.len() > 1))
            .collect();
        let mut combos: Vec<Vec<(&str, String)>> = vec![Vec::new()];
        for key in &swept {
            let values = settings.list(key).expect("filtered");
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((*key, v.clone()));
                        c
                    })
                })
                .collect();
        }

        let mut cells = Vec::new();
        for agent in &agents {
            for combo in &combos {
                let mut s = settings.clone();
                let mut label = agent.name().to_string();
                for (k, v) in combo {
                    s.values.insert(k.to_string(), vec![v.clone()]);
                    label.push_str(&format!("__{k}-{}", v.replace([':', '/', ' '], "_")));
                }
                for &seed in &seeds {
                    cells.push(build_cell(&s, *agent, seed, &label)?);
                }
            }
        }
        Ok(ExperimentConfig {
            name,
            settings,
            output_dir,
            cells,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        ExperimentConfig::from_settings(Settings::from_file(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        ExperimentConfig::from_settings(Settings::preset(name)?)
    }

    /// Distinct variant labels in cell order.
    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.variant) {
                out.push(c.variant.clone());
            }
        }
        out
    }
}

/// `PAINT_OUT_DIR` when set, otherwise `runs`.
pub fn default_output_dir() -> PathBuf {
    std::env::var_os("PAINT_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn parse_seeds(items: &[String]) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in items {
        if let Some((a, b)) = item.split_once("..") {
            let (a, b): (u64, u64) = (parse_num("seeds", a.trim())?, parse_num("seeds", b.trim())?);
            seeds.extend(a..b);
        } else {
            seeds.push(parse_num("seeds", item)?);
        }
    }
    if seeds.is_empty() {
        return config_err("`seeds` is empty");
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return config_err("`seeds` must be distinct");
    }
    Ok(seeds)
}

fn parse_labeling(v: &str) -> Result<LabelingMode> {
    Ok(match tagged("labeling", v)? {
        (t, None) if t == "binary_search" => LabelingMode::BinarySearch,
        (t, Some(w)) if t == "robust" => {
            if w < 1.0 || w.fract() != 0.0 || (w as usize) % 2 == 0 {
                return config_err(format!("labeling `{v}`: the window must be a positive odd integer"));
            }
            LabelingMode::Robust(w as usize)
        }
        (t, Some(p)) if t == "margin" && p > 0.0 => LabelingMode::Gated(GateMode::Margin(p)),
        (t, Some(p)) if t == "ensemble_std" && p > 0.0 => LabelingMode::Gated(GateMode::EnsembleStd(p)),
        _ => return config_err(format!("unknown labeling mode `{v}`")),
    })
}

fn parse_label_noise(v: &str) -> Result<NoiseModel> {
    let (tag, p) = tagged("label_noise", v)?;
    if let Some(p) = p {
        if !(0.0..=1.0).contains(&p) {
            return config_err(format!("label noise probability {p} outside [0, 1]"));
        }
    }
    Ok(match (tag.as_str(), p) {
        ("none", None) => NoiseModel::None,
        ("false_positive", Some(p)) => NoiseModel::FalsePositive {
            p,
            region: NoiseRegion::Everywhere,
        },
        ("false_negative", Some(p)) => NoiseModel::FalseNegative {
            p,
            region: NoiseRegion::NearHazard,
        },
        ("symmetric", Some(p)) => NoiseModel::Symmetric { p },
        _ => return config_err(format!("unknown label noise `{v}`")),
    })
}

fn parse_action_noise(v: &str, max_action: f64) -> Result<ActionNoise> {
    let (tag, f) = tagged("action_noise", v)?;
    if let Some(f) = f {
        if f < 0.0 {
            return config_err("action noise must be non-negative");
        }
    }
    Ok(match (tag.as_str(), f) {
        ("none", None) => ActionNoise::None,
        ("uniform", Some(f)) => ActionNoise::Uniform(f * max_action),
        ("gaussian", Some(f)) => ActionNoise::Gaussian(f * max_action),
        _ => return config_err(format!("unknown action noise `{v}`")),
    })
}

fn parse_estimator(v: &str) -> Result<EstimatorKind> {
    Ok(match tagged("estimator", v)? {
        (t, None) if t == "tabular" => EstimatorKind::Tabular,
        (t, None) if t == "logistic" => EstimatorKind::Logistic,
        (t, Some(k)) if t == "ensemble" && k >= 2.0 && k.fract() == 0.0 => EstimatorKind::Ensemble { members: k as usize },
        _ => return config_err(format!("unknown estimator `{v}` (tabular, logistic or ensemble:<k>=2..)")),
    })
}

fn build_cell(s: &Settings, agent: AgentKind, seed: u64, variant: &str) -> Result<CellSpec> {
    let num = |key: &str| -> Option<&str> { s.get(key) };
    let env_kind = num("env").unwrap_or("gridmaze");
    let env = match env_kind {
        "gridmaze" => {
            let horizon = num("horizon").map(|v| parse_num("horizon", v)).transpose()?.unwrap_or(200);
            let slip = num("slip").map(|v| parse_num("slip", v)).transpose()?.unwrap_or(0.05);
            let rows = match num("layout").unwrap_or("standard") {
                "standard" => presets::STANDARD_GRID.iter().map(|r| r.to_string()).collect(),
                path => std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read grid layout {path}: {e}")))?
                    .lines()
                    .map(|l| l.trim().to_string())
                    .filter(|l| !l.is_empty())
                    .collect(),
            };
            let spec = EnvSpec::GridMaze { rows, slip, horizon };
            check_grid(&spec)?;
            spec
        }
        "continuous_maze" => {
            let mut layout = match num("layout").unwrap_or("standard") {
                "standard" => presets::standard_continuous_layout(),
                path => MazeLayout::from_json(
                    &std::fs::read_to_string(path)
                        .map_err(|e| Error::Config(format!("cannot read maze layout {path}: {e}")))?,
                )?,
            };
            if let Some(h) = num("horizon") {
                layout.horizon = parse_num("horizon", h)?;
            }
            layout.validate().map_err(|e| Error::Config(e.to_string()))?;
            let noise = parse_action_noise(num("action_noise").unwrap_or("uniform:0.25"), layout.max_action)?;
            EnvSpec::ContinuousMaze { layout, noise }
        }
        other => return config_err(format!("unknown env `{other}`")),
    };
    let continuous = matches!(env, EnvSpec::ContinuousMaze { .. });
    let horizon = env.horizon();

    let protocol = match num("protocol").unwrap_or("episodic") {
        "episodic" => Protocol::Episodic,
        "continuing" => Protocol::Continuing,
        other => return config_err(format!("unknown protocol `{other}`")),
    };
    match (protocol, agent.episodic_variant().is_some(), agent) {
        (Protocol::Episodic, false, _) => {
            return config_err(format!("agent `{}` needs protocol = continuing", agent.name()))
        }
        (Protocol::Continuing, _, AgentKind::Paint | AgentKind::ReturnCheckLnt | AgentKind::PeriodicReset) => {}
        (Protocol::Continuing, _, _) => {
            return config_err(format!("agent `{}` needs protocol = episodic", agent.name()))
        }
        _ => {}
    }

    let get = |key: &str, default: f64| -> Result<f64> { num(key).map(|v| parse_num(key, v)).transpose().map(|o| o.unwrap_or(default)) };
    let get_usize = |key: &str, default: usize| -> Result<usize> { num(key).map(|v| parse_num(key, v)).transpose().map(|o| o.unwrap_or(default)) };

    let mut paint = match protocol {
        Protocol::Episodic => PaintConfig::episodic(horizon),
        Protocol::Continuing => PaintConfig::continuing(horizon, get_usize("explore_steps", 50)?),
    };
    paint.threshold = get("threshold", 0.5)?;
    paint.switch_period = get_usize("switch_period", 300)?;
    paint.max_trial_steps = get_usize("max_trial_steps", 10 * horizon)?;
    paint.epsilon = get("epsilon", 0.1)?;
    paint.gamma = get("gamma", 0.95)?;
    paint.eval_episodes = get_usize("eval_episodes", 10)?;
    paint.pseudo_label_mode = match num("pseudo_labels").unwrap_or("estimator") {
        "estimator" => PseudoLabelMode::Estimator,
        "assume_reversible" => PseudoLabelMode::AssumeReversible,
        other => return config_err(format!("unknown pseudo_labels mode `{other}`")),
    };
    paint.labeling_mode = parse_labeling(num("labeling").unwrap_or("binary_search"))?;
    if agent == AgentKind::PerStepLabel {
        paint.labeling_mode = LabelingMode::PerStep;
    }
    if agent == AgentKind::SelfSupervisedRae {
        paint.epsilon = get("rae_epsilon", 0.0)?;
    }
    paint.validate().map_err(|e| Error::Config(strip_input(e)))?;

    let episodes = get_usize("episodes", 300)?;
    let total_steps = get_usize("total_steps", 200_000)? as u64;
    let eval_every = get_usize("eval_every", 5_000)? as u64;
    if episodes == 0 || total_steps == 0 || eval_every == 0 {
        return config_err("episodes, total_steps and eval_every must be positive");
    }

    let anneal_fraction = get("anneal_fraction", 0.5)?;
    if !(0.0..=1.0).contains(&anneal_fraction) {
        return config_err("anneal_fraction must lie in [0, 1]");
    }
    let budget = match protocol {
        Protocol::Episodic => (episodes * horizon) as f64,
        Protocol::Continuing => total_steps as f64,
    };
    let q = QConfig {
        learning_rate: get("learning_rate", 0.1)?,
        epsilon_end: get("epsilon_end", 0.05)?,
        anneal_steps: ((budget * anneal_fraction) as u64).max(1),
        replay_updates: get_usize("replay_updates", 16)?,
        initial_q: get("initial_q", if continuous { 0.5 } else { 1.0 })?,
        ..QConfig::default()
    };
    if !(q.learning_rate > 0.0 && q.learning_rate <= 1.0) {
        return config_err("learning_rate must lie in (0, 1]");
    }

    let estimator = parse_estimator(num("estimator").unwrap_or(if continuous { "logistic" } else { "tabular" }))?;
    if matches!(paint.labeling_mode, LabelingMode::Gated(GateMode::EnsembleStd(_)))
        && !matches!(estimator, EstimatorKind::Ensemble { .. })
    {
        return config_err("labeling = ensemble_std:<p> needs estimator = ensemble:<k>");
    }
    let label_noise = parse_label_noise(num("label_noise").unwrap_or("none"))?;
    let balance_classes = num("balance_classes").map(|v| parse_bool("balance_classes", v)).transpose()?.unwrap_or(true);

    Ok(CellSpec {
        variant: variant.to_string(),
        agent,
        seed,
        env,
        protocol,
        episodes,
        total_steps,
        eval_every,
        paint,
        q,
        anneal_fraction,
        estimator,
        rbf_grid: get_usize("rbf_grid", 8)?,
        estimator_epochs: get_usize("estimator_epochs", 50)?,
        balance_classes,
        label_noise,
        lnt_distance: get("lnt_distance", 0.1)?,
        reset_period: get_usize("reset_period", horizon)?.max(1),
        rae_window: get_usize("rae_window", 10)?.max(2),
    })
}

fn strip_input(e: Error) -> String {
    match e {
        Error::Input(m) => m,
        other => other.to_string(),
    }
}

fn check_grid(spec: &EnvSpec) -> Result<()> {
    if let EnvSpec::GridMaze { rows, slip, horizon } = spec {
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        GridMaze::from_ascii(&refs, *slip, *horizon, 0).map_err(|e| Error::Config(strip_input(e)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blank_lines_and_lists() {
        let s = Settings::parse("# header\n\nagents = paint, per_step_label\nseeds = 3, 4 # two\n").unwrap();
        let cfg = ExperimentConfig::from_settings(s).unwrap();
        assert_eq!(cfg.cells.len(), 4);
        assert_eq!(cfg.variants(), vec!["paint", "per_step_label"]);
    }

    #[test]
    fn sweeps_cross_with_agents_and_seeds() {
        let s = Settings::parse("protocol = continuing\nthreshold = 0.3, 0.9\nseeds = 0..3").unwrap();
        let cfg = ExperimentConfig::from_settings(s).unwrap();
        assert_eq!(cfg.cells.len(), 6);
        assert_eq!(cfg.variants(), vec!["paint__threshold-0.3", "paint__threshold-0.9"]);
        assert_eq!(cfg.cells[3].paint.threshold, 0.9);
    }

    #[test]
    fn preset_then_override() {
        let s = Settings::parse("preset = maze_paint\nseeds = 7").unwrap();
        let cfg = ExperimentConfig::from_settings(s).unwrap();
        assert_eq!(cfg.name, "maze_paint");
        assert!(cfg.cells.iter().all(|c| c.seed == 7));
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "bogus = 1",
            "no equals sign",
            "seeds = 1, 1",
            "labeling = robust:4",
            "horizon = 1, 2",
            "agents = return_check_lnt",
            "threshold = 1.5",
            "preset = nope",
            "estimator = ensemble:1",
        ] {
            let r = Settings::parse(bad).and_then(ExperimentConfig::from_settings);
            assert!(matches!(r, Err(Error::Config(_))), "{bad} gave {r:?}");
        }
    }

    #[test]
    fn per_step_agent_forces_per_step_labeling() {
        let cfg = ExperimentConfig::from_settings(Settings::parse("agents = per_step_label\nseeds = 0").unwrap()).unwrap();
        assert_eq!(cfg.cells[0].paint.labeling_mode, LabelingMode::PerStep);
    }

    #[test]
    fn settings_round_trip_through_text() {
        let s = Settings::parse("agents = paint, no_early_termination\nthreshold = 0.3, 0.5\nslip = 0.1").unwrap();
        assert_eq!(Settings::parse(&s.to_text()).unwrap(), s);
    }
}
