//! Named experiment settings, written in the same flat format as config
//! files.

use crate::env::MazeLayout;

/// 10x10 grid: start top-left, goal bottom-right, two trench bands.
pub const STANDARD_GRID: [&str; 10] = [
    "S.........",
    "..........",
    "..######..",
    "..######..",
    "..........",
    "..........",
    "...######.",
    "...######.",
    "..........",
    ".........G",
];

pub fn standard_continuous_layout() -> MazeLayout {
    MazeLayout::default()
}

pub const NAMES: [&str; 12] = [
    "maze_paint",
    "maze_per_step",
    "maze_rae",
    "maze_no_term",
    "table3_ratio",
    "confidence_gated",
    "noisy_labels",
    "threshold_sweep",
    "continuing_paint",
    "cmaze_paint",
    "pseudo_labels",
    "noisy_actions",
];

pub fn text(name: &str) -> Option<&'static str> {
    Some(match name {
        "maze_paint" => "env = gridmaze\nagents = paint\n",
        "maze_per_step" => "env = gridmaze\nagents = paint, per_step_label\n",
        "maze_rae" => "env = gridmaze\nagents = paint, self_supervised_rae\n",
        "maze_no_term" => "env = gridmaze\nagents = paint, no_early_termination\n",
        "table3_ratio" => "env = gridmaze\nagents = paint, per_step_label\n",
        "confidence_gated" => "env = gridmaze\nagents = paint\nlabeling = binary_search, margin:0.4\n",
        "noisy_labels" => {
            "env = gridmaze\n\
             agents = paint\n\
             label_noise = false_positive:0.2, false_negative:0.2\n\
             labeling = binary_search, robust:11\n"
        }
        "threshold_sweep" => {
            "env = gridmaze\n\
             protocol = continuing\n\
             agents = paint\n\
             threshold = 0.1, 0.3, 0.5, 0.7, 0.9\n"
        }
        "continuing_paint" => {
            "env = gridmaze\n\
             protocol = continuing\n\
             agents = paint, return_check_lnt, periodic_reset\n"
        }
        "cmaze_paint" => "env = continuous_maze\nagents = paint, no_early_termination\n",
        "pseudo_labels" => "env = continuous_maze\nagents = paint\npseudo_labels = estimator, assume_reversible\n",
        "noisy_actions" => {
            "env = continuous_maze\n\
             agents = paint\n\
             action_noise = uniform:0.25, uniform:0.5, uniform:1.0\n"
        }
        _ => return None,
    })
}
