use serde::{Deserialize, Serialize};

use super::{split_uniforms, Action, EnvState, EnvStream, Environment, GroundTruth, Observation, Transition};
use crate::error::{input, Result};

/// Axis-aligned rectangle `[x0, y0, x1, y1]`.
pub type Rect = [f64; 4];

fn contains(rect: &Rect, p: [f64; 2]) -> bool {
    p[0] >= rect[0] && p[0] <= rect[2] && p[1] >= rect[1] && p[1] <= rect[3]
}

fn clamp_into(rect: &Rect, p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(rect[0], rect[2]), p[1].clamp(rect[1], rect[3])]
}

fn default_goal_radius() -> f64 {
    0.1
}

fn default_max_action() -> f64 {
    0.05
}

fn default_horizon() -> usize {
    500
}

fn default_bins() -> usize {
    20
}

/// Point-mass maze in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeLayout {
    pub trench_rects: Vec<Rect>,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default = "default_max_action")]
    pub max_action: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Resolution of the tabular abstraction, per axis.
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for MazeLayout {
    /// Start top-left, goal bottom-right, two trenches across the
    /// diagonal. Trench edges sit between multiples of the action bound so
    /// a lattice path cannot graze them.
    fn default() -> Self {
        MazeLayout {
            trench_rects: vec![[0.275, 0.575, 0.725, 0.775], [0.475, 0.225, 0.725, 0.425]],
            start: [0.1, 0.9],
            goal: [0.9, 0.1],
            goal_radius: default_goal_radius(),
            max_action: default_max_action(),
            horizon: default_horizon(),
            bins: default_bins(),
        }
    }
}

impl MazeLayout {
    pub fn from_json(text: &str) -> Result<Self> {
        let layout: MazeLayout = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let in_square = |p: [f64; 2]| p.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_square(self.start) || !in_square(self.goal) {
            return input("start and goal must lie in the unit square");
        }
        for rect in &self.trench_rects {
            if !(rect[0] < rect[2] && rect[1] < rect[3]) || !in_square([rect[0], rect[1]]) || !in_square([rect[2], rect[3]]) {
                return input(format!("malformed trench rectangle {rect:?}"));
            }
            if contains(rect, self.start) || contains(rect, self.goal) {
                return input("start and goal must not lie inside a trench");
            }
        }
        if self.max_action <= 0.0 || self.goal_radius <= 0.0 || self.horizon == 0 || self.bins == 0 {
            return input("max_action, goal_radius, horizon and bins must be positive");
        }
        Ok(())
    }
}

/// Perturbation added to the commanded displacement before it is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActionNoise {
    None,
    /// Uniform on `[-width/2, width/2]` per axis.
    Uniform(f64),
    /// Gaussian with the given standard deviation, clipped at three sigma.
    Gaussian(f64),
}

#[derive(Debug, Clone)]
pub struct ContinuousMaze {
    layout: MazeLayout,
    noise: ActionNoise,
    stream: EnvStream,
    state: EnvState,
}

impl ContinuousMaze {
    pub fn new(layout: MazeLayout, noise: ActionNoise, seed: u64) -> Result<Self> {
        layout.validate()?;
        let mut maze = ContinuousMaze {
            state: EnvState::new(Observation::Continuous(layout.start.to_vec()), 0, GroundTruth::reversible()),
            layout,
            noise,
            stream: EnvStream::new(seed),
        };
        maze.state = maze.make_state(maze.layout.start, 0);
        Ok(maze)
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    pub fn trench_of(&self, p: [f64; 2]) -> Option<&Rect> {
        self.layout.trench_rects.iter().find(|r| contains(r, p))
    }

    /// Reversible point within one action step of a trench.
    pub fn near_trench(&self, p: [f64; 2]) -> bool {
        let margin = self.layout.max_action;
        self.trench_of(p).is_none()
            && self.layout.trench_rects.iter().any(|r| {
                let grown = [r[0] - margin, r[1] - margin, r[2] + margin, r[3] + margin];
                contains(&grown, p)
            })
    }

    pub fn truth_at(&self, p: [f64; 2]) -> GroundTruth {
        GroundTruth {
            reversible: self.trench_of(p).is_none(),
            near_hazard: self.near_trench(p),
        }
    }

    pub fn teleport(&mut self, p: [f64; 2]) {
        self.state = self.make_state(p, self.state.step_count);
    }

    fn make_state(&self, p: [f64; 2], step_count: u64) -> EnvState {
        EnvState::new(Observation::Continuous(p.to_vec()), step_count, self.truth_at(p))
    }

    fn position(&self) -> [f64; 2] {
        match &self.state.obs {
            Observation::Continuous(x) => [x[0], x[1]],
            Observation::Discrete(_) => unreachable!("continuous maze holds continuous states"),
        }
    }

    fn noise_sample(&self, word: u64) -> [f64; 2] {
        let (u1, u2) = split_uniforms(word);
        match self.noise {
            ActionNoise::None => [0.0, 0.0],
            ActionNoise::Uniform(width) => [width * (u1 - 0.5), width * (u2 - 0.5)],
            ActionNoise::Gaussian(sigma) => {
                // Box-Muller on the two halves of the draw
                let radius = (-2.0 * (1.0 - u1).ln()).sqrt();
                let angle = std::f64::consts::TAU * u2;
                let clip = |z: f64| (sigma * z).clamp(-3.0 * sigma, 3.0 * sigma);
                [clip(radius * angle.cos()), clip(radius * angle.sin())]
            }
        }
    }

    fn reward_at(&self, p: [f64; 2]) -> f64 {
        let d = ((p[0] - self.layout.goal[0]).powi(2) + (p[1] - self.layout.goal[1]).powi(2)).sqrt();
        if d < self.layout.goal_radius {
            1.0
        } else {
            0.0
        }
    }
}

impl Environment for ContinuousMaze {
    fn name(&self) -> &str {
        "continuous_maze"
    }

    /// Eight compass moves at full magnitude.
    fn n_actions(&self) -> usize {
        8
    }

    fn action(&self, index: usize) -> Action {
        const DIRS: [(f64, f64); 8] = [
            (0.0, 1.0),
            (1.0, 1.0),
            (1.0, 0.0),
            (1.0, -1.0),
            (0.0, -1.0),
            (-1.0, -1.0),
            (-1.0, 0.0),
            (-1.0, 1.0),
        ];
        let (dx, dy) = DIRS[index];
        let m = self.layout.max_action;
        Action::Continuous(vec![dx * m, dy * m])
    }

    fn n_cells(&self) -> usize {
        self.layout.bins * self.layout.bins
    }

    fn cell(&self, obs: &Observation) -> usize {
        let Observation::Continuous(x) = obs else {
            panic!("continuous maze observations are continuous");
        };
        let bins = self.layout.bins;
        let bin = |v: f64| ((v * bins as f64) as usize).min(bins - 1);
        bin(x[1]) * bins + bin(x[0])
    }

    fn reset(&mut self) -> EnvState {
        self.stream.draw();
        self.state = self.make_state(self.layout.start, 0);
        self.state.clone()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        let delta = match action {
            Action::Continuous(v) if v.len() == 2 => [v[0], v[1]],
            other => return input(format!("continuous maze expects a 2-vector action, got {other:?}")),
        };
        let bound = self.layout.max_action * (1.0 + 1e-12);
        if delta.iter().any(|d| !d.is_finite() || d.abs() > bound) {
            return input(format!("action {delta:?} exceeds the per-axis bound {}", self.layout.max_action));
        }
        let word = self.stream.draw();
        let noise = self.noise_sample(word);
        let here = self.position();
        let moved = [
            (here[0] + delta[0] + noise[0]).clamp(0.0, 1.0),
            (here[1] + delta[1] + noise[1]).clamp(0.0, 1.0),
        ];
        let next = match self.trench_of(here) {
            Some(rect) => clamp_into(rect, moved),
            None => moved,
        };
        let reward = self.reward_at(next);
        self.state = self.make_state(next, self.state.step_count + 1);
        Ok(Transition {
            next: self.state.clone(),
            reward,
        })
    }

    fn current(&self) -> &EnvState {
        &self.state
    }

    fn reward_bounds(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn horizon(&self) -> usize {
        self.layout.horizon
    }

    fn is_success(&self, obs: &Observation) -> bool {
        match obs {
            Observation::Continuous(x) => self.reward_at([x[0], x[1]]) > 0.0,
            Observation::Discrete(_) => false,
        }
    }

    fn distance_to_start(&self, obs: &Observation) -> f64 {
        match obs {
            Observation::Continuous(x) => {
                let s = self.layout.start;
                ((x[0] - s[0]).powi(2) + (x[1] - s[1]).powi(2)).sqrt() / std::f64::consts::SQRT_2
            }
            Observation::Discrete(_) => 1.0,
        }
    }

    fn fork(&self, seed: u64) -> Box<dyn Environment> {
        let mut copy = self.clone();
        copy.stream = EnvStream::new(seed);
        Box::new(copy)
    }

    fn stream_digest(&self) -> u64 {
        self.stream.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_reward_inside_radius() {
        let layout = MazeLayout::default();
        let mut env = ContinuousMaze::new(layout.clone(), ActionNoise::None, 0).unwrap();
        env.teleport([layout.goal[0] - 0.05, layout.goal[1]]);
        let t = env.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(t.reward, 1.0);
    }

    #[test]
    fn trench_keeps_the_agent() {
        let layout = MazeLayout::default();
        let rect = layout.trench_rects[0];
        let mut env = ContinuousMaze::new(layout, ActionNoise::Uniform(0.05), 1).unwrap();
        env.teleport([(rect[0] + rect[2]) / 2.0, (rect[1] + rect[3]) / 2.0]);
        for i in 0..200 {
            let t = env.step(&env.action(i % 8)).unwrap();
            let Observation::Continuous(x) = &t.next.obs else { unreachable!() };
            assert!(contains(&rect, [x[0], x[1]]));
            assert!(!t.next.ground_truth().reversible);
        }
    }

    #[test]
    fn rejects_oversized_actions() {
        let mut env = ContinuousMaze::new(MazeLayout::default(), ActionNoise::None, 0).unwrap();
        assert!(env.step(&Action::Continuous(vec![0.2, 0.0])).is_err());
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn reset_returns_start() {
        let mut env = ContinuousMaze::new(MazeLayout::default(), ActionNoise::None, 0).unwrap();
        env.step(&env.action(2)).unwrap();
        let s = env.reset();
        assert_eq!(s.obs, Observation::Continuous(vec![0.1, 0.9]));
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn layout_json_uses_quadruples() {
        let text = r#"{"trench_rects": [[0.2, 0.2, 0.4, 0.4]], "start": [0.1, 0.9], "goal": [0.9, 0.1]}"#;
        let layout = MazeLayout::from_json(text).unwrap();
        assert_eq!(layout.trench_rects, vec![[0.2, 0.2, 0.4, 0.4]]);
        assert_eq!(layout.horizon, 500);
        assert_eq!(layout.max_action, 0.05);
    }
}
