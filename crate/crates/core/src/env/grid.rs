use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{split_uniforms, Action, EnvState, EnvStream, Environment, GroundTruth, Observation, Transition};
use crate::error::{input, Result};
use crate::mdp::TabularMdp;

/// `(x, y)` with `y` growing downwards.
pub type Cell = (usize, usize);

/// Up, right, down, left.
const MOVES: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// 4-connected grid with trench cells. Inside a trench the agent moves
/// freely, but any move that would leave the trench keeps it in place.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub trench_cells: BTreeSet<Cell>,
    pub goal_cell: Cell,
    pub start_cell: Cell,
    pub slip_prob: f64,
    pub horizon: usize,
}

#[derive(Debug, Clone)]
pub struct GridMaze {
    layout: GridLayout,
    reversible: Vec<bool>,
    near_hazard: Vec<bool>,
    stream: EnvStream,
    state: EnvState,
}

impl GridMaze {
    pub fn new(layout: GridLayout, seed: u64) -> Result<Self> {
        let GridLayout {
            width,
            height,
            start_cell,
            goal_cell,
            slip_prob,
            ..
        } = layout;
        if width == 0 || height == 0 {
            return input("grid dimensions must be positive");
        }
        for (name, (x, y)) in [("start", start_cell), ("goal", goal_cell)] {
            if x >= width || y >= height {
                return input(format!("{name} cell ({x}, {y}) lies outside the grid"));
            }
        }
        if layout.trench_cells.iter().any(|&(x, y)| x >= width || y >= height) {
            return input("trench cell outside the grid");
        }
        if layout.trench_cells.contains(&start_cell) || layout.trench_cells.contains(&goal_cell) {
            return input("start and goal must not be trench cells");
        }
        if !(0.0..1.0).contains(&slip_prob) {
            return input(format!("slip_prob must lie in [0, 1), got {slip_prob}"));
        }
        if layout.horizon == 0 {
            return input("horizon must be positive");
        }
        let mut maze = GridMaze {
            reversible: Vec::new(),
            near_hazard: Vec::new(),
            stream: EnvStream::new(seed),
            state: EnvState::new(Observation::Discrete(0), 0, GroundTruth::reversible()),
            layout,
        };
        if !maze.trench_free_path_exists() {
            return input("no trench-free path from start to goal");
        }
        maze.reversible = maze.to_tabular_mdp(0.9).reachability_mask();
        maze.near_hazard = (0..maze.n_cells())
            .map(|i| {
                maze.reversible[i]
                    && MOVES.iter().any(|&m| {
                        maze.neighbour(maze.cell_of(i), m)
                            .is_some_and(|c| maze.layout.trench_cells.contains(&c))
                    })
            })
            .collect();
        let start = maze.index_of(maze.layout.start_cell);
        maze.state = maze.make_state(start, 0);
        Ok(maze)
    }

    /// Parses a character map: `S` start, `G` goal, `#` trench, `.` free.
    pub fn from_ascii(rows: &[&str], slip_prob: f64, horizon: usize, seed: u64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut trench_cells = BTreeSet::new();
        let (mut start, mut goal) = (None, None);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return input(format!("row {y} has a different width"));
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '#' => {
                        trench_cells.insert((x, y));
                    }
                    'S' => start = Some((x, y)),
                    'G' => goal = Some((x, y)),
                    '.' => {}
                    other => return input(format!("unexpected map character {other:?}")),
                }
            }
        }
        let (Some(start_cell), Some(goal_cell)) = (start, goal) else {
            return input("map needs exactly one S and one G");
        };
        GridMaze::new(
            GridLayout {
                width,
                height,
                trench_cells,
                goal_cell,
                start_cell,
                slip_prob,
                horizon,
            },
            seed,
        )
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn index_of(&self, (x, y): Cell) -> usize {
        y * self.layout.width + x
    }

    pub fn cell_of(&self, index: usize) -> Cell {
        (index % self.layout.width, index / self.layout.width)
    }

    pub fn is_trench(&self, index: usize) -> bool {
        self.layout.trench_cells.contains(&self.cell_of(index))
    }

    pub fn truth(&self, index: usize) -> GroundTruth {
        GroundTruth {
            reversible: self.reversible[index],
            near_hazard: self.near_hazard[index],
        }
    }

    /// Places the agent at `cell` without touching the random stream.
    /// Used by scripted scenarios.
    pub fn teleport(&mut self, cell: Cell) {
        let index = self.index_of(cell);
        self.state = self.make_state(index, self.state.step_count);
    }

    fn make_state(&self, index: usize, step_count: u64) -> EnvState {
        let truth = if self.reversible.is_empty() {
            GroundTruth::reversible()
        } else {
            self.truth(index)
        };
        EnvState::new(Observation::Discrete(index), step_count, truth)
    }

    fn neighbour(&self, (x, y): Cell, (dx, dy): (isize, isize)) -> Option<Cell> {
        let nx = x.checked_add_signed(dx)?;
        let ny = y.checked_add_signed(dy)?;
        (nx < self.layout.width && ny < self.layout.height).then_some((nx, ny))
    }

    /// Deterministic effect of move `m` from cell `index`.
    pub fn move_result(&self, index: usize, m: usize) -> usize {
        let cell = self.cell_of(index);
        let in_trench = self.layout.trench_cells.contains(&cell);
        match self.neighbour(cell, MOVES[m]) {
            Some(next) if !in_trench || self.layout.trench_cells.contains(&next) => self.index_of(next),
            _ => index,
        }
    }

    fn trench_free_path_exists(&self) -> bool {
        let start = self.layout.start_cell;
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(cell) = queue.pop_front() {
            if cell == self.layout.goal_cell {
                return true;
            }
            for m in MOVES {
                if let Some(next) = self.neighbour(cell, m) {
                    if !self.layout.trench_cells.contains(&next) && seen.insert(next) {
                        queue.push_back(next);
                    }
                }
            }
        }
        false
    }

    fn reward_for(&self, next: usize) -> f64 {
        if next == self.index_of(self.layout.goal_cell) {
            1.0
        } else {
            0.0
        }
    }

    /// Exact tabular model of the maze, including slip noise. A slip
    /// replaces the intended move by a uniformly random one.
    pub fn to_tabular_mdp(&self, gamma: f64) -> TabularMdp {
        let n = self.n_cells();
        let slip = self.layout.slip_prob;
        let mut transition = vec![vec![vec![0.0; n]; 4]; n];
        let mut reward = vec![vec![0.0; 4]; n];
        for s in 0..n {
            for a in 0..4 {
                transition[s][a][self.move_result(s, a)] += 1.0 - slip;
                for m in 0..4 {
                    transition[s][a][self.move_result(s, m)] += slip / 4.0;
                }
                reward[s][a] = transition[s][a]
                    .iter()
                    .enumerate()
                    .map(|(next, p)| p * self.reward_for(next))
                    .sum();
            }
        }
        let mut rho0 = vec![0.0; n];
        rho0[self.index_of(self.layout.start_cell)] = 1.0;
        let mut mdp = TabularMdp {
            n_states: n,
            n_actions: 4,
            transition,
            reward,
            rho0,
            gamma,
            reversible_mask: vec![true; n],
            r_min: Some(0.0),
            r_max: Some(1.0),
        };
        mdp.reversible_mask = mdp.reachability_mask();
        mdp
    }

    /// Shortest trench-free step count from every cell to the start.
    pub fn distances_to_start(&self) -> Vec<Option<usize>> {
        let n = self.n_cells();
        let mut dist = vec![None; n];
        let start = self.index_of(self.layout.start_cell);
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let d = dist[i].expect("queued cells have distances");
            for m in 0..4 {
                // moves are symmetric outside trenches
                let j = self.move_result(i, m);
                if dist[j].is_none() && !self.is_trench(j) {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

impl Environment for GridMaze {
    fn name(&self) -> &str {
        "gridmaze"
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn action(&self, index: usize) -> Action {
        Action::Discrete(index)
    }

    fn n_cells(&self) -> usize {
        self.layout.width * self.layout.height
    }

    fn cell(&self, obs: &Observation) -> usize {
        obs.index().expect("grid observations are discrete")
    }

    fn reset(&mut self) -> EnvState {
        self.stream.draw();
        let start = self.index_of(self.layout.start_cell);
        self.state = self.make_state(start, 0);
        self.state.clone()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        let m = match *action {
            Action::Discrete(m) if m < 4 => m,
            ref other => return input(format!("gridmaze action must be Discrete(0..4), got {other:?}")),
        };
        let (u_slip, u_dir) = split_uniforms(self.stream.draw());
        let m = if u_slip < self.layout.slip_prob {
            ((u_dir * 4.0) as usize).min(3)
        } else {
            m
        };
        let current = self.cell(&self.state.obs);
        let next = self.move_result(current, m);
        let reward = self.reward_for(next);
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
        obs.index() == Some(self.index_of(self.layout.goal_cell))
    }

    fn distance_to_start(&self, obs: &Observation) -> f64 {
        let (x, y) = self.cell_of(self.cell(obs));
        let (sx, sy) = self.layout.start_cell;
        let manhattan = x.abs_diff(sx) + y.abs_diff(sy);
        manhattan as f64 / (self.layout.width + self.layout.height - 2).max(1) as f64
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

    fn maze(slip: f64) -> GridMaze {
        GridMaze::from_ascii(&["S..", ".#.", "..G"], slip, 20, 0).unwrap()
    }

    #[test]
    fn deterministic_move_and_goal_reward() {
        let mut env = maze(0.0);
        env.reset();
        let t = env.step(&Action::Discrete(1)).unwrap();
        assert_eq!(t.next.obs, Observation::Discrete(1));
        assert_eq!(t.reward, 0.0);
        env.teleport((2, 1));
        let t = env.step(&Action::Discrete(2)).unwrap();
        assert_eq!(t.reward, 1.0);
        assert!(env.is_success(&t.next.obs));
    }

    #[test]
    fn trench_is_absorbing() {
        let mut env = maze(0.3);
        env.teleport((1, 1));
        for a in [0, 1, 2, 3, 0, 2] {
            let t = env.step(&Action::Discrete(a)).unwrap();
            assert!(env.is_trench(env.cell(&t.next.obs)));
            assert!(!t.next.ground_truth().reversible);
        }
    }

    #[test]
    fn reset_goes_to_start() {
        let mut env = maze(0.0);
        env.teleport((2, 2));
        let s = env.reset();
        assert_eq!(s.obs, Observation::Discrete(0));
        assert_eq!(s.step_count, 0);
        assert!(s.ground_truth().reversible);
    }

    #[test]
    fn rejects_bad_layouts_and_actions() {
        assert!(GridMaze::from_ascii(&["S#G"], 0.0, 10, 0).is_err());
        assert!(GridMaze::from_ascii(&["S.G"], 1.0, 10, 0).is_err());
        let mut env = maze(0.0);
        assert!(env.step(&Action::Discrete(4)).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn tabular_model_is_valid() {
        let env = maze(0.2);
        let mdp = env.to_tabular_mdp(0.95);
        mdp.validate().unwrap();
        assert!(!mdp.reversible_mask[env.index_of((1, 1))]);
        assert_eq!(mdp.reversible_mask.iter().filter(|r| !**r).count(), 1);
    }

    #[test]
    fn near_hazard_marks_trench_neighbours() {
        let env = maze(0.0);
        assert!(env.truth(env.index_of((1, 0))).near_hazard);
        assert!(!env.truth(env.index_of((0, 0))).near_hazard);
    }
}
