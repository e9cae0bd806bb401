use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::mdp::QTable;
use crate::penalized::{q_learning_step, PenaltyParams, TdSample};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps over which exploration decays linearly from start to end.
    pub anneal_steps: u64,
    pub replay_capacity: usize,
    /// Extra updates on replayed transitions after each real one.
    pub replay_updates: usize,
    /// Starting value of every Q entry. Values above the reachable returns
    /// make untried actions attractive.
    pub initial_q: f64,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            learning_rate: 0.2,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_steps: 20_000,
            replay_capacity: 50_000,
            replay_updates: 4,
            initial_q: 0.0,
        }
    }
}

/// One environment step as seen by a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub cell: usize,
    pub action: usize,
    pub reward: f64,
    pub next_cell: usize,
    pub obs: Observation,
    pub next_obs: Observation,
}

/// Tabular Q-learning over an environment's cell abstraction with
/// penalized targets and a uniform replay buffer.
#[derive(Debug, Clone)]
pub struct QLearner {
    q: QTable,
    config: QConfig,
    params: PenaltyParams,
    steps: u64,
    replay: Vec<Experience>,
    cursor: usize,
    rng: Rng,
}

impl QLearner {
    pub fn new(n_cells: usize, n_actions: usize, params: PenaltyParams, config: QConfig, rng: Rng) -> Self {
        QLearner {
            q: QTable::filled(n_cells, n_actions, config.initial_q),
            config,
            params,
            steps: 0,
            replay: Vec::new(),
            cursor: 0,
            rng,
        }
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn params(&self) -> &PenaltyParams {
        &self.params
    }

    pub fn n_actions(&self) -> usize {
        self.q.n_actions
    }

    pub fn exploration_rate(&self) -> f64 {
        let c = &self.config;
        let frac = if c.anneal_steps == 0 {
            1.0
        } else {
            (self.steps as f64 / c.anneal_steps as f64).min(1.0)
        };
        c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)
    }

    pub fn greedy(&self, cell: usize) -> usize {
        self.q.argmax(cell)
    }

    pub fn random_action(&mut self) -> usize {
        self.rng.random_range(0..self.q.n_actions)
    }

    /// Epsilon-greedy choice.
    pub fn act(&mut self, cell: usize) -> usize {
        let eps = self.exploration_rate();
        if self.rng.random::<f64>() < eps {
            self.random_action()
        } else {
            self.greedy(cell)
        }
    }

    fn update(&mut self, e: &Experience, reversibility: f64) {
        let sample = TdSample {
            state: e.cell,
            action: e.action,
            reward: e.reward,
            next_state: e.next_cell,
        };
        q_learning_step(&mut self.q, &sample, reversibility, self.config.learning_rate, &self.params);
    }

    /// Learns from `experience`, then from replayed transitions. The
    /// reversibility of every successor is looked up at update time, so
    /// replayed targets pick up labels that arrived later. Each call counts
    /// as one environment step on the exploration schedule.
    pub fn learn(&mut self, experience: Experience, reversibility: &mut dyn FnMut(&Experience) -> f64) {
        self.steps += 1;
        let r = reversibility(&experience);
        self.update(&experience, r);
        if self.config.replay_capacity == 0 {
            return;
        }
        if self.replay.len() < self.config.replay_capacity {
            self.replay.push(experience);
        } else {
            self.replay[self.cursor] = experience;
            self.cursor = (self.cursor + 1) % self.config.replay_capacity;
        }
        for _ in 0..self.config.replay_updates {
            let i = self.rng.random_range(0..self.replay.len());
            let e = self.replay[i].clone();
            let r = reversibility(&e);
            self.update(&e, r);
        }
    }
}
