//! Environments with irreversible regions.
//!
//! Every environment owns its random stream and consumes exactly one 64-bit
//! draw per `reset` and per `step`, whatever the agent does. Two runs seeded
//! identically therefore see the same stochasticity stream even when their
//! agents behave differently.

mod continuous;
mod grid;
mod tabular;

pub use continuous::{ActionNoise, ContinuousMaze, MazeLayout, Rect};
pub use grid::{Cell, GridLayout, GridMaze};
pub use tabular::TabularEnv;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::Digest;

/// Number of leading random draws folded into [`Environment::stream_digest`].
pub const DIGEST_WINDOW: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Observation {
    pub fn key(&self) -> StateKey {
        match self {
            Observation::Discrete(i) => StateKey::Index(*i),
            Observation::Continuous(x) => StateKey::Bits(x.iter().map(|v| v.to_bits()).collect()),
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Observation::Discrete(i) => Some(*i),
            Observation::Continuous(_) => None,
        }
    }
}

/// State identity used for label caching: exact index for tabular states,
/// bitwise coordinate equality for continuous ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateKey {
    Index(usize),
    Bits(Vec<u64>),
}

/// Supervisor-side facts about a state. Agents never read these; the
/// oracle and the harness diagnostics do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub reversible: bool,
    /// Reversible state adjacent to an irreversible region. Used by the
    /// false-negative label-noise model.
    pub near_hazard: bool,
}

impl GroundTruth {
    pub fn reversible() -> Self {
        GroundTruth {
            reversible: true,
            near_hazard: false,
        }
    }

    pub fn irreversible() -> Self {
        GroundTruth {
            reversible: false,
            near_hazard: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub obs: Observation,
    pub step_count: u64,
    truth: GroundTruth,
}

impl EnvState {
    pub fn new(obs: Observation, step_count: u64, truth: GroundTruth) -> Self {
        EnvState {
            obs,
            step_count,
            truth,
        }
    }

    pub fn key(&self) -> StateKey {
        self.obs.key()
    }

    /// Hidden label. Only the supervisor side of the system may call this.
    pub fn ground_truth(&self) -> GroundTruth {
        self.truth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: EnvState,
    pub reward: f64,
}

pub trait Environment: Send {
    fn name(&self) -> &str;

    /// Size of the discrete action set offered to tabular agents.
    fn n_actions(&self) -> usize;

    /// Maps a discrete action index onto the native action space.
    fn action(&self, index: usize) -> Action;

    /// Number of cells in the tabular abstraction agents learn over.
    fn n_cells(&self) -> usize;

    fn cell(&self, obs: &Observation) -> usize;

    fn reset(&mut self) -> EnvState;

    fn step(&mut self, action: &Action) -> Result<Transition>;

    fn current(&self) -> &EnvState;

    fn reward_bounds(&self) -> (f64, f64);

    fn horizon(&self) -> usize;

    fn is_success(&self, obs: &Observation) -> bool;

    /// Normalised distance from `obs` to the reset state.
    fn distance_to_start(&self, obs: &Observation) -> f64;

    /// Copy of the environment with a fresh random stream, for evaluation
    /// rollouts that must not perturb the training stream.
    fn fork(&self, seed: u64) -> Box<dyn Environment>;

    /// Fingerprint of the first [`DIGEST_WINDOW`] random draws.
    fn stream_digest(&self) -> u64;
}

/// Shared random-stream bookkeeping for the concrete environments.
#[derive(Debug, Clone)]
pub(crate) struct EnvStream {
    rng: crate::rng::Rng,
    digest: Digest,
    drawn: usize,
}

impl EnvStream {
    pub(crate) fn new(seed: u64) -> Self {
        EnvStream {
            rng: crate::rng::from_seed(seed),
            digest: Digest::default(),
            drawn: 0,
        }
    }

    pub(crate) fn draw(&mut self) -> u64 {
        use rand::RngCore;
        let word = self.rng.next_u64();
        if self.drawn < DIGEST_WINDOW {
            self.digest.push(word);
        }
        self.drawn += 1;
        word
    }

    pub(crate) fn digest(&self) -> u64 {
        self.digest.value()
    }
}

/// Splits one draw into two uniforms in `[0, 1)` with 32 bits each.
pub(crate) fn split_uniforms(word: u64) -> (f64, f64) {
    let scale = 1.0 / (1u64 << 32) as f64;
    ((word >> 32) as f64 * scale, (word & 0xffff_ffff) as f64 * scale)
}

/// Uniform in `[0, 1)` from the top 53 bits.
pub(crate) fn unit_uniform(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
