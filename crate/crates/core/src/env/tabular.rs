use super::{unit_uniform, Action, EnvState, EnvStream, Environment, GroundTruth, Observation, Transition};
use crate::error::{input, Result};
use crate::mdp::{sample_categorical, TabularMdp};

/// Runs any [`TabularMdp`] as an environment.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp,
    horizon: usize,
    stream: EnvStream,
    state: EnvState,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, horizon: usize, seed: u64) -> Result<Self> {
        mdp.validate()?;
        let mut env = TabularEnv {
            state: EnvState::new(Observation::Discrete(0), 0, GroundTruth::reversible()),
            mdp,
            horizon,
            stream: EnvStream::new(seed),
        };
        let s0 = env.mdp.rho0.iter().position(|&p| p > 0.0).unwrap_or(0);
        env.state = env.make_state(s0, 0);
        Ok(env)
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    fn make_state(&self, s: usize, step_count: u64) -> EnvState {
        let near_hazard = self.mdp.reversible_mask[s]
            && (0..self.mdp.n_actions).any(|a| self.mdp.prob_reversible_next(s, a) < 1.0);
        EnvState::new(
            Observation::Discrete(s),
            step_count,
            GroundTruth {
                reversible: self.mdp.reversible_mask[s],
                near_hazard,
            },
        )
    }
}

impl Environment for TabularEnv {
    fn name(&self) -> &str {
        "tabular"
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    fn action(&self, index: usize) -> Action {
        Action::Discrete(index)
    }

    fn n_cells(&self) -> usize {
        self.mdp.n_states
    }

    fn cell(&self, obs: &Observation) -> usize {
        obs.index().expect("tabular observations are discrete")
    }

    fn reset(&mut self) -> EnvState {
        let u = unit_uniform(self.stream.draw());
        let s = sample_categorical(&self.mdp.rho0, u);
        self.state = self.make_state(s, 0);
        self.state.clone()
    }

    fn step(&mut self, action: &Action) -> Result<Transition> {
        let a = match *action {
            Action::Discrete(a) if a < self.mdp.n_actions => a,
            ref other => return input(format!("action {other:?} outside 0..{}", self.mdp.n_actions)),
        };
        let s = self.cell(&self.state.obs);
        let u = unit_uniform(self.stream.draw());
        let next = self.mdp.sample_next(s, a, u);
        let reward = self.mdp.reward[s][a];
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
        (self.mdp.r_min(), self.mdp.r_max())
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn is_success(&self, _obs: &Observation) -> bool {
        false
    }

    fn distance_to_start(&self, obs: &Observation) -> f64 {
        if self.mdp.rho0[self.cell(obs)] > 0.0 {
            0.0
        } else {
            1.0
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
    use crate::mdp::random_tabular_mdp;

    #[test]
    fn reset_frequency_follows_rho0() {
        let mut mdp = random_tabular_mdp(0, 4, 2, 0.0, 0.9).unwrap();
        mdp.rho0 = vec![0.5, 0.5, 0.0, 0.0];
        let mut env = TabularEnv::new(mdp, 10, 42).unwrap();
        let draws = 10_000;
        let zeros = (0..draws)
            .filter(|_| env.reset().obs == Observation::Discrete(0))
            .count();
        let freq = zeros as f64 / draws as f64;
        // binomial standard error is 0.005; allow four of them
        assert!((freq - 0.5).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn irreversible_states_stay_irreversible() {
        let mdp = random_tabular_mdp(4, 10, 3, 0.4, 0.9).unwrap();
        let mut env = TabularEnv::new(mdp, 50, 1).unwrap();
        for episode in 0..50 {
            env.reset();
            let mut seen_irreversible = false;
            for t in 0..50 {
                let tr = env.step(&Action::Discrete((episode + t) % 3)).unwrap();
                let rev = tr.next.ground_truth().reversible;
                assert!(!(seen_irreversible && rev), "left the irreversible set");
                seen_irreversible |= !rev;
            }
        }
    }
}
