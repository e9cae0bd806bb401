//! Penalized Bellman backups.
//!
//! Transitions into irreversible states are replaced by a constant penalty
//! value `(R_min - eps) / (1 - gamma)` instead of bootstrapping through the
//! successor. With true labels this is the exact operator; with an estimator
//! each successor is weighted by its predicted reversibility.

pub mod theorems;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::mdp::{evaluate_linear, Policy, QTable, TabularMdp};

/// Reward range, discount and penalty margin shared by every backup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub epsilon: f64,
}

impl PenaltyParams {
    pub fn new(gamma: f64, r_min: f64, r_max: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return input(format!("gamma must lie in [0, 1), got {gamma}"));
        }
        if r_min > r_max {
            return input(format!("r_min {r_min} exceeds r_max {r_max}"));
        }
        if epsilon < 0.0 || !epsilon.is_finite() {
            return input(format!("epsilon must be non-negative, got {epsilon}"));
        }
        Ok(PenaltyParams {
            gamma,
            r_min,
            r_max,
            epsilon,
        })
    }

    pub fn for_mdp(mdp: &TabularMdp, epsilon: f64) -> Result<Self> {
        PenaltyParams::new(mdp.gamma, mdp.r_min(), mdp.r_max(), epsilon)
    }

    /// `(R_min - eps) / (1 - gamma)`: the value of living forever on the
    /// surrogate penalty reward.
    pub fn penalty(&self) -> f64 {
        (self.r_min - self.epsilon) / (1.0 - self.gamma)
    }

    /// Backup target given the successor's reversibility (a label or an
    /// estimate in `[0, 1]`) and the bootstrapped successor value.
    pub fn target(&self, r: f64, next_reversibility: f64, next_value: f64) -> f64 {
        if next_reversibility == 0.0 {
            return self.penalty();
        }
        next_reversibility * (r + self.gamma * next_value) + (1.0 - next_reversibility) * self.penalty()
    }
}

/// `r` when the next state is reversible, `R_min - eps` otherwise.
pub fn surrogate_reward(r: f64, next_reversible: bool, r_min: f64, epsilon: f64) -> f64 {
    if next_reversible {
        r
    } else {
        r_min - epsilon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupMode {
    TrueLabels,
    Empirical,
}

/// Operator definition: penalty parameters plus the per-state reversibility
/// values used to weight successors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupSpec {
    pub params: PenaltyParams,
    pub mode: BackupMode,
    pub reversibility: Vec<f64>,
}

impl BackupSpec {
    pub fn true_labels(mdp: &TabularMdp, epsilon: f64) -> Result<Self> {
        Ok(BackupSpec {
            params: PenaltyParams::for_mdp(mdp, epsilon)?,
            mode: BackupMode::TrueLabels,
            reversibility: mdp.reversibility(),
        })
    }

    pub fn empirical(mdp: &TabularMdp, epsilon: f64, estimate: Vec<f64>) -> Result<Self> {
        if estimate.len() != mdp.n_states {
            return input(format!(
                "estimator covers {} states but the MDP has {}",
                estimate.len(),
                mdp.n_states
            ));
        }
        if let Some(bad) = estimate.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return input(format!("reversibility estimates must lie in [0, 1], got {bad}"));
        }
        Ok(BackupSpec {
            params: PenaltyParams::for_mdp(mdp, epsilon)?,
            mode: BackupMode::Empirical,
            reversibility: estimate,
        })
    }

    pub fn penalty(&self) -> f64 {
        self.params.penalty()
    }

    fn check(&self, mdp: &TabularMdp) {
        assert_eq!(self.reversibility.len(), mdp.n_states, "backup spec does not match the MDP");
    }

    /// `sum_s' P(s'|s,a) [R(s') r(s,a) + (1 - R(s')) pen]`.
    fn immediate(&self, mdp: &TabularMdp, s: usize, a: usize) -> f64 {
        let pen = self.penalty();
        let r = mdp.reward[s][a];
        let row = &mdp.transition[s][a];
        if row.iter().zip(&self.reversibility).all(|(p, rev)| *p == 0.0 || *rev == 1.0) {
            return r;
        }
        row
            .iter()
            .zip(&self.reversibility)
            .map(|(p, rev)| p * (rev * r + (1.0 - rev) * pen))
            .sum()
    }

    fn apply(&self, mdp: &TabularMdp, next_values: &[f64]) -> QTable {
        self.check(mdp);
        let gamma = self.params.gamma;
        let mut out = QTable::new(mdp.n_states, mdp.n_actions);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let boot: f64 = mdp.transition[s][a]
                    .iter()
                    .zip(&self.reversibility)
                    .zip(next_values)
                    .map(|((p, rev), v)| p * rev * v)
                    .sum();
                out.set(s, a, self.immediate(mdp, s, a) + gamma * boot);
            }
        }
        out
    }
}

/// One application of the penalized expected backup under `policy`.
pub fn bellman_backup(q: &QTable, mdp: &TabularMdp, policy: &Policy, spec: &BackupSpec) -> QTable {
    let v: Vec<f64> = (0..mdp.n_states).map(|s| q.expected(s, policy)).collect();
    spec.apply(mdp, &v)
}

/// One application of the penalized optimality backup (`max` over next actions).
pub fn bellman_optimality_backup(q: &QTable, mdp: &TabularMdp, spec: &BackupSpec) -> QTable {
    let v: Vec<f64> = (0..mdp.n_states).map(|s| q.max(s)).collect();
    spec.apply(mdp, &v)
}

/// Exact fixed point of the penalized expected backup for `policy`.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &Policy, spec: &BackupSpec) -> Result<QTable> {
    policy.validate()?;
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return input("policy shape does not match the MDP");
    }
    spec.check(mdp);
    let rhs: Vec<f64> = (0..mdp.n_states)
        .flat_map(|s| (0..mdp.n_actions).map(move |a| (s, a)))
        .map(|(s, a)| spec.immediate(mdp, s, a))
        .collect();
    let weight: Vec<Vec<Vec<f64>>> = mdp
        .transition
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|row| row.iter().zip(&spec.reversibility).map(|(p, r)| p * r).collect())
                .collect()
        })
        .collect();
    Ok(evaluate_linear(
        mdp.n_states,
        mdp.n_actions,
        spec.params.gamma,
        &rhs,
        &weight,
        policy,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub q: QTable,
    /// Greedy action per state, lowest index on ties.
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Iterates the optimality backup from `Q = 0` until `||B*Q - Q|| <= tolerance`.
pub fn value_iteration(mdp: &TabularMdp, spec: &BackupSpec, tolerance: f64) -> Result<ValueIteration> {
    if tolerance <= 0.0 || !tolerance.is_finite() {
        return input(format!("tolerance must be positive, got {tolerance}"));
    }
    let mut q = QTable::new(mdp.n_states, mdp.n_actions);
    let mut iterations = 0;
    loop {
        let next = bellman_optimality_backup(&q, mdp, spec);
        iterations += 1;
        let residual = next.sup_distance(&q);
        q = next;
        if residual <= tolerance {
            break;
        }
    }
    let policy = q.greedy_policy();
    Ok(ValueIteration { q, policy, iterations })
}

/// One observed transition for a temporal-difference update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Moves `Q[s][a]` toward the penalized target. `next_reversibility` is a
/// label (0 or 1) or an estimate; a hard 0 regresses straight to the penalty
/// value. Returns the temporal-difference error.
pub fn q_learning_step(
    q: &mut QTable,
    sample: &TdSample,
    next_reversibility: f64,
    learning_rate: f64,
    params: &PenaltyParams,
) -> f64 {
    let target = params.target(sample.reward, next_reversibility, q.max(sample.next_state));
    let current = q.get(sample.state, sample.action);
    let error = target - current;
    q.set(sample.state, sample.action, current + learning_rate * error);
    error
}
