//! Finite MDPs with a ground-truth reversibility mask, plus the exact
//! linear-algebra tools the theorem checks are built on.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::rng::{self, Rng};

const ROW_SUM_TOL: f64 = 1e-12;

/// Largest `n_states * n_actions` for which policy evaluation uses a direct
/// LU solve instead of fixed-point iteration.
pub const LINEAR_SOLVE_LIMIT: usize = 10_000;

/// A finite discounted MDP.
///
/// `reversible_mask[s]` is the supervisor's ground truth: `true` when `s`
/// lies in the same connected component as the support of `rho0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub rho0: Vec<f64>,
    pub gamma: f64,
    pub reversible_mask: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

impl TabularMdp {
    /// Lower reward bound. Falls back to the smallest table entry when the
    /// document did not declare one.
    pub fn r_min(&self) -> f64 {
        self.r_min.unwrap_or_else(|| {
            self.reward
                .iter()
                .flatten()
                .copied()
                .fold(f64::INFINITY, f64::min)
        })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max.unwrap_or_else(|| {
            self.reward
                .iter()
                .flatten()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mdp: TabularMdp = serde_json::from_str(text)?;
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Ground-truth reversibility as a 0/1 vector.
    pub fn reversibility(&self) -> Vec<f64> {
        self.reversible_mask
            .iter()
            .map(|&r| if r { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn is_deterministic(&self) -> bool {
        self.transition.iter().flatten().all(|row| {
            row.iter().filter(|&&p| p > 0.0).count() == 1
        })
    }

    /// Successor of `(s, a)` in a deterministic MDP.
    pub fn deterministic_next(&self, s: usize, a: usize) -> Option<usize> {
        let row = &self.transition[s][a];
        let mut support = row.iter().enumerate().filter(|(_, &p)| p > 0.0);
        match (support.next(), support.next()) {
            (Some((next, _)), None) => Some(next),
            _ => None,
        }
    }

    /// Probability that `(s, a)` lands in a reversible state.
    pub fn prob_reversible_next(&self, s: usize, a: usize) -> f64 {
        self.transition[s][a]
            .iter()
            .zip(&self.reversible_mask)
            .filter(|(_, &rev)| rev)
            .map(|(p, _)| p)
            .sum()
    }

    /// Checks every structural invariant, including irreversible-closure.
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_states, self.n_actions);
        if n == 0 || m == 0 {
            return input("n_states and n_actions must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return input(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.transition.len() != n || self.reward.len() != n {
            return input("transition/reward must have n_states rows");
        }
        if self.rho0.len() != n || self.reversible_mask.len() != n {
            return input("rho0/reversible_mask must have n_states entries");
        }
        let (lo, hi) = (self.r_min(), self.r_max());
        if lo > hi {
            return input(format!("r_min {lo} exceeds r_max {hi}"));
        }
        for s in 0..n {
            if self.transition[s].len() != m || self.reward[s].len() != m {
                return input(format!("state {s}: expected {m} actions"));
            }
            for a in 0..m {
                let row = &self.transition[s][a];
                if row.len() != n {
                    return input(format!("P[{s}][{a}] has {} entries, want {n}", row.len()));
                }
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return input(format!("P[{s}][{a}] has a negative or non-finite entry"));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    return input(format!("P[{s}][{a}] sums to {total}"));
                }
                let r = self.reward[s][a];
                if !(lo..=hi).contains(&r) {
                    return input(format!("r[{s}][{a}] = {r} outside [{lo}, {hi}]"));
                }
                if !self.reversible_mask[s] {
                    if let Some(bad) = row
                        .iter()
                        .enumerate()
                        .find(|&(next, &p)| p > 0.0 && self.reversible_mask[next])
                    {
                        return Err(Error::Integrity(format!(
                            "irreversible state {s} reaches reversible state {} under action {a}",
                            bad.0
                        )));
                    }
                }
            }
        }
        let mass: f64 = self.rho0.iter().sum();
        if (mass - 1.0).abs() > ROW_SUM_TOL || self.rho0.iter().any(|&p| p < 0.0) {
            return input(format!("rho0 must be a distribution (sums to {mass})"));
        }
        if let Some(s) = (0..n).find(|&s| self.rho0[s] > 0.0 && !self.reversible_mask[s]) {
            return Err(Error::Integrity(format!("rho0 puts mass on irreversible state {s}")));
        }
        Ok(())
    }

    /// Reversibility recomputed from the dynamics: a state is reversible iff
    /// some policy reaches the support of `rho0` from it.
    pub fn reachability_mask(&self) -> Vec<bool> {
        let n = self.n_states;
        let mut predecessors = vec![Vec::new(); n];
        for s in 0..n {
            for a in 0..self.n_actions {
                for (next, &p) in self.transition[s][a].iter().enumerate() {
                    if p > 0.0 {
                        predecessors[next].push(s);
                    }
                }
            }
        }
        let mut mask = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| self.rho0[s] > 0.0).collect();
        for &s in &queue {
            mask[s] = true;
        }
        while let Some(s) = queue.pop_front() {
            for &prev in &predecessors[s] {
                if !mask[prev] {
                    mask[prev] = true;
                    queue.push_back(prev);
                }
            }
        }
        mask
    }

    /// Samples `s ~ rho0`.
    pub fn sample_initial(&self, rng: &mut Rng) -> usize {
        sample_categorical(&self.rho0, rng.random())
    }

    pub fn sample_next(&self, s: usize, a: usize, u: f64) -> usize {
        sample_categorical(&self.transition[s][a], u)
    }
}

/// Inverse-CDF draw from a categorical distribution given `u ~ U[0,1)`.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Seeded random MDP whose irreversible states form closed sub-components.
///
/// Reversible states occupy indices `0..n_rev` and are strongly connected
/// through a cycle carried by action 0. Rewards are uniform in `[0, 1]`
/// with declared bounds `R_min = 0`, `R_max = 1`.
pub fn random_tabular_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    irreversible_fraction: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    check_generator_args(n_states, n_actions, irreversible_fraction, gamma)?;
    let mut rng = rng::indexed_stream(seed, rng::Stream::Generator, 0);
    let n_irrev = irreversible_count(n_states, irreversible_fraction);
    let n_rev = n_states - n_irrev;

    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for (s, rows) in transition.iter_mut().enumerate() {
        for (a, row) in rows.iter_mut().enumerate() {
            let pool: Vec<usize> = if s < n_rev {
                (0..n_states).collect()
            } else {
                (n_rev..n_states).collect()
            };
            let k = pool.len().min(3);
            let support: Vec<usize> = pool.choose_multiple(&mut rng, k).copied().collect();
            let mut weights: Vec<f64> = support.iter().map(|_| rng.random::<f64>() + 0.05).collect();
            // action 0 carries the reversible cycle s -> s+1
            if s < n_rev && a == 0 {
                let next = (s + 1) % n_rev;
                row[next] += 0.5;
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w *= 0.5 / total);
            } else {
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
            }
            for (next, w) in support.into_iter().zip(weights) {
                row[next] += w;
            }
            renormalize(row);
        }
    }

    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    let rho0 = initial_distribution(n_states, n_rev, &mut rng);
    let reversible_mask = (0..n_states).map(|s| s < n_rev).collect();
    let mdp = TabularMdp {
        n_states,
        n_actions,
        transition,
        reward,
        rho0,
        gamma,
        reversible_mask,
        r_min: Some(0.0),
        r_max: Some(1.0),
    };
    mdp.validate()?;
    Ok(mdp)
}

/// Deterministic-transition variant of [`random_tabular_mdp`]. When any
/// irreversible state exists, the last reversible state's action 1 (or
/// action 0 for single-action MDPs) is forced to lead into the irreversible
/// block so the ordering theorem always has pairs on both sides.
pub fn random_deterministic_mdp(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    irreversible_fraction: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    check_generator_args(n_states, n_actions, irreversible_fraction, gamma)?;
    let mut rng = rng::indexed_stream(seed, rng::Stream::Generator, 1);
    let n_irrev = irreversible_count(n_states, irreversible_fraction);
    let n_rev = n_states - n_irrev;

    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for (s, rows) in transition.iter_mut().enumerate() {
        for (a, row) in rows.iter_mut().enumerate() {
            let next = if s < n_rev {
                if a == 0 && n_actions > 1 {
                    (s + 1) % n_rev
                } else {
                    rng.random_range(0..n_states)
                }
            } else {
                rng.random_range(n_rev..n_states)
            };
            row[next] = 1.0;
        }
    }
    if n_irrev > 0 {
        let s = n_rev - 1;
        let a = if n_actions > 1 { 1 } else { 0 };
        transition[s][a] = vec![0.0; n_states];
        transition[s][a][rng.random_range(n_rev..n_states)] = 1.0;
    }
    if n_actions == 1 && n_irrev == 0 {
        for s in 0..n_rev {
            transition[s][0] = vec![0.0; n_states];
            transition[s][0][(s + 1) % n_rev] = 1.0;
        }
    }

    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    let rho0 = initial_distribution(n_states, n_rev, &mut rng);
    let mut mdp = TabularMdp {
        n_states,
        n_actions,
        transition,
        reward,
        rho0,
        gamma,
        reversible_mask: vec![true; n_states],
        r_min: Some(0.0),
        r_max: Some(1.0),
    };
    // with a single action the cycle may be broken, so take truth from reachability
    mdp.reversible_mask = mdp.reachability_mask();
    mdp.validate()?;
    Ok(mdp)
}

fn check_generator_args(n_states: usize, n_actions: usize, fraction: f64, gamma: f64) -> Result<()> {
    if n_states < 2 {
        return input(format!("n_states must be at least 2, got {n_states}"));
    }
    if n_actions == 0 {
        return input("n_actions must be positive");
    }
    if !(0.0..1.0).contains(&fraction) {
        return input(format!("irreversible_fraction must lie in [0, 1), got {fraction}"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return input(format!("gamma must lie in [0, 1), got {gamma}"));
    }
    Ok(())
}

fn irreversible_count(n_states: usize, fraction: f64) -> usize {
    ((fraction * n_states as f64).round() as usize).min(n_states - 1)
}

fn initial_distribution(n_states: usize, n_rev: usize, rng: &mut Rng) -> Vec<f64> {
    let k = rng.random_range(1..=n_rev.min(2));
    let mut rho0 = vec![0.0; n_states];
    let picks: Vec<usize> = (0..n_rev).collect::<Vec<_>>().choose_multiple(rng, k).copied().collect();
    for s in picks {
        rho0[s] = 1.0 / k as f64;
    }
    rho0
}

fn renormalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    // push rounding residue onto the largest entry so the row sums to 1
    let residue = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row
        .iter_mut()
        .max_by(|a, b| a.partial_cmp(b).expect("finite"))
    {
        *max += residue;
    }
}

/// Stochastic policy `pi(a | s)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub n_states: usize,
    pub n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return input("ragged policy rows");
        }
        let policy = Policy {
            n_states,
            n_actions,
            probs: rows.into_iter().flatten().collect(),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Policy {
            n_states: actions.len(),
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn random(n_states: usize, n_actions: usize, rng: &mut Rng) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            let row: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = row.iter().sum();
            probs.extend(row.into_iter().map(|p| p / total));
        }
        Policy {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            let row = self.row(s);
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return input(format!("policy row {s} is not a distribution"));
            }
        }
        Ok(())
    }
}

/// Dense action-value table `Q[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "QTable shape mismatch");
        QTable {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn random(n_states: usize, n_actions: usize, scale: f64, rng: &mut Rng) -> Self {
        let values = (0..n_states * n_actions)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        QTable::from_vec(n_states, n_actions, values)
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with lowest-index tie-breaking.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    /// `E_{a ~ pi(.|s)} Q(s, a)`.
    pub fn expected(&self, s: usize, policy: &Policy) -> f64 {
        self.row(s).iter().zip(policy.row(s)).map(|(q, p)| q * p).sum()
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.argmax(s)).collect()
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `Q = rhs + gamma * W_pi Q` where
/// `W_pi[(s,a),(s',a')] = weight[s][a][s'] * pi(a'|s')`.
///
/// `weight` may be sub-stochastic; that is how penalized operators cut off
/// bootstrapping through irreversible successors.
pub(crate) fn evaluate_linear(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rhs: &[f64],
    weight: &[Vec<Vec<f64>>],
    policy: &Policy,
) -> QTable {
    let dim = n_states * n_actions;
    if dim <= LINEAR_SOLVE_LIMIT {
        let mut system = DMatrix::<f64>::identity(dim, dim);
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = s * n_actions + a;
                for (next, &w) in weight[s][a].iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for next_a in 0..n_actions {
                        let p = policy.prob(next, next_a);
                        if p != 0.0 {
                            system[(row, next * n_actions + next_a)] -= gamma * w * p;
                        }
                    }
                }
            }
        }
        let b = DVector::from_column_slice(rhs);
        if let Some(solution) = system.lu().solve(&b) {
            return QTable::from_vec(n_states, n_actions, solution.iter().copied().collect());
        }
    }
    iterate_linear(n_states, n_actions, gamma, rhs, weight, policy, 1e-12, 1_000_000)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn iterate_linear(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rhs: &[f64],
    weight: &[Vec<Vec<f64>>],
    policy: &Policy,
    tolerance: f64,
    max_iterations: usize,
) -> QTable {
    let mut q = QTable::new(n_states, n_actions);
    for _ in 0..max_iterations {
        let v: Vec<f64> = (0..n_states).map(|s| q.expected(s, policy)).collect();
        let mut next = QTable::new(n_states, n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                let boot: f64 = weight[s][a].iter().zip(&v).map(|(w, v)| w * v).sum();
                next.set(s, a, rhs[s * n_actions + a] + gamma * boot);
            }
        }
        let change = next.sup_distance(&q);
        q = next;
        if change <= tolerance {
            break;
        }
    }
    q
}

/// Exact `Q^pi` for an arbitrary reward table.
pub fn exact_policy_evaluation(
    mdp: &TabularMdp,
    policy: &Policy,
    reward: &[Vec<f64>],
) -> Result<QTable> {
    policy.validate()?;
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return input("policy shape does not match the MDP");
    }
    let rhs: Vec<f64> = reward.iter().flatten().copied().collect();
    if rhs.len() != mdp.n_states * mdp.n_actions {
        return input("reward table shape does not match the MDP");
    }
    Ok(evaluate_linear(
        mdp.n_states,
        mdp.n_actions,
        mdp.gamma,
        &rhs,
        &mdp.transition,
        policy,
    ))
}

/// One standard expected Bellman backup under `policy`.
pub fn standard_backup(mdp: &TabularMdp, q: &QTable, policy: &Policy, reward: &[Vec<f64>]) -> QTable {
    let v: Vec<f64> = (0..mdp.n_states).map(|s| q.expected(s, policy)).collect();
    let mut out = QTable::new(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let boot: f64 = mdp.transition[s][a].iter().zip(&v).map(|(p, v)| p * v).sum();
            out.set(s, a, reward[s][a] + mdp.gamma * boot);
        }
    }
    out
}
