//! Numerical checks of the ordering, contraction and suboptimality results
//! for penalized backups.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bellman_backup, bellman_optimality_backup, evaluate_policy, value_iteration, BackupSpec};
use crate::error::{input, Result};
use crate::mdp::{random_deterministic_mdp, random_tabular_mdp, Policy, QTable, TabularMdp};
use crate::rng::{self, Rng};

/// Value-iteration tolerance used by every verifier.
pub const VI_TOLERANCE: f64 = 1e-10;
/// Slack allowed on theorem comparisons.
pub const SLACK: f64 = 1e-6;

type Pair = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub holds: bool,
    /// `min Q(rev side) - max Q(irrev side)`; `None` when a side is empty.
    pub margin: Option<f64>,
    /// Lowest reversible-side pair and highest irreversible-side pair.
    pub witness: Option<(Pair, Pair)>,
}

fn ordering(q: &QTable, upper: &[Pair], lower: &[Pair], strict: bool) -> OrderingCheck {
    if upper.is_empty() || lower.is_empty() {
        return OrderingCheck {
            holds: true,
            margin: None,
            witness: None,
        };
    }
    let lo = *upper
        .iter()
        .min_by(|x, y| q.get(x.0, x.1).total_cmp(&q.get(y.0, y.1)))
        .expect("non-empty");
    let hi = *lower
        .iter()
        .max_by(|x, y| q.get(x.0, x.1).total_cmp(&q.get(y.0, y.1)))
        .expect("non-empty");
    let margin = q.get(lo.0, lo.1) - q.get(hi.0, hi.1);
    OrderingCheck {
        holds: if strict { margin > 0.0 } else { margin >= -SLACK },
        margin: Some(margin),
        witness: Some((lo, hi)),
    }
}

/// Deterministic MDP, any policy: every pair leading to a reversible state
/// has a strictly higher penalized Q-value than every pair leading to an
/// irreversible one (non-strict when `epsilon = 0`).
pub fn verify_q_ordering(mdp: &TabularMdp, policy: &Policy, epsilon: f64) -> Result<OrderingCheck> {
    if !mdp.is_deterministic() {
        return input("the ordering check needs deterministic transitions");
    }
    let spec = BackupSpec::true_labels(mdp, epsilon)?;
    let q = evaluate_policy(mdp, policy, &spec)?;
    let (mut rev, mut irrev) = (Vec::new(), Vec::new());
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let next = mdp.deterministic_next(s, a).expect("deterministic");
            if mdp.reversible_mask[next] {
                rev.push((s, a));
            } else {
                irrev.push((s, a));
            }
        }
    }
    Ok(ordering(&q, &rev, &irrev, epsilon > 0.0))
}

/// Smallest margin for which the stochastic ordering is guaranteed:
/// `eta2 / (eta1 - gamma*eta1 - eta2) * (R_max - R_min)`.
pub fn stochastic_ordering_epsilon(gamma: f64, eta1: f64, eta2: f64, r_min: f64, r_max: f64) -> f64 {
    eta2 / (eta1 - gamma * eta1 - eta2) * (r_max - r_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StochasticOrdering {
    Holds { margin: f64 },
    Violated { margin: f64, witness: (Pair, Pair) },
    Skipped { reason: SkipReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// `eta1 <= eta2 / (1 - gamma)`.
    ThresholdGap,
    /// `epsilon` does not exceed the margin bound.
    EpsilonTooSmall,
    EmptySet,
}

/// Stochastic ordering: pairs reaching a reversible state with probability
/// at least `eta1` beat pairs reaching one with probability at most `eta2`.
pub fn verify_stochastic_ordering(
    mdp: &TabularMdp,
    policy: &Policy,
    eta1: f64,
    eta2: f64,
    epsilon: f64,
) -> Result<StochasticOrdering> {
    let gamma = mdp.gamma;
    if eta1 <= eta2 / (1.0 - gamma) {
        return Ok(StochasticOrdering::Skipped {
            reason: SkipReason::ThresholdGap,
        });
    }
    if epsilon <= stochastic_ordering_epsilon(gamma, eta1, eta2, mdp.r_min(), mdp.r_max()) {
        return Ok(StochasticOrdering::Skipped {
            reason: SkipReason::EpsilonTooSmall,
        });
    }
    Ok(evaluate_stochastic_ordering(mdp, policy, eta1, eta2, epsilon)?)
}

/// The ordering comparison without the hypothesis gate, for falsification
/// searches below the bound.
pub fn evaluate_stochastic_ordering(
    mdp: &TabularMdp,
    policy: &Policy,
    eta1: f64,
    eta2: f64,
    epsilon: f64,
) -> Result<StochasticOrdering> {
    let (mut rev, mut irrev) = (Vec::new(), Vec::new());
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let p = mdp.prob_reversible_next(s, a);
            if p >= eta1 {
                rev.push((s, a));
            }
            if p <= eta2 {
                irrev.push((s, a));
            }
        }
    }
    if rev.is_empty() || irrev.is_empty() {
        return Ok(StochasticOrdering::Skipped {
            reason: SkipReason::EmptySet,
        });
    }
    let q = evaluate_policy(mdp, policy, &BackupSpec::true_labels(mdp, epsilon)?)?;
    let check = ordering(&q, &rev, &irrev, true);
    let margin = check.margin.expect("both sides non-empty");
    Ok(if check.holds {
        StochasticOrdering::Holds { margin }
    } else {
        StochasticOrdering::Violated {
            margin,
            witness: check.witness.expect("both sides non-empty"),
        }
    })
}

/// Random stochastic MDP in which every reversible-state action either
/// reaches the reversible block with probability in `[eta1, 1]` or in
/// `[0, eta2]`, with both kinds present. Reversible states are `0..n_rev`,
/// joined by a cycle on action 0; the rest form a closed block.
pub fn eta_separated_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64, eta1: f64, eta2: f64) -> Result<TabularMdp> {
    if n_states < 3 || n_actions < 2 {
        return input("need at least 3 states and 2 actions");
    }
    if !(0.0..=1.0).contains(&eta2) || !(0.0..=1.0).contains(&eta1) || eta2 >= eta1 {
        return input(format!("need 0 <= eta2 < eta1 <= 1, got eta1={eta1}, eta2={eta2}"));
    }
    let mut r = rng::indexed_stream(seed, rng::Stream::Generator, 2);
    let n_irrev = (n_states / 4).max(1);
    let n_rev = n_states - n_irrev;
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = &mut transition[s][a];
            if s >= n_rev {
                let split = r.random::<f64>();
                row[r.random_range(n_rev..n_states)] += split;
                row[r.random_range(n_rev..n_states)] += 1.0 - split;
                continue;
            }
            let high = a == 0 || (!(s == 0 && a == 1) && r.random::<bool>());
            let p_rev = if high {
                eta1 + (1.0 - eta1) * r.random::<f64>()
            } else {
                eta2 * r.random::<f64>()
            };
            if a == 0 {
                // half of the reversible mass keeps the cycle alive
                row[(s + 1) % n_rev] += 0.5 * p_rev;
                row[r.random_range(0..n_rev)] += 0.5 * p_rev;
            } else {
                row[r.random_range(0..n_rev)] += p_rev;
            }
            row[r.random_range(n_rev..n_states)] += 1.0 - p_rev;
        }
    }
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| r.random::<f64>()).collect())
        .collect();
    let mut rho0 = vec![0.0; n_states];
    rho0[0] = 1.0;
    let mdp = TabularMdp {
        n_states,
        n_actions,
        transition,
        reward,
        rho0,
        gamma,
        reversible_mask: (0..n_states).map(|s| s < n_rev).collect(),
        r_min: Some(0.0),
        r_max: Some(1.0),
    };
    mdp.validate()?;
    Ok(mdp)
}

/// Largest observed `||B Q - B Q'|| / ||Q - Q'||` over random table pairs,
/// for both the optimality backup and the expected backup under a random
/// policy. Identical pairs are skipped.
pub fn verify_contraction(mdp: &TabularMdp, spec: &BackupSpec, trials: usize, rng: &mut Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let scale = 10.0 * rng.random::<f64>() + 0.1;
        let q = QTable::random(mdp.n_states, mdp.n_actions, scale, rng);
        let q2 = QTable::random(mdp.n_states, mdp.n_actions, scale, rng);
        let policy = Policy::random(mdp.n_states, mdp.n_actions, rng);
        let d = q.sup_distance(&q2);
        if d == 0.0 {
            continue;
        }
        let optimal = bellman_optimality_backup(&q, mdp, spec).sup_distance(&bellman_optimality_backup(&q2, mdp, spec));
        let expected = bellman_backup(&q, mdp, &policy, spec).sup_distance(&bellman_backup(&q2, mdp, &policy, spec));
        worst = worst.max(optimal / d).max(expected / d);
    }
    worst
}

/// Estimator within `delta` of the truth: `clip(R + u, 0, 1)` with `u`
/// uniform in `[-delta, delta]`.
pub fn perturbed_estimate(mdp: &TabularMdp, delta: f64, rng: &mut Rng) -> Vec<f64> {
    mdp.reversibility()
        .iter()
        .map(|r| (r + delta * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0))
        .collect()
}

/// The worst-case estimator at distance exactly `delta`: reversible states
/// get `1 - delta`, irreversible ones `delta`.
pub fn adversarial_estimate(mdp: &TabularMdp, delta: f64) -> Vec<f64> {
    mdp.reversibility()
        .iter()
        .map(|&r| if r == 1.0 { 1.0 - delta } else { delta })
        .collect()
}

/// `2 delta (R_max - R_min + eps) / (1 - gamma)^2`.
pub fn suboptimality_bound(delta: f64, r_min: f64, r_max: f64, epsilon: f64, gamma: f64) -> f64 {
    2.0 * delta * (r_max - r_min + epsilon) / (1.0 - gamma).powi(2)
}

/// Half of [`suboptimality_bound`]: the per-policy evaluation error bound.
pub fn evaluation_error_bound(delta: f64, r_min: f64, r_max: f64, epsilon: f64, gamma: f64) -> f64 {
    0.5 * suboptimality_bound(delta, r_min, r_max, epsilon, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalityCheck {
    /// `max_{s,a} Q*(s,a) - Q^{pi_hat}(s,a)` under the true operator.
    pub observed_gap: f64,
    pub bound: f64,
    /// Largest `|Q^pi - Q_hat^pi|` over the checked policies.
    pub evaluation_gap: f64,
    pub evaluation_bound: f64,
    pub pass: bool,
}

/// Plans greedily on the empirical operator, evaluates that plan under the
/// true operator and compares with the true optimum. `policies` are extra
/// policies on which the evaluation-error bound is also checked.
pub fn verify_suboptimality_bound(
    mdp: &TabularMdp,
    estimate: &[f64],
    epsilon: f64,
    policies: &[Policy],
) -> Result<SuboptimalityCheck> {
    let truth = mdp.reversibility();
    let delta = truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let true_spec = BackupSpec::true_labels(mdp, epsilon)?;
    let emp_spec = BackupSpec::empirical(mdp, epsilon, estimate.to_vec())?;
    let optimum = value_iteration(mdp, &true_spec, VI_TOLERANCE)?;
    let planned = value_iteration(mdp, &emp_spec, VI_TOLERANCE)?;
    let planned_policy = Policy::deterministic(&planned.policy, mdp.n_actions);
    let achieved = evaluate_policy(mdp, &planned_policy, &true_spec)?;
    let observed_gap = optimum
        .q
        .values()
        .iter()
        .zip(achieved.values())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut evaluation_gap: f64 = 0.0;
    for policy in std::iter::once(&planned_policy).chain(policies) {
        let q_true = evaluate_policy(mdp, policy, &true_spec)?;
        let q_emp = evaluate_policy(mdp, policy, &emp_spec)?;
        evaluation_gap = evaluation_gap.max(q_true.sup_distance(&q_emp));
    }
    let params = true_spec.params;
    let bound = suboptimality_bound(delta, params.r_min, params.r_max, epsilon, params.gamma);
    let evaluation_bound = evaluation_error_bound(delta, params.r_min, params.r_max, epsilon, params.gamma);
    Ok(SuboptimalityCheck {
        observed_gap,
        bound,
        evaluation_gap,
        evaluation_bound,
        pass: observed_gap <= bound + SLACK && evaluation_gap <= evaluation_bound + SLACK,
    })
}

/// Largest suboptimality gap over a suite of MDPs for each `delta`, using
/// the adversarial estimator and one perturbed estimator per MDP whose noise
/// pattern is shared across deltas.
pub fn gap_by_delta(mdps: &[TabularMdp], deltas: &[f64], epsilon: f64, seed: u64) -> Result<Vec<f64>> {
    deltas
        .iter()
        .map(|&delta| {
            let gaps = mdps
                .par_iter()
                .enumerate()
                .map(|(i, mdp)| {
                    let mut r = rng::indexed_stream(seed, rng::Stream::OracleNoise, i as u64);
                    let random = perturbed_estimate(mdp, delta, &mut r);
                    let a = verify_suboptimality_bound(mdp, &adversarial_estimate(mdp, delta), epsilon, &[])?;
                    let b = verify_suboptimality_bound(mdp, &random, epsilon, &[])?;
                    Ok(a.observed_gap.max(b.observed_gap))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(gaps.into_iter().fold(0.0, f64::max))
        })
        .collect()
}

/// One line of the `eval-bounds` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: String,
    pub instances: usize,
    pub pass: bool,
    /// Smallest slack observed: positive means the claim held with room.
    pub worst_margin: f64,
}

fn report(theorem: &str, margins: Vec<(bool, f64)>) -> BoundReport {
    BoundReport {
        theorem: theorem.to_string(),
        instances: margins.len(),
        pass: margins.iter().all(|(ok, _)| *ok),
        worst_margin: margins.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min),
    }
}

/// Runs every verifier over a seeded suite of `instances` random MDPs.
pub fn run_bound_suite(seed: u64, instances: usize) -> Result<Vec<BoundReport>> {
    let epsilon = 0.1;
    let ordering = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mdp = random_deterministic_mdp(rng::derive_seed(seed, rng::Stream::Generator, i as u64), 8, 3, 0.25, 0.9)?;
            let mut r = rng::indexed_stream(seed, rng::Stream::Agent, i as u64);
            let mut worst = (true, f64::INFINITY);
            for _ in 0..5 {
                let policy = Policy::random(8, 3, &mut r);
                let check = verify_q_ordering(&mdp, &policy, epsilon)?;
                if let Some(m) = check.margin {
                    let slack = m - (epsilon - SLACK);
                    worst = (worst.0 && slack >= 0.0, worst.1.min(slack));
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;

    let (eta1, eta2, gamma_st) = (0.9, 0.1, 0.5);
    let eps_st = stochastic_ordering_epsilon(gamma_st, eta1, eta2, 0.0, 1.0) + 1e-3;
    let stochastic = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mdp = eta_separated_mdp(rng::derive_seed(seed, rng::Stream::Generator, i as u64), 8, 3, gamma_st, eta1, eta2)?;
            let mut r = rng::indexed_stream(seed, rng::Stream::Agent, (instances + i) as u64);
            let policy = Policy::random(8, 3, &mut r);
            Ok(match verify_stochastic_ordering(&mdp, &policy, eta1, eta2, eps_st)? {
                StochasticOrdering::Holds { margin } => (true, margin),
                StochasticOrdering::Violated { margin, .. } => (false, margin),
                StochasticOrdering::Skipped { .. } => (false, f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let contraction = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mdp = random_tabular_mdp(rng::derive_seed(seed, rng::Stream::Generator, i as u64), 8, 3, 0.25, 0.9)?;
            let mut r = rng::indexed_stream(seed, rng::Stream::EstimatorInit, i as u64);
            let estimate: Vec<f64> = (0..8).map(|_| r.random::<f64>()).collect();
            let spec = BackupSpec::empirical(&mdp, epsilon, estimate)?;
            let ratio = verify_contraction(&mdp, &spec, 1, &mut r);
            let slack = mdp.gamma + 1e-9 - ratio;
            Ok((slack >= 0.0, slack))
        })
        .collect::<Result<Vec<_>>>()?;

    let suboptimality = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mdp = random_tabular_mdp(rng::derive_seed(seed, rng::Stream::Generator, i as u64), 8, 3, 0.25, 0.9)?;
            let mut r = rng::indexed_stream(seed, rng::Stream::OracleNoise, i as u64);
            let mut worst = (true, f64::INFINITY);
            for delta in [0.05, 0.1] {
                let uniform = Policy::uniform(8, 3);
                for estimate in [perturbed_estimate(&mdp, delta, &mut r), adversarial_estimate(&mdp, delta)] {
                    let check = verify_suboptimality_bound(&mdp, &estimate, epsilon, std::slice::from_ref(&uniform))?;
                    let slack = (check.bound - check.observed_gap).min(check.evaluation_bound - check.evaluation_gap);
                    worst = (worst.0 && check.pass, worst.1.min(slack));
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(vec![
        report("q_ordering_deterministic", ordering),
        report("q_ordering_stochastic", stochastic),
        report("contraction", contraction),
        report("suboptimality", suboptimality),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_substitutions() {
        assert!((suboptimality_bound(0.1, 0.0, 1.0, 0.1, 0.9) - 22.0).abs() < 1e-9);
        assert!((stochastic_ordering_epsilon(0.5, 0.9, 0.1, 0.0, 1.0) - 0.1 / 0.35).abs() < 1e-12);
        assert_eq!(stochastic_ordering_epsilon(0.5, 0.9, 0.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn ordering_rejects_stochastic_mdp() {
        let mdp = random_tabular_mdp(1, 6, 2, 0.25, 0.9).unwrap();
        assert!(verify_q_ordering(&mdp, &Policy::uniform(6, 2), 0.1).is_err());
    }

    #[test]
    fn ordering_is_vacuous_without_irreversible_states() {
        let mdp = random_deterministic_mdp(1, 6, 2, 0.0, 0.9).unwrap();
        let check = verify_q_ordering(&mdp, &Policy::uniform(6, 2), 0.1).unwrap();
        assert!(check.holds && check.margin.is_none());
    }

    #[test]
    fn eta_separated_construction() {
        let mdp = eta_separated_mdp(5, 8, 3, 0.5, 0.9, 0.1).unwrap();
        assert_eq!(mdp.reachability_mask(), mdp.reversible_mask);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let p = mdp.prob_reversible_next(s, a);
                assert!(p >= 0.9 - 1e-12 || p <= 0.1 + 1e-12, "({s},{a}) has {p}");
            }
        }
    }

    #[test]
    fn threshold_gap_is_skipped() {
        let mdp = eta_separated_mdp(5, 8, 3, 0.5, 0.9, 0.1).unwrap();
        let status = verify_stochastic_ordering(&mdp, &Policy::uniform(8, 3), 0.3, 0.2, 5.0).unwrap();
        assert_eq!(
            status,
            StochasticOrdering::Skipped {
                reason: SkipReason::ThresholdGap
            }
        );
    }

    #[test]
    fn zero_estimate_is_constant_map() {
        let mdp = random_tabular_mdp(2, 6, 2, 0.25, 0.9).unwrap();
        let spec = BackupSpec::empirical(&mdp, 0.1, vec![0.0; 6]).unwrap();
        let ratio = verify_contraction(&mdp, &spec, 10, &mut rng::from_seed(0));
        assert_eq!(ratio, 0.0);
    }

    #[test]
    fn exact_estimate_has_no_gap() {
        let mdp = random_tabular_mdp(3, 8, 3, 0.25, 0.9).unwrap();
        let check = verify_suboptimality_bound(&mdp, &mdp.reversibility(), 0.1, &[]).unwrap();
        assert!(check.observed_gap.abs() < 1e-6);
        assert_eq!(check.bound, 0.0);
        assert!(check.pass);
    }
}
