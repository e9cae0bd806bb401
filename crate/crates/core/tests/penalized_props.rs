use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use paint::mdp::{random_deterministic_mdp, random_tabular_mdp, standard_backup, Policy, QTable, TabularMdp};
use paint::penalized::theorems::{
    eta_separated_mdp, gap_by_delta, stochastic_ordering_epsilon, verify_stochastic_ordering, StochasticOrdering,
};
use paint::penalized::{
    bellman_backup, evaluate_policy, q_learning_step, surrogate_reward, value_iteration, BackupSpec, PenaltyParams,
    TdSample,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn surrogate_reward_follows_the_label(r in 0.0f64..1.0, r_min in -1.0f64..0.0, eps in 0.0f64..1.0) {
        prop_assert_eq!(surrogate_reward(r, true, r_min, eps), r);
        prop_assert_eq!(surrogate_reward(r, false, r_min, eps), r_min - eps);
    }

    #[test]
    fn all_reversible_backup_is_the_standard_backup(seed in any::<u64>(), n in 2usize..10, eps in 0.0f64..1.0) {
        let mdp = random_tabular_mdp(seed, n, 3, 0.0, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = QTable::random(n, 3, 5.0, &mut rng);
        let policy = Policy::random(n, 3, &mut rng);
        let spec = BackupSpec::true_labels(&mdp, eps).unwrap();
        let ones = BackupSpec::empirical(&mdp, eps, vec![1.0; n]).unwrap();
        let reference = standard_backup(&mdp, &q, &policy, &mdp.reward);
        prop_assert_eq!(&bellman_backup(&q, &mdp, &policy, &spec), &reference);
        prop_assert_eq!(&bellman_backup(&q, &mdp, &policy, &ones), &reference);
    }

    #[test]
    fn exact_estimate_reproduces_the_true_label_backup(seed in any::<u64>()) {
        let mdp = random_tabular_mdp(seed, 8, 3, 0.3, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = QTable::random(8, 3, 5.0, &mut rng);
        let policy = Policy::random(8, 3, &mut rng);
        let truth = BackupSpec::true_labels(&mdp, 0.1).unwrap();
        let exact = BackupSpec::empirical(&mdp, 0.1, mdp.reversibility()).unwrap();
        prop_assert_eq!(bellman_backup(&q, &mdp, &policy, &truth), bellman_backup(&q, &mdp, &policy, &exact));
    }

    #[test]
    fn fixed_points_respect_the_penalty_floor(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let mdp = random_tabular_mdp(seed, 8, 3, 0.3, 0.9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let estimate: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let spec = BackupSpec::empirical(&mdp, eps, estimate).unwrap();
        let vi = value_iteration(&mdp, &spec, 1e-10).unwrap();
        let floor = spec.penalty();
        let ceiling = 1.0 / (1.0 - mdp.gamma);
        prop_assert!(vi.q.values().iter().all(|&x| x >= floor - 1e-8 && x <= ceiling + 1e-8));
    }

    #[test]
    fn value_iteration_stops_within_the_contraction_budget(seed in any::<u64>(), gamma in 0.5f64..0.95) {
        let mdp = random_tabular_mdp(seed, 10, 3, 0.3, gamma).unwrap();
        let (eps, tolerance) = (0.1, 1e-10);
        let spec = BackupSpec::true_labels(&mdp, eps).unwrap();
        let vi = value_iteration(&mdp, &spec, tolerance).unwrap();
        let range = 1.0 + eps;
        let budget = ((tolerance * (1.0 - gamma) / range).ln() / gamma.ln()).ceil() as usize;
        prop_assert!(vi.iterations <= budget, "{} iterations, budget {budget}", vi.iterations);
        let residual = paint::penalized::bellman_optimality_backup(&vi.q, &mdp, &spec).sup_distance(&vi.q);
        prop_assert!(residual <= tolerance);
    }
}

#[test]
fn backup_substitution_example() {
    // one state pair: R(s') = 0.6, r = 1, gamma = 0.9, E Q(s', .) = 2
    let mdp = TabularMdp {
        n_states: 2,
        n_actions: 1,
        transition: vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
        reward: vec![vec![1.0], vec![0.0]],
        rho0: vec![1.0, 0.0],
        gamma: 0.9,
        reversible_mask: vec![true, true],
        r_min: Some(0.0),
        r_max: Some(1.0),
    };
    let spec = BackupSpec::empirical(&mdp, 0.1, vec![1.0, 0.6]).unwrap();
    let q = QTable::from_vec(2, 1, vec![0.0, 2.0]);
    let out = bellman_backup(&q, &mdp, &Policy::uniform(2, 1), &spec);
    assert_abs_diff_eq!(out.get(0, 0), 1.28, epsilon = 1e-12);
}

/// Start 0, chain 0 -> 1 -> 2 -> goal 3 on action 0. Action 1 jumps to an
/// absorbing red state with a tempting reward; action 2 stays put.
fn chain_with_red_states() -> TabularMdp {
    let n = 6;
    let mut transition = vec![vec![vec![0.0; n]; 3]; n];
    let mut reward = vec![vec![0.0; 3]; n];
    for s in 0..3 {
        transition[s][0][s + 1] = 1.0;
        transition[s][1][4 + s % 2] = 1.0;
        reward[s][1] = 0.9;
        transition[s][2][s] = 1.0;
    }
    for a in 0..3 {
        transition[3][a][3] = 1.0;
        reward[3][a] = 1.0;
    }
    for s in 4..6 {
        for a in 0..3 {
            transition[s][a][s] = 1.0;
            reward[s][a] = 0.9;
        }
    }
    let mdp = TabularMdp {
        n_states: n,
        n_actions: 3,
        transition,
        reward,
        rho0: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        gamma: 0.9,
        reversible_mask: vec![true, true, true, true, false, false],
        r_min: Some(0.0),
        r_max: Some(1.0),
    };
    mdp.validate().unwrap();
    mdp
}

fn rollout(mdp: &TabularMdp, policy: &[usize], steps: usize) -> Vec<usize> {
    let mut s = 0;
    let mut path = vec![s];
    for _ in 0..steps {
        s = mdp.deterministic_next(s, policy[s]).unwrap();
        path.push(s);
    }
    path
}

#[test]
fn chain_policy_reaches_the_goal_safely_and_is_optimal() {
    let mdp = chain_with_red_states();
    let spec = BackupSpec::true_labels(&mdp, 0.1).unwrap();
    let vi = value_iteration(&mdp, &spec, 1e-12).unwrap();
    let path = rollout(&mdp, &vi.policy, 6);
    assert_eq!(path[3], 3, "path {path:?}");
    assert!(path.iter().all(|&s| mdp.reversible_mask[s]));

    // exhaustive search over all 3^6 deterministic policies
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(6) {
        let actions: Vec<usize> = (0..6).map(|s| code / 3usize.pow(s as u32) % 3).collect();
        let q = evaluate_policy(&mdp, &Policy::deterministic(&actions, 3), &spec).unwrap();
        best = best.max(q.get(0, actions[0]));
    }
    assert_abs_diff_eq!(vi.q.max(0), best, epsilon = 1e-9);
}

#[test]
fn td_updates_with_exploration_recover_the_planned_policy() {
    let mdp = chain_with_red_states();
    let params = PenaltyParams::for_mdp(&mdp, 0.1).unwrap();
    let spec = BackupSpec::true_labels(&mdp, 0.1).unwrap();
    let planned = value_iteration(&mdp, &spec, 1e-12).unwrap().policy;
    let mut q = QTable::new(6, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = 0;
    for step in 0..200_000 {
        let a = if rng.random::<f64>() < 0.3 { rng.random_range(0..3) } else { q.argmax(s) };
        let next = mdp.deterministic_next(s, a).unwrap();
        let label = if mdp.reversible_mask[next] { 1.0 } else { 0.0 };
        let sample = TdSample { state: s, action: a, reward: mdp.reward[s][a], next_state: next };
        q_learning_step(&mut q, &sample, label, 0.1, &params);
        s = if label == 0.0 || step % 20 == 19 { 0 } else { next };
    }
    for state in 0..3 {
        assert_eq!(q.argmax(state), planned[state], "state {state}");
    }
}

#[test]
fn td_learning_converges_to_the_fixed_point() {
    let mdp = random_deterministic_mdp(8, 12, 3, 0.25, 0.9).unwrap();
    let params = PenaltyParams::for_mdp(&mdp, 0.1).unwrap();
    let spec = BackupSpec::true_labels(&mdp, 0.1).unwrap();
    let target = value_iteration(&mdp, &spec, 1e-12).unwrap().q;
    let mut q = QTable::new(12, 3);
    for _ in 0..2000 {
        for s in 0..12 {
            for a in 0..3 {
                let next = mdp.deterministic_next(s, a).unwrap();
                let label = if mdp.reversible_mask[next] { 1.0 } else { 0.0 };
                let sample = TdSample { state: s, action: a, reward: mdp.reward[s][a], next_state: next };
                q_learning_step(&mut q, &sample, label, 0.5, &params);
            }
        }
    }
    assert!(q.sup_distance(&target) < 1e-2);
}

#[test]
fn stochastic_ordering_holds_above_the_margin_bound() {
    let (gamma, eta1, eta2) = (0.5, 0.9, 0.1);
    let bound = stochastic_ordering_epsilon(gamma, eta1, eta2, 0.0, 1.0);
    assert_abs_diff_eq!(bound, 0.1 / 0.35, epsilon = 1e-12);
    assert_eq!(stochastic_ordering_epsilon(gamma, eta1, 0.0, 0.0, 1.0), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let mdp = eta_separated_mdp(seed, 8, 3, gamma, eta1, eta2).unwrap();
        let policy = Policy::random(8, 3, &mut rng);
        let result = verify_stochastic_ordering(&mdp, &policy, eta1, eta2, bound + 1e-3).unwrap();
        assert!(matches!(result, StochasticOrdering::Holds { .. }), "seed {seed}: {result:?}");
    }
}

#[test]
fn worst_gap_grows_with_estimator_error() {
    let mdps: Vec<TabularMdp> = (0..50).map(|i| random_tabular_mdp(500 + i, 8, 3, 0.25, 0.9).unwrap()).collect();
    let gaps = gap_by_delta(&mdps, &[0.0, 0.05, 0.1, 0.2], 0.1, 3).unwrap();
    assert!(gaps[0] < 1e-6, "exact estimator gap {}", gaps[0]);
    for w in gaps.windows(2) {
        assert!(w[1] >= w[0], "gaps {gaps:?}");
    }
}
