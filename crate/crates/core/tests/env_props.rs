use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use paint::env::{Action, ActionNoise, ContinuousMaze, Environment, GridMaze, MazeLayout, Observation, TabularEnv};
use paint::harness::presets::STANDARD_GRID;
use paint::mdp::{exact_policy_evaluation, random_tabular_mdp, standard_backup, Policy, QTable, TabularMdp};

fn position(env: &ContinuousMaze) -> [f64; 2] {
    match &env.current().obs {
        Observation::Continuous(v) => [v[0], v[1]],
        Observation::Discrete(_) => unreachable!("continuous maze"),
    }
}

fn inside(rect: &[f64; 4], p: [f64; 2]) -> bool {
    p[0] >= rect[0] && p[0] <= rect[2] && p[1] >= rect[1] && p[1] <= rect[3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn continuous_positions_stay_in_the_unit_square(
        seed in any::<u64>(),
        moves in prop::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0), 1..400),
        noisy in any::<bool>(),
    ) {
        let noise = if noisy { ActionNoise::Uniform(0.05) } else { ActionNoise::None };
        let mut env = ContinuousMaze::new(MazeLayout::default(), noise, seed).unwrap();
        env.reset();
        let a = env.layout().max_action;
        let mut trapped: Option<[f64; 4]> = None;
        for (dx, dy) in moves {
            let t = env.step(&Action::Continuous(vec![dx * a, dy * a])).unwrap();
            let p = position(&env);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "left the square at {p:?}");
            if let Some(rect) = trapped {
                prop_assert!(inside(&rect, p), "escaped trench {rect:?} to {p:?}");
                prop_assert!(!t.next.ground_truth().reversible);
            } else if let Some(rect) = env.trench_of(p) {
                trapped = Some(*rect);
            }
        }
    }

    #[test]
    fn grid_trajectories_have_a_reversible_prefix(
        seed in any::<u64>(),
        actions in prop::collection::vec(0usize..4, 1..300),
        slip in 0.0f64..0.5,
    ) {
        let mut env = GridMaze::from_ascii(&STANDARD_GRID, slip, 300, seed).unwrap();
        let mut labels = vec![env.reset().ground_truth().reversible];
        for a in actions {
            labels.push(env.step(&Action::Discrete(a)).unwrap().next.ground_truth().reversible);
        }
        let first_irreversible = labels.iter().position(|r| !r).unwrap_or(labels.len());
        prop_assert!(labels[first_irreversible..].iter().all(|r| !r), "labels {labels:?}");
    }

    #[test]
    fn generated_mdps_satisfy_their_invariants(
        seed in any::<u64>(),
        n_states in 2usize..12,
        n_actions in 1usize..4,
        fraction in 0.0f64..0.9,
        gamma in 0.0f64..0.99,
    ) {
        let mdp = random_tabular_mdp(seed, n_states, n_actions, fraction, gamma).unwrap();
        prop_assert!(mdp.validate().is_ok());
        prop_assert_eq!(mdp.clone(), random_tabular_mdp(seed, n_states, n_actions, fraction, gamma).unwrap());
        for s in (0..n_states).filter(|&s| !mdp.reversible_mask[s]) {
            for a in 0..n_actions {
                for t in 0..n_states {
                    prop_assert!(mdp.transition[s][a][t] == 0.0 || !mdp.reversible_mask[t]);
                }
            }
        }
    }

    #[test]
    fn policy_evaluation_is_a_fixed_point(seed in any::<u64>(), n_states in 2usize..10) {
        let mdp = random_tabular_mdp(seed, n_states, 3, 0.3, 0.9).unwrap();
        let mut rng = paint::rng::from_seed(seed);
        let policy = Policy::random(n_states, 3, &mut rng);
        let q = exact_policy_evaluation(&mdp, &policy, &mdp.reward).unwrap();
        let once = standard_backup(&mdp, &q, &policy, &mdp.reward);
        prop_assert!(once.sup_distance(&q) <= 1e-9);
    }
}

#[test]
fn policy_evaluation_matches_long_iteration() {
    let mdp = random_tabular_mdp(17, 6, 2, 0.3, 0.9).unwrap();
    let mut rng = paint::rng::from_seed(17);
    let policy = Policy::random(6, 2, &mut rng);
    let exact = exact_policy_evaluation(&mdp, &policy, &mdp.reward).unwrap();
    let mut q = QTable::new(6, 2);
    for _ in 0..10_000 {
        q = standard_backup(&mdp, &q, &policy, &mdp.reward);
    }
    assert!(exact.sup_distance(&q) < 1e-8);
}

#[test]
fn environments_replay_from_their_seed() {
    let run = |seed| {
        let mut env = GridMaze::from_ascii(&STANDARD_GRID, 0.2, 200, seed).unwrap();
        env.reset();
        let visited: Vec<usize> = (0..500)
            .map(|i| env.step(&Action::Discrete(i % 4)).unwrap().next.obs.index().unwrap())
            .collect();
        (visited, env.stream_digest())
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).1, run(4).1);

    let walk = |seed| {
        let mut env = ContinuousMaze::new(MazeLayout::default(), ActionNoise::Uniform(0.0125), seed).unwrap();
        env.reset();
        (0..200)
            .map(|_| {
                env.step(&Action::Continuous(vec![0.03, -0.02])).unwrap();
                position(&env)
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(walk(9), walk(9));
}

#[test]
fn tabular_env_reset_follows_rho0() {
    let mdp: TabularMdp = serde_json::from_str(
        r#"{"n_states": 2, "n_actions": 1, "transition": [[[1.0, 0.0]], [[0.0, 1.0]]],
            "reward": [[0.0], [0.0]], "rho0": [0.5, 0.5], "gamma": 0.9,
            "reversible_mask": [true, true]}"#,
    )
    .unwrap();
    let mut env = TabularEnv::new(mdp, 10, 4).unwrap();
    let zeros = (0..10_000).filter(|_| env.reset().obs.index() == Some(0)).count();
    // four binomial standard deviations
    assert_abs_diff_eq!(zeros as f64 / 10_000.0, 0.5, epsilon = 0.02);
}
