mod common;

use proptest::prelude::*;

use common::log2_ceil_plus_one;
use paint::env::{EnvState, GroundTruth, Observation};
use paint::estimator::{ConstantEstimator, PerfectEstimator};
use paint::labeling::{
    binary_search_label, confidence_gated_label, robust_label, GateMode, NoiseModel, ReversibilityOracle, Trajectory,
};

fn trajectory(n: usize, reversible: usize) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|i| {
                let truth = if i < reversible {
                    GroundTruth::reversible()
                } else {
                    GroundTruth::irreversible()
                };
                EnvState::new(Observation::Discrete(i), i as u64, truth)
            })
            .collect(),
    )
}

fn length_and_boundary() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=1024).prop_flat_map(|n| (Just(n), 0..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn binary_search_matches_truth_within_the_query_bound((n, k) in length_and_boundary()) {
        let mut traj = trajectory(n, k);
        let mut oracle = ReversibilityOracle::noise_free();
        let report = binary_search_label(&mut traj, &mut oracle).unwrap();
        let expected: Vec<Option<bool>> = (0..n).map(|i| Some(i < k)).collect();
        prop_assert_eq!(&traj.labels, &expected);
        prop_assert!(traj.is_monotone());
        prop_assert_eq!(traj.reversible_len(), Some(k));
        prop_assert!(report.queries <= log2_ceil_plus_one(n));
        prop_assert_eq!(report.queries, oracle.query_count());
    }

    #[test]
    fn window_one_is_plain_binary_search((n, k) in length_and_boundary(), p in 0.0f64..0.4, seed in any::<u64>()) {
        let model = if p > 0.0 { NoiseModel::Symmetric { p } } else { NoiseModel::None };
        let mut plain = trajectory(n, k);
        let mut windowed = plain.clone();
        let a = binary_search_label(&mut plain, &mut ReversibilityOracle::new(model, seed)).unwrap();
        let b = robust_label(&mut windowed, &mut ReversibilityOracle::new(model, seed), 1).unwrap();
        prop_assert_eq!(plain.labels, windowed.labels);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn noise_free_majority_is_exact((n, k) in length_and_boundary(), half in 0usize..8) {
        let window = 2 * half + 1;
        let mut traj = trajectory(n, k);
        let report = robust_label(&mut traj, &mut ReversibilityOracle::noise_free(), window).unwrap();
        prop_assert_eq!(traj.reversible_len(), Some(k));
        prop_assert!(report.queries <= window as u64 * log2_ceil_plus_one(n));
    }

    #[test]
    fn noisy_labels_are_still_monotone((n, k) in length_and_boundary(), p in 0.0f64..0.5, seed in any::<u64>()) {
        let mut traj = trajectory(n, k);
        robust_label(&mut traj, &mut ReversibilityOracle::new(NoiseModel::Symmetric { p }, seed), 5).unwrap();
        prop_assert!(traj.is_fully_labeled());
        prop_assert!(traj.is_monotone());
    }

    #[test]
    fn uninformative_gate_never_substitutes((n, k) in length_and_boundary(), margin in 0.01f64..0.5) {
        let mut gated = trajectory(n, k);
        let mut plain = gated.clone();
        let report = confidence_gated_label(
            &mut gated,
            &mut ReversibilityOracle::noise_free(),
            &ConstantEstimator(0.5),
            GateMode::Margin(margin),
        )
        .unwrap();
        let reference = binary_search_label(&mut plain, &mut ReversibilityOracle::noise_free()).unwrap();
        prop_assert_eq!(report.substituted, 0);
        prop_assert_eq!(report.queries, reference.queries);
        prop_assert_eq!(gated.labels, plain.labels);
    }

    #[test]
    fn perfect_gate_needs_no_supervisor((n, k) in length_and_boundary()) {
        let mut traj = trajectory(n, k);
        let estimator = PerfectEstimator::new(move |obs| obs.index().unwrap() < k);
        let mut oracle = ReversibilityOracle::noise_free();
        let report = confidence_gated_label(&mut traj, &mut oracle, &estimator, GateMode::Margin(0.1)).unwrap();
        prop_assert_eq!(report.queries, 0);
        prop_assert_eq!(oracle.query_count(), 0);
        prop_assert_eq!(traj.reversible_len(), Some(k));
    }

    #[test]
    fn repeated_states_are_charged_once(picks in prop::collection::vec(0usize..20, 1..100)) {
        let mut oracle = ReversibilityOracle::noise_free();
        for &i in &picks {
            oracle.query(&EnvState::new(Observation::Discrete(i), 0, GroundTruth::reversible()));
        }
        let distinct = picks.iter().collect::<std::collections::BTreeSet<_>>().len() as u64;
        prop_assert_eq!(oracle.query_count(), distinct);
    }
}

#[test]
fn hand_traced_five_state_trajectory() {
    let mut traj = trajectory(5, 3);
    let report = binary_search_label(&mut traj, &mut ReversibilityOracle::noise_free()).unwrap();
    assert_eq!(traj.labels, vec![Some(true), Some(true), Some(true), Some(false), Some(false)]);
    assert_eq!(report.queries, 3);
}
