mod common;

use proptest::prelude::*;
use rmab_core::data::{
    generate_cohort, load_cohort, load_trajectories, save_cohort, save_trajectories, ArmTrajectory, GeneratorConfig,
    LatentTypeConfig,
};
use rmab_core::dfl::{ope_cwpdis, policy_probs, BehaviorLog};
use rmab_core::mdp::bellman_residual;
use rmab_core::predictor::Architecture;
use rmab_core::ts::{mle_tabular, nll_loss};
use rmab_core::{
    select_top_k, solve_subsidized, Action, ArmState, FeatureVector, PlannerConfig, Provenance, Trajectory,
    Transition, TransitionModel, TransitionPredictor,
};

fn engage_probs() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0f64..=1.0)
}

fn active_helps() -> impl Strategy<Value = [f64; 4]> {
    (0.01f64..0.99, 0.01f64..0.99, 0.0f64..=1.0, 0.0f64..=1.0)
        .prop_map(|(p_ne, p_e, u, v)| [p_ne, p_e, p_ne + u * (0.99 - p_ne), p_e + v * (0.99 - p_e)])
}

fn trajectory(max_len: usize) -> impl Strategy<Value = Trajectory> {
    (any::<bool>(), prop::collection::vec((any::<bool>(), any::<bool>()), 1..=max_len)).prop_map(|(start, steps)| {
        let mut state = ArmState::from_bool(start);
        let transitions = steps
            .into_iter()
            .map(|(act, next)| {
                let action = if act { Action::Active } else { Action::Passive };
                let t = Transition::new(state, action, ArmState::from_bool(next));
                state = t.next_state;
                t
            })
            .collect();
        Trajectory::new(transitions).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_monotone_in_subsidy(e in engage_probs(), l1 in -5.0f64..5.0, d in 0.0f64..3.0) {
        let planner = PlannerConfig::default();
        let m = TransitionModel::from_engage_probs(e).unwrap();
        let q1 = solve_subsidized(&m, l1, &planner).unwrap();
        let q2 = solve_subsidized(&m, l1 + d, &planner).unwrap();
        for s in ArmState::ALL {
            for a in Action::ALL {
                prop_assert!(q2.get(s, a) >= q1.get(s, a) - 1e-8);
            }
        }
    }

    #[test]
    fn gap_monotone_for_active_helps(e in active_helps(), l1 in -9.0f64..9.0, d in 0.0f64..1.0) {
        let planner = PlannerConfig::default();
        let m = TransitionModel::from_engage_probs(e).unwrap();
        let q1 = solve_subsidized(&m, l1, &planner).unwrap();
        let q2 = solve_subsidized(&m, l1 + d, &planner).unwrap();
        for s in ArmState::ALL {
            prop_assert!(q2.gap(s) >= q1.gap(s) - 1e-8);
        }
    }

    #[test]
    fn solution_is_bellman_fixed_point_within_bounds(e in engage_probs(), subsidy in 0.0f64..3.0) {
        let planner = PlannerConfig::default();
        let m = TransitionModel::from_engage_probs(e).unwrap();
        let q = solve_subsidized(&m, subsidy, &planner).unwrap();
        prop_assert!(bellman_residual(&m, [0.0, 1.0], subsidy, planner.discount, &q) < planner.bellman_tolerance);
        let upper = (1.0 + subsidy) / (1.0 - planner.discount);
        for v in q.q.iter().flatten() {
            prop_assert!(*v >= -1e-9 && *v <= upper + 1e-9);
        }
    }

    #[test]
    fn top_k_ignores_input_order(
        values in prop::collection::vec(-3i32..3, 1..30),
        k in 0usize..35,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let indices: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, v)| (i as u64, *v as f64)).collect();
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let a = select_top_k(&indices, k);
        let b = select_top_k(&shuffled, k);
        prop_assert_eq!(a.ids(), b.ids());
        prop_assert_eq!(a.chosen.len(), k.min(values.len()));
    }

    #[test]
    fn nll_ignores_arm_order(trajs in prop::collection::vec(trajectory(6), 2..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let arch = Architecture::linear(2);
        let predictor = TransitionPredictor::random_init(arch, seed);
        let cohort: Vec<(FeatureVector, Trajectory)> = trajs
            .into_iter()
            .enumerate()
            .map(|(i, t)| (FeatureVector(vec![i as f64 * 0.3, 1.0 - i as f64 * 0.2]), t))
            .collect();
        let mut shuffled = cohort.clone();
        shuffled.shuffle(&mut common::rng(seed));
        let a = nll_loss(&predictor, &cohort).unwrap();
        let b = nll_loss(&predictor, &shuffled).unwrap();
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn tabular_estimate_maximizes_likelihood(t in trajectory(40), j in 0usize..4, sign in prop::bool::ANY) {
        let counts = t.counts();
        prop_assume!(counts.n[j][0] + counts.n[j][1] > 0);
        let p = mle_tabular(&t, 0.0);
        prop_assume!(p.is_ok());
        let p_hat = p.unwrap().engage_probs()[j];
        let [n0, n1] = counts.n[j];
        let ll = |p: f64| {
            let term = |n: u64, q: f64| if n == 0 { 0.0 } else { n as f64 * q.ln() };
            term(n1, p) + term(n0, 1.0 - p)
        };
        let shifted = (p_hat + if sign { 0.01 } else { -0.01 }).clamp(0.0, 1.0);
        prop_assume!(shifted != p_hat);
        prop_assert!(ll(p_hat) >= ll(shifted));
    }

    #[test]
    fn predictions_are_probabilities(x in prop::collection::vec(-50.0f64..50.0, 3), seed in any::<u64>(), hidden in 0usize..4) {
        let arch = Architecture { feature_dim: 3, hidden };
        let mut predictor = TransitionPredictor::random_init(arch, seed);
        predictor.params_mut().iter_mut().for_each(|w| *w *= 50.0);
        let p = predictor.engage_probs(&FeatureVector(x)).unwrap();
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(predictor.provenance(), Provenance::Init);
    }

    #[test]
    fn ope_invariant_to_uniform_behavior_scaling(
        trajs in prop::collection::vec(trajectory(4).prop_filter("len 4", |t| t.len() == 4), 2..6),
        probs in prop::collection::vec(prop::collection::vec(0.05f64..0.95, 4), 6),
        c in 0.1f64..1.0,
    ) {
        let n = trajs.len();
        let eval: Vec<Vec<f64>> = probs[..n].to_vec();
        let behavior: Vec<Vec<f64>> = (0..n).map(|i| vec![0.5; 4].iter().map(|b| b * (1.0 + 0.5 * (i % 2) as f64)).collect()).collect();
        let scaled: Vec<Vec<f64>> = behavior.iter().map(|row| row.iter().map(|b| b * c).collect()).collect();
        let a = ope_cwpdis(&eval, &trajs, &BehaviorLog::new(behavior).unwrap(), 0.9).unwrap();
        let b = ope_cwpdis(&eval, &trajs, &BehaviorLog::new(scaled).unwrap(), 0.9).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-10);
    }

    #[test]
    fn soft_policy_spends_budget(x in prop::collection::vec(-5.0f64..5.0, 1..40), k in 0usize..45, t in 0.01f64..10.0) {
        let p = policy_probs(&x, k, t);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - k.min(x.len()) as f64).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn cold_soft_policy_is_top_k(x in prop::collection::btree_set(-1000i32..1000, 2..20), k in 1usize..20) {
        let x: Vec<f64> = x.into_iter().map(|v| v as f64 / 100.0).collect();
        let k = k.min(x.len());
        let p = policy_probs(&x, k, 1e-4);
        let indexed: Vec<(u64, f64)> = x.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
        let top = select_top_k(&indexed, k).ids();
        for (i, &pi) in p.iter().enumerate() {
            if top.contains(&(i as u64)) {
                prop_assert!(pi > 1.0 - 1e-6);
            } else {
                prop_assert!(pi < 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_outputs_valid_cohorts(
        seed in any::<u64>(),
        n in 1usize..60,
        types in prop::collection::vec(active_helps().prop_flat_map(|e| (Just(e), 0.0f64..0.5)), 1..4),
        info in 0.0f64..=1.0,
        frac in 0.0f64..=1.0,
        jitter in 0.0f64..0.2,
    ) {
        let types: Vec<LatentTypeConfig> = types.into_iter().map(|(e, b)| LatentTypeConfig::new(e, b)).collect();
        let config = GeneratorConfig {
            feature_informativeness: info,
            initial_engaged_fraction: frac,
            jitter,
            ..GeneratorConfig::new(seed, n, types.clone())
        };
        let cohort = generate_cohort(&config).unwrap();
        prop_assert_eq!(cohort.len(), n);
        for arm in cohort.arms() {
            prop_assert!(arm.latent_type < types.len());
            prop_assert!(arm.profile.validate().is_ok());
            prop_assert!(arm.model.active_helps());
            prop_assert!(arm.model.engage_probs().iter().all(|p| (0.01..=0.99).contains(p)));
        }
    }

    #[test]
    fn cohort_and_trajectory_files_round_trip(seed in any::<u64>(), n in 1usize..30, trajs in prop::collection::vec(trajectory(8), 1..10)) {
        let dir = tempfile::tempdir().unwrap();
        let config = GeneratorConfig {
            jitter: 0.1,
            ..GeneratorConfig::new(seed, n, vec![LatentTypeConfig::passive_plus(0.2, 0.7, 0.2)])
        };
        let cohort = generate_cohort(&config).unwrap();
        let path = dir.path().join("cohort.csv");
        save_cohort(&cohort, &path).unwrap();
        prop_assert_eq!(load_cohort(&path).unwrap(), cohort);

        let arms: Vec<ArmTrajectory> = trajs
            .into_iter()
            .enumerate()
            .map(|(i, trajectory)| ArmTrajectory { id: 100 + i as u64, trajectory })
            .collect();
        let path = dir.path().join("trajectories.csv");
        save_trajectories(&arms, &path).unwrap();
        prop_assert_eq!(load_trajectories(&path).unwrap(), arms);
    }
}
