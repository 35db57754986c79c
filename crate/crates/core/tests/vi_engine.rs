mod common;

use common::{brute_force_policy, policy_value};
use perishable_core::mdp::{ConvergenceTest, MdpModel};
use perishable_core::tabular::TabularMdp;
use perishable_core::vi::{
    bellman_backup_batch, list_checkpoints, load_checkpoint, StopReason, ValueIteration, ViConfig,
};
use perishable_core::Error;
use proptest::prelude::*;

fn config() -> ViConfig {
    ViConfig {
        epsilon: 1e-10,
        ..ViConfig::default()
    }
}

fn self_loop(reward: f64, gamma: f64) -> TabularMdp {
    TabularMdp::new(1, 1, 1, vec![1.0], vec![0], vec![reward], gamma).unwrap()
}

#[test]
fn single_backup_of_self_loop() {
    let m = self_loop(1.0, 0.5);
    let mut v = [0.0];
    let mut a = [9u32];
    bellman_backup_batch(&m, 0.5, &[0.0], &[0], &mut v, &mut a);
    assert_eq!(v[0], 1.0);
    assert_eq!(a[0], 0);
}

#[test]
fn self_loop_converges_to_geometric_sum() {
    let m = self_loop(1.0, 0.5);
    let res = ValueIteration::<_, f64>::new(&m, config()).unwrap().run().unwrap();
    assert!(res.converged());
    assert!((res.value_function.values[0] - 2.0).abs() < 1e-9);
}

/// Q computed by three nested loops over the literal tables.
fn naive_backup(m: &TabularMdp, values: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let outcomes = m.enumerate_outcomes().unwrap();
    let mut best_v = vec![f64::NEG_INFINITY; m.num_states()];
    let mut best_a = vec![0u32; m.num_states()];
    for s in 0..m.num_states() {
        for a in 0..m.num_actions() {
            let probs = m.outcome_probabilities(s, a);
            let mut q = 0.0;
            for (o, p) in outcomes.iter().zip(&probs) {
                let (next, r) = m.transition(s, a, o);
                q += p * (r + m.gamma() * values[next]);
            }
            if q > best_v[s] {
                best_v[s] = q;
                best_a[s] = a as u32;
            }
        }
    }
    (best_v, best_a)
}

#[test]
fn batch_backup_matches_nested_loop_oracle() {
    let m = TabularMdp::random(11, 30, 4, 5, 0.9);
    let values: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
    let states: Vec<usize> = (0..30).collect();
    let mut v = vec![0.0; 30];
    let mut a = vec![0u32; 30];
    bellman_backup_batch(&m, 0.9, &values, &states, &mut v, &mut a);
    let (ov, oa) = naive_backup(&m, &values);
    for s in 0..30 {
        assert!((v[s] - ov[s]).abs() < 1e-12);
    }
    assert_eq!(a, oa);
}

#[test]
fn ties_go_to_smallest_action() {
    // Two identical actions.
    let m = TabularMdp::new(1, 3, 1, vec![1.0; 3], vec![0; 3], vec![1.0, 2.0, 2.0], 0.5).unwrap();
    let res = ValueIteration::<_, f64>::new(&m, config()).unwrap().run().unwrap();
    assert_eq!(res.policy.actions, vec![1]);
}

#[test]
fn policy_matches_brute_force_on_small_random_mdps() {
    for seed in 0..50u64 {
        let states = 2 + (seed as usize % 7);
        let actions = 2 + (seed as usize % 2);
        let m = TabularMdp::random(1000 + seed, states, actions, 3, 0.9);
        let res = ValueIteration::<_, f64>::new(&m, config()).unwrap().run().unwrap();
        assert_eq!(res.policy.actions, brute_force_policy(&m), "seed {seed}");
    }
}

#[test]
fn twenty_state_policy_is_optimal_against_every_single_deviation() {
    let m = TabularMdp::random(77, 20, 3, 4, 0.9);
    let res = ValueIteration::<_, f64>::new(&m, config()).unwrap().run().unwrap();
    let policy: Vec<usize> = res.policy.actions.iter().map(|&a| a as usize).collect();
    let base = policy_value(&m, &policy);
    for s in 0..20 {
        for a in 0..3 {
            let mut alt = policy.clone();
            alt[s] = a;
            let v = policy_value(&m, &alt);
            for t in 0..20 {
                assert!(v[t] <= base[t] + 1e-9);
            }
        }
    }
}

fn run_batched(m: &TabularMdp, batch: usize, iterations: u64) -> (Vec<u64>, Vec<u32>) {
    let cfg = ViConfig {
        max_batch_size: batch,
        fixed_iterations: Some(iterations),
        ..ViConfig::default()
    };
    let res = ValueIteration::<_, f64>::new(m, cfg).unwrap().run().unwrap();
    (res.value_function.values.iter().map(|v| v.to_bits()).collect(), res.policy.actions)
}

#[test]
fn results_are_bitwise_independent_of_batch_size_and_threads() {
    let m = TabularMdp::random(5, 23, 3, 6, 0.95);
    let reference = run_batched(&m, 23, 40);
    for batch in [1, 4, 7, 22, 100] {
        assert_eq!(run_batched(&m, batch, 40), reference, "batch {batch}");
    }
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(pool.install(|| run_batched(&m, 7, 40)), reference);
    }
}

#[test]
fn value_span_contracts_for_discounted_models() {
    let m = TabularMdp::random(9, 15, 3, 4, 0.9);
    let mut vi = ValueIteration::<_, f64>::new(&m, config()).unwrap();
    let mut prev = vi.values().to_vec();
    let mut last_span = f64::INFINITY;
    for i in 0..60 {
        vi.step().unwrap();
        let span = vi.values().iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if i > 0 {
            assert!(span <= last_span + 1e-15);
        }
        last_span = span;
        prev = vi.values().to_vec();
    }
}

#[test]
fn fixed_iterations_stop_exactly() {
    let m = TabularMdp::random(3, 6, 2, 2, 1.0).with_convergence_test(ConvergenceTest::ChangeSpan);
    let cfg = ViConfig {
        fixed_iterations: Some(100),
        ..ViConfig::default()
    };
    let res = ValueIteration::<_, f64>::new(&m, cfg).unwrap().run().unwrap();
    assert_eq!(res.iterations, 100);
    assert_eq!(res.stop_reason, StopReason::FixedIterations);
}

#[test]
fn max_iterations_caps_the_run() {
    let m = self_loop(1.0, 1.0);
    let cfg = ViConfig {
        max_iterations: 25,
        ..ViConfig::default()
    };
    let res = ValueIteration::<_, f64>::new(&m, cfg).unwrap().run().unwrap();
    assert_eq!(res.iterations, 25);
    assert_eq!(res.stop_reason, StopReason::MaxIterations);
}

#[test]
fn overflow_is_reported_as_divergence() {
    let m = self_loop(1e308, 1.0);
    let err = ValueIteration::<_, f64>::new(&m, config()).unwrap().run().unwrap_err();
    assert!(matches!(err, Error::Divergence { iteration: 2 }), "{err:?}");
}

#[test]
fn invalid_config_is_rejected() {
    let m = self_loop(1.0, 0.5);
    for cfg in [
        ViConfig { epsilon: 0.0, ..config() },
        ViConfig { max_batch_size: 0, ..config() },
        ViConfig { gamma: Some(1.5), ..config() },
        ViConfig { checkpoint_every: 1, ..config() },
    ] {
        assert!(matches!(ValueIteration::<_, f64>::new(&m, cfg), Err(Error::Config(_))));
    }
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let m = TabularMdp::random(21, 12, 3, 4, 0.95).with_convergence_test(ConvergenceTest::PeriodicSpan);
    let dir = tempfile::tempdir().unwrap();
    let cfg = ViConfig {
        epsilon: 1e-6,
        checkpoint_every: 3,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..ViConfig::default()
    };
    let full = ValueIteration::<_, f64>::new(&m, ViConfig { checkpoint_every: 0, checkpoint_dir: None, ..cfg.clone() })
        .unwrap()
        .run()
        .unwrap();

    let mut partial = ValueIteration::<_, f64>::new(&m, cfg.clone()).unwrap();
    for _ in 0..20 {
        partial.step().unwrap();
    }
    drop(partial);
    // Eight consecutive vectors are retained for the periodic test.
    assert_eq!(list_checkpoints(dir.path()).unwrap(), (11..=18).collect::<Vec<_>>());

    let resumed = ValueIteration::<_, f64>::resume(&m, cfg).unwrap();
    assert_eq!(resumed.iteration(), 18);
    let resumed = resumed.run().unwrap();
    assert_eq!(resumed.iterations, full.iterations);
    assert_eq!(resumed.policy, full.policy);
    assert_eq!(resumed.value_function, full.value_function);
}

#[test]
fn resume_rejects_foreign_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ViConfig {
        checkpoint_every: 1,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..config()
    };
    let a = TabularMdp::random(1, 4, 2, 2, 0.9);
    let mut vi = ValueIteration::<_, f64>::new(&a, cfg.clone()).unwrap();
    vi.step().unwrap();
    let b = TabularMdp::random(2, 4, 2, 2, 0.9);
    assert!(matches!(
        ValueIteration::<_, f64>::resume(&b, cfg),
        Err(Error::Fingerprint { .. })
    ));
}

#[test]
fn failed_checkpoint_write_keeps_the_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not_a_dir");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = ViConfig {
        checkpoint_every: 1,
        checkpoint_dir: Some(blocker),
        ..config()
    };
    let m = self_loop(1.0, 0.5);
    let mut vi = ValueIteration::<_, f64>::new(&m, cfg).unwrap();
    assert!(matches!(vi.step(), Err(Error::Io { .. })));
    assert_eq!(vi.iteration(), 1);
    assert_eq!(vi.values(), &[1.0]);
}

#[test]
fn final_checkpoint_holds_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ViConfig {
        checkpoint_every: 1,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        fixed_iterations: Some(5),
        ..config()
    };
    let m = TabularMdp::random(4, 5, 2, 3, 0.9);
    let res = ValueIteration::<_, f64>::new(&m, cfg).unwrap().run().unwrap();
    let last = load_checkpoint(&dir.path().join("checkpoint_0000000005.pvi")).unwrap();
    assert_eq!(last, res.value_function);
}

#[test]
fn single_precision_tracks_double_precision() {
    let m = TabularMdp::random(8, 10, 3, 3, 0.9);
    let r64 = ValueIteration::<_, f64>::new(&m, ViConfig { epsilon: 1e-4, ..config() }).unwrap().run().unwrap();
    let r32 = ValueIteration::<_, f32>::new(&m, ViConfig { epsilon: 1e-4, ..config() }).unwrap().run().unwrap();
    for (a, b) in r64.value_function.values.iter().zip(&r32.value_function.values) {
        assert!((a - b).abs() < 1e-2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn padding_never_leaks(seed in 0u64..1000, states in 2usize..20, batch in 1usize..25) {
        let m = TabularMdp::random(seed, states, 2, 3, 0.8);
        prop_assert_eq!(run_batched(&m, batch, 5), run_batched(&m, states, 5));
    }
}
