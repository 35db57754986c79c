use perishable_core::config::ExperimentConfig;
use perishable_core::experiment::{optimality_gap, Experiment};
use perishable_core::mdp::MdpModel;
use perishable_core::policy_io::{read_policy_csv, write_policy_csv};
use perishable_core::scenario::a::{ScenarioA, ScenarioAParams};
use perishable_core::sim::{evaluate_policy, RolloutConfig, SimState};
use perishable_core::vi::{Policy, ValueIteration, ViConfig};
use perishable_core::Error;

fn solved_a(exp: usize) -> (ScenarioA, Policy) {
    let model = ScenarioA::new(ScenarioAParams::experiment(2, exp).unwrap()).unwrap();
    let res = ValueIteration::<_, f64>::new(&model, ViConfig::default()).unwrap().run().unwrap();
    (model, res.policy)
}

#[test]
fn policy_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.csv");
    let (model, policy) = solved_a(1);
    write_policy_csv(&path, &model, &policy).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# fingerprint: "));
    assert_eq!(text.lines().count(), 2 + model.num_states());
    assert_eq!(read_policy_csv(&path, &model).unwrap(), policy);
}

#[test]
fn policy_for_another_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.csv");
    let (model, policy) = solved_a(1);
    write_policy_csv(&path, &model, &policy).unwrap();
    let (other, _) = solved_a(2);
    let err = read_policy_csv(&path, &other).unwrap_err();
    assert!(matches!(err, Error::Fingerprint { .. }), "{err}");
}

#[test]
fn shuffled_or_truncated_policy_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.csv");
    let (model, policy) = solved_a(1);
    write_policy_csv(&path, &model, &policy).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(2, 3);
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(read_policy_csv(&path, &model).unwrap_err(), Error::Format { .. }));
    lines.swap(2, 3);
    lines.pop();
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(matches!(read_policy_csv(&path, &model).unwrap_err(), Error::Format { .. }));
}

#[test]
fn suppressed_weekday_rule_never_orders() {
    let cfg = ExperimentConfig::preset("c/m3/exp1").unwrap();
    let exp = Experiment::new(&cfg).unwrap();
    let Experiment::C(sim) = &exp else { panic!("scenario C expected") };
    let rollouts = RolloutConfig {
        n_rollouts: 200,
        ..Default::default()
    };
    // s >= S on every weekday, with assorted levels.
    let params = [3, 0, 7, 12, 20, 5, 9, 3, 4, 7, 15, 20, 8, 9];
    let suppressed = exp.evaluate_heuristic(&params, &rollouts).unwrap();
    let zero = evaluate_policy(sim, &|_: &SimState| Some(0usize), &rollouts).unwrap();
    assert_eq!(suppressed, zero);
}

#[test]
fn heuristic_outside_space_is_rejected() {
    let exp = Experiment::new(&ExperimentConfig::preset("a/m2/exp1").unwrap()).unwrap();
    let err = exp.evaluate_heuristic(&[11], &RolloutConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn heuristic_file_checks_scenario() {
    let a1 = Experiment::new(&ExperimentConfig::preset("a/m2/exp1").unwrap()).unwrap();
    let a2 = Experiment::new(&ExperimentConfig::preset("a/m2/exp2").unwrap()).unwrap();
    let mut cfg = ExperimentConfig::preset("a/m2/exp1").unwrap().simopt;
    cfg.rollouts = 50;
    let result = a1.search(&cfg).unwrap();
    let file = a1.heuristic_file(&result, 50);
    let path = std::path::Path::new("heuristic.json");
    a1.check_heuristic_file(&file, path).unwrap();
    assert!(matches!(a2.check_heuristic_file(&file, path), Err(Error::Fingerprint { .. })));
}

#[test]
fn gap_sign_and_scale() {
    assert!((optimality_gap(-100.0, -101.0) - 1.0).abs() < 1e-12);
    assert!((optimality_gap(200.0, 198.0) - 1.0).abs() < 1e-12);
    assert!(optimality_gap(200.0, 201.0) < 0.0);
}
