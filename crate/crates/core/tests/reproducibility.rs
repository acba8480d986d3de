use vertexlab::harness::{run_check, run_suite, ExperimentSpec, Suite};

fn payload(id: &str, budget: u64, seed: u64) -> String {
    let mut spec = ExperimentSpec::new(id);
    spec.budget = Some(budget);
    let mut v = serde_json::to_value(run_check(&spec, seed).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("runtime_s");
    serde_json::to_string(&v).unwrap()
}

#[test]
fn same_spec_and_seed_give_identical_payloads() {
    for (id, budget) in [("stochasticity", 20), ("mc_closure", 4000), ("sampler_formula", 4000)] {
        assert_eq!(payload(id, budget, 99), payload(id, budget, 99), "{id}");
    }
    assert_ne!(payload("mc_closure", 4000, 99), payload("mc_closure", 4000, 100));
}

#[test]
fn suite_writes_reports_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let suite = Suite::from_toml(
        r#"
        name = "smoke"
        seed = 11

        [[checks]]
        id = "sum_to_one"
        budget = 2

        [[checks]]
        id = "formal_identity"
        budget = 5
        "#,
    )
    .unwrap();
    let outcome = run_suite(&suite, 11, Some(dir.path())).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(csv.starts_with("id,pass,kind,statistic,tolerance,budget,runtime_s\n"));
    assert_eq!(csv.lines().count(), 3);
    for id in ["sum_to_one", "formal_identity"] {
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{id}.json"))).unwrap()).unwrap();
        assert_eq!(report["pass"], true);
    }
}
