use pspin_core::experiment::{
    run_langevin_batch, run_scenario, verdict_schema_errors, verdict_schema_validate, ExperimentConfig, Scenario,
    StartKind,
};

fn small(scenario: Scenario, tag: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.scenario = scenario;
    c.n = 24;
    c.horizon = 1.0;
    c.seeds = vec![0, 1, 2];
    c.portrait_starts = 8;
    c.out = std::env::temp_dir().join(format!("pspin-exp-{tag}-{}", std::process::id()));
    c
}

#[test]
fn batch_is_deterministic_across_thread_counts() {
    let mut a = small(Scenario::Uniform, "det-a");
    let mut b = a.clone();
    a.threads = 1;
    b.threads = 3;
    let ra = run_langevin_batch(&a, &[StartKind::Uniform, StartKind::Adversarial]).unwrap();
    let rb = run_langevin_batch(&b, &[StartKind::Uniform, StartKind::Adversarial]).unwrap();
    assert_eq!(ra.runs.len(), 6);
    for (x, y) in ra.runs.iter().zip(&rb.runs) {
        let (x, y) = (x.record.as_ref().unwrap(), y.record.as_ref().unwrap());
        assert_eq!(x.u, y.u);
        assert_eq!(x.v, y.v);
    }
    let distinct = ra.runs[0].record.as_ref().unwrap().u != ra.runs[1].record.as_ref().unwrap().u;
    assert!(distinct);
}

#[test]
fn adversarial_starts_have_negative_u() {
    let c = small(Scenario::Adversarial, "adv");
    let b = run_langevin_batch(&c, &[StartKind::Adversarial]).unwrap();
    for r in &b.runs {
        assert!(r.record.as_ref().unwrap().u[0] < -0.5);
    }
}

#[test]
fn portrait_scenario_writes_valid_verdict() {
    let c = small(Scenario::Portrait, "portrait");
    let v = run_scenario(&c).unwrap();
    assert!(!v.claims.is_empty());
    assert!(verdict_schema_validate(&c.out.join("verdict.json")).unwrap().is_empty());
    assert!(c.out.join("config.resolved.txt").exists());
    let again = ExperimentConfig::from_file(&c.out.join("config.resolved.txt")).unwrap();
    assert_eq!(again, c);
}

#[test]
fn schema_rejects_malformed_examples() {
    let cases = [
        (serde_json::json!({}), "$.claims"),
        (serde_json::json!({"claims": "x"}), "$.claims"),
        (serde_json::json!({"claims": [{"name": "a", "paper_anchor": "b", "pass": "yes",
            "statistic": 1, "threshold": 1, "provenance": "derived-oracle"}]}), "$.claims[0].pass"),
        (serde_json::json!({"claims": [{"name": "a", "paper_anchor": "b", "pass": true,
            "statistic": "1", "threshold": 1, "provenance": "derived-oracle"}]}), "$.claims[0].statistic"),
        (serde_json::json!({"claims": [{"name": "a", "paper_anchor": "b", "pass": true,
            "statistic": 1, "threshold": 1, "provenance": "guess"}]}), "$.claims[0].provenance"),
    ];
    for (doc, path) in cases {
        let errs = verdict_schema_errors(&doc);
        assert!(errs.iter().any(|e| e.starts_with(path)), "{doc}: {errs:?}");
    }
}

#[test]
fn statistics_stable_under_step_halving() {
    use pspin_core::bounding_flows::{E0Table, FlowParams};
    use pspin_core::experiment::condition_i_summary;
    let params = FlowParams::from_table(3, 1.0, E0Table::builtin()).unwrap();
    let mut means = Vec::new();
    for (step, stride) in [(1e-3, 10), (5e-4, 20)] {
        let mut c = small(Scenario::Uniform, "halving");
        c.n = 60;
        c.horizon = 2.0;
        c.seeds = (0..8).collect();
        c.step = step;
        c.record_stride = stride;
        let b = run_langevin_batch(&c, &[StartKind::Uniform]).unwrap();
        let (ci, _) = condition_i_summary(&params, &b, StartKind::Uniform, c.drift_window, c.k_sigma);
        assert!(ci.pooled_fraction >= 0.9, "step {step}: {}", ci.pooled_fraction);
        let us: Vec<f64> = b.runs.iter().map(|r| *r.record.as_ref().unwrap().u.last().unwrap()).collect();
        means.push(us.iter().sum::<f64>() / us.len() as f64);
    }
    assert!((means[0] - means[1]).abs() < 0.1, "{means:?}");
}
