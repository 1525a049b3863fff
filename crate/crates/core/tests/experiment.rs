use cilcal::calibration::Method;
use cilcal::harness::report::{states_csv, summary_json};
use cilcal::harness::{run_experiment, ExperimentConfig};

fn config(calibrators: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"data": {{"synthetic": {{"classes": 20, "dim": 8, "per_class": 40,
            "test_per_class": 10, "separation": 3.0, "noise": 1.0}}}},
            "num_states": 5, "memory": 30, "calibrators": {calibrators},
            "train": {{"epochs": 6}}, "seeds": {{"data": 1, "model": 2, "protocol": 3}}}}"#
    ))
    .unwrap()
}

#[test]
fn five_states_and_summary_skips_first() {
    let r = run_experiment(&config(r#"["none"]"#)).unwrap();
    assert_eq!(r.reports.len(), 5);
    assert_eq!(r.reports.iter().map(|s| s.num_classes).collect::<Vec<_>>(), vec![4, 8, 12, 16, 20]);
    assert_eq!(r.reports[0].mean_score_old, None);
    let top1: Vec<f64> = r.reports.iter().map(|s| s.method(Method::None).unwrap().top1).collect();
    let expected = top1[1..].iter().sum::<f64>() / 4.0;
    assert!((r.summary["none"].avg_top1.unwrap() - expected).abs() < 1e-12);
}

#[test]
fn summary_matches_csv_columns() {
    let r = run_experiment(&config(r#"["none", "th", "mb"]"#)).unwrap();
    let csv = states_csv(&r);
    let summary: serde_json::Value = serde_json::from_str(&summary_json(&r).unwrap()).unwrap();
    for m in ["none", "th", "mb"] {
        let rows: Vec<Vec<String>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .filter(|c: &Vec<String>| c[1] == m && c[0] != "1")
            .collect();
        for (col, key) in [(2, "avg_top1"), (3, "avg_ece")] {
            let mean = rows.iter().map(|c| c[col].parse::<f64>().unwrap()).sum::<f64>() / rows.len() as f64;
            let reported = summary[m][key].as_f64().unwrap();
            assert!((mean - reported).abs() < 1e-9, "{m} {key}: {mean} vs {reported}");
        }
    }
}

#[test]
fn identical_configs_give_identical_reports() {
    let a = run_experiment(&config(r#"["none", "iso", "pl", "bal", "fj"]"#)).unwrap();
    let b = run_experiment(&config(r#"["none", "iso", "pl", "bal", "fj"]"#)).unwrap();
    assert_eq!(states_csv(&a), states_csv(&b));
    assert_eq!(summary_json(&a).unwrap(), summary_json(&b).unwrap());
}

#[test]
fn all_methods_run_and_model_is_untouched() {
    let all = run_experiment(&config(r#"["none", "iso", "pl", "th", "nem", "bal", "mb", "fj"]"#)).unwrap();
    let only = run_experiment(&config(r#"["none"]"#)).unwrap();
    for (x, y) in all.reports.iter().zip(&only.reports) {
        assert_eq!(x.method(Method::None), y.method(Method::None));
        assert_eq!(x.methods.len(), 8);
        for m in &x.methods {
            assert!((0.0..=100.0).contains(&m.top1) && (0.0..=1.0).contains(&m.ece), "{m:?}");
        }
    }
    assert_eq!(all.artifacts.last().unwrap().model, only.artifacts.last().unwrap().model);
}

#[test]
fn single_state_has_no_summary_average() {
    let mut c = config(r#"["none"]"#);
    c.num_states = 1;
    let r = run_experiment(&c).unwrap();
    assert_eq!(r.summary["none"].avg_top1, None);
}
