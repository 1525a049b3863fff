use std::fs;

use cilcal::harness::cli::run_cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["cilcal"];
    full.extend_from_slice(args);
    let code = run_cli(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn breaks_prints_json() {
    let (code, out, _) = run(&["breaks", "--values", "1,2,10,11", "--k", "2"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ssd"], 1.0);
    assert_eq!(v["boundaries"], serde_json::json!([2]));
    assert_eq!(v["assignments"], serde_json::json!([0, 0, 1, 1]));
}

#[test]
fn breaks_rejects_bad_input() {
    assert_eq!(run(&["breaks", "--values", "1,x", "--k", "2"]).0, 2);
    assert_eq!(run(&["breaks", "--values", "1,2", "--k", "5"]).0, 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let (code, _, err) = run(&["breaks", "--values", "1,2", "--k", "1", "--bogus"]);
    assert_eq!(code, 2);
    assert!(!err.is_empty());
    assert_ne!(run(&["frobnicate"]).0, 0);
}

#[test]
fn calibrate_threshold_pipes_scores() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    let counts = dir.path().join("c.csv");
    // softmax(ln 0.6, ln 0.4) = (0.6, 0.4)
    fs::write(&scores, format!("s0,s1\n{},{}\n", 0.6f64.ln(), 0.4f64.ln())).unwrap();
    fs::write(&counts, "class,count\n0,3\n1,1\n").unwrap();
    let (code, out, err) = run(&[
        "calibrate",
        "--method",
        "th",
        "--scores",
        scores.to_str().unwrap(),
        "--counts",
        counts.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("pred,c0,c1"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[1] - 0.8).abs() < 1e-12 && (row[2] - 1.6).abs() < 1e-12);
}

#[test]
fn calibrate_reports_data_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    let counts = dir.path().join("c.csv");
    fs::write(&scores, "s0,s1\n0.5,oops\n").unwrap();
    fs::write(&counts, "class,count\n0,3\n1,1\n").unwrap();
    let args = |m: &'static str| {
        vec![
            "calibrate".to_string(),
            "--method".into(),
            m.into(),
            "--scores".into(),
            scores.display().to_string(),
            "--counts".into(),
            counts.display().to_string(),
        ]
    };
    let call = |a: Vec<String>| {
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        run(&refs).0
    };
    assert_eq!(call(args("th")), 3);
    assert_eq!(call(args("temp")), 2);
    fs::write(&scores, "s0,s1\n0.5,0.1\n").unwrap();
    // mb needs labels
    assert_eq!(call(args("mb")), 2);
}

#[test]
fn calibrate_batch_mean_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    let counts = dir.path().join("c.csv");
    let out = dir.path().join("o.csv");
    fs::write(&scores, "label,s0,s1\n0,0.4,0.0\n1,0.0,0.8\n").unwrap();
    fs::write(&counts, "class,count\n0,2\n1,50\n").unwrap();
    let (code, _, err) = run(&[
        "calibrate",
        "--method",
        "mb",
        "--scores",
        scores.to_str().unwrap(),
        "--counts",
        counts.to_str().unwrap(),
        "--old",
        "0",
        "--new",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out).unwrap();
    let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((first[1] - 0.8).abs() < 1e-12);
}

#[test]
fn gen_then_run_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let feats = dir.path().join("feats.csv");
    let (code, _, err) = run(&[
        "gen", "--classes", "6", "--dim", "4", "--per-class", "30", "--seed", "5", "--out", feats.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(dir.path().join("feats.json").exists());

    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"data": {"files": {"features": "feats.csv", "manifest": "feats.json"}},
            "num_states": 3, "memory": 12, "calibrators": ["none", "th", "fj", "nem"],
            "train": {"epochs": 5}, "snapshots": true}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, stdout, err) = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("avg_top1"));
    for f in ["states.csv", "summary.json", "figdata.csv", "model_3.json", "memory_3.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let states = fs::read_to_string(out.join("states.csv")).unwrap();
    assert_eq!(states.lines().count(), 1 + 3 * 4);
}

#[test]
fn run_with_missing_config_fails() {
    let (code, _, _) = run(&["run", "--config", "/nonexistent/exp.json"]);
    assert_eq!(code, 2);
}
