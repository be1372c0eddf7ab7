use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adrank")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = adrank(args);
    assert!(o.status.success(), "adrank {args:?} failed: {}", stderr(&o));
    stdout(&o)
}

/// Three separated blobs in 2-D with a deterministic wobble, label last.
fn toy_csv(dir: &Path) -> PathBuf {
    let centres = [(3.0, 0.0), (-3.0, 0.0), (0.0, 3.0)];
    let mut text = String::new();
    for i in 0..900 {
        let label = i % 3;
        let (cx, cy) = centres[label];
        let t = i as f64;
        text.push_str(&format!("{},{},{}\n", cx + (t * 1.7).sin(), cy + (t * 2.3).cos(), label));
    }
    let path = dir.join("toy.csv");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_input_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let o = adrank(&["convert", "-i", "/no/such/file.csv", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/file.csv"));
}

#[test]
fn bad_flags_exit_with_two_and_bad_data_with_one() {
    assert_eq!(adrank(&["convert", "--bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2,0\n1,x,1\n").unwrap();
    let o = adrank(&["convert", "-i", s(&bad), "-o", s(&dir.path().join("o.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn convert_is_deterministic_and_logs_about_one_in_k_clicks() {
    let dir = tempfile::tempdir().unwrap();
    let input = toy_csv(dir.path());
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let msg = ok(&["convert", "-i", s(&input), "-o", s(&a), "--seed", "4"]);
    ok(&["convert", "-i", s(&input), "-o", s(&b), "--seed", "4"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("f0,f1,action,reward,propensity\n"));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 900);
    let clicks = rows.iter().filter(|r| r.split(',').nth(3) == Some("1")).count();
    assert!((clicks as f64 / 900.0 - 1.0 / 3.0).abs() < 0.06);
    assert!(msg.contains("900 bandit records"));
}

#[test]
fn full_information_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let input = toy_csv(dir.path());
    ok(&["convert", "-i", s(&input), "-o", s(&p("train.csv")), "--train-fraction", "0.7", "--test-out", s(&p("test.csv"))]);
    let test_rows = fs::read_to_string(p("test.csv")).unwrap().lines().count() - 1;
    assert_eq!(test_rows, 270);

    let sel = ok(&["select-features", "-i", s(&input), "--keep-fraction", "0.5"]);
    let sel: serde_json::Value = serde_json::from_str(&sel).unwrap();
    assert_eq!(sel["kept_indices"].as_array().unwrap().len(), 1);

    let train_log = ok(&[
        "train", "-i", s(&p("train.csv")), "--kind", "ranker", "--iterations", "5000",
        "--lambda-grid", "0.01,0.1,1,10", "-o", s(&p("ranker.json")),
    ]);
    assert!(train_log.contains("chosen lambda"));
    let bundle: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("ranker.json")).unwrap()).unwrap();
    assert_eq!(bundle["format"], "adrank-policy/1");
    assert_eq!(bundle["arms"].as_array().unwrap().len(), 3);
    let lambdas: Vec<f64> = bundle["arms"].as_array().unwrap().iter().map(|a| a["lambda"].as_f64().unwrap()).collect();
    assert!(lambdas.iter().all(|l| [0.01, 0.1, 1.0, 10.0].contains(l)));

    let report = ok(&["eval-full", "-i", s(&p("test.csv")), "-p", s(&p("ranker.json"))]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["estimator"], "true_ctr");
    assert_eq!(report["n"], 270);
    assert!(report["point"].as_f64().unwrap() > 0.9);
    assert!(report["dataset_fingerprint"].as_str().unwrap().len() == 64);
}

#[test]
fn classifier_undersampling_is_logged_per_arm() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let input = toy_csv(dir.path());
    ok(&["convert", "-i", s(&input), "-o", s(&p("bandit.csv"))]);
    let log = ok(&[
        "train", "-i", s(&p("bandit.csv")), "--kind", "classifier", "--undersample", "1:1",
        "--iterations", "2000", "-o", s(&p("clf.json")),
    ]);
    let bundle: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("clf.json")).unwrap()).unwrap();
    assert_eq!(bundle["undersample"], "1:1");
    for arm in bundle["arms"].as_array().unwrap() {
        assert_eq!(arm["negatives"], arm["positives"]);
    }
    assert!(log.contains('/'), "negative counts before undersampling are shown: {log}");
}

#[test]
fn simulate_train_and_evaluate_bandit() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let sim = p("sim");
    ok(&["simulate", "--rates", "0.05,0.1,0.08", "--dimension", "4", "--n-train", "6000", "--n-test", "3000", "--seed", "2", "-o", s(&sim)]);
    assert!(sim.join("model.json").exists());
    ok(&["train", "-i", s(&sim.join("train.csv")), "--iterations", "3000", "-o", s(&p("r.json"))]);
    let report = ok(&["eval-bandit", "-i", s(&sim.join("test.csv")), "-p", s(&p("r.json")), "--delta", "0.05"]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["estimator"], "iw_ctr");
    assert!(report["lcb"].as_f64().unwrap() <= report["point"].as_f64().unwrap());
    assert_eq!(report["delta"], 0.05);

    // ε above (K−1)/K is allowed
    let o = adrank(&["eval-bandit", "-i", s(&sim.join("test.csv")), "-p", s(&p("r.json")), "--epsilon", "0.9"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("epsilon"));
}

#[test]
fn untrainable_arm_is_a_warning_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("log.csv");
    let mut text = String::from("f0,action,reward,propensity\n");
    for i in 0..40 {
        let x = i as f64 / 10.0;
        let action = i % 2;
        let reward = u8::from(action == 0 && x > 2.0);
        text.push_str(&format!("{x},{action},{reward},0.5\n"));
    }
    fs::write(&data, text).unwrap();
    let o = adrank(&["train", "-i", s(&data), "--iterations", "500", "-o", s(&dir.path().join("b.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("untrainable, excluded"));
    assert!(stderr(&o).contains("untrainable"));
}

#[test]
fn experiment_bandit_report_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        "repetitions = 1\nepsilon = 0.0\niterations = 2000\nseed = 9\n\n[synthetic]\ntarget_rates = [0.05, 0.1]\ndimension = 3\nn_train = 3000\nn_test = 2000\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let text = ok(&["experiment", "--config", s(&cfg), "-o", s(&a)]);
    ok(&["experiment", "--config", s(&cfg), "-o", s(&b)]);
    assert!(text.contains("stand-in"));
    for f in ["summary.json", "summary.txt", "rows.csv", "plot_data.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    for pol in summary["policies"].as_array().unwrap() {
        assert!(pol["mean_lcb"].as_f64().unwrap() <= pol["mean"].as_f64().unwrap());
    }
    assert!(a.join("rep-000/ranker-report.json").exists());
}

#[test]
fn experiment_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let input = toy_csv(dir.path());
    let text = ok(&[
        "experiment", "-i", s(&input), "--repetitions", "2", "--iterations", "1000", "--kinds", "classifier",
        "--resplit", "--seed", "3",
    ]);
    assert!(text.contains("linear-classifier"));
    assert!(!text.contains("linear-ranker"));
    assert!(text.contains("split re-drawn every repetition"));
    assert!(text.contains("2/2"));
    assert_eq!(adrank(&["experiment"]).status.code(), Some(2));
}
