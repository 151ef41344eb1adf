use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn semid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semid"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn synth_partition_defend_attack() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&semid(
        &[
            "synth",
            "--users",
            "60",
            "--alpha",
            "0.3",
            "--seed",
            "4",
            "--len-mean",
            "60",
            "--len-min",
            "40",
            "--out",
            "c.seq",
        ],
        d,
    ));

    let ingest = ok(&semid(&["ingest", "c.seq"], d));
    assert!(ingest.starts_with("users\t60\n"));
    assert_eq!(ingest.lines().count(), 2 + 17);

    ok(&semid(
        &[
            "partition",
            "--input",
            "c.seq",
            "--strategy",
            "random",
            "--k",
            "20",
            "--seed",
            "1",
            "--out",
            "s.json",
        ],
        d,
    ));
    let sessions: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(sessions["users"].as_array().unwrap().len(), 60);
    assert!(sessions["sessions"][0]["pages"].as_array().unwrap().len() == 20);

    ok(&semid(
        &[
            "defend",
            "--sessions",
            "s.json",
            "--p",
            "5",
            "--seed",
            "2",
            "--out",
            "n.json",
        ],
        d,
    ));
    let noisy: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("n.json")).unwrap()).unwrap();
    assert_eq!(noisy["sessions"][0]["pages"].as_array().unwrap().len(), 25);

    let best = ok(&semid(
        &[
            "attack",
            "--sessions",
            "s.json",
            "--method",
            "pairwise",
            "--out",
            "p.csv",
            "--curve",
            "curve.csv",
        ],
        d,
    ));
    let point: serde_json::Value = serde_json::from_str(best.trim()).unwrap();
    assert!(point["f1"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(d.join("p.csv")).unwrap();
    let n = sessions["sessions"].as_array().unwrap().len();
    assert_eq!(csv.lines().count(), 1 + n * (n - 1) / 2);
    assert!(csv.starts_with("session_a,session_b,score\n0,1,"));
    assert!(fs::read_to_string(d.join("curve.csv"))
        .unwrap()
        .starts_with("threshold,precision,recall,f1,reach\n"));

    ok(&semid(
        &[
            "attack",
            "--sessions",
            "s.json",
            "--method",
            "baseline",
            "--seed",
            "3",
        ],
        d,
    ));
    ok(&semid(
        &[
            "attack",
            "--sessions",
            "n.json",
            "--method",
            "neural",
            "--train",
            "s.json",
            "--epochs",
            "3",
            "--save-model",
            "m.json",
        ],
        d,
    ));
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(model["hidden_units"], 100);
    assert_eq!(model["W1"].as_array().unwrap().len(), 100);
    ok(&semid(
        &[
            "attack",
            "--sessions",
            "s.json",
            "--method",
            "neural",
            "--model",
            "m.json",
        ],
        d,
    ));
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("bad.seq"),
        "a b c d e f g h i j k l m n o p q\n1 2\n0 3\n",
    )
    .unwrap();
    let out = semid(&["ingest", "bad.seq"], d);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: line 3:"), "{err}");

    let out = semid(&["ingest", "missing.seq"], d);
    assert!(!out.status.success());

    fs::write(
        d.join("s.json"),
        r#"{"users":[0],"sessions":[{"id":0,"user":0,"pages":[1]},{"id":1,"user":0,"pages":[2]}]}"#,
    )
    .unwrap();
    let out = semid(&["attack", "--sessions", "s.json", "--method", "neural"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model or --train"));
}

#[test]
fn experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"corpus": {"synthetic": {"n_users": 150, "dirichlet_alpha": 0.3,
                                     "trace_len_mean": 50, "trace_len_min": 40, "seed": 1}},
            "partition": {"strategy": "random", "k": 20, "seed": 2},
            "sample_sizes": [50], "trials": 2, "attacks": ["pairwise", "baseline"],
            "master_seed": 3}"#,
    )
    .unwrap();
    let stdout = ok(&semid(
        &["experiment", "--config", "cfg.json", "--out", "res"],
        d,
    ));
    assert_eq!(stdout.lines().count(), 2);
    let mut names: Vec<String> = fs::read_dir(d.join("res"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "baseline_50_0.csv",
            "baseline_50_1.csv",
            "pairwise_50_0.csv",
            "pairwise_50_1.csv",
            "report.json"
        ]
    );
}
