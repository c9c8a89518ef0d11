use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowtomo")).args(args).output().unwrap()
}

#[test]
fn check_reports_tu_and_identifiable() {
    let out = run(&["check", "--matrix", &data("four_link.csv")]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["identifiable"], true);
    assert_eq!(v["tu_status"], "verified-tu");
}

#[test]
fn enumerate_lists_eleven_points() {
    let out = run(&["enumerate", "--matrix", &data("four_link.csv"), "--counts", &data("four_link_counts.csv")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0], "r1,r2,r3,r4,r5,r6");
    assert!(lines[1..].iter().all(|l| {
        let x: Vec<i64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        x[0] == 0 && x[3] == 0 && x[4] + x[5] == 10
    }));
}

#[test]
fn bayes_reports_twenty_means() {
    let out = run(&[
        "bayes",
        "--matrix",
        &data("junction.csv"),
        "--counts",
        &data("junction_counts.csv"),
        "--priors",
        &data("junction_priors.csv"),
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = v["summaries"].as_array().unwrap();
    assert_eq!(s.len(), 20);
    assert_eq!(s[0]["route"], "3-6");
    assert!(s.iter().all(|r| r["mean"].as_f64().unwrap() > 0.0));
}

#[test]
fn exit_codes_distinguish_usage_data_and_numerical() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    };
    // missing seed
    let out = run(&["sample", "--matrix", &data("four_link.csv"), "--counts", &data("four_link_counts.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    // unknown flag
    assert_eq!(run(&["check", "--bogus"]).status.code(), Some(1));
    // malformed matrix
    let bad = write("bad.csv", "1,2\n0,1\n");
    assert_eq!(run(&["check", "--matrix", &bad]).status.code(), Some(2));
    // counts that no route flows can produce
    let y = write("y.csv", "10,5,0,0\n");
    let out = run(&["enumerate", "--matrix", &data("four_link.csv"), "--counts", &y]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let matrix = data("four_link.csv");
    let counts = data("four_link_counts.csv");
    std::fs::write(
        &cfg,
        serde_json::json!({ "matrix": matrix, "counts": counts, "seed": 3, "iters": 300, "pilot-iters": 100 })
            .to_string(),
    )
    .unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let a = run(&["sample", "--config", &cfg]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(&["sample", "--config", &cfg, "--seed", "3"]);
    let c = run(&["sample", "--config", &cfg, "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn chains_write_suffixed_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let status = run(&[
        "sample",
        "--matrix",
        &data("four_link.csv"),
        "--counts",
        &data("four_link_counts.csv"),
        "--seed",
        "1",
        "--iters",
        "200",
        "--chains",
        "2",
        "--out",
        &out.to_string_lossy(),
    ])
    .status;
    assert!(status.success());
    for c in 1..=2 {
        let p = dir.path().join(format!("trace_chain{c}.csv"));
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("iter,phase,slack,n_accepted,n_changed,x_1"));
    }
}
