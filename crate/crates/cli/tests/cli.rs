use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn pace(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pace"));
    cmd.args(args).env_remove("PACE_BASE_URL").env_remove("PACE_API_KEY").env("RUST_LOG", "off");
    cmd
}

fn run(args: &[&str]) -> Output {
    pace(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn optimize(out: &Path, setting: &str) -> Output {
    run(&[
        "optimize",
        "--task",
        path(&fixture("magic_task.json")),
        "--setting",
        setting,
        "--config",
        path(&fixture("mock_config.json")),
        "--out",
        path(out),
    ])
}

#[test]
fn optimize_with_mock_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(dir.path(), "worst");
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("final prompt: Repeat the input word. MAGIC."), "{text}");
    assert!(text.contains("test: 0.00 -> 1.00"), "{text}");
    let footer: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("footer.json")).unwrap()).unwrap();
    assert_eq!(footer["status"], "completed");
    assert_eq!(footer["final_test"]["mean"], 1.0);
}

#[test]
fn empty_setting() {
    let dir = tempfile::tempdir().unwrap();
    let o = optimize(dir.path(), "empty");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("final prompt: MAGIC."));
}

#[test]
fn literal_prompt_and_bad_setting() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "optimize",
        "--task",
        path(&fixture("magic_task.json")),
        "--prompt",
        "Echo MAGIC.",
        "--config",
        path(&fixture("mock_config.json")),
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("val: 1.00 -> 1.00"));
    let bad = optimize(dir.path(), "fancy");
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn missing_api_key_names_the_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = pace(&[
        "optimize",
        "--task",
        path(&fixture("magic_task.json")),
        "--setting",
        "worst",
        "--backend",
        "live",
        "--out",
        path(dir.path()),
    ])
    .env("PACE_BASE_URL", "http://127.0.0.1:9/v1")
    .output()
    .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("PACE_API_KEY"), "{}", stderr(&o));
    assert!(!dir.path().join("header.json").exists());
}

#[test]
fn eval_prints_pairs_and_mean() {
    let o = run(&[
        "eval",
        "--task",
        path(&fixture("magic_task.json")),
        "--prompt",
        "Echo MAGIC.",
        "--config",
        path(&fixture("mock_config.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let scores: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("pair "))
        .map(|l| l.split(' ').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(!scores.is_empty());
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    assert_eq!(mean, 1.0);
    assert!(text.lines().last().unwrap().starts_with("mean: 1.00"), "{text}");
}

#[test]
fn eval_json_matches_recomputed_mean() {
    let o = run(&[
        "eval",
        "--task",
        path(&fixture("plateau_task.json")),
        "--prompt",
        "Level 2",
        "--split",
        "test",
        "--json",
        "--backend",
        "mock",
        "--mock-script",
        path(&fixture("plateau_script.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let per: Vec<f64> = report["per_pair"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["score"].as_f64().unwrap())
        .collect();
    assert_eq!(per.len() as u64, report["n_pairs"].as_u64().unwrap());
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    assert!((mean - report["mean"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn eval_on_empty_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("val_only.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"run": {{"split": {{"train": 0.0, "val": 1.0, "test": 0.0}}}},
                "backend": {{"kind": "mock", "mock_script": {:?}}}}}"#,
            path(&fixture("magic_script.json"))
        ),
    )
    .unwrap();
    let o = run(&[
        "eval",
        "--task",
        path(&fixture("magic_task.json")),
        "--prompt",
        "x",
        "--split",
        "test",
        "--config",
        path(&config),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("split empty: test"));
}

fn perturb(input: &str, args: &[&str]) -> String {
    let mut child = pace(&[&["perturb"], args].concat())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    stdout(&o)
}

#[test]
fn perturb_rate_zero_is_identity() {
    let input = "Echo the input exactly.\nSecond line!";
    assert_eq!(perturb(input, &["--rate", "0"]), input);
}

#[test]
fn perturb_is_seeded() {
    let input: String = "the quick brown fox jumps over the lazy dog ".repeat(60);
    let a = perturb(&input, &["--seed", "9"]);
    assert_eq!(a, perturb(&input, &["--seed", "9"]));
    assert_ne!(a, perturb(&input, &["--seed", "10"]));
    let letters = input.chars().filter(char::is_ascii_alphabetic).count();
    let changed = input.chars().zip(a.chars()).filter(|(x, y)| x != y).count();
    let fraction = changed as f64 / letters as f64;
    assert!((0.11..0.19).contains(&fraction), "{fraction}");
}

#[test]
fn perturb_rejects_bad_rate() {
    let o = run(&["perturb", "abc", "--rate", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_over_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(optimize(&a, "worst").status.success());
    assert!(optimize(&b, "empty").status.success());
    let o = run(&["report", path(&a), path(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines[0], "| task | setting | initial | final | delta |");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[2], "| magic-echo | worst | 0.00 | 1.00 | 1.00 |");
    assert_eq!(lines[3], "| magic-echo | empty | 0.00 | 1.00 | 1.00 |");

    let out = dir.path().join("r.csv");
    assert!(run(&["report", path(&a), "--format", "csv", "--out", path(&out)]).status.success());
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("\"task\",\"setting\""), "{csv}");
}

#[test]
fn report_on_missing_run_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", path(&dir.path().join("nope"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["optimize"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
