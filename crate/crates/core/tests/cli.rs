use std::path::Path;
use std::process::{Command, Output};

fn fmsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmsim"))
        .args(args)
        .env_remove("RUST_BACKTRACE")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsim(&["run", "--orders", "8", "--runs", "2", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for s in ["A", "B"] {
        for c in ["agents", "conventional"] {
            assert!(dir.path().join(format!("run-{s}-{c}.csv")).exists());
            assert!(dir.path().join(format!("run-{s}-{c}.json")).exists());
        }
    }
    let cmp = fmsim(&["compare", "--in", p(dir.path())]);
    assert!(cmp.status.success());
    assert_eq!(text(&cmp).lines().filter(|l| l.starts_with("holds") || l.starts_with("FAILS")).count(), 4);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    assert!(dir.path().join("lead_time.dat").exists());
    assert!(dir.path().join("throughput.dat").exists());
}

#[test]
fn repeated_runs_write_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = fmsim(&["run", "--scenario", "B", "--controller", "agents", "--orders", "10", "--seeds", "4,9", "--out", p(d.path())]);
        assert!(o.status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("run-B-agents.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn recorded_traces_replay_clean() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("joint.trace");
    let o = fmsim(&[
        "run", "--scenario", "B", "--controller", "agents", "--orders", "4", "--runs", "1",
        "--out", p(dir.path()), "--trace", p(&trace),
    ]);
    assert!(o.status.success());
    let r = fmsim(&["replay", p(&trace)]);
    assert!(r.status.success(), "{}", text(&r));
    assert!(text(&r).contains("4/4 orders"));
    assert!(text(&r).contains("conformant"));
    // drop the last command: its notifications no longer have an owner
    let lines: Vec<String> = std::fs::read_to_string(&trace).unwrap().lines().map(String::from).collect();
    let last = lines.iter().rposition(|l| l.starts_with("<COMMAND")).unwrap();
    let cut: Vec<&str> = lines.iter().enumerate().filter(|(i, _)| *i != last).map(|(_, l)| l.as_str()).collect();
    std::fs::write(&trace, cut.join("\n")).unwrap();
    let r = fmsim(&["replay", p(&trace)]);
    assert!(!r.status.success());
    assert!(text(&r).contains("audit:"));
}

#[test]
fn exported_models_validate() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("cell.xml");
    assert!(fmsim(&["export-model", "--orders", "3", "--out", p(&model)]).status.success());
    let v = fmsim(&["validate-model", p(&model)]);
    assert!(v.status.success());
    assert!(text(&v).contains("valid"));
    std::fs::write(&model, r#"<NET NAME="x"><INPUT NAME="nowhere" TRANSITION="t">?x</INPUT></NET>"#).unwrap();
    assert!(!fmsim(&["validate-model", p(&model)]).status.success());
}

#[test]
fn config_files_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.conf");
    std::fs::write(&cfg, "scenario = B\ncontroller = conventional\nrepair_ms = 12000\norder_count = 2\n").unwrap();
    let o = fmsim(&["run", "--config", p(&cfg), "--scenario", "B", "--controller", "conventional", "--print-config"]);
    assert!(o.status.success());
    assert!(text(&o).contains("repair_ms = 12000"));
    assert!(text(&o).contains("order_count = 2"));
    std::fs::write(&cfg, "colour = red\n").unwrap();
    assert!(!fmsim(&["run", "--config", p(&cfg)]).status.success());
    assert!(!fmsim(&["run", "--scenario", "C"]).status.success());
    let o = fmsim(&["run", "--controller", "agent-mes", "--scenario", "A", "--seed", "7", "--runs", "3", "--print-config"]);
    assert!(o.status.success());
    assert!(text(&o).contains("controller = agents"));
    assert!(text(&o).contains("seeds = 7, 8, 9"));
    assert!(!fmsim(&["run", "--runs", "0"]).status.success());
    assert!(!fmsim(&["compare", "--in", p(dir.path())]).status.success());
    assert!(!fmsim(&["replay", p(&dir.path().join("missing"))]).status.success());
}
