use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lqlab::inequality::Status;
use lqlab_cli::emit::{parse_json, COLUMNS};

fn suite_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/suite.toml")
}

fn lqlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lqlab")).args(args).env_remove("LQLAB_THREADS").output().unwrap()
}

fn with_config(dir: &tempfile::TempDir, text: &str) -> String {
    let path = dir.path().join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const KHINTCHINE_N1: &str = r#"
schema_version = 1
[[checks]]
name = "n1"
kind = "khintchine"
elements = [{ matrix = [[1.0, 2.0], [0.0, -1.0]] }]
exponents = [[2.0, 3.0]]
"#;

#[test]
fn empty_check_list_exits_zero_with_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(&dir, "schema_version = 1\n");
    let o = lqlab(&["suite", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), format!("{}\n", COLUMNS.join(",")));
    let o = lqlab(&["suite", "--config", &cfg, "--format", "json"]);
    assert_eq!(parse_json(&o.stdout).unwrap(), vec![]);
}

#[test]
fn single_element_khintchine_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(&dir, KHINTCHINE_N1);
    let o = lqlab(&["khintchine", "--config", &cfg, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = parse_json(&o.stdout).unwrap();
    // One row per side of the inequality, both at ratio 1.
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.case_id, "n1");
        assert!((r.lhs - r.rhs).abs() <= 1e-12 * r.lhs);
    }
    let csv = stdout(&lqlab(&["khintchine", "--config", &cfg]));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn subcommands_filter_by_category() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(&dir, KHINTCHINE_N1);
    let o = lqlab(&["matrix", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn suite_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let cfg = suite_path();
    for out in [&a, &b] {
        let o = lqlab(&["suite", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.lines().count() > 50);
    // No timing unless requested.
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn seed_flag_changes_sampled_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        &dir,
        r#"
schema_version = 1
[[checks]]
name = "sampled"
kind = "theorem62"
ensemble = { rows = 3, cols = 3, n = 2, law = { kind = "gaussian" } }
p = [2.0]
"#,
    );
    let run = |seed: &str| stdout(&lqlab(&["matrix", "--config", &cfg, "--seed", seed, "--mode", "sampled"]));
    assert_eq!(run("7"), run("7"));
    assert_ne!(run("7"), run("8"));
}

#[test]
fn json_mirrors_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(&dir, KHINTCHINE_N1);
    let json = parse_json(&lqlab(&["suite", "--config", &cfg, "--format", "json"]).stdout).unwrap();
    let csv = stdout(&lqlab(&["suite", "--config", &cfg]));
    for (r, line) in json.iter().zip(csv.lines().skip(1)) {
        let row = lqlab_cli::emit::Row::from(r);
        assert!(line.starts_with(&format!("{},{},{},{}", row.check_id, row.case_id, row.p, row.q)));
    }
}

#[test]
fn hard_failure_exits_one_and_sorts_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        &dir,
        r#"
schema_version = 1
[[checks]]
name = "too-small-constant"
kind = "rosenthal_scalar"
sequence = { items = [{ symmetric = { scalar = 1.0 } }, { symmetric = { scalar = 2.0 } }] }
p = [3.0]
constant = 0.01
"#,
    );
    let o = lqlab(&["rosenthal", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    let statuses: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(8).unwrap()).collect();
    assert_eq!(statuses.first(), Some(&"fail"));
    assert!(statuses.contains(&"pass"));
    let mut sorted = statuses.clone();
    sorted.sort_by_key(|s| *s != "fail");
    assert_eq!(statuses, sorted);
}

#[test]
fn invalid_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for text in [
        "schema_version = 9\n",
        "schema_version = 1\nunknown = 1\n",
        "schema_version = 1\n[[checks]]\nkind = \"no_such_check\"\n",
        "schema_version = 1\n[[checks]]\nkind = \"theorem62\"\np = [1.0]\nensemble = { rows = 2, cols = 2, n = 2, law = { kind = \"rademacher\" } }\n",
    ] {
        let cfg = with_config(&dir, text);
        assert_eq!(lqlab(&["suite", "--config", &cfg]).status.code(), Some(2), "{text}");
    }
    assert_eq!(lqlab(&["suite", "--config", "/nonexistent/config.toml"]).status.code(), Some(2));
    let cfg = with_config(&dir, KHINTCHINE_N1);
    let o = Command::new(env!("CARGO_BIN_EXE_lqlab")).args(["suite", "--config", &cfg]).env("LQLAB_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(
        &dir,
        r#"
schema_version = 1
[[checks]]
kind = "theorem62"
ensemble = { rows = 4, cols = 4, n = 8, law = { kind = "rademacher" } }
p = [2.0]
"#,
    );
    assert_eq!(lqlab(&["matrix", "--config", &cfg, "--mode", "exact"]).status.code(), Some(3));
    let cfg = with_config(&dir, KHINTCHINE_N1);
    assert_eq!(lqlab(&["suite", "--config", &cfg, "--out", "/nonexistent/dir/out.csv"]).status.code(), Some(3));
}

#[test]
fn timing_fills_runtime_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_config(&dir, &format!("{KHINTCHINE_N1}\n[run]\ntiming = true\n"));
    let o = lqlab(&["suite", "--config", &cfg, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(parse_json(&o.stdout).unwrap().iter().all(|r| r.runtime_ms.is_some_and(|t| t >= 0.0)));
}
