use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mivabo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mivabo"))
        .args(args)
        .env_remove("MIVABO_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
budget = 6
seeds = [0, 1]
output_dir = "out"
[task]
builtin = "synthetic_c2_card2"
[[methods]]
kind = "mivabo"
[methods.bo]
n_init = 3
[[methods]]
kind = "random"
"#;

#[test]
fn list_tasks_names_builtins() {
    let out = mivabo(&["list-tasks"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["synthetic_c1", "synthetic_c2_card2", "xgboost_table"] {
        assert!(text.contains(name));
    }
}

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = mivabo(&["run", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out_dir = dir.path().join("out");
    for f in ["metrics.csv", "summary.csv", "manifest.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let trace = out_dir.join("traces/mivabo/seed_1.csv");
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 7);
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[7], "0", "violations column");
    }
    assert!(mivabo(&["replay", trace.to_str().unwrap()])
        .status
        .success());

    // Corrupt one incumbent cell.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cols: Vec<String> = lines[3].split(',').map(String::from).collect();
    cols[6] = "-12345".into();
    lines[3] = cols.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    assert_eq!(
        mivabo(&["replay", bad.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn empty_trace_replays_vacuously() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    fs::write(
        &p,
        "seed,t,x_disc,x_cont,y,feasible,incumbent,violations,wall_ms,scaling\n",
    )
    .unwrap();
    assert!(mivabo(&["replay", p.to_str().unwrap()]).status.success());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "budget = 5\nseeds = [0]\nmethods = []\n[task]\nbuiltin = \"synthetic_c1\"\n",
    );
    assert_eq!(mivabo(&["run", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "budget = ");
    assert_eq!(mivabo(&["run", &cfg]).status.code(), Some(2));
    assert_eq!(
        mivabo(&["run", "/nonexistent/exp.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn output_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let alt = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_mivabo"))
        .args(["run", &cfg])
        .env("MIVABO_OUTPUT_DIR", &alt)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(alt.join("manifest.json").is_file());
    assert!(!dir.path().join("out").exists());
}
