use std::path::Path;
use std::process::{Command, Output};

fn sketchlab(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sketchlab"));
    cmd.args(args).env_remove("SKETCHLAB_OUT");
    if let Some(p) = out_env {
        cmd.env("SKETCHLAB_OUT", p);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(sketchlab(&[], None).status.code(), Some(2));
    assert_eq!(sketchlab(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(sketchlab(&["train", "--fraction", "lots"], None).status.code(), Some(2));
    assert_eq!(sketchlab(&["train", "--strategy", "Sideways"], None).status.code(), Some(2));
    assert_eq!(sketchlab(&["distill"], None).status.code(), Some(2));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(sketchlab(&["--help"], None).status.code(), Some(0));
    assert_eq!(sketchlab(&["--version"], None).status.code(), Some(0));
    let o = sketchlab(&["report", "--help"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("--runs"));
}

#[test]
fn empty_report_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = sketchlab(&["report", "--runs", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no records found"), "{}", stderr(&o));
}

#[test]
fn report_defaults_to_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = sketchlab(&["report"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no records found"));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let o = sketchlab(&["prepare", "--root", missing.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "));
    let o = sketchlab(&["train", "--color", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "-q"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn in_process_entry_matches_binary() {
    assert_eq!(sketchlab_expkit::cli::main_with(["sketchlab"]), 2);
    assert_eq!(sketchlab_expkit::cli::main_with(["sketchlab", "nope"]), 2);
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sketchlab_expkit::cli::main_with(["sketchlab", "report", "--runs", dir.path().to_str().unwrap()]), 1);
}
