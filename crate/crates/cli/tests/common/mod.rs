#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

pub fn cuffbench() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cuffbench"));
    cmd.env_remove("CUFFBENCH_OUT").env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    cuffbench().args(args).output().expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "cuffbench {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Nerve model built from the four-fascicle fixture section.
pub fn build_model(dir: &Path) -> PathBuf {
    let section = fixture("model/section.json");
    let assign = fixture("model/assignment.json");
    ok(&["model", "--section", path_str(&section), "--assign", path_str(&assign), "--seed", "7", "--out", path_str(dir)]);
    dir.join("nerve_model.json")
}

/// Short steps keep the synthetic recordings small; the train still fits in each step.
pub const QUICK_STEP: &[&str] = &["--step-s", "0.6"];
