#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn tfts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfts")).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr on failure. Returns stdout.
pub fn ok(args: &[&str]) -> String {
    let out = tfts(args);
    assert!(out.status.success(), "tfts {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn digest(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
