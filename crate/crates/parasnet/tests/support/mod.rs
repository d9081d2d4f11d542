//! Helpers for driving the `parasnet` binary from integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn parasnet(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parasnet"))
        .args(args)
        .env("PARASNET_OUT", out_dir)
        .output()
        .expect("failed to spawn parasnet")
}

/// Runs the binary and panics with its stderr unless it succeeds.
pub fn ok(out_dir: &Path, args: &[&str]) -> String {
    let out = parasnet(out_dir, args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "parasnet {args:?} failed:\n{stderr}");
    stderr
}

/// Runs the binary expecting failure and returns the last stderr line.
pub fn fails(out_dir: &Path, args: &[&str]) -> String {
    let out = parasnet(out_dir, args);
    assert!(!out.status.success(), "parasnet {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    stderr.lines().last().unwrap_or_default().to_string()
}

/// Relative path to contents for every file below `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, acc);
            } else {
                acc.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

/// A training CSV with the wall-clock `seconds` column removed.
pub fn without_seconds(csv: &[u8]) -> String {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}
