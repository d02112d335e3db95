//! Helpers for driving the `stab` binary from tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn stab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stab"))
}

/// Runs `stab` with `args`, panicking with its stderr on a nonzero exit.
pub fn run_ok(args: &[&str]) -> Output {
    let out = stab().args(args).output().expect("spawn stab");
    assert!(
        out.status.success(),
        "stab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn exit_code(args: &[&str]) -> (i32, String) {
    let out = stab().args(args).output().expect("spawn stab");
    (
        out.status.code().expect("exited normally"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Writes the named built-in scene spec to `dir/<name>.json` and
/// synthesizes it into `dir/<name>/`.
pub fn synth_preset(dir: &Path, name: &str) -> PathBuf {
    let spec = run_ok(&["scene-spec", name]).stdout;
    let spec_path = dir.join(format!("{name}.json"));
    std::fs::write(&spec_path, spec).unwrap();
    run_ok(&["synth", path_str(&spec_path)]);
    dir.join(name)
}

/// Writes `spec` as JSON and synthesizes it into `dir/<name>/`.
pub fn synth_spec(dir: &Path, name: &str, spec: &stab_core::SceneSpec) -> PathBuf {
    let spec_path = dir.join(format!("{name}.json"));
    std::fs::write(&spec_path, serde_json::to_vec_pretty(spec).unwrap()).unwrap();
    run_ok(&["synth", path_str(&spec_path)]);
    dir.join(name)
}

/// SHA-256 of every file under `root`, keyed by relative path.
pub fn tree_digest(root: &Path) -> BTreeMap<PathBuf, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, String>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), hex);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn read_report(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}
