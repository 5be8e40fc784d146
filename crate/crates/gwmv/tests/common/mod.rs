#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn gwmv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwmv"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Every file under `dir` with its timing fields removed: `runtime_seconds`
/// in manifests and the last column of `sweep.csv`.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = std::fs::read(&p).unwrap();
            let name = p.file_name().unwrap().to_str().unwrap();
            if name == "manifest.json" {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("runtime_seconds");
                bytes = serde_json::to_vec(&v).unwrap();
            } else if name == "sweep.csv" {
                let text = String::from_utf8(bytes).unwrap();
                let stripped: Vec<&str> = text
                    .lines()
                    .map(|l| l.rsplit_once(',').unwrap().0)
                    .collect();
                bytes = stripped.join("\n").into_bytes();
            }
            files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), bytes);
        }
    }
    files
}
