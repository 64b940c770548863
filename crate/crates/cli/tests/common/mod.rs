#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use specfilter_core::{write_tensor, Matrix};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specfilter"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("SPECFILTER_LOG").output().expect("spawn specfilter")
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Writes a two-layer manifest with random `(dim, tokens)` keys and values.
pub fn write_manifest(dir: &Path, dim: usize, tokens: usize) -> PathBuf {
    let mut layers = Vec::new();
    for (i, name) in ["down.1", "up.0"].iter().enumerate() {
        let k = format!("{name}.key.csem");
        let v = format!("{name}.value.csem");
        write_tensor(dir.join(&k), &random_matrix(10 + i as u64, dim, tokens)).unwrap();
        write_tensor(dir.join(&v), &random_matrix(20 + i as u64, dim, tokens)).unwrap();
        layers.push(format!(
            r#"{{"name":"{name}","key_path":"{k}","value_path":"{v}","tokens":{tokens},"dim":{dim}}}"#
        ));
    }
    let path = dir.join("manifest.json");
    fs::write(&path, format!(r#"{{"layers":[{}]}}"#, layers.join(","))).unwrap();
    path
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
