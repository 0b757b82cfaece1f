//! Shared fixtures for the integration suites: synthetic corpora written in
//! the ingestion layout, experiment configs pointing at them, and checksum
//! helpers for comparing whole run directories.

#![allow(dead_code)] // each test target uses a different slice of this module

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Standard normal draw via Box-Muller, so the fixtures need no
/// distributions crate.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Monthly-looking series: level, mild trend, period-12 seasonality, noise.
/// Per-series level/amplitude/trend jitter keeps the family heterogeneous
/// while the shared shape gives transfer something to exploit.
pub fn seasonal_series(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let level = 100.0 * (1.0 + 0.3 * rng.gen_range(-1.0..1.0f64));
    let amplitude = 20.0 * (1.0 + 0.4 * rng.gen_range(-1.0..1.0f64));
    let trend = 0.15 * rng.gen_range(-1.0..1.0f64);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|t| {
            let season = amplitude * (std::f64::consts::TAU * t as f64 / 12.0 + phase).sin();
            level + trend * t as f64 + season + 2.0 * gaussian(rng)
        })
        .collect()
}

/// Level plus AR(1) noise, no seasonal structure; the second synthetic
/// family of the smoke corpus.
pub fn noisy_series(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let level = 50.0 * (1.0 + 0.3 * rng.gen_range(-1.0..1.0f64));
    let phi = rng.gen_range(0.3..0.7f64);
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = phi * x + 3.0 * gaussian(rng);
            level + x
        })
        .collect()
}

/// Writes series in the wide `id,v1,v2,...` layout the ingester reads.
pub fn write_corpus_csv(path: &Path, series: &[(String, Vec<f64>)]) {
    let mut body = String::new();
    for (id, values) in series {
        body.push_str(id);
        for v in values {
            body.push(',');
            body.push_str(&format!("{v:.6}"));
        }
        body.push('\n');
    }
    fs::write(path, body).expect("write corpus csv");
}

/// Mixed corpus: half seasonal family, half noise family, deterministic in
/// `seed`. Returns the written (source, target) file paths.
pub fn mixed_corpus(
    dir: &Path,
    seed: u64,
    n_source: usize,
    n_target: usize,
    len: usize,
) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = Vec::new();
    for i in 0..n_source {
        let values = if i % 2 == 0 {
            seasonal_series(len, &mut rng)
        } else {
            noisy_series(len, &mut rng)
        };
        source.push((format!("S{i:03}"), values));
    }
    let mut target = Vec::new();
    for i in 0..n_target {
        let values = if i % 2 == 0 {
            seasonal_series(len, &mut rng)
        } else {
            noisy_series(len, &mut rng)
        };
        target.push((format!("T{i:03}"), values));
    }
    let source_path = dir.join("source.csv");
    let target_path = dir.join("target.csv");
    write_corpus_csv(&source_path, &source);
    write_corpus_csv(&target_path, &target);
    (source_path, target_path)
}

/// Experiment config JSON for the given corpus. `models` are `(family,
/// transfer)` pairs; `None` leaves the flag at its default.
pub fn config_json(
    source: &Path,
    target: &Path,
    output: &Path,
    horizons: &[usize],
    models: &[(&str, Option<bool>)],
    seed: u64,
    cluster_k: usize,
) -> String {
    let models: Vec<serde_json::Value> = models
        .iter()
        .map(|(family, transfer)| match transfer {
            Some(flag) => serde_json::json!({"family": family, "transfer": flag}),
            None => serde_json::json!({"family": family}),
        })
        .collect();
    serde_json::json!({
        "source": [source],
        "target": target,
        "output": output,
        "horizons": horizons,
        "models": models,
        "seed": seed,
        "cluster_k": cluster_k,
    })
    .to_string()
}

/// SHA-256 of every file under `dir` (recursive), keyed by `/`-separated
/// relative path.
pub fn dir_checksums(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    collect_checksums(dir, dir, &mut out);
    out
}

fn collect_checksums(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
    let entries = fs::read_dir(dir).expect("read run dir");
    for entry in entries {
        let path = entry.expect("dir entry").path();
        if path.is_dir() {
            collect_checksums(root, &path, out);
        } else {
            let bytes = fs::read(&path).expect("read run file");
            let rel = path
                .strip_prefix(root)
                .expect("path under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, format!("{:x}", Sha256::digest(&bytes)));
        }
    }
}
