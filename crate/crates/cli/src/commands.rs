//! Dataset generation and network training, with JSON sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use secirs::channel::{
    derive_seed, encode_dataset, read_dataset, sample_large_scale, sample_legit, Dataset, RNG_ALGORITHM,
};
use secirs::neuralphase::{save_checkpoint, train, EpochRecord, Sample, TrainOutcome};
use secirs::{Error, Result};

use crate::config::ExperimentConfig;

const TRAIN_STREAM: u64 = 0xDA7A_0001;
const VAL_STREAM: u64 = 0xDA7A_0002;

pub const TRAIN_FILE: &str = "train.irsd";
pub const VAL_FILE: &str = "val.irsd";
pub const DATA_META_FILE: &str = "gen-data.json";

/// `count` realizations at the configured system, drawn from `stream`.
/// The large-scale fading is drawn per sample when `data.large_scale` asks
/// for it; otherwise the fixed system values are used.
pub fn generate(cfg: &ExperimentConfig, stream: u64, count: usize) -> Vec<Sample> {
    let base = cfg.system();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, stream, i as u64);
            let params = if cfg.random_data_large_scale {
                let (beta_d, beta_r) = sample_large_scale(derive_seed(seed, 1, 0));
                base.with_large_scale(beta_d, beta_r)
            } else {
                base
            };
            (sample_legit(&params, seed), params)
        })
        .collect()
}

pub fn training_sets(cfg: &ExperimentConfig) -> (Vec<Sample>, Vec<Sample>) {
    (
        generate(cfg, TRAIN_STREAM, cfg.train.train_size),
        generate(cfg, VAL_STREAM, cfg.train.val_size),
    )
}

fn to_dataset(cfg: &ExperimentConfig, samples: &[Sample]) -> Result<Dataset> {
    if samples.is_empty() {
        Ok(Dataset::empty(cfg.n_t, cfg.n_r, cfg.n_s))
    } else {
        Dataset::from_pairs(samples)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes the training and validation files plus a sidecar recording the
/// seed, generator and counts.
pub fn gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    cfg.system().validate()?;
    fs::create_dir_all(dir)?;
    let (train_set, val_set) = training_sets(cfg);
    let mut hashes = Vec::new();
    for (name, set) in [(TRAIN_FILE, &train_set), (VAL_FILE, &val_set)] {
        let bytes = encode_dataset(&to_dataset(cfg, set)?)?;
        hashes.push(sha256_hex(&bytes));
        fs::write(dir.join(name), bytes)?;
    }
    let meta = json!({
        "seed": cfg.seed,
        "rng": RNG_ALGORITHM,
        "train_count": train_set.len(),
        "val_count": val_set.len(),
        "n_t": cfg.n_t,
        "n_r": cfg.n_r,
        "n_s": cfg.n_s,
        "n_e": cfg.n_e,
        "large_scale": if cfg.random_data_large_scale { "random" } else { "fixed" },
        "train_sha256": hashes[0],
        "val_sha256": hashes[1],
    });
    write_json(&dir.join(DATA_META_FILE), &meta)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn load_samples(path: &Path, n_e: usize) -> Result<(Vec<Sample>, String)> {
    let bytes = fs::read(path)?;
    let ds = read_dataset(path)?;
    let samples = ds
        .samples
        .iter()
        .map(|s| (s.channel.clone(), s.params(n_e)))
        .collect();
    Ok((samples, sha256_hex(&bytes)))
}

pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for r in curve {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr);
    }
    out
}

/// Paths written next to a checkpoint.
pub fn sidecar_paths(checkpoint: &Path) -> (PathBuf, PathBuf) {
    let mut json = checkpoint.as_os_str().to_owned();
    json.push(".json");
    let mut csv = checkpoint.as_os_str().to_owned();
    csv.push(".curve.csv");
    (json.into(), csv.into())
}

/// Trains on the files written by [`gen_data`] and saves the best weights,
/// a metadata sidecar and the loss curve.
pub fn train_from_dir(cfg: &ExperimentConfig, data_dir: &Path, checkpoint: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, train_hash) = load_samples(&data_dir.join(TRAIN_FILE), cfg.n_e)?;
    let (val_set, val_hash) = load_samples(&data_dir.join(VAL_FILE), cfg.n_e)?;
    let n_s = train_set
        .first()
        .map(|s| s.0.n_s())
        .ok_or_else(|| Error::Config("training set is empty".into()))?;
    let outcome = train(cfg.arch(n_s), &train_set, &val_set, &cfg.train)?;
    save_checkpoint(checkpoint, &outcome.checkpoint)?;
    let (json_path, csv_path) = sidecar_paths(checkpoint);
    let meta = json!({
        "arch": outcome.checkpoint.model.arch,
        "train": cfg.train,
        "dataset_sha256": { "train": train_hash, "val": val_hash },
        "best_val_loss": outcome.checkpoint.meta.best_val_loss,
        "best_epoch": outcome.checkpoint.meta.best_epoch,
        "epochs_run": outcome.checkpoint.meta.epochs_run,
        "stop": outcome.stop,
    });
    write_json(&json_path, &meta)?;
    fs::write(csv_path, curve_csv(&outcome.curve))?;
    Ok(outcome)
}
