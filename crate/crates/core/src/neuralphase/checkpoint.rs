//! Binary model checkpoints.
//!
//! Layout: `b"IRSN"`, `u32` version, `u64` header length, a JSON header with
//! the architecture and training metadata, `u64` value count, then every
//! trainable parameter followed by the batch-norm running statistics as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{Model, NetArch};
use crate::channel::rng_from_seed;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IRSN";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub train_size: usize,
    pub val_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: NetArch,
    meta: CheckpointMeta,
}

fn values(model: &Model) -> Vec<f64> {
    let mut out: Vec<f64> = model.param_slices().flatten().copied().collect();
    for (mean, var) in model.norm_stats() {
        out.extend_from_slice(mean);
        out.extend_from_slice(var);
    }
    out
}

pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        arch: ckpt.model.arch.clone(),
        meta: ckpt.meta.clone(),
    })
    .map_err(|e| Error::Config(format!("cannot serialise checkpoint header: {e}")))?;
    let vals = values(&ckpt.model);
    let mut out = Vec::with_capacity(24 + header.len() + 8 * vals.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(vals.len() as u64).to_le_bytes());
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() - *pos < n {
        return Err(Error::format(*pos as u64, format!("truncated {what}")));
    }
    let s = &bytes[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn take_u64(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, pos, 8, what)?.try_into().expect("8 bytes")))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4, "magic")? != MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let header_len = take_u64(bytes, &mut pos, "header length")?;
    let header_at = pos as u64;
    let header_len = usize::try_from(header_len).map_err(|_| Error::format(8, "header length overflows"))?;
    let header: Header = serde_json::from_slice(take(bytes, &mut pos, header_len, "header")?)
        .map_err(|e| Error::format(header_at, format!("bad header: {e}")))?;
    let mut model = Model::new(header.arch, &mut rng_from_seed(0))
        .map_err(|e| Error::format(header_at, format!("bad architecture: {e}")))?;
    let count_at = pos as u64;
    let count = take_u64(bytes, &mut pos, "value count")?;
    let expected = values(&model).len() as u64;
    if count != expected {
        return Err(Error::format(
            count_at,
            format!("header describes {expected} values but {count} are declared"),
        ));
    }
    let expected_bytes = expected.checked_mul(8).ok_or_else(|| Error::format(count_at, "value count overflows"))?;
    if (bytes.len() - pos) as u64 != expected_bytes {
        return Err(Error::format(
            pos as u64,
            format!("expected {expected_bytes} value bytes, found {}", bytes.len() - pos),
        ));
    }
    let mut vals = bytes[pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for (params, _) in model.param_grad_pairs() {
        params.iter_mut().for_each(|p| *p = vals.next().expect("counted"));
    }
    for (mean, var) in model.norm_stats_mut() {
        mean.iter_mut().for_each(|p| *p = vals.next().expect("counted"));
        var.iter_mut().for_each(|p| *p = vals.next().expect("counted"));
    }
    Ok(ModelCheckpoint {
        model,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &ModelCheckpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    decode_checkpoint(&fs::read(path)?)
}
