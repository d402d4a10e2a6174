//! "IRSD v1" dataset files.
//!
//! Little-endian layout:
//!
//! ```text
//! b"IRSD"  u32 version=1  u64 count  u32 N_t  u32 N_r  u32 N_s
//! per sample:
//!   H_b  N_r*N_t complex128 (row-major, re then im)
//!   G_r  N_r*N_s complex128
//!   H    N_s*N_t complex128
//!   f64  P_t, R_s, sigma2, sigma2_e, beta_d, beta_r
//! ```
//!
//! `N_e` is not stored: it does not affect the legitimate CSI.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use super::{ChannelRealization, SystemParams};
use crate::error::{Error, Result};
use crate::numerics::CMat;

const MAGIC: &[u8; 4] = b"IRSD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 3 * 4;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSample {
    pub channel: ChannelRealization,
    pub p_t: f64,
    pub r_s: f64,
    pub sigma2: f64,
    pub sigma2_e: f64,
    pub beta_d: f64,
    pub beta_r: f64,
}

impl DatasetSample {
    pub fn new(channel: ChannelRealization, params: &SystemParams) -> Self {
        Self {
            channel,
            p_t: params.p_t,
            r_s: params.r_s,
            sigma2: params.sigma2,
            sigma2_e: params.sigma2_e,
            beta_d: params.beta_d,
            beta_r: params.beta_r,
        }
    }

    /// Full parameter set; the eavesdropper antenna count comes from the
    /// experiment configuration.
    pub fn params(&self, n_e: usize) -> SystemParams {
        SystemParams {
            n_t: self.channel.n_t(),
            n_r: self.channel.n_r(),
            n_e,
            n_s: self.channel.n_s(),
            p_t: self.p_t,
            r_s: self.r_s,
            sigma2: self.sigma2,
            sigma2_e: self.sigma2_e,
            beta_d: self.beta_d,
            beta_r: self.beta_r,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n_t: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub samples: Vec<DatasetSample>,
}

impl Dataset {
    pub fn empty(n_t: usize, n_r: usize, n_s: usize) -> Self {
        Self {
            n_t,
            n_r,
            n_s,
            samples: Vec::new(),
        }
    }

    /// Builds a dataset from `(channel, params)` pairs; all channels must
    /// share one shape.
    pub fn from_pairs(pairs: &[(ChannelRealization, SystemParams)]) -> Result<Self> {
        let Some((first, _)) = pairs.first() else {
            return Err(Error::domain("cannot infer dimensions of an empty sample list"));
        };
        let mut ds = Self::empty(first.n_t(), first.n_r(), first.n_s());
        for (channel, params) in pairs {
            ds.push(DatasetSample::new(channel.clone(), params))?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, sample: DatasetSample) -> Result<()> {
        let c = &sample.channel;
        if (c.n_t(), c.n_r(), c.n_s()) != (self.n_t, self.n_r, self.n_s) {
            return Err(Error::domain(format!(
                "sample dimensions ({}, {}, {}) differ from dataset ({}, {}, {})",
                c.n_t(),
                c.n_r(),
                c.n_s(),
                self.n_t,
                self.n_r,
                self.n_s
            )));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn sample_len(&self) -> usize {
        let entries = self.n_r * self.n_t + self.n_r * self.n_s + self.n_s * self.n_t;
        entries * 16 + 6 * 8
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &CMat) {
    for z in m.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::domain(format!("dimension {v} does not fit in u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * ds.sample_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&dim(ds.n_t)?.to_le_bytes());
    out.extend_from_slice(&dim(ds.n_r)?.to_le_bytes());
    out.extend_from_slice(&dim(ds.n_s)?.to_le_bytes());
    for s in &ds.samples {
        let c = &s.channel;
        if (c.n_t(), c.n_r(), c.n_s()) != (ds.n_t, ds.n_r, ds.n_s) {
            return Err(Error::domain("dataset contains a sample with mismatched dimensions"));
        }
        put_matrix(&mut out, &c.h_b);
        put_matrix(&mut out, &c.g_r);
        put_matrix(&mut out, &c.h);
        for v in [s.p_t, s.r_s, s.sigma2, s.sigma2_e, s.beta_d, s.beta_r] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<CMat> {
        let start = self.pos as u64;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let re = self.f64(what)?;
            let im = self.f64(what)?;
            data.push(Complex64::new(re, im));
        }
        CMat::new(rows, cols, data).map_err(|e| Error::format(start, format!("{what}: {e}")))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"IRSD\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = r.u64("sample count")?;
    let n_t = r.u32("N_t")? as usize;
    let n_r = r.u32("N_r")? as usize;
    let n_s = r.u32("N_s")? as usize;
    let mut ds = Dataset::empty(n_t, n_r, n_s);
    let expected = (count as u128) * (ds.sample_len() as u128) + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        let offset = (bytes.len() as u64).min(expected.min(u64::MAX as u128) as u64);
        return Err(Error::format(
            offset,
            format!(
                "size mismatch: header implies {expected} bytes for {count} samples, file has {}",
                bytes.len()
            ),
        ));
    }
    ds.samples.reserve(count as usize);
    for _ in 0..count {
        let h_b = r.matrix(n_r, n_t, "H_b")?;
        let g_r = r.matrix(n_r, n_s, "G_r")?;
        let h = r.matrix(n_s, n_t, "H")?;
        let mut scalars = [0.0; 6];
        for v in scalars.iter_mut() {
            *v = r.f64("scalar parameters")?;
        }
        let [p_t, r_s, sigma2, sigma2_e, beta_d, beta_r] = scalars;
        ds.samples.push(DatasetSample {
            channel: ChannelRealization { h_b, g_r, h },
            p_t,
            r_s,
            sigma2,
            sigma2_e,
            beta_d,
            beta_r,
        });
    }
    Ok(ds)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_large_scale, sample_legit};

    fn random_dataset(n: usize, n_s: usize) -> Dataset {
        let base = SystemParams::reference(n_s);
        let pairs: Vec<_> = (0..n as u64)
            .map(|i| {
                let (bd, br) = sample_large_scale(1000 + i);
                (sample_legit(&base, i), base.with_large_scale(bd, br))
            })
            .collect();
        Dataset::from_pairs(&pairs).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ds = random_dataset(100, 5);
        let bytes = encode_dataset(&ds).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(encode_dataset(&back).unwrap(), bytes);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let ds = Dataset::empty(4, 2, 16);
        let bytes = encode_dataset(&ds).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(&bytes[8..16], &0u64.to_le_bytes());
        assert_eq!(decode_dataset(&bytes).unwrap(), ds);
    }

    #[test]
    fn corrupted_magic_reports_offset_zero() {
        let mut bytes = encode_dataset(&random_dataset(2, 3)).unwrap();
        bytes[0] = b'X';
        match decode_dataset(&bytes) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected format error at 0, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_and_truncation_are_reported() {
        let bytes = encode_dataset(&random_dataset(3, 2)).unwrap();
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_dataset(&v2), Err(Error::Format { offset: 4, .. })));
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(decode_dataset(cut), Err(Error::Format { .. })));
        assert!(matches!(decode_dataset(&bytes[..10]), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let mut ds = random_dataset(1, 3);
        let other = sample_legit(&SystemParams::reference(4), 0);
        let params = SystemParams::reference(4);
        assert!(ds.push(DatasetSample::new(other, &params)).is_err());
    }
}
