//! Rayleigh channel sampling, per-element cascaded channels, and the
//! binary dataset container.

mod dataset;

pub use dataset::{decode_dataset, encode_dataset, read_dataset, write_dataset, Dataset, DatasetSample};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CMat;

/// Generator used for every stochastic draw in the crate.
pub type SimRng = ChaCha8Rng;

/// Algorithm name recorded next to seeds in dataset and checkpoint metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3, seed_from_u64)";

/// Lower clamp on the large-scale fading draws.
pub const LARGE_SCALE_FLOOR: f64 = 1e-6;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finaliser; mixes a root seed with a stream tag and a counter
/// into an independent child seed.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    let mut z = root
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One circularly-symmetric CN(0, 1) sample: real and imaginary parts each
/// have variance 1/2.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Scalar problem constants.
///
/// `n_s = 0` (no IRS) and `beta_r = 0` (no reflected wiretap path) are
/// accepted as degenerate but well-defined cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
    pub n_s: usize,
    /// Transmit power, linear, relative to `sigma2`.
    pub p_t: f64,
    /// Target secrecy rate in bit/s/Hz.
    pub r_s: f64,
    pub sigma2: f64,
    pub sigma2_e: f64,
    pub beta_d: f64,
    pub beta_r: f64,
}

impl SystemParams {
    /// Default simulation setting: 4 transmit, 2 receive and
    /// 2 eavesdropper antennas, unit noise, SNR 10 dB, rate 3.5 bit/s/Hz.
    pub fn reference(n_s: usize) -> Self {
        Self {
            n_t: 4,
            n_r: 2,
            n_e: 2,
            n_s,
            p_t: 10.0,
            r_s: 3.5,
            sigma2: 1.0,
            sigma2_e: 1.0,
            beta_d: 0.5,
            beta_r: 0.5,
        }
    }

    pub fn with_large_scale(mut self, beta_d: f64, beta_r: f64) -> Self {
        self.beta_d = beta_d;
        self.beta_r = beta_r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.n_e == 0 {
            return Err(Error::domain("antenna counts must be at least 1"));
        }
        let finite = [self.p_t, self.r_s, self.sigma2, self.sigma2_e, self.beta_d, self.beta_r]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("system parameters must be finite"));
        }
        if self.p_t < 0.0 || self.r_s < 0.0 {
            return Err(Error::domain("transmit power and target rate must be nonnegative"));
        }
        if self.sigma2 <= 0.0 || self.sigma2_e <= 0.0 {
            return Err(Error::domain("noise powers must be positive"));
        }
        if self.beta_d <= 0.0 || self.beta_r < 0.0 {
            return Err(Error::domain("large-scale fading must satisfy beta_d > 0, beta_r >= 0"));
        }
        Ok(())
    }
}

/// Legitimate CSI: direct link `h_b` (N_r x N_t), IRS-to-Bob `g_r`
/// (N_r x N_s) and Alice-to-IRS `h` (N_s x N_t).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h_b: CMat,
    pub g_r: CMat,
    pub h: CMat,
}

impl ChannelRealization {
    pub fn new(h_b: CMat, g_r: CMat, h: CMat) -> Result<Self> {
        let real = Self { h_b, g_r, h };
        real.check_consistent()?;
        Ok(real)
    }

    pub fn n_t(&self) -> usize {
        self.h_b.cols()
    }

    pub fn n_r(&self) -> usize {
        self.h_b.rows()
    }

    pub fn n_s(&self) -> usize {
        self.g_r.cols()
    }

    fn check_consistent(&self) -> Result<()> {
        let (n_r, n_t, n_s) = (self.h_b.rows(), self.h_b.cols(), self.g_r.cols());
        if self.g_r.rows() != n_r || self.h.rows() != n_s || self.h.cols() != n_t {
            return Err(Error::domain(format!(
                "inconsistent channel dimensions: H_b {}x{}, G_r {}x{}, H {}x{}",
                n_r,
                n_t,
                self.g_r.rows(),
                n_s,
                self.h.rows(),
                self.h.cols()
            )));
        }
        Ok(())
    }

    pub fn matches(&self, params: &SystemParams) -> bool {
        self.n_t() == params.n_t && self.n_r() == params.n_r && self.n_s() == params.n_s
    }

    /// `H_b + G_r diag(phases) H` for unit-modulus `phases`.
    pub fn effective(&self, phases: &[Complex64]) -> CMat {
        self.h_b.add(&self.g_r.scale_columns(phases).matmul(&self.h))
    }

    /// Same channel with the IRS removed (`N_s = 0`).
    pub fn without_irs(&self) -> Self {
        Self {
            h_b: self.h_b.clone(),
            g_r: CMat::zeros(self.n_r(), 0),
            h: CMat::zeros(0, self.n_t()),
        }
    }
}

/// Per-element cascaded channels `F_n = g_{r,n} h_n^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadedChannels {
    pub f: Vec<CMat>,
}

impl CascadedChannels {
    /// `H_b + sum_n phases[n] F_n`.
    pub fn compose(&self, h_b: &CMat, phases: &[Complex64]) -> CMat {
        assert_eq!(phases.len(), self.f.len());
        let mut acc = h_b.clone();
        for (f_n, &p) in self.f.iter().zip(phases) {
            acc = acc.add(&f_n.scale(p));
        }
        acc
    }
}

pub fn cascade(real: &ChannelRealization) -> CascadedChannels {
    let (n_r, n_t) = (real.n_r(), real.n_t());
    let f = (0..real.n_s())
        .map(|n| {
            let h_n = real.h.row(n);
            CMat::from_fn(n_r, n_t, |i, j| real.g_r.get(i, n) * h_n[j])
        })
        .collect();
    CascadedChannels { f }
}

/// Eavesdropper small-scale fading; `H_e = beta_d Z`, `G_e = beta_r C`.
#[derive(Clone, Debug, PartialEq)]
pub struct WiretapDraw {
    pub z: CMat,
    pub c: CMat,
}

impl WiretapDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_e: usize, n_t: usize, n_s: usize) -> Self {
        let z = gaussian_matrix(rng, n_e, n_t);
        let c = gaussian_matrix(rng, n_e, n_s);
        Self { z, c }
    }

    pub fn h_e(&self, params: &SystemParams) -> CMat {
        self.z.scale_real(params.beta_d)
    }

    pub fn g_e(&self, params: &SystemParams) -> CMat {
        self.c.scale_real(params.beta_r)
    }
}

pub fn sample_legit(params: &SystemParams, seed: u64) -> ChannelRealization {
    let mut rng = rng_from_seed(seed);
    let h_b = gaussian_matrix(&mut rng, params.n_r, params.n_t);
    let g_r = gaussian_matrix(&mut rng, params.n_r, params.n_s);
    let h = gaussian_matrix(&mut rng, params.n_s, params.n_t);
    ChannelRealization { h_b, g_r, h }
}

pub fn sample_wiretap(params: &SystemParams, seed: u64) -> WiretapDraw {
    let mut rng = rng_from_seed(seed);
    WiretapDraw::sample(&mut rng, params.n_e, params.n_t, params.n_s)
}

/// `(beta_d, beta_r)`, each uniform on `(1e-6, 1)`.
pub fn sample_large_scale(seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let mut draw = || loop {
        let v: f64 = rng.gen_range(LARGE_SCALE_FLOOR..1.0);
        if v > LARGE_SCALE_FLOOR {
            return v;
        }
    };
    let beta_d = draw();
    let beta_r = draw();
    (beta_d, beta_r)
}
