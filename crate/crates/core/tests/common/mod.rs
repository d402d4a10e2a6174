//! Naive reference implementations used as independent oracles.
#![allow(dead_code)]

use rand::Rng;
use secirs::channel::{complex_gaussian, rng_from_seed, sample_large_scale, sample_legit, SimRng};
use secirs::{Beamformer, CMat, CVec, ChannelRealization, Complex64, PhaseConfig, SystemParams};

pub type Dense = Vec<Vec<Complex64>>;

pub fn dense(m: &CMat) -> Dense {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect()).collect()
}

pub fn mat_vec(a: &Dense, x: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `H_b + sum_n e^{j theta_n} g_n h_n^T`, one rank-one term at a time.
pub fn effective_by_terms(real: &ChannelRealization, theta: &[f64]) -> Dense {
    let mut a = dense(&real.h_b);
    for (n, &t) in theta.iter().enumerate() {
        let e = Complex64::from_polar(1.0, t);
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += e * real.g_r.get(i, n) * real.h.get(n, j);
            }
        }
    }
    a
}

/// `phi / (beta_d^2 + beta_r^2 ||H b||^2)` written out from scratch.
pub fn objective_oracle(real: &ChannelRealization, theta: &[f64], b: &[Complex64], p: &SystemParams) -> f64 {
    let gain = norm_sqr(&mat_vec(&effective_by_terms(real, theta), b));
    let c_m = (1.0 + p.p_t / p.sigma2 * gain).log2();
    let phi = p.sigma2_e * (2f64.powf(c_m - p.r_s) - 1.0) / p.p_t;
    let hb = norm_sqr(&mat_vec(&dense(&real.h), b));
    phi / (p.beta_d * p.beta_d + p.beta_r * p.beta_r * hb)
}

/// `Gamma(m, x) / Gamma(m)` for integer `m` by the finite Poisson sum.
pub fn gamma_q_naive(m: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..m {
        term *= x / k as f64;
        sum += term;
    }
    (-x).exp() * sum
}

pub fn outage_oracle(n_e: usize, v: f64) -> f64 {
    if v <= 0.0 {
        1.0
    } else {
        gamma_q_naive(n_e, v)
    }
}

pub fn random_unit(rng: &mut SimRng, n: usize) -> CVec {
    let v: Vec<Complex64> = (0..n).map(|_| complex_gaussian(rng)).collect();
    CVec::new(v).unwrap().normalized().unwrap()
}

pub fn random_beam(rng: &mut SimRng, n: usize) -> Beamformer {
    Beamformer::new(random_unit(rng, n)).unwrap()
}

/// Random system at reference sizes with random fading, channel, phases and beam.
pub struct Instance {
    pub params: SystemParams,
    pub real: ChannelRealization,
    pub phase: PhaseConfig,
    pub beam: Beamformer,
}

pub fn instance(seed: u64, n_s: usize) -> Instance {
    let mut rng = rng_from_seed(seed);
    let (beta_d, beta_r) = sample_large_scale(seed ^ 0x55);
    let mut params = SystemParams::reference(n_s).with_large_scale(beta_d, beta_r);
    params.p_t = 10f64.powf(rng.gen_range(0.0..2.0));
    params.r_s = rng.gen_range(0.5..4.0);
    params.n_e = [1, 2, 4][rng.gen_range(0..3)];
    let real = sample_legit(&params, seed.wrapping_mul(31).wrapping_add(7));
    let phase = PhaseConfig::random(&mut rng, n_s);
    let beam = random_beam(&mut rng, params.n_t);
    Instance {
        params,
        real,
        phase,
        beam,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
