//! Secrecy metrics: capacities, the outage threshold `phi`, the design
//! objective in its ratio and Rayleigh-quotient forms, the closed-form
//! outage probability, its Monte Carlo estimate, and the no-IRS high-SNR
//! lower bound.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{derive_seed, rng_from_seed, ChannelRealization, SystemParams, WiretapDraw};
use crate::error::{Error, Result};
use crate::numerics::{gamma_upper_regularized, spectral_norm_sq_of_channel, CMat, CVec};

/// Relative tolerance between the two objective forms.
pub const OBJECTIVE_FORM_TOL: f64 = 1e-10;
const BEAM_NORM_TOL: f64 = 1e-12;
const MC_SEED_STREAM: u64 = 0x5EC0_u64;

/// IRS phase shifts, stored as angles in `[0, 2pi)`.
///
/// Storing angles means the unit-modulus constraint holds by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    theta: Vec<f64>,
}

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl PhaseConfig {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("phase angles must be finite"));
        }
        Ok(Self {
            theta: theta.into_iter().map(wrap_angle).collect(),
        })
    }

    /// `Theta = I`.
    pub fn zeros(n_s: usize) -> Self {
        Self {
            theta: vec![0.0; n_s],
        }
    }

    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R, n_s: usize) -> Self {
        Self {
            theta: (0..n_s).map(|_| wrap_angle(rng.gen_range(0.0..TAU))).collect(),
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_s(&self) -> usize {
        self.theta.len()
    }

    /// Normalised phases `z = theta / 2pi` in `[0, 1)`.
    pub fn z(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t / TAU).collect()
    }

    /// Diagonal of `Theta`: `e^{j theta_n}`.
    pub fn phases(&self) -> Vec<Complex64> {
        self.theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect()
    }

    pub fn matrix(&self) -> CMat {
        let p = self.phases();
        CMat::from_fn(p.len(), p.len(), |i, j| {
            if i == j {
                p[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Unit-norm precoder `b`; the transmitted precoder is `w = sqrt(P_t) b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Beamformer {
    b: CVec,
}

impl Beamformer {
    pub fn new(b: CVec) -> Result<Self> {
        if (b.norm() - 1.0).abs() > BEAM_NORM_TOL {
            return Err(Error::domain(format!(
                "precoder must have unit norm, got {}",
                b.norm()
            )));
        }
        Ok(Self { b })
    }

    /// Normalises `v`; fails on the zero vector.
    pub fn from_direction(v: &CVec) -> Result<Self> {
        v.normalized()
            .map(|b| Self { b })
            .ok_or_else(|| Error::domain("cannot normalise a zero precoder"))
    }

    pub fn b(&self) -> &CVec {
        &self.b
    }

    pub fn w(&self, p_t: f64) -> CVec {
        self.b.scale(Complex64::new(p_t.sqrt(), 0.0))
    }
}

/// Metrics of one `(Theta, b)` on one channel realization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub c_m: f64,
    pub phi: f64,
    /// `phi / (beta_d^2 + beta_r^2 ||Theta H b||^2)`.
    pub objective: f64,
    pub p_out: f64,
    /// The eavesdropper scale `beta_d^2 + beta_r^2 ||Theta H b||^2`.
    pub wiretap_scale: f64,
}

fn check_dims(real: &ChannelRealization, phase: &PhaseConfig, beam: &Beamformer) {
    assert_eq!(phase.n_s(), real.n_s(), "phase count does not match IRS size");
    assert_eq!(beam.b().len(), real.n_t(), "precoder length does not match N_t");
}

/// `||(H_b + G_r Theta H) b||^2`.
pub fn main_gain(real: &ChannelRealization, phase: &PhaseConfig, beam: &Beamformer) -> f64 {
    check_dims(real, phase, beam);
    real.effective(&phase.phases()).mul_vec(beam.b()).norm_sqr()
}

pub fn capacity_main(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> f64 {
    (params.p_t / params.sigma2 * main_gain(real, phase, beam)).ln_1p() / std::f64::consts::LN_2
}

/// `X = ||(H_e + G_e Theta H) b||^2` for one eavesdropper draw.
pub fn wiretap_gain(
    draw: &WiretapDraw,
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> f64 {
    check_dims(real, phase, beam);
    let theta_hb = CVec::from_raw(
        real.h
            .mul_vec(beam.b())
            .data()
            .iter()
            .zip(phase.phases())
            .map(|(v, p)| v * p)
            .collect(),
    );
    let direct = draw.h_e(params).mul_vec(beam.b());
    let reflected = draw.g_e(params).mul_vec(&theta_hb);
    direct.add(&reflected).norm_sqr()
}

pub fn capacity_wiretap(
    draw: &WiretapDraw,
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> f64 {
    let x = wiretap_gain(draw, real, phase, beam, params);
    (params.p_t / params.sigma2_e * x).ln_1p() / std::f64::consts::LN_2
}

/// Outage threshold `sigma_e^2 (2^{C_m - R_s} - 1) / P_t`; negative when
/// `C_m < R_s`.
pub fn phi(c_m: f64, params: &SystemParams) -> f64 {
    params.sigma2_e * ((c_m - params.r_s).exp2() - 1.0) / params.p_t
}

/// `beta_d^2 + beta_r^2 ||Theta H b||^2`, evaluated literally with `Theta`.
pub fn wiretap_scale(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> f64 {
    check_dims(real, phase, beam);
    let hb = real.h.mul_vec(beam.b());
    let rotated: f64 = hb
        .data()
        .iter()
        .zip(phase.phases())
        .map(|(v, p)| (v * p).norm_sqr())
        .sum();
    params.beta_d.powi(2) + params.beta_r.powi(2) * rotated
}

/// Closed-form outage for a given objective value: the upper Gamma tail
/// `Q(N_e, value)`, or 1 when the threshold is nonpositive.
pub fn outage_from_objective(n_e: usize, value: f64) -> f64 {
    if value <= 0.0 || value.is_nan() {
        return 1.0;
    }
    gamma_upper_regularized(n_e as u32, value).expect("n_e >= 1 and value > 0")
}

pub fn outage_closed_form(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> Result<EvalResult> {
    params.validate()?;
    let c_m = capacity_main(real, phase, beam, params);
    let phi = phi(c_m, params);
    let scale = wiretap_scale(real, phase, beam, params);
    let objective = phi / scale;
    Ok(EvalResult {
        c_m,
        phi,
        objective,
        p_out: outage_from_objective(params.n_e, objective),
        wiretap_scale: scale,
    })
}

/// The constants and matrices of the Rayleigh-quotient form of the
/// objective for a fixed phase configuration:
/// `c * b^H (t I + Q1) b / b^H (beta_d^2 I + Q2) b`.
#[derive(Clone, Debug)]
pub struct QuotientTerms {
    pub c: f64,
    pub t: f64,
    pub q1: CMat,
    pub q2: CMat,
    pub beta_d_sq: f64,
}

impl QuotientTerms {
    pub fn new(real: &ChannelRealization, phase: &PhaseConfig, params: &SystemParams) -> Self {
        let two_rs = params.r_s.exp2();
        let a = real.effective(&phase.phases());
        Self {
            c: params.sigma2_e / (two_rs * params.sigma2),
            t: params.sigma2 * (1.0 - two_rs) / params.p_t,
            q1: a.gram(),
            q2: real.h.gram().scale_real(params.beta_r.powi(2)),
            beta_d_sq: params.beta_d.powi(2),
        }
    }

    /// `t I + Q1`.
    pub fn numerator(&self) -> CMat {
        self.q1.add_diag(self.t)
    }

    /// `beta_d^2 I + Q2`; Hermitian positive definite when `beta_d > 0`.
    pub fn denominator(&self) -> CMat {
        self.q2.add_diag(self.beta_d_sq)
    }

    pub fn evaluate(&self, b: &CVec) -> f64 {
        self.c * b.quad_form(&self.numerator()) / b.quad_form(&self.denominator())
    }
}

/// The design objective, computed both as `phi / scale` and in
/// Rayleigh-quotient form; errors if the two disagree.
pub fn objective(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> Result<f64> {
    let ratio = outage_closed_form(real, phase, beam, params)?.objective;
    let terms = QuotientTerms::new(real, phase, params);
    let b = beam.b();
    let den = b.quad_form(&terms.denominator());
    let quotient = terms.c * b.quad_form(&terms.numerator()) / den;
    // Cancellation between t and ||Ab||^2 bounds the attainable accuracy
    // by the size of the individual terms.
    let magnitude = ratio
        .abs()
        .max(quotient.abs())
        .max(terms.c * terms.t.abs() / den)
        .max(terms.c * b.quad_form(&terms.q1) / den);
    if !ratio.is_finite() || !quotient.is_finite() {
        return Err(Error::Inconsistent(format!(
            "non-finite objective (ratio {ratio}, quotient {quotient})"
        )));
    }
    if (ratio - quotient).abs() > OBJECTIVE_FORM_TOL * magnitude {
        return Err(Error::Inconsistent(format!(
            "objective forms disagree: ratio {ratio:e} vs quotient {quotient:e}"
        )));
    }
    Ok(ratio)
}

/// Monte Carlo outage estimate with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub draws: u64,
}

/// Fraction of independent eavesdropper draws with `X >= phi`.
///
/// Draw `i` uses its own generator seeded from `(seed, i)`, so the result
/// does not depend on how the draws are scheduled across threads.
pub fn mc_outage(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
    num_draws: u64,
    seed: u64,
) -> Result<McEstimate> {
    if num_draws == 0 {
        return Err(Error::domain("Monte Carlo needs at least one draw"));
    }
    params.validate()?;
    let threshold = phi(capacity_main(real, phase, beam, params), params);
    let hits = if threshold <= 0.0 {
        num_draws
    } else {
        (0..num_draws)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = rng_from_seed(derive_seed(seed, MC_SEED_STREAM, i));
                let draw = WiretapDraw::sample(&mut rng, params.n_e, params.n_t, params.n_s);
                wiretap_gain(&draw, real, phase, beam, params) >= threshold
            })
            .count() as u64
    };
    let p_hat = hits as f64 / num_draws as f64;
    Ok(McEstimate {
        p_hat,
        stderr: (p_hat * (1.0 - p_hat) / num_draws as f64).sqrt(),
        draws: num_draws,
    })
}

/// High-SNR floor of the no-IRS outage:
/// `Q(N_e, sigma_e^2 lambda_max / (sigma^2 2^{R_s} beta_d^2))`.
pub fn lower_bound_no_irs(h_b: &CMat, params: &SystemParams) -> Result<f64> {
    params.validate()?;
    let lambda = spectral_norm_sq_of_channel(h_b);
    let arg = params.sigma2_e * lambda / (params.sigma2 * params.r_s.exp2() * params.beta_d.powi(2));
    Ok(outage_from_objective(params.n_e, arg))
}
