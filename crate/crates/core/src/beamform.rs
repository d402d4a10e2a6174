//! Closed-form precoder for a fixed phase configuration, and the two
//! non-learned baselines: MRT without IRS and random IRS phases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{rng_from_seed, ChannelRealization, SystemParams};
use crate::error::{Error, Result};
use crate::numerics::{cholesky, hermitian_eig_max, solve_lower_adjoint, whiten, CMat};
use crate::secrecy::{outage_closed_form, Beamformer, EvalResult, PhaseConfig, QuotientTerms};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    MrtNoIrs,
    RandomPhase,
    Ao,
    Neural,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::MrtNoIrs => "no_irs",
            Method::RandomPhase => "random_phase",
            Method::Ao => "ao",
            Method::Neural => "neural",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "closed_form" => Ok(Method::ClosedForm),
            "no_irs" | "mrt_no_irs" => Ok(Method::MrtNoIrs),
            "random_phase" => Ok(Method::RandomPhase),
            "ao" => Ok(Method::Ao),
            "neural" => Ok(Method::Neural),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// A phase configuration and precoder together with their metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub phase: PhaseConfig,
    pub beam: Beamformer,
    pub eval: EvalResult,
    pub method: Method,
}

impl Solution {
    /// Metrics are always recomputed here rather than taken from a solver.
    pub fn evaluate(
        real: &ChannelRealization,
        phase: PhaseConfig,
        beam: Beamformer,
        params: &SystemParams,
        method: Method,
    ) -> Result<Self> {
        let eval = outage_closed_form(real, &phase, &beam, params)?;
        Ok(Self {
            phase,
            beam,
            eval,
            method,
        })
    }
}

/// Maximiser of `b^H A b / b^H B b` over unit vectors, for Hermitian `A`
/// and Hermitian positive-definite `B`, via `B = L L^H` whitening.
pub fn generalized_rayleigh_max(numerator: &CMat, denominator: &CMat) -> Result<Beamformer> {
    let l = cholesky(denominator)?;
    let whitened = whiten(&l, numerator);
    let top = hermitian_eig_max(&whitened)?;
    let b = solve_lower_adjoint(&l, &top.vector);
    let beam = Beamformer::from_direction(&b.phase_normalized())?;
    Ok(beam)
}

pub fn optimal_beam_from_terms(terms: &QuotientTerms) -> Result<Beamformer> {
    generalized_rayleigh_max(&terms.numerator(), &terms.denominator())
}

/// Objective-maximising unit precoder for the phase configuration `phase`.
pub fn optimal_beam(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    params: &SystemParams,
) -> Result<Beamformer> {
    if params.beta_d <= 0.0 {
        return Err(Error::domain("beta_d must be positive for the closed-form precoder"));
    }
    optimal_beam_from_terms(&QuotientTerms::new(real, phase, params))
}

/// Baseline without IRS: MRT on the direct channel.
///
/// The returned solution is expressed on the IRS-free channel (`N_s = 0`),
/// so its outage is `Q(N_e, phi / beta_d^2)`.
pub fn mrt_no_irs(h_b: &CMat, params: &SystemParams) -> Result<Solution> {
    if h_b.frobenius_norm() == 0.0 {
        return Err(Error::domain("degenerate all-zero direct channel"));
    }
    let top = hermitian_eig_max(&h_b.gram())?;
    let beam = Beamformer::from_direction(&top.vector)?;
    let real = ChannelRealization::new(
        h_b.clone(),
        CMat::zeros(h_b.rows(), 0),
        CMat::zeros(0, h_b.cols()),
    )?;
    let params = SystemParams { n_s: 0, ..*params };
    Solution::evaluate(&real, PhaseConfig::zeros(0), beam, &params, Method::MrtNoIrs)
}

/// Baseline with uniformly random phases and the closed-form precoder.
pub fn random_phase(real: &ChannelRealization, params: &SystemParams, seed: u64) -> Result<Solution> {
    let mut rng = rng_from_seed(seed);
    let phase = PhaseConfig::random(&mut rng, real.n_s());
    let beam = optimal_beam(real, &phase, params)?;
    Solution::evaluate(real, phase, beam, params, Method::RandomPhase)
}
