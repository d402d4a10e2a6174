//! Alternating optimisation baseline.
//!
//! Phases are updated by gradient ascent on the torus of angles (retraction
//! is angle wrapping, so unit modulus holds exactly), alternated with the
//! closed-form precoder update. Steps that would lower the objective are
//! rejected with step halving, which makes the objective sequence
//! non-decreasing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamform::{optimal_beam, Method, Solution};
use crate::channel::{derive_seed, rng_from_seed, ChannelRealization, SystemParams};
use crate::error::{Error, Result};
use crate::secrecy::{wrap_angle, Beamformer, PhaseConfig, QuotientTerms};

const MAX_HALVINGS: usize = 20;
const RESTART_STREAM: u64 = 0xA0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AoConfig {
    pub max_outer_iters: usize,
    pub grad_steps_per_outer: usize,
    pub step_size: f64,
    pub step_decay: f64,
    pub tol_objective: f64,
    /// Number of starts; the best final objective wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 100,
            grad_steps_per_outer: 10,
            step_size: 0.5,
            step_decay: 0.95,
            tol_objective: 1e-8,
            restarts: 1,
            seed: 0,
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.grad_steps_per_outer == 0 || self.restarts == 0 {
            return Err(Error::Config("AO iteration counts must be positive".into()));
        }
        if !(self.step_size > 0.0) || !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(Error::Config(
                "AO step size must be positive and decay in (0, 1]".into(),
            ));
        }
        if !(self.tol_objective > 0.0) {
            return Err(Error::Config("AO tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// The objective as a function of the phases with the precoder held fixed.
///
/// With `s = H b` and `D = beta_d^2 + beta_r^2 ||s||^2` (independent of the
/// phases), the objective is `c (t + ||H_b b + G_r (e^{j theta} o s)||^2) / D`.
struct PhaseObjective<'a> {
    real: &'a ChannelRealization,
    direct: Vec<Complex64>,
    s: Vec<Complex64>,
    c_over_d: f64,
    t: f64,
}

impl<'a> PhaseObjective<'a> {
    fn new(real: &'a ChannelRealization, beam: &Beamformer, params: &SystemParams) -> Self {
        let s = real.h.mul_vec(beam.b()).into_inner();
        let s_norm: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        let d = params.beta_d.powi(2) + params.beta_r.powi(2) * s_norm;
        let two_rs = params.r_s.exp2();
        Self {
            direct: real.h_b.mul_vec(beam.b()).into_inner(),
            s,
            c_over_d: params.sigma2_e / (two_rs * params.sigma2) / d,
            t: params.sigma2 * (1.0 - two_rs) / params.p_t,
            real,
        }
    }

    /// `A b` for phases `theta`.
    fn received(&self, theta: &[f64]) -> Vec<Complex64> {
        let mut out = self.direct.clone();
        for (n, (&th, s_n)) in theta.iter().zip(&self.s).enumerate() {
            let coeff = Complex64::from_polar(1.0, th) * s_n;
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.real.g_r.get(i, n) * coeff;
            }
        }
        out
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let gain: f64 = self.received(theta).iter().map(|v| v.norm_sqr()).sum();
        self.c_over_d * (self.t + gain)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let ab = self.received(theta);
        theta
            .iter()
            .zip(&self.s)
            .enumerate()
            .map(|(n, (&th, s_n))| {
                // (A b)^H F_n b with F_n b = g_n s_n
                let inner: Complex64 = ab
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.conj() * self.real.g_r.get(i, n))
                    .sum::<Complex64>()
                    * s_n;
                let rot = Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, th);
                self.c_over_d * 2.0 * (rot * inner).re
            })
            .collect()
    }
}

/// Gradient of the objective with respect to the phase angles, for a fixed
/// precoder. Component `n` is `(c / D) 2 Re{ j e^{j theta_n} (A b)^H F_n b }`.
pub fn phase_gradient(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    beam: &Beamformer,
    params: &SystemParams,
) -> Vec<f64> {
    PhaseObjective::new(real, beam, params).gradient(phase.theta())
}

fn quotient_value(real: &ChannelRealization, phase: &PhaseConfig, beam: &Beamformer, params: &SystemParams) -> f64 {
    QuotientTerms::new(real, phase, params).evaluate(beam.b())
}

#[derive(Clone, Debug)]
pub struct AoOutcome {
    pub solution: Solution,
    /// Objective after initialisation and after every outer iteration of
    /// the winning start.
    pub trace: Vec<f64>,
}

fn single_start(
    real: &ChannelRealization,
    params: &SystemParams,
    cfg: &AoConfig,
    init: PhaseConfig,
) -> Result<(PhaseConfig, Beamformer, Vec<f64>)> {
    let mut theta = init.theta().to_vec();
    let mut beam = optimal_beam(real, &init, params)?;
    let mut value = quotient_value(real, &init, &beam, params);
    let mut trace = vec![value];
    let mut eta = cfg.step_size;

    for _ in 0..cfg.max_outer_iters {
        let previous = value;
        let fixed = PhaseObjective::new(real, &beam, params);
        let mut current = fixed.value(&theta);
        for _ in 0..cfg.grad_steps_per_outer {
            let grad = fixed.gradient(&theta);
            if grad.iter().all(|g| *g == 0.0) {
                break;
            }
            let mut step = eta;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let candidate: Vec<f64> = theta
                    .iter()
                    .zip(&grad)
                    .map(|(t, g)| wrap_angle(t + step * g))
                    .collect();
                let v = fixed.value(&candidate);
                if v >= current {
                    theta = candidate;
                    current = v;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let phase = PhaseConfig::new(theta.clone())?;
        let candidate_beam = optimal_beam(real, &phase, params)?;
        let candidate_value = quotient_value(real, &phase, &candidate_beam, params);
        // The closed-form precoder is optimal for these phases; keep the old
        // one only if rounding says otherwise.
        if candidate_value >= current {
            beam = candidate_beam;
            value = candidate_value;
        } else {
            value = quotient_value(real, &phase, &beam, params);
        }
        trace.push(value);
        if !value.is_finite() {
            return Err(Error::Numerical {
                message: format!("AO objective became non-finite; trace {trace:?}"),
                residual: f64::NAN,
            });
        }
        eta *= cfg.step_decay;
        if value - previous < cfg.tol_objective {
            break;
        }
    }
    Ok((PhaseConfig::new(theta)?, beam, trace))
}

/// Runs AO from `init` (or a random start) and any extra random restarts,
/// returning the best result with its objective trace.
pub fn ao_solve_traced(
    real: &ChannelRealization,
    params: &SystemParams,
    cfg: &AoConfig,
    init: Option<PhaseConfig>,
) -> Result<AoOutcome> {
    cfg.validate()?;
    params.validate()?;
    if let Some(p) = &init {
        if p.n_s() != real.n_s() {
            return Err(Error::domain("initial phase count does not match IRS size"));
        }
    }
    let mut best: Option<(PhaseConfig, Beamformer, Vec<f64>)> = None;
    for k in 0..cfg.restarts {
        let start = match (&init, k) {
            (Some(p), 0) => p.clone(),
            _ => {
                let mut rng = rng_from_seed(derive_seed(cfg.seed, RESTART_STREAM, k as u64));
                PhaseConfig::random(&mut rng, real.n_s())
            }
        };
        let run = single_start(real, params, cfg, start)?;
        let better = match &best {
            None => true,
            Some((_, _, t)) => run.2.last() > t.last(),
        };
        if better {
            best = Some(run);
        }
    }
    let (phase, beam, trace) = best.expect("at least one start");
    let solution = Solution::evaluate(real, phase, beam, params, Method::Ao)?;
    Ok(AoOutcome { solution, trace })
}

pub fn ao_solve(
    real: &ChannelRealization,
    params: &SystemParams,
    cfg: &AoConfig,
    init: Option<PhaseConfig>,
) -> Result<Solution> {
    Ok(ao_solve_traced(real, params, cfg, init)?.solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_legit;
    use crate::numerics::{CMat, CVec};

    #[test]
    fn gradient_vanishes_without_reflection() {
        let p = SystemParams::reference(5);
        let mut real = sample_legit(&p, 1);
        real.g_r = CMat::zeros(2, 5);
        let beam = Beamformer::from_direction(&CVec::from_real(&[1.0, -1.0, 0.5, 0.0])).unwrap();
        let g = phase_gradient(&real, &PhaseConfig::zeros(5), &beam, &p);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn no_irs_reduces_to_closed_form_beam() {
        let p = SystemParams::reference(0);
        let real = sample_legit(&p, 9);
        let s = ao_solve(&real, &p, &AoConfig::default(), None).unwrap();
        let b = optimal_beam(&real, &PhaseConfig::zeros(0), &p).unwrap();
        assert!(s.beam.b().sub(b.b()).norm() < 1e-12);
        assert_eq!(s.method, Method::Ao);
    }

    #[test]
    fn trace_is_non_decreasing_and_deterministic() {
        let p = SystemParams::reference(16).with_large_scale(0.4, 0.7);
        let real = sample_legit(&p, 3);
        let cfg = AoConfig {
            seed: 5,
            ..AoConfig::default()
        };
        let a = ao_solve_traced(&real, &p, &cfg, None).unwrap();
        for w in a.trace.windows(2) {
            assert!(w[1] >= w[0], "objective decreased: {w:?}");
        }
        let b = ao_solve_traced(&real, &p, &cfg, None).unwrap();
        assert_eq!(a.solution, b.solution);
        assert!(a.trace.last().unwrap() > &a.trace[0]);
    }

    #[test]
    fn config_validation() {
        assert!(AoConfig::default().validate().is_ok());
        assert!(AoConfig { step_decay: 1.5, ..AoConfig::default() }.validate().is_err());
        assert!(AoConfig { restarts: 0, ..AoConfig::default() }.validate().is_err());
    }
}
