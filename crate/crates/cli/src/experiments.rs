//! Sweeps, timing and Monte Carlo validation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use secirs::ao::{ao_solve, AoConfig};
use secirs::beamform::{mrt_no_irs, random_phase};
use secirs::channel::{derive_seed, rng_from_seed, sample_large_scale, sample_legit};
use secirs::neuralphase::{infer_solution, Model};
use secirs::numerics::{CVec, Complex64};
use secirs::secrecy::{mc_outage, outage_closed_form};
use secirs::{Beamformer, ChannelRealization, Error, Method, PhaseConfig, Result, Solution, SystemParams};

use crate::config::{ExperimentConfig, SweepVar};

const CHANNEL_STREAM: u64 = 0xC4A7;
const RANDOM_PHASE_STREAM: u64 = 0x2A4D;
const AO_STREAM: u64 = 0xA0A0;
const MC_STREAM: u64 = 0x3C3C;
const VALIDATE_STREAM: u64 = 0x7A11;
const LARGE_SCALE_STREAM: u64 = 0xB37A;

/// Trained networks keyed by the IRS size they were built for.
#[derive(Clone, Debug, Default)]
pub struct Networks {
    by_ns: BTreeMap<usize, Model>,
}

impl Networks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: Model) {
        self.by_ns.insert(model.arch.n_s, model);
    }

    pub fn get(&self, n_s: usize) -> Result<&Model> {
        self.by_ns
            .get(&n_s)
            .ok_or_else(|| Error::Config(format!("neural method needs a checkpoint for N_s = {n_s}")))
    }
}

/// Channel seed of realization `r`; shared across grid points and methods.
pub fn channel_seed(root: u64, r: usize) -> u64 {
    derive_seed(root, CHANNEL_STREAM, r as u64)
}

/// Parameters of realization `r`: the grid-point parameters, with the
/// large-scale fading redrawn per realization when the config asks for it.
pub fn realization_params(cfg: &ExperimentConfig, params: &SystemParams, r: usize) -> SystemParams {
    if cfg.random_large_scale {
        let (beta_d, beta_r) = sample_large_scale(derive_seed(cfg.seed, LARGE_SCALE_STREAM, r as u64));
        params.with_large_scale(beta_d, beta_r)
    } else {
        *params
    }
}

/// Runs one method on one realization. Returns the solution together with
/// the channel and parameters it should be scored on (the no-IRS baseline
/// is scored on the direct channel alone).
pub fn solve(
    method: Method,
    real: &ChannelRealization,
    params: &SystemParams,
    ao: &AoConfig,
    nets: &Networks,
    root: u64,
    r: usize,
) -> Result<(Solution, ChannelRealization, SystemParams)> {
    let r = r as u64;
    let sol = match method {
        Method::MrtNoIrs => {
            let sol = mrt_no_irs(&real.h_b, params)?;
            return Ok((sol, real.without_irs(), SystemParams { n_s: 0, ..*params }));
        }
        Method::RandomPhase => random_phase(real, params, derive_seed(root, RANDOM_PHASE_STREAM, r))?,
        Method::Ao => {
            let cfg = AoConfig {
                seed: derive_seed(root, AO_STREAM, r),
                ..ao.clone()
            };
            ao_solve(real, params, &cfg, None)?
        }
        Method::Neural => infer_solution(nets.get(params.n_s)?, real, params)?,
        Method::ClosedForm => {
            return Err(Error::Config("closed_form is not a stand-alone method".into()))
        }
    };
    Ok((sol, real.clone(), *params))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub grid_value: f64,
    pub method: Method,
    pub mean_p_out_closed: f64,
    pub mean_p_out_mc: f64,
    /// Monte Carlo standard error of `mean_p_out_mc`.
    pub stderr_mc: f64,
    pub mean_objective: f64,
    pub realizations: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    p_closed: f64,
    p_mc: f64,
    stderr: f64,
    objective: f64,
}

fn score(method: Method, cfg: &ExperimentConfig, params: &SystemParams, nets: &Networks, r: usize) -> Result<Outcome> {
    let params = realization_params(cfg, params, r);
    let real = sample_legit(&params, channel_seed(cfg.seed, r));
    let (sol, real, params) = solve(method, &real, &params, &cfg.ao, nets, cfg.seed, r)?;
    let mc = mc_outage(
        &real,
        &sol.phase,
        &sol.beam,
        &params,
        cfg.mc_draws,
        derive_seed(cfg.seed, MC_STREAM, r as u64),
    )?;
    Ok(Outcome {
        p_closed: sol.eval.p_out,
        p_mc: mc.p_hat,
        stderr: mc.stderr,
        objective: sol.eval.objective,
    })
}

/// One row per (grid point, method), in grid then method order.
pub fn sweep(cfg: &ExperimentConfig, nets: &Networks) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &value in &cfg.grid {
        let params = cfg.at_grid(value)?;
        for &method in &cfg.methods {
            let outcomes: Vec<Outcome> = (0..cfg.realizations)
                .into_par_iter()
                .map(|r| score(method, cfg, &params, nets, r))
                .collect::<Result<_>>()?;
            let n = outcomes.len() as f64;
            let mean = |f: fn(&Outcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
            rows.push(SweepRow {
                grid_value: value,
                method,
                mean_p_out_closed: mean(|o| o.p_closed),
                mean_p_out_mc: mean(|o| o.p_mc),
                stderr_mc: outcomes.iter().map(|o| o.stderr * o.stderr).sum::<f64>().sqrt() / n,
                mean_objective: mean(|o| o.objective),
                realizations: cfg.realizations,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "grid_var,method,mean_p_out_closed,mean_p_out_mc,stderr_mc,mean_objective,realizations,seed\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.grid_value,
            r.method,
            r.mean_p_out_closed,
            r.mean_p_out_mc,
            r.stderr_mc,
            r.mean_objective,
            r.realizations,
            r.seed
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub method: Method,
    pub n_s: usize,
    pub total_seconds: f64,
    pub per_solve_seconds: f64,
}

/// Wall-clock time of `cfg.timing_solves` solves per (method, N_s) on a
/// single thread. One extra warm-up solve per point is not timed.
pub fn bench_time(cfg: &ExperimentConfig, nets: &Networks) -> Result<Vec<TimingRow>> {
    if cfg.sweep_var != SweepVar::Ns {
        return Err(Error::Config("timing runs over an N_s grid".into()));
    }
    cfg.validate()?;
    if cfg.timing_solves == 0 {
        return Err(Error::Config("timing needs at least one solve".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build timing thread pool: {e}")))?;
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &value in &cfg.grid {
            let params = cfg.at_grid(value)?;
            let cases: Vec<(ChannelRealization, SystemParams)> = (0..=cfg.timing_solves)
                .map(|r| {
                    let p = realization_params(cfg, &params, r);
                    (sample_legit(&p, channel_seed(cfg.seed, r)), p)
                })
                .collect();
            let total = pool.install(|| -> Result<f64> {
                solve(method, &cases[0].0, &cases[0].1, &cfg.ao, nets, cfg.seed, 0)?;
                let start = Instant::now();
                for (r, (real, p)) in cases.iter().enumerate().skip(1) {
                    solve(method, real, p, &cfg.ao, nets, cfg.seed, r)?;
                }
                Ok(start.elapsed().as_secs_f64())
            })?;
            rows.push(TimingRow {
                method,
                n_s: params.n_s,
                total_seconds: total,
                per_solve_seconds: total / cfg.timing_solves as f64,
            });
        }
    }
    Ok(rows)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("method,N_s,total_seconds,per_solve_seconds\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.method, r.n_s, r.total_seconds, r.per_solve_seconds);
    }
    out
}

/// A random system, phase configuration and unit-norm precoder.
#[derive(Clone, Debug)]
pub struct McCase {
    pub seed: u64,
    pub params: SystemParams,
    pub real: ChannelRealization,
    pub phase: PhaseConfig,
    pub beam: Beamformer,
}

const VALIDATE_N_E: [usize; 3] = [1, 2, 4];
const VALIDATE_N_S: [usize; 3] = [8, 16, 32];

/// Case `index` of the validation set. Case 0 has `beta_r = 0` and a
/// single-antenna eavesdropper; the rest cycle through `N_e` and `N_s`.
pub fn mc_case(root: u64, index: usize) -> Result<McCase> {
    let seed = derive_seed(root, VALIDATE_STREAM, index as u64);
    let (beta_d, beta_r) = sample_large_scale(derive_seed(seed, 1, 0));
    let (n_e, beta_r) = if index == 0 { (1, 0.0) } else { (VALIDATE_N_E[index % 3], beta_r) };
    let params = SystemParams {
        n_e,
        ..SystemParams::reference(VALIDATE_N_S[(index / 3) % 3])
    }
    .with_large_scale(beta_d, beta_r);
    let real = sample_legit(&params, derive_seed(seed, 2, 0));
    let mut rng = rng_from_seed(derive_seed(seed, 3, 0));
    let phase = PhaseConfig::random(&mut rng, params.n_s);
    let b: Vec<Complex64> = (0..params.n_t)
        .map(|_| secirs::channel::complex_gaussian(&mut rng))
        .collect();
    let beam = Beamformer::from_direction(&CVec::new(b)?)?;
    Ok(McCase {
        seed,
        params,
        real,
        phase,
        beam,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRow {
    pub index: usize,
    pub seed: u64,
    pub n_e: usize,
    pub n_s: usize,
    pub beta_d: f64,
    pub beta_r: f64,
    pub p_closed: f64,
    pub p_mc: f64,
    pub stderr: f64,
    /// `|closed - mc|` over three binomial standard errors at the
    /// closed-form probability; 0 when both are exactly equal.
    pub ratio: f64,
}

impl McRow {
    pub fn pass(&self) -> bool {
        self.ratio <= 1.0
    }
}

pub fn validate_mc(cfg: &ExperimentConfig) -> Result<Vec<McRow>> {
    if cfg.validate_configs == 0 || cfg.validate_mc_draws == 0 {
        return Err(Error::Config("validation needs configs and draws".into()));
    }
    (0..cfg.validate_configs)
        .map(|i| {
            let case = mc_case(cfg.seed, i)?;
            let closed = outage_closed_form(&case.real, &case.phase, &case.beam, &case.params)?;
            let mc = mc_outage(
                &case.real,
                &case.phase,
                &case.beam,
                &case.params,
                cfg.validate_mc_draws,
                case.seed,
            )?;
            let p = closed.p_out;
            let diff = (p - mc.p_hat).abs();
            let band = 3.0 * (p * (1.0 - p) / cfg.validate_mc_draws as f64).sqrt();
            let ratio = if diff == 0.0 { 0.0 } else { diff / band };
            Ok(McRow {
                index: i,
                seed: case.seed,
                n_e: case.params.n_e,
                n_s: case.params.n_s,
                beta_d: case.params.beta_d,
                beta_r: case.params.beta_r,
                p_closed: p,
                p_mc: mc.p_hat,
                stderr: mc.stderr,
                ratio,
            })
        })
        .collect()
}

pub fn validate_csv(rows: &[McRow]) -> String {
    let mut out = String::from("config,seed,n_e,n_s,beta_d,beta_r,p_out_closed,p_out_mc,stderr_mc,ratio,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.n_e,
            r.n_s,
            r.beta_d,
            r.beta_r,
            r.p_closed,
            r.p_mc,
            r.stderr,
            r.ratio,
            r.pass()
        );
    }
    out
}
