//! Unsupervised neural phase predictor.
//!
//! A convolutional network maps the legitimate CSI (direct channel plus the
//! per-element cascaded channels, split into real, imaginary and magnitude
//! planes) to `z` in `(0, 1)^N_s`; the phases are `theta = 2 pi z` and the
//! precoder follows in closed form. Training maximises the mean design
//! objective over a batch, so no labels are needed.
//!
//! The precoder is treated as a constant during backpropagation. Because it
//! maximises the objective for the current phases, the envelope theorem
//! makes this detached gradient equal to the full one.

mod checkpoint;
mod net;
mod train;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, ModelCheckpoint};
pub use net::{Activation, ConvSpec, Mode, Model, NetArch, Shape};
pub use train::{train, Adam, EpochRecord, PlateauScheduler, SchedulerStep, StopReason, TrainConfig, TrainOutcome};

use crate::ao::phase_gradient;
use crate::beamform::{optimal_beam, Method, Solution};
use crate::channel::{cascade, ChannelRealization, SystemParams};
use crate::error::{Error, Result};
use crate::secrecy::{objective, PhaseConfig};

/// One training or evaluation example.
pub type Sample = (ChannelRealization, SystemParams);

/// How the real, imaginary and magnitude parts are stacked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `3 (N_s + 1)` channels of `N_r x N_t` images.
    ChannelStack,
    /// `N_s + 1` channels of `3 N_r x N_t` images.
    RowStack,
}

impl Layout {
    pub fn shape(&self, n_r: usize, n_t: usize, n_s: usize) -> Shape {
        match self {
            Layout::ChannelStack => Shape {
                c: 3 * (n_s + 1),
                h: n_r,
                w: n_t,
            },
            Layout::RowStack => Shape {
                c: n_s + 1,
                h: 3 * n_r,
                w: n_t,
            },
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::ChannelStack => "channel",
            Layout::RowStack => "row",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "channel" | "channel_stack" => Ok(Layout::ChannelStack),
            "row" | "row_stack" => Ok(Layout::RowStack),
            other => Err(Error::Config(format!("unknown input layout {other:?}"))),
        }
    }
}

/// Real-valued network input, stored `(channel, row, col)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub layout: Layout,
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl NetInput {
    /// Plane `part` (0 = real, 1 = imaginary, 2 = magnitude) of complex
    /// plane `plane` (0 = `H_b`, `n` = `F_n`), as an `N_r x N_t` row-major
    /// block.
    pub fn plane(&self, part: usize, plane: usize, n_r: usize, n_t: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_r * n_t);
        for i in 0..n_r {
            for j in 0..n_t {
                let idx = match self.layout {
                    Layout::ChannelStack => {
                        let planes = self.shape.c / 3;
                        ((part * planes + plane) * n_r + i) * n_t + j
                    }
                    Layout::RowStack => (plane * 3 * n_r + part * n_r + i) * n_t + j,
                };
                out.push(self.data[idx]);
            }
        }
        out
    }
}

/// Stacks `[H_b; F_1; ...; F_{N_s}]` into real planes.
pub fn preprocess(real: &ChannelRealization, layout: Layout) -> NetInput {
    let (n_r, n_t, n_s) = (real.n_r(), real.n_t(), real.n_s());
    let cascaded = cascade(real);
    let planes: Vec<_> = std::iter::once(&real.h_b).chain(cascaded.f.iter()).collect();
    let shape = layout.shape(n_r, n_t, n_s);
    let mut data = vec![0.0; shape.len()];
    let parts: [fn(num_complex::Complex64) -> f64; 3] = [|z| z.re, |z| z.im, |z| z.norm()];
    for (p, m) in planes.iter().enumerate() {
        for (part, f) in parts.iter().enumerate() {
            for i in 0..n_r {
                for j in 0..n_t {
                    let idx = match layout {
                        Layout::ChannelStack => ((part * (n_s + 1) + p) * n_r + i) * n_t + j,
                        Layout::RowStack => (p * 3 * n_r + part * n_r + i) * n_t + j,
                    };
                    data[idx] = f(m.get(i, j));
                }
            }
        }
    }
    NetInput {
        layout,
        shape,
        data,
    }
}

/// `theta = 2 pi z`; every `z_n` must lie in `(0, 1)`.
pub fn theta_from_z(z: &[f64]) -> Result<PhaseConfig> {
    if let Some(bad) = z.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::domain(format!("network output {bad} outside (0, 1)")));
    }
    PhaseConfig::new(z.iter().map(|v| TAU * v).collect())
}

fn check_sample(model: &Model, real: &ChannelRealization) -> Result<()> {
    let a = &model.arch;
    if (real.n_r(), real.n_t(), real.n_s()) != (a.n_r, a.n_t, a.n_s) {
        return Err(Error::Config(format!(
            "channel shape ({}, {}, {}) does not match network ({}, {}, {})",
            real.n_r(),
            real.n_t(),
            real.n_s(),
            a.n_r,
            a.n_t,
            a.n_s
        )));
    }
    Ok(())
}

pub(crate) fn stack_inputs(model: &Model, samples: &[Sample]) -> Result<Vec<f64>> {
    for (real, _) in samples {
        check_sample(model, real)?;
    }
    let layout = model.arch.layout;
    let parts: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|(real, _)| preprocess(real, layout).data)
        .collect();
    Ok(parts.concat())
}

/// Network output `z` for one realization (inference mode).
pub fn forward(model: &Model, input: &NetInput) -> Result<Vec<f64>> {
    if input.layout != model.arch.layout || input.shape != model.arch.input_shape() {
        return Err(Error::Config(format!(
            "input layout {} {:?} does not match network {} {:?}",
            input.layout,
            input.shape,
            model.arch.layout,
            model.arch.input_shape()
        )));
    }
    model.predict(&input.data, 1)
}

/// Objective and its gradient with respect to `z` for one sample.
pub(crate) fn objective_and_z_gradient(sample: &Sample, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (real, params) = sample;
    let phase = theta_from_z(z)?;
    let beam = optimal_beam(real, &phase, params)?;
    let value = objective(real, &phase, &beam, params)?;
    let grad = phase_gradient(real, &phase, &beam, params)
        .into_iter()
        .map(|g| TAU * g)
        .collect();
    Ok((value, grad))
}

/// Per-sample objectives for network outputs `z` (row per sample).
pub(crate) fn batch_objectives(samples: &[Sample], z: &[f64], n_s: usize) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .zip(z.par_chunks(n_s))
        .map(|(sample, zs)| {
            let (real, params) = sample;
            let phase = theta_from_z(zs)?;
            let beam = optimal_beam(real, &phase, params)?;
            objective(real, &phase, &beam, params)
        })
        .collect()
}

/// Unsupervised loss: minus the mean design objective over the batch, with
/// the network in inference mode.
pub fn loss_batch(model: &Model, batch: &[Sample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::domain("loss needs at least one sample"));
    }
    let x = stack_inputs(model, batch)?;
    let z = model.predict(&x, batch.len())?;
    let values = batch_objectives(batch, &z, model.arch.n_s)?;
    Ok(-values.iter().sum::<f64>() / batch.len() as f64)
}

/// Phases from the network, precoder in closed form, metrics recomputed.
pub fn infer_solution(model: &Model, real: &ChannelRealization, params: &SystemParams) -> Result<Solution> {
    check_sample(model, real)?;
    let z = forward(model, &preprocess(real, model.arch.layout))?;
    let phase = theta_from_z(&z)?;
    let beam = optimal_beam(real, &phase, params)?;
    Solution::evaluate(real, phase, beam, params, Method::Neural)
}
