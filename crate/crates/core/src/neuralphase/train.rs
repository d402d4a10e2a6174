//! Adam, plateau learning-rate decay and the unsupervised training loop.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{CheckpointMeta, ModelCheckpoint};
use super::net::{Mode, Model, NetArch};
use super::{objective_and_z_gradient, stack_inputs, batch_objectives, Sample};
use crate::channel::{derive_seed, rng_from_seed};
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Validation loss must drop by more than this to count as an improvement.
const IMPROVEMENT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub train_size: usize,
    pub val_size: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub plateau_decay_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_size: 8_000,
            val_size: 2_000,
            max_epochs: 100,
            batch_size: 256,
            initial_lr: 0.01,
            plateau_decay_factor: 0.3,
            plateau_patience: 15,
            early_stop_patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-scale schedule (batch 1000, up to 2000 epochs).
    pub fn reference() -> Self {
        Self {
            train_size: 800_000,
            val_size: 200_000,
            max_epochs: 2000,
            batch_size: 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.val_size == 0 {
            return Err(Error::Config("training and validation sizes must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch budget must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.initial_lr)));
        }
        if !(self.plateau_decay_factor > 0.0 && self.plateau_decay_factor < 1.0) {
            return Err(Error::Config("plateau decay factor must lie in (0, 1)".into()));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &Model, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.param_slices().map(|p| vec![0.0; p.len()]).collect();
        Self {
            lr,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut Model) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let lr = self.lr;
        for ((params, grads), (m, v)) in model
            .param_grad_pairs()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerStep {
    Improved,
    NoImprovement,
    ReducedLr,
    Stop,
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement and stops after `stop_patience` such epochs.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    pub lr: f64,
    factor: f64,
    patience: usize,
    stop_patience: usize,
    best: f64,
    plateau: usize,
    since_best: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, stop_patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            stop_patience,
            best: f64::INFINITY,
            plateau: 0,
            since_best: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn step(&mut self, val_loss: f64) -> SchedulerStep {
        if val_loss < self.best - IMPROVEMENT_TOL {
            self.best = val_loss;
            self.plateau = 0;
            self.since_best = 0;
            return SchedulerStep::Improved;
        }
        self.plateau += 1;
        self.since_best += 1;
        if self.since_best >= self.stop_patience {
            return SchedulerStep::Stop;
        }
        if self.plateau >= self.patience {
            self.lr *= self.factor;
            self.plateau = 0;
            return SchedulerStep::ReducedLr;
        }
        SchedulerStep::NoImprovement
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    EpochBudget,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights with the lowest validation loss.
    pub checkpoint: ModelCheckpoint,
    /// Epoch 0 is the untrained network.
    pub curve: Vec<EpochRecord>,
    pub stop: StopReason,
}

fn bit_key(sample: &Sample) -> Vec<u64> {
    sample.0.h_b.data().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
}

fn mean_neg(values: &[f64]) -> f64 {
    -values.iter().sum::<f64>() / values.len() as f64
}

fn check_finite(epoch: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Training {
            epoch,
            message: format!("{what} loss is {v}"),
        })
    }
}

/// Trains a fresh network of shape `arch` on `train_set`, keeping the weights
/// with the best loss on `val_set`.
pub fn train(arch: NetArch, train_set: &[Sample], val_set: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let seen: HashSet<Vec<u64>> = train_set.iter().map(bit_key).collect();
    if val_set.iter().any(|s| seen.contains(&bit_key(s))) {
        return Err(Error::Config("validation set overlaps the training set".into()));
    }

    let mut model = Model::new(arch, &mut rng_from_seed(derive_seed(cfg.seed, 0x1417, 0)))?;
    let n_s = model.arch.n_s;
    let in_len = model.input_len();
    let train_x = stack_inputs(&model, train_set)?;
    let val_x = stack_inputs(&model, val_set)?;
    let eval = |model: &Model, x: &[f64], set: &[Sample]| -> Result<f64> {
        let z = model.predict(x, set.len())?;
        Ok(mean_neg(&batch_objectives(set, &z, n_s)?))
    };

    let mut curve = Vec::new();
    let mut sched = PlateauScheduler::new(
        cfg.initial_lr,
        cfg.plateau_decay_factor,
        cfg.plateau_patience,
        cfg.early_stop_patience,
    );
    let train0 = check_finite(0, "training", eval(&model, &train_x, train_set)?)?;
    let val0 = check_finite(0, "validation", eval(&model, &val_x, val_set)?)?;
    curve.push(EpochRecord {
        epoch: 0,
        train_loss: train0,
        val_loss: val0,
        lr: sched.lr,
    });
    sched.step(val0);
    let mut best_model = model.clone();
    let mut best_epoch = 0;

    let mut adam = Adam::new(&model, cfg.initial_lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stop = StopReason::EpochBudget;
    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        adam.lr = lr;
        order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, 0x5F1E, epoch as u64)));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len();
            let mut x = Vec::with_capacity(n * in_len);
            for &i in chunk {
                x.extend_from_slice(&train_x[i * in_len..(i + 1) * in_len]);
            }
            let (z, trace) = model.forward(&x, n, Mode::Train)?;
            let per: Vec<(f64, Vec<f64>)> = chunk
                .par_iter()
                .zip(z.par_chunks(n_s))
                .map(|(&i, zs)| objective_and_z_gradient(&train_set[i], zs))
                .collect::<Result<_>>()?;
            let mut d_out = Vec::with_capacity(n * n_s);
            let mut batch_obj = 0.0;
            for (value, grad) in &per {
                batch_obj += value;
                d_out.extend(grad.iter().map(|g| -g / n as f64));
            }
            check_finite(epoch, "batch", batch_obj)?;
            loss_sum -= batch_obj;
            model.zero_grads();
            model.backward(trace, &d_out);
            adam.step(&mut model);
        }
        let train_loss = check_finite(epoch, "training", loss_sum / train_set.len() as f64)?;
        let val_loss = check_finite(epoch, "validation", eval(&model, &val_x, val_set)?)?;
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        match sched.step(val_loss) {
            SchedulerStep::Improved => {
                best_model = model.clone();
                best_epoch = epoch;
            }
            SchedulerStep::Stop => {
                stop = StopReason::EarlyStop;
                break;
            }
            SchedulerStep::NoImprovement | SchedulerStep::ReducedLr => {}
        }
    }

    let epochs_run = curve.len() - 1;
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            model: best_model,
            meta: CheckpointMeta {
                seed: cfg.seed,
                best_epoch,
                best_val_loss: sched.best(),
                epochs_run,
                train_size: train_set.len(),
                val_size: val_set.len(),
            },
        },
        curve,
        stop,
    })
}
