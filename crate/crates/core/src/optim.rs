//! Adam, the step learning-rate schedule, mixed-factor batch sampling and
//! the L1 training loop.

use std::fmt::Write as _;
use std::time::Instant;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, images_to_batch, PairSet};
use crate::error::{Error, Result};
use crate::model::{bind, forward_on_tape, json_config_error, Model, ParameterStore};
use crate::tensor::{Scalar, Tape, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamSlot<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    /// Updates applied to this parameter.
    pub t: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState<T> {
    /// Completed optimizer steps.
    pub t: u64,
    pub slots: IndexMap<String, AdamSlot<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        AdamState {
            t: 0,
            slots: IndexMap::new(),
        }
    }
}

/// Bias-corrected Adam update of the named parameters from their gradient
/// slots. Parameters outside `trainable` and their moments are untouched.
pub fn adam_step<T: Scalar>(
    params: &mut ParameterStore<T>,
    state: &mut AdamState<T>,
    lr: f64,
    trainable: &[String],
) -> Result<()> {
    // Validate up front so a failure leaves everything unchanged.
    for name in trainable {
        let p = params
            .get(name)
            .ok_or_else(|| Error::contract("adam_step", format!("unknown parameter {name}")))?;
        if p.grad.is_none() {
            return Err(Error::contract("adam_step", format!("missing gradient for {name}")));
        }
    }
    let (b1, b2, eps) = (
        T::from_f64_lossy(BETA1),
        T::from_f64_lossy(BETA2),
        T::from_f64_lossy(EPSILON),
    );
    let one = T::one();
    for name in trainable {
        let p = params.get_mut(name).expect("validated");
        let grad = p.grad.as_ref().expect("validated");
        let slot = state.slots.entry(name.clone()).or_insert_with(|| AdamSlot {
            m: Tensor::zeros(p.value.shape()),
            v: Tensor::zeros(p.value.shape()),
            t: 0,
        });
        slot.t += 1;
        let t = slot.t as i32;
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        let step = T::from_f64_lossy(lr);
        let (m, v) = (slot.m.data_mut(), slot.v.data_mut());
        for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - step * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.t += 1;
    Ok(())
}

/// Training hyper-parameters. Defaults are the full-scale training settings.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub hr_patch: usize,
    pub base_lr: f64,
    pub halving_period: usize,
    pub iterations_per_epoch: usize,
    pub epochs: usize,
    pub factors: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            hr_patch: 48,
            base_lr: 1e-4,
            halving_period: 200,
            iterations_per_epoch: 1000,
            epochs: 1,
            factors: vec![2, 3, 4],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("hr_patch", self.hr_patch),
            ("halving_period", self.halving_period),
            ("iterations_per_epoch", self.iterations_per_epoch),
            ("epochs", self.epochs),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !self.base_lr.is_finite() || self.base_lr <= 0.0 {
            return Err(Error::config("base_lr", "must be a positive number"));
        }
        if self.factors.is_empty() {
            return Err(Error::config("factors", "must not be empty"));
        }
        for &f in &self.factors {
            if f == 0 || !self.hr_patch.is_multiple_of(f as usize) {
                return Err(Error::config(
                    "hr_patch",
                    format!("{} is not divisible by factor {f}", self.hr_patch),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(json_config_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }
}

/// `base_lr · 0.5^⌊epoch / period⌋`
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let halvings = (epoch / cfg.halving_period.max(1)) as i32;
    cfg.base_lr * 0.5f64.powi(halvings)
}

/// Epoch containing zero-based iteration `iteration`.
pub fn epoch_of(iteration: usize, cfg: &TrainConfig) -> usize {
    iteration / cfg.iterations_per_epoch.max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub lr: Tensor<T>,
    pub hr: Tensor<T>,
    pub factor: u32,
}

const MAX_PATCH_ATTEMPTS: usize = 100;

/// Draws one factor uniformly, then `batch_size` aligned, augmented patch pairs.
pub fn sample_batch<T: Scalar, R: Rng + ?Sized>(pairs: &PairSet, cfg: &TrainConfig, rng: &mut R) -> Result<Batch<T>> {
    let factor = cfg.factors[rng.gen_range(0..cfg.factors.len())];
    let list = pairs
        .get(factor)
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::Data(format!("no training pairs at x{factor}")))?;
    let f = factor as usize;
    let lp = cfg.hr_patch / f;
    let mut lrs = Vec::with_capacity(cfg.batch_size);
    let mut hrs = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let mut drawn = None;
        for _ in 0..MAX_PATCH_ATTEMPTS {
            let pair = &list[rng.gen_range(0..list.len())];
            let (lw, lh) = (pair.lr.width(), pair.lr.height());
            if lw < lp || lh < lp {
                continue;
            }
            let lx = rng.gen_range(0..=lw - lp);
            let ly = rng.gen_range(0..=lh - lp);
            let lr = pair.lr.crop(lx, ly, lp, lp)?;
            let hr = pair.hr.crop(lx * f, ly * f, cfg.hr_patch, cfg.hr_patch)?;
            drawn = Some(augment(&hr, &lr, rng));
            break;
        }
        let (hr, lr, _) = drawn.ok_or_else(|| {
            Error::Data(format!(
                "no x{factor} image is large enough for a {}px patch after {MAX_PATCH_ATTEMPTS} attempts",
                cfg.hr_patch
            ))
        })?;
        lrs.push(lr);
        hrs.push(hr);
    }
    Ok(Batch {
        lr: images_to_batch(&lrs)?,
        hr: images_to_batch(&hrs)?,
        factor,
    })
}

/// Forward, L1 loss and backward on one batch; gradients land in the
/// parameter slots (after clearing them). Returns the loss.
pub fn compute_gradients<T: Scalar>(model: &mut Model<T>, batch: &Batch<T>) -> Result<f64> {
    let mut tape = Tape::new();
    let (vars, bound) = bind(&model.config, &model.params, &mut tape, batch.factor, true)?;
    let x = tape.constant(batch.lr.clone());
    let y = forward_on_tape(&mut tape, &model.config, &vars, x)?;
    let target = tape.constant(batch.hr.clone());
    let loss = tape.l1_loss(y, target)?;
    let value = tape.value(loss).item()?.as_f64();
    if !value.is_finite() {
        return Ok(value);
    }
    let grads = tape.backward(loss)?;
    model.params.zero_grad();
    model.params.accumulate_grads(&bound, &grads)?;
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub epoch: usize,
    pub iteration: usize,
    pub factor: u32,
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch\titeration\tfactor\tloss\tlr\tseconds";

impl IterationRecord {
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:e}\t{:.3}",
            self.epoch, self.iteration, self.factor, self.loss, self.lr, self.seconds
        )
    }
}

impl TrainLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.iterations {
            let _ = writeln!(out, "{}", r.tsv_row());
        }
        out
    }
}

/// Single-writer training state: model, optimizer and sampling RNG.
pub struct Trainer<'a> {
    pub model: &'a mut Model<f32>,
    pub adam: AdamState<f32>,
    pub cfg: TrainConfig,
    rng: ChaCha8Rng,
    iteration: usize,
    started: Instant,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a mut Model<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        for &f in &cfg.factors {
            if !model.config.supports(f) {
                return Err(Error::config(
                    "factors",
                    format!("x{f} is not an upsampling head of the model"),
                ));
            }
        }
        Ok(Trainer {
            model,
            adam: AdamState::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            iteration: 0,
            started: Instant::now(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One optimisation step on a batch, at the scheduled learning rate.
    pub fn step_on(&mut self, batch: &Batch<f32>) -> Result<IterationRecord> {
        let epoch = epoch_of(self.iteration, &self.cfg);
        let lr = lr_at(epoch, &self.cfg);
        let loss = compute_gradients(self.model, batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                factor: batch.factor,
                lr,
            });
        }
        let trainable = self.model.params.active_names(batch.factor);
        adam_step(&mut self.model.params, &mut self.adam, lr, &trainable)?;
        let record = IterationRecord {
            epoch,
            iteration: self.iteration,
            factor: batch.factor,
            loss,
            lr,
            seconds: self.started.elapsed().as_secs_f64(),
        };
        self.iteration += 1;
        Ok(record)
    }

    pub fn step(&mut self, pairs: &PairSet) -> Result<IterationRecord> {
        let batch = sample_batch(pairs, &self.cfg, &mut self.rng)?;
        self.step_on(&batch)
    }

    /// Runs the remaining iterations of the configured budget.
    pub fn run(&mut self, pairs: &PairSet, mut on_iteration: impl FnMut(&IterationRecord)) -> Result<TrainLog> {
        let mut log = TrainLog::default();
        let mut epoch_losses = Vec::with_capacity(self.cfg.iterations_per_epoch);
        while self.iteration < self.cfg.total_iterations() {
            let record = self.step(pairs)?;
            on_iteration(&record);
            epoch_losses.push(record.loss);
            log.iterations.push(record);
            if self.iteration.is_multiple_of(self.cfg.iterations_per_epoch) {
                log.epochs.push(EpochRecord {
                    epoch: record.epoch,
                    mean_loss: epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64,
                    lr: record.lr,
                    seconds: record.seconds,
                });
                epoch_losses.clear();
            }
        }
        Ok(log)
    }
}

/// Trains `model` for `cfg.epochs × cfg.iterations_per_epoch` iterations.
pub fn train(
    model: &mut Model<f32>,
    pairs: &PairSet,
    cfg: &TrainConfig,
    on_iteration: impl FnMut(&IterationRecord),
) -> Result<TrainLog> {
    Trainer::new(model, cfg.clone())?.run(pairs, on_iteration)
}
