//! Joint training of the three heads with Adam, blend-supplied task weights,
//! plateau learning-rate decay and early stopping.
//!
//! Every epoch is split into two halves. After each half the train and
//! validation losses of all tasks are recorded as one checkpoint and the
//! blend weights are recomputed; the steps of the next half use those
//! weights. The learning-rate and early-stopping rules run once per epoch on
//! the monitored validation loss, and the parameters of the best epoch are
//! restored at the end.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blend::{BlendConfig, BlendCurves, BlendState, CurveRow, N_TASKS};
use crate::error::{Error, Result};
use crate::fbcsp::SpectralSpatialTensor;
use crate::losses::{ce_logit_grad, ce_loss, mse_loss, triplet_loss, TaskLosses};
use crate::model::{mine_semi_hard_triplets, MixNetModel, Triplet};
use crate::nn::{Mode, Param, Tensor4};

/// Batch size for inference-only passes.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    /// Blend-weighted sum of the validation task losses.
    #[default]
    Total,
    /// Validation cross-entropy only.
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_factor: f64,
    /// Epochs without improvement before the learning rate is cut.
    pub lr_patience: usize,
    /// Epochs without improvement before training stops.
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Triplet margin.
    pub alpha: f64,
    pub monitor: MonitorKind,
    pub blend: BlendConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-3,
            lr_min: 1e-4,
            lr_factor: 0.5,
            lr_patience: 5,
            early_stop_patience: 20,
            batch_size: 32,
            max_epochs: 80,
            alpha: 5.0,
            monitor: MonitorKind::Total,
            blend: BlendConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0 && self.lr_min > 0.0 && self.lr_min <= self.lr_init) {
            return Err(Error::Config(format!(
                "need 0 < lr_min <= lr_init, got {} and {}",
                self.lr_min, self.lr_init
            )));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::Config("lr_factor must lie in (0, 1)".into()));
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("triplet margin alpha must be positive".into()));
        }
        self.blend.validate()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn first_moment(&self, param: usize) -> &[f64] {
        &self.m[param]
    }

    pub fn second_moment(&self, param: usize) -> &[f64] {
        &self.v[param]
    }

    /// Updates every parameter from its stored gradient. A non-finite
    /// gradient aborts before anything changes.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<()> {
        for p in params.iter() {
            if let Some(j) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in {} at element {j}",
                    p.name
                )));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::shape("optimizer state does not match the parameter list"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.value.len() {
                let g = p.grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                p.value[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Stacked network inputs with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensors {
    pub x: Tensor4,
    pub labels: Vec<usize>,
}

impl LabeledTensors {
    pub fn new(x: Tensor4, labels: Vec<usize>) -> Result<Self> {
        if x.batch != labels.len() {
            return Err(Error::shape(format!(
                "{} inputs but {} labels",
                x.batch,
                labels.len()
            )));
        }
        Ok(Self { x, labels })
    }

    pub fn from_spectral(tensors: &[SpectralSpatialTensor], labels: Vec<usize>) -> Result<Self> {
        let first = tensors
            .first()
            .ok_or_else(|| Error::invalid("no tensors to stack"))?;
        let (w, c) = (first.n_times, first.n_channels);
        let mut data = Vec::with_capacity(tensors.len() * w * c);
        for t in tensors {
            if (t.n_times, t.n_channels) != (w, c) {
                return Err(Error::shape("tensors of different shapes cannot be stacked"));
            }
            data.extend_from_slice(&t.values);
        }
        Self::new(Tensor4::from_vec(tensors.len(), w, c, data)?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.gather(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

/// One checkpoint row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub checkpoint: usize,
    pub epoch: usize,
    pub train: TaskLosses,
    pub val: TaskLosses,
    /// Weights produced at this checkpoint (used by the following steps).
    pub weights: [f64; N_TASKS],
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_total: f64,
    pub monitored: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub checkpoints: Vec<CheckpointRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_monitored: f64,
    pub stopped_early: bool,
    /// Checkpoint index whose parameters the returned model carries.
    pub final_checkpoint: usize,
}

impl TrainLog {
    /// Blend-curve rows (task by task) rebuilt from the checkpoint records.
    pub fn curve_rows(&self) -> Vec<CurveRow> {
        (0..N_TASKS)
            .flat_map(|m| {
                self.checkpoints.iter().map(move |c| CurveRow {
                    checkpoint: c.checkpoint,
                    task: m,
                    train_loss: c.train.as_array()[m],
                    val_loss: c.val.as_array()[m],
                    weight: c.weights[m],
                })
            })
            .collect()
    }

    /// Per-checkpoint CSV. Timings are left out so that repeated runs give
    /// identical bytes.
    pub fn write_csv(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# config_hash={config_hash}")?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "checkpoint",
            "epoch",
            "lr",
            "train_mse",
            "train_triplet",
            "train_ce",
            "val_mse",
            "val_triplet",
            "val_ce",
            "w_mse",
            "w_triplet",
            "w_ce",
        ])?;
        for c in &self.checkpoints {
            let mut row = vec![
                c.checkpoint.to_string(),
                c.epoch.to_string(),
                format!("{:e}", c.lr),
            ];
            row.extend(c.train.as_array().iter().map(|v| format!("{v:e}")));
            row.extend(c.val.as_array().iter().map(|v| format!("{v:e}")));
            row.extend(c.weights.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainLog,
    pub blend: BlendState,
    pub curves: BlendCurves,
}

/// Keras-style "no improvement for `patience` epochs" counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub best: f64,
    pub wait: usize,
    pub patience: usize,
}

impl Plateau {
    pub fn new(patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            wait: 0,
            patience,
        }
    }

    /// Returns true when the patience ran out (and resets the counter).
    pub fn observe(&mut self, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            self.wait = 0;
            return true;
        }
        false
    }
}

/// Learning rate after a plateau trigger.
pub fn reduced_lr(lr: f64, factor: f64, lr_min: f64) -> f64 {
    (lr * factor).max(lr_min)
}

/// Indices of the two half-epochs, each cut into batches. A trailing batch
/// of one sample is merged into the previous batch so batch statistics are
/// always defined.
pub fn epoch_batches(order: &[usize], batch_size: usize) -> [Vec<Vec<usize>>; 2] {
    let mid = order.len().div_ceil(2);
    let cut = |part: &[usize]| {
        let mut batches: Vec<Vec<usize>> = part.chunks(batch_size).map(<[usize]>::to_vec).collect();
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            let tail = batches.pop().unwrap();
            batches.last_mut().unwrap().extend(tail);
        }
        batches
    };
    [cut(&order[..mid]), cut(&order[mid..])]
}

/// Task losses of the model on a whole set in inference mode; triplets are
/// mined over all latents at once.
pub fn evaluate_losses(model: &mut MixNetModel, data: &LabeledTensors, margin: f64) -> Result<TaskLosses> {
    let n = data.len();
    let mut mse = 0.0;
    let mut ce = 0.0;
    let mut latents = Vec::with_capacity(n * model.dims.z);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let b = data.select(&rows);
        let out = model.forward(&b.x, Mode::Infer)?;
        mse += mse_loss(&b.x, &out.recon)?.0 * rows.len() as f64;
        ce += ce_loss(&b.labels, &out.probs)? * rows.len() as f64;
        latents.extend_from_slice(&out.latent.data);
    }
    let z = Tensor4::from_vec(n, 1, model.dims.z, latents)?;
    let mined = mine_semi_hard_triplets(&z, &data.labels, margin);
    let (trip, _) = triplet_loss(&z, &mined.triplets, margin);
    Ok(TaskLosses {
        mse: mse / n as f64,
        triplet: trip,
        ce: ce / n as f64,
    })
}

/// Class probabilities `[n][n_classes]` in inference mode.
pub fn predict_proba(model: &mut MixNetModel, x: &Tensor4) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(x.batch);
    for start in (0..x.batch).step_by(EVAL_CHUNK) {
        let rows: Vec<usize> = (start..(start + EVAL_CHUNK).min(x.batch)).collect();
        let z = model.encode(&x.gather(&rows), Mode::Infer)?;
        let p = model.classify(&z, Mode::Infer)?;
        out.extend((0..p.batch).map(|b| p.sample(b).to_vec()));
    }
    Ok(out)
}

/// Forward pass and unweighted task losses; triplets are mined on the
/// batch latents unless given.
pub fn joint_losses(
    model: &mut MixNetModel,
    batch: &LabeledTensors,
    margin: f64,
    triplets: Option<&[Triplet]>,
    mode: Mode,
) -> Result<TaskLosses> {
    let out = model.forward(&batch.x, mode)?;
    let mined;
    let triplets = match triplets {
        Some(t) => t,
        None => {
            mined = mine_semi_hard_triplets(&out.latent, &batch.labels, margin);
            &mined.triplets
        }
    };
    Ok(TaskLosses {
        mse: mse_loss(&batch.x, &out.recon)?.0,
        triplet: triplet_loss(&out.latent, triplets, margin).0,
        ce: ce_loss(&batch.labels, &out.probs)?,
    })
}

/// Forward and backward pass of `sum_m w_m L_m` in training mode. Parameter
/// gradients are reset first and hold the gradient of the weighted total
/// afterwards; returns the unweighted losses.
pub fn joint_backward(
    model: &mut MixNetModel,
    batch: &LabeledTensors,
    weights: &[f64; N_TASKS],
    margin: f64,
    triplets: Option<&[Triplet]>,
) -> Result<TaskLosses> {
    let out = model.forward(&batch.x, Mode::Train)?;
    let mined;
    let triplets = match triplets {
        Some(t) => t,
        None => {
            mined = mine_semi_hard_triplets(&out.latent, &batch.labels, margin);
            &mined.triplets
        }
    };
    let (mse, mut d_recon) = mse_loss(&batch.x, &out.recon)?;
    let (trip, d_trip) = triplet_loss(&out.latent, triplets, margin);
    let ce = ce_loss(&batch.labels, &out.probs)?;
    let losses = TaskLosses {
        mse,
        triplet: trip,
        ce,
    };
    let total = losses.weighted_total(weights)?;
    if !total.is_finite() {
        return Err(Error::Numerical(format!("non-finite training loss {losses:?}")));
    }
    model.zero_grad();
    d_recon.data.iter_mut().for_each(|g| *g *= weights[0]);
    let mut d_logits = ce_logit_grad(&batch.labels, &out.probs);
    d_logits.data.iter_mut().for_each(|g| *g *= weights[2]);
    let mut dz = model.decoder_backward(&d_recon)?;
    let dc = model.classifier_backward(&d_logits)?;
    for ((g, c), t) in dz.data.iter_mut().zip(&dc.data).zip(&d_trip.data) {
        *g += c + weights[1] * t;
    }
    model.encoder_backward(&dz)?;
    Ok(losses)
}

/// One optimisation step on a batch; returns the unweighted task losses.
pub fn train_step(
    model: &mut MixNetModel,
    adam: &mut Adam,
    batch: &LabeledTensors,
    weights: &[f64; N_TASKS],
    margin: f64,
    lr: f64,
) -> Result<TaskLosses> {
    let losses = joint_backward(model, batch, weights, margin, None)?;
    adam.step(&mut model.params_mut(), lr)?;
    Ok(losses)
}

fn monitored(kind: MonitorKind, val: &TaskLosses, weights: &[f64; N_TASKS]) -> Result<f64> {
    match kind {
        MonitorKind::Total => val.weighted_total(weights),
        MonitorKind::Ce => Ok(val.ce),
    }
}

/// Trains `model` in place and leaves it holding the best epoch's
/// parameters.
pub fn train(
    model: &mut MixNetModel,
    train_set: &LabeledTensors,
    val_set: &LabeledTensors,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.len() < 4 {
        return Err(Error::invalid("training needs at least 4 samples"));
    }
    if val_set.is_empty() {
        return Err(Error::invalid("training needs a non-empty validation set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new();
    let mut blend = BlendState::new(cfg.blend);
    let mut curves = BlendCurves::default();
    let mut weights = blend.weights;
    let mut lr = cfg.lr_init;
    let mut lr_rule = Plateau::new(cfg.lr_patience);
    let mut stop_rule = Plateau::new(cfg.early_stop_patience);
    let mut best = (f64::INFINITY, 0usize, 0usize, model.snapshot());
    let mut log = TrainLog {
        checkpoints: Vec::new(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_monitored: f64::INFINITY,
        stopped_early: false,
        final_checkpoint: 0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut checkpoint = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut last_val = TaskLosses::default();
        for half in epoch_batches(&order, cfg.batch_size) {
            let mut sums = [0.0; N_TASKS];
            let mut seen = 0usize;
            for rows in &half {
                let batch = train_set.select(rows);
                let l = train_step(model, &mut adam, &batch, &weights, cfg.alpha, lr)?;
                epoch_total += l.weighted_total(&weights)? * rows.len() as f64;
                for (s, v) in sums.iter_mut().zip(l.as_array()) {
                    *s += v * rows.len() as f64;
                }
                seen += rows.len();
            }
            let train_losses = TaskLosses::from_array(sums.map(|s| s / seen as f64));
            let val_losses = evaluate_losses(model, val_set, cfg.alpha)?;
            if !val_losses.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite validation loss {val_losses:?} at epoch {epoch}"
                )));
            }
            checkpoint += 1;
            for m in 0..N_TASKS {
                curves.record_checkpoint(
                    m,
                    checkpoint,
                    train_losses.as_array()[m],
                    val_losses.as_array()[m],
                )?;
            }
            weights = blend.update_weights(&curves, checkpoint)?;
            log.checkpoints.push(CheckpointRecord {
                checkpoint,
                epoch,
                train: train_losses,
                val: val_losses,
                weights,
                lr,
            });
            last_val = val_losses;
        }

        let value = monitored(cfg.monitor, &last_val, &weights)?;
        if value < best.0 {
            best = (value, epoch, checkpoint, model.snapshot());
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_total: epoch_total / train_set.len() as f64,
            monitored: value,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        });
        if lr_rule.observe(value) {
            lr = reduced_lr(lr, cfg.lr_factor, cfg.lr_min);
        }
        if stop_rule.observe(value) {
            log.stopped_early = true;
            break;
        }
    }

    model.restore(&best.3)?;
    log.best_monitored = best.0;
    log.best_epoch = best.1;
    log.final_checkpoint = best.2;
    Ok(TrainOutcome { log, blend, curves })
}
