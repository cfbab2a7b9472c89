//! Adaptive gradient blending of the task weights.
//!
//! Each task's train and validation loss curves are smoothed with an
//! `l`-point moving average and the slope of a least-squares line over the
//! last `l` checkpoints is taken as the curve's tangent. Against a per-task
//! reference checkpoint `n0` (the one with the steepest validation descent
//! so far) the generalisation and overfitting measures are
//!
//! ```text
//! G = tan_val(n) - tan_val(n0)
//! O = (tan_val(n) - tan_train(n)) - (tan_val(n0) - tan_train(n0))
//! w = (1/Z) G / O^p          (p = 2 by default)
//! ```
//!
//! with `G` floored at 0 and `O` at `1e-8`. During the warm-up the weights
//! stay uniform and the reference follows the current checkpoint.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_TASKS: usize = 3;
pub const TASK_NAMES: [&str; N_TASKS] = ["mse", "triplet", "ce"];
pub const O_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub checkpoint: usize,
    pub train: f64,
    pub val: f64,
}

/// Train/validation loss history of one task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<CurvePoint>,
}

impl LossCurve {
    pub fn record(&mut self, checkpoint: usize, train: f64, val: f64) -> Result<()> {
        if let Some(last) = self.points.last() {
            if checkpoint <= last.checkpoint {
                return Err(Error::invalid(format!(
                    "checkpoint {checkpoint} does not follow {}",
                    last.checkpoint
                )));
            }
        }
        if !train.is_finite() || !val.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at checkpoint {checkpoint}"
            )));
        }
        self.points.push(CurvePoint {
            checkpoint,
            train,
            val,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fitted `(train, val)` tangents over the last `window` points of the
    /// smoothed curves; `None` with fewer than 2 points.
    pub fn tangents(&self, window: usize) -> Option<(f64, f64)> {
        if self.points.len() < 2 {
            return None;
        }
        let idx: Vec<f64> = self.points.iter().map(|p| p.checkpoint as f64).collect();
        let train: Vec<f64> = self.points.iter().map(|p| p.train).collect();
        let val: Vec<f64> = self.points.iter().map(|p| p.val).collect();
        let slope = |v: &[f64]| {
            let s = moving_average(v, window);
            let from = s.len().saturating_sub(window.max(2));
            line_fit_slope(&idx[from..], &s[from..]).ok()
        };
        Some((slope(&train)?, slope(&val)?))
    }
}

/// The three task curves, recorded in lockstep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlendCurves {
    pub tasks: [LossCurve; N_TASKS],
}

impl BlendCurves {
    pub fn record_checkpoint(&mut self, task: usize, checkpoint: usize, train: f64, val: f64) -> Result<()> {
        self.tasks
            .get_mut(task)
            .ok_or_else(|| Error::invalid(format!("task index {task} out of range")))?
            .record(checkpoint, train, val)
    }
}

/// Trailing moving average; the first `window - 1` entries average what is
/// available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn line_fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("line fit needs equally many x and y values"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("line fit needs at least 2 points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("line fit needs distinct x values"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// `max(0, tan_val(n) - tan_val(n0))`.
pub fn generalization(tan_val: f64, ref_tan_val: f64) -> f64 {
    (tan_val - ref_tan_val).max(0.0)
}

/// Change of the validation/train tangent gap since the reference, floored
/// at [`O_FLOOR`].
pub fn overfitting(tan_val: f64, tan_train: f64, ref_tan_val: f64, ref_tan_train: f64) -> f64 {
    ((tan_val - tan_train) - (ref_tan_val - ref_tan_train)).max(O_FLOOR)
}

/// Normalised `G / O^exponent`; `None` when every `G` is zero.
pub fn blend_weights(g: &[f64], o: &[f64], exponent: f64) -> Option<Vec<f64>> {
    let raw: Vec<f64> = g.iter().zip(o).map(|(g, o)| g / o.powf(exponent)).collect();
    let z: f64 = raw.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return None;
    }
    Some(raw.into_iter().map(|w| w / z).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlendConfig {
    /// Warm-up length in epochs; blending starts after `2 * warmup_epochs`
    /// half-epoch checkpoints.
    pub warmup_epochs: usize,
    /// Line-fit and smoothing window in checkpoints.
    pub window: usize,
    /// Power of `O` in the denominator.
    pub exponent: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            warmup_epochs: 5,
            window: 3,
            exponent: 2.0,
        }
    }
}

impl BlendConfig {
    pub fn warmup_checkpoints(&self) -> usize {
        2 * self.warmup_epochs
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config("blend window must be >= 2 checkpoints".into()));
        }
        if self.window > self.warmup_checkpoints() {
            return Err(Error::Config(format!(
                "blend window ({}) must not exceed the warm-up ({} checkpoints)",
                self.window,
                self.warmup_checkpoints()
            )));
        }
        if !(self.exponent > 0.0) {
            return Err(Error::Config("blend exponent must be positive".into()));
        }
        Ok(())
    }
}

/// Reference checkpoint of one task and its tangents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub checkpoint: usize,
    pub tan_train: f64,
    pub tan_val: f64,
}

/// What one weight update saw and produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendRecord {
    pub checkpoint: usize,
    pub warmup: bool,
    pub tan_train: [f64; N_TASKS],
    pub tan_val: [f64; N_TASKS],
    pub g: [f64; N_TASKS],
    pub o: [f64; N_TASKS],
    /// Reference validation tangent after the update.
    pub ref_tan_val: [f64; N_TASKS],
    pub weights: [f64; N_TASKS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendState {
    pub config: BlendConfig,
    pub references: [Option<Reference>; N_TASKS],
    pub weights: [f64; N_TASKS],
    pub history: Vec<BlendRecord>,
}

impl BlendState {
    pub fn new(config: BlendConfig) -> Self {
        Self {
            config,
            references: [None; N_TASKS],
            weights: [1.0 / N_TASKS as f64; N_TASKS],
            history: Vec::new(),
        }
    }

    pub fn compute_g(&self, task: usize, tan_val: f64) -> Result<f64> {
        let r = self.reference(task)?;
        Ok(generalization(tan_val, r.tan_val))
    }

    pub fn compute_o(&self, task: usize, tan_train: f64, tan_val: f64) -> Result<f64> {
        let r = self.reference(task)?;
        Ok(overfitting(tan_val, tan_train, r.tan_val, r.tan_train))
    }

    fn reference(&self, task: usize) -> Result<Reference> {
        self.references
            .get(task)
            .copied()
            .flatten()
            .ok_or_else(|| Error::invalid(format!("task {task} has no reference checkpoint")))
    }

    /// Runs one blending step at checkpoint `n` and returns the weights to
    /// use until the next checkpoint.
    pub fn update_weights(&mut self, curves: &BlendCurves, n: usize) -> Result<[f64; N_TASKS]> {
        let mut tangents = [(f64::NAN, f64::NAN); N_TASKS];
        for (m, curve) in curves.tasks.iter().enumerate() {
            if let Some(t) = curve.tangents(self.config.window) {
                tangents[m] = t;
            }
        }
        let warmup = n < self.config.warmup_checkpoints();
        let mut g = [0.0; N_TASKS];
        let mut o = [0.0; N_TASKS];
        if warmup {
            self.weights = [1.0 / N_TASKS as f64; N_TASKS];
            for (m, &(tt, tv)) in tangents.iter().enumerate() {
                if tt.is_finite() && tv.is_finite() {
                    self.references[m] = Some(Reference {
                        checkpoint: n,
                        tan_train: tt,
                        tan_val: tv,
                    });
                }
            }
        } else {
            for (m, &(tt, tv)) in tangents.iter().enumerate() {
                if !(tt.is_finite() && tv.is_finite()) {
                    return Err(Error::invalid(format!(
                        "task {m} curve is too short to fit a tangent at checkpoint {n}"
                    )));
                }
                g[m] = self.compute_g(m, tv)?;
                o[m] = self.compute_o(m, tt, tv)?;
            }
            if let Some(w) = blend_weights(&g, &o, self.config.exponent) {
                self.weights.copy_from_slice(&w);
            }
            for (m, &(tt, tv)) in tangents.iter().enumerate() {
                let r = self.reference(m)?;
                if r.tan_val > tv {
                    self.references[m] = Some(Reference {
                        checkpoint: n,
                        tan_train: tt,
                        tan_val: tv,
                    });
                }
            }
        }
        let ref_tan_val = std::array::from_fn(|m| self.references[m].map_or(f64::NAN, |r| r.tan_val));
        self.history.push(BlendRecord {
            checkpoint: n,
            warmup,
            tan_train: tangents.map(|t| t.0),
            tan_val: tangents.map(|t| t.1),
            g,
            o,
            ref_tan_val,
            weights: self.weights,
        });
        Ok(self.weights)
    }
}

/// One row of the exported curve table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub checkpoint: usize,
    pub task: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub weight: f64,
}

/// Rows task by task; the weight is the one produced at that checkpoint.
pub fn curve_rows(curves: &BlendCurves, history: &[BlendRecord]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (m, curve) in curves.tasks.iter().enumerate() {
        for p in &curve.points {
            let weight = history
                .iter()
                .find(|r| r.checkpoint == p.checkpoint)
                .map_or(f64::NAN, |r| r.weights[m]);
            rows.push(CurveRow {
                checkpoint: p.checkpoint,
                task: m,
                train_loss: p.train,
                val_loss: p.val,
                weight,
            });
        }
    }
    rows
}

/// Writes `checkpoint,task,train_loss,val_loss,weight` rows after a
/// `# config_hash=...` header line.
pub fn write_curves_csv(path: &Path, rows: &[CurveRow], config_hash: &str) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["checkpoint", "task", "train_loss", "val_loss", "weight"])?;
    for r in rows {
        w.write_record([
            r.checkpoint.to_string(),
            TASK_NAMES[r.task].to_string(),
            format!("{:e}", r.train_loss),
            format!("{:e}", r.val_loss),
            format!("{:e}", r.weight),
        ])?;
    }
    w.flush()?;
    Ok(())
}
