//! Reconstruction, triplet and cross-entropy losses with their gradients,
//! and the weighted combination used for training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Triplet;
use crate::nn::Tensor4;

pub const PROB_FLOOR: f64 = 1e-12;

/// Loss values of the three tasks, in task order (reconstruction, metric,
/// classification).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskLosses {
    pub mse: f64,
    pub triplet: f64,
    pub ce: f64,
}

impl TaskLosses {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mse, self.triplet, self.ce]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self {
            mse: v[0],
            triplet: v[1],
            ce: v[2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    pub fn weighted_total(&self, weights: &[f64; 3]) -> Result<f64> {
        weighted_total(&self.as_array(), weights)
    }
}

/// Batch mean of `(1/C) sum_j ||x_j - x_hat_j||^2`, the norm running over
/// time; returns the loss and its gradient with respect to `x_hat`.
pub fn mse_loss(x: &Tensor4, x_hat: &Tensor4) -> Result<(f64, Tensor4)> {
    if x.shape() != x_hat.shape() {
        return Err(Error::shape(format!(
            "reconstruction {:?} vs input {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let scale = 1.0 / (x.channels as f64 * x.batch as f64);
    let mut grad = x_hat.clone();
    let mut total = 0.0;
    for (g, &xv) in grad.data.iter_mut().zip(&x.data) {
        let r = *g - xv;
        total += r * r;
        *g = 2.0 * r * scale;
    }
    Ok((total * scale, grad))
}

/// `1/2 [||a-p||^2 - ||a-n||^2 + margin]_+` for single vectors.
pub fn triplet_term(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    0.5 * (sq_dist(a, p) - sq_dist(a, n) + margin).max(0.0)
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean triplet hinge over `triplets` (indices into the rows of
/// `latents`) and its gradient with respect to `latents`. An empty triplet
/// set gives zero loss and zero gradient.
pub fn triplet_loss(latents: &Tensor4, triplets: &[Triplet], margin: f64) -> (f64, Tensor4) {
    let mut grad = Tensor4::zeros(latents.batch, latents.width, latents.channels);
    if triplets.is_empty() {
        return (0.0, grad);
    }
    let d = latents.sample_len();
    let inv = 1.0 / triplets.len() as f64;
    let mut total = 0.0;
    for t in triplets {
        let a = latents.sample(t.anchor);
        let p = latents.sample(t.positive);
        let n = latents.sample(t.negative);
        let hinge = sq_dist(a, p) - sq_dist(a, n) + margin;
        if hinge <= 0.0 {
            continue;
        }
        total += 0.5 * hinge;
        // d/da = (a-p) - (a-n) = n - p ; d/dp = p - a ; d/dn = a - n
        for j in 0..d {
            let (av, pv, nv) = (a[j], p[j], n[j]);
            grad.data[t.anchor * d + j] += inv * (nv - pv);
            grad.data[t.positive * d + j] += inv * (pv - av);
            grad.data[t.negative * d + j] += inv * (av - nv);
        }
    }
    (total * inv, grad)
}

/// `-(1/N) sum_i log p_i[y_i]` with probabilities clipped to `[1e-12, 1]`.
pub fn ce_loss(labels: &[usize], probs: &Tensor4) -> Result<f64> {
    if labels.len() != probs.batch {
        return Err(Error::shape("label count differs from batch size"));
    }
    let mut total = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let p = probs
            .sample(b)
            .get(y)
            .copied()
            .ok_or_else(|| Error::invalid(format!("label {y} outside probability width")))?;
        total -= p.clamp(PROB_FLOOR, 1.0).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of softmax + mean cross-entropy with respect to the logits:
/// `(p - onehot(y)) / N`.
pub fn ce_logit_grad(labels: &[usize], probs: &Tensor4) -> Tensor4 {
    let mut g = probs.clone();
    let inv = 1.0 / labels.len() as f64;
    for (b, &y) in labels.iter().enumerate() {
        let row = g.sample_mut(b);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    g
}

/// `sum_m w_m L_m`; weights must be non-negative.
pub fn weighted_total(losses: &[f64; 3], weights: &[f64; 3]) -> Result<f64> {
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::invalid(format!("loss weight {w} is negative")));
    }
    Ok(losses.iter().zip(weights).map(|(l, w)| l * w).sum())
}
