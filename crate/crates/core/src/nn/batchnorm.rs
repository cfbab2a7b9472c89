use super::{Layer, Mode, Param, Tensor4};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-channel batch normalisation over batch and width.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Tensor4,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[channels], 1.0),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPSILON,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Tensor4, mode: Mode) -> Result<Tensor4> {
        let c = self.channels();
        x.expect_channels(c, "batch norm")?;
        let (mean, var) = match mode {
            Mode::Train => {
                if x.batch < 2 {
                    return Err(Error::invalid(
                        "batch norm needs a batch of at least 2 in training",
                    ));
                }
                let n = (x.batch * x.width) as f64;
                let mut mean = vec![0.0; c];
                for row in x.data.chunks_exact(c) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; c];
                for row in x.data.chunks_exact(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                for j in 0..c {
                    self.running_mean[j] =
                        self.momentum * self.running_mean[j] + (1.0 - self.momentum) * mean[j];
                    self.running_var[j] =
                        self.momentum * self.running_var[j] + (1.0 - self.momentum) * var[j];
                }
                (mean, var)
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for (hr, yr) in x_hat.data.chunks_exact_mut(c).zip(y.data.chunks_exact_mut(c)) {
            for j in 0..c {
                let h = (hr[j] - mean[j]) * inv_std[j];
                hr[j] = h;
                yr[j] = self.gamma.value[j] * h + self.beta.value[j];
            }
        }
        self.cache = Some(BnCache { x_hat, inv_std, mode });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("batch norm backward before forward"))?;
        if dy.shape() != cache.x_hat.shape() {
            return Err(Error::shape("batch norm upstream gradient shape"));
        }
        let c = self.channels();
        let n = (dy.batch * dy.width) as f64;
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (d, h) in dy.data.chunks_exact(c).zip(cache.x_hat.data.chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += d[j];
                sum_dy_xhat[j] += d[j] * h[j];
            }
        }
        for j in 0..c {
            self.beta.grad[j] += sum_dy[j];
            self.gamma.grad[j] += sum_dy_xhat[j];
        }
        let mut dx = dy.clone();
        for (o, h) in dx.data.chunks_exact_mut(c).zip(cache.x_hat.data.chunks_exact(c)) {
            for j in 0..c {
                let scale = self.gamma.value[j] * cache.inv_std[j];
                o[j] = match cache.mode {
                    Mode::Train => scale * (o[j] - sum_dy[j] / n - h[j] * sum_dy_xhat[j] / n),
                    Mode::Infer => scale * o[j],
                };
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
