use super::{Layer, Mode, Tensor4};
use crate::error::{Error, Result};

/// `x` for `x > 0`, `e^x - 1` otherwise (alpha = 1).
#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Elu {
    cache: Option<Tensor4>,
}

impl Elu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Elu {
    fn forward(&mut self, x: &Tensor4, _mode: Mode) -> Result<Tensor4> {
        let mut y = x.clone();
        y.data.iter_mut().for_each(|v| *v = elu(*v));
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("elu backward before forward"))?;
        if x.shape() != dy.shape() {
            return Err(Error::shape("elu upstream gradient shape"));
        }
        let mut dx = dy.clone();
        dx.data
            .iter_mut()
            .zip(&x.data)
            .for_each(|(d, &v)| *d *= elu_grad(v));
        Ok(dx)
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Row-wise softmax over the channel axis of a width-1 tensor.
pub fn softmax_rows(logits: &Tensor4) -> Tensor4 {
    let mut out = logits.clone();
    for row in out.data.chunks_exact_mut(logits.channels) {
        let p = softmax(row);
        row.copy_from_slice(&p);
    }
    out
}
