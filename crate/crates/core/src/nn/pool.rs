use super::{Layer, Mode, Tensor4};
use crate::error::{Error, Result};

/// Non-overlapping mean pooling along the width axis.
#[derive(Debug, Clone)]
pub struct AvgPool {
    pub pool: usize,
    input_width: Option<usize>,
}

impl AvgPool {
    pub fn new(pool: usize) -> Self {
        Self {
            pool,
            input_width: None,
        }
    }
}

impl Layer for AvgPool {
    fn forward(&mut self, x: &Tensor4, _mode: Mode) -> Result<Tensor4> {
        if self.pool == 0 || !x.width.is_multiple_of(self.pool) {
            return Err(Error::shape(format!(
                "width {} is not divisible by pool {}",
                x.width, self.pool
            )));
        }
        let c = x.channels;
        let w_out = x.width / self.pool;
        let mut y = Tensor4::zeros(x.batch, w_out, c);
        let scale = 1.0 / self.pool as f64;
        for b in 0..x.batch {
            let xs = x.sample(b);
            let ys = y.sample_mut(b);
            for o in 0..w_out {
                let yo = &mut ys[o * c..(o + 1) * c];
                for p in 0..self.pool {
                    let i = o * self.pool + p;
                    yo.iter_mut()
                        .zip(&xs[i * c..(i + 1) * c])
                        .for_each(|(a, v)| *a += v);
                }
                yo.iter_mut().for_each(|a| *a *= scale);
            }
        }
        self.input_width = Some(x.width);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let w_in = self
            .input_width
            .ok_or_else(|| Error::invalid("pool backward before forward"))?;
        if dy.width * self.pool != w_in {
            return Err(Error::shape("pool upstream gradient shape"));
        }
        let c = dy.channels;
        let scale = 1.0 / self.pool as f64;
        let mut dx = Tensor4::zeros(dy.batch, w_in, c);
        for b in 0..dy.batch {
            let ds = dy.sample(b);
            let xs = dx.sample_mut(b);
            for i in 0..w_in {
                let o = i / self.pool;
                xs[i * c..(i + 1) * c]
                    .iter_mut()
                    .zip(&ds[o * c..(o + 1) * c])
                    .for_each(|(a, d)| *a = d * scale);
            }
        }
        Ok(dx)
    }
}
