use rand::Rng;

use super::{glorot_uniform, Layer, Mode, Param, Tensor4};
use crate::error::{Error, Result};

/// Fully connected layer on width-1 tensors: `y = x W + b`, `W` stored
/// `[in][out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub inputs: usize,
    pub outputs: usize,
    cache: Option<Tensor4>,
}

impl Dense {
    pub fn new<R: Rng>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(format!("{name}.kernel"), &[inputs, outputs], inputs, outputs, rng),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
            inputs,
            outputs,
            cache: None,
        }
    }

    fn check(&self, x: &Tensor4, channels: usize) -> Result<()> {
        if x.width != 1 || x.channels != channels {
            return Err(Error::shape(format!(
                "dense expects (B, 1, 1, {channels}), got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor4, _mode: Mode) -> Result<Tensor4> {
        self.check(x, self.inputs)?;
        let mut y = Tensor4::zeros(x.batch, 1, self.outputs);
        for b in 0..x.batch {
            let yo = y.sample_mut(b);
            yo.copy_from_slice(&self.bias.value);
            for (i, &xv) in x.sample(b).iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let row = &self.weight.value[i * self.outputs..(i + 1) * self.outputs];
                yo.iter_mut().zip(row).for_each(|(a, w)| *a += xv * w);
            }
        }
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("dense backward before forward"))?;
        self.check(dy, self.outputs)?;
        if dy.batch != x.batch {
            return Err(Error::shape("dense upstream batch size"));
        }
        let mut dx = Tensor4::zeros(x.batch, 1, self.inputs);
        for b in 0..x.batch {
            let d = dy.sample(b);
            self.bias.grad.iter_mut().zip(d).for_each(|(g, v)| *g += v);
            let xs = x.sample(b);
            let dxs = dx.sample_mut(b);
            for i in 0..self.inputs {
                let row = &self.weight.value[i * self.outputs..(i + 1) * self.outputs];
                dxs[i] = row.iter().zip(d).map(|(w, v)| w * v).sum();
                let grow = &mut self.weight.grad[i * self.outputs..(i + 1) * self.outputs];
                let xv = xs[i];
                grow.iter_mut().zip(d).for_each(|(g, v)| *g += xv * v);
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_weights() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new("d", 3, 3, &mut r);
        d.weight.value = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let x = Tensor4::from_vec(2, 1, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        assert_eq!(d.forward(&x, Mode::Infer).unwrap(), x);
        assert!(d.forward(&Tensor4::zeros(1, 2, 3), Mode::Infer).is_err());
    }
}
