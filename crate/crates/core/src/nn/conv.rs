//! Width-axis convolution (`Conv2D` with a `(1, k)` kernel, same padding)
//! and its adjoint, the transposed convolution.
//!
//! Kernels are stored `[tap][in][out]` for `Conv` and `[tap][out][in]` for
//! `ConvTranspose`, so that a transposed convolution with kernel `K` is the
//! exact adjoint of a convolution with the same `K`.

use rand::Rng;

use super::{glorot_uniform, Layer, Mode, Param, Tensor4};
use crate::error::{Error, Result};

/// Output width and left padding of a same-padded strided convolution.
pub fn same_padding(width: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = width.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(width);
    (out, total / 2)
}

/// Geometry shared by the three kernels below: a convolution mapping
/// `(w_in, c_in)` to `(w_out, c_out)`.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    w_in: usize,
    c_in: usize,
    w_out: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(w_in: usize, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        let (w_out, pad) = same_padding(w_in, kernel, stride);
        Self {
            w_in,
            c_in,
            w_out,
            c_out,
            kernel,
            stride,
            pad,
        }
    }

    /// Input position read by output `o` at tap `k`, if inside the signal.
    #[inline]
    fn src(&self, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.stride + k).checked_sub(self.pad)?;
        (i < self.w_in).then_some(i)
    }

    /// `y[o][co] += sum x[src(o,k)][ci] * K[k][ci][co]`.
    fn forward(&self, x: &[f64], kern: &[f64], y: &mut [f64]) {
        let (ci_n, co_n) = (self.c_in, self.c_out);
        for o in 0..self.w_out {
            let yo = &mut y[o * co_n..(o + 1) * co_n];
            for k in 0..self.kernel {
                let Some(i) = self.src(o, k) else { continue };
                let xi = &x[i * ci_n..(i + 1) * ci_n];
                let kk = &kern[k * ci_n * co_n..(k + 1) * ci_n * co_n];
                for (ci, &xv) in xi.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let row = &kk[ci * co_n..(ci + 1) * co_n];
                    for (acc, &w) in yo.iter_mut().zip(row) {
                        *acc += xv * w;
                    }
                }
            }
        }
    }

    /// Adjoint of `forward` in `x`: `dx[src(o,k)][ci] += sum_co K[k][ci][co] dy[o][co]`.
    fn adjoint(&self, dy: &[f64], kern: &[f64], dx: &mut [f64]) {
        let (ci_n, co_n) = (self.c_in, self.c_out);
        for o in 0..self.w_out {
            let dyo = &dy[o * co_n..(o + 1) * co_n];
            for k in 0..self.kernel {
                let Some(i) = self.src(o, k) else { continue };
                let dxi = &mut dx[i * ci_n..(i + 1) * ci_n];
                let kk = &kern[k * ci_n * co_n..(k + 1) * ci_n * co_n];
                for (ci, acc) in dxi.iter_mut().enumerate() {
                    let row = &kk[ci * co_n..(ci + 1) * co_n];
                    *acc += row.iter().zip(dyo).map(|(w, d)| w * d).sum::<f64>();
                }
            }
        }
    }

    /// Kernel gradient: `dK[k][ci][co] += x[src(o,k)][ci] dy[o][co]`.
    fn kernel_grad(&self, x: &[f64], dy: &[f64], dk: &mut [f64]) {
        let (ci_n, co_n) = (self.c_in, self.c_out);
        for o in 0..self.w_out {
            let dyo = &dy[o * co_n..(o + 1) * co_n];
            for k in 0..self.kernel {
                let Some(i) = self.src(o, k) else { continue };
                let xi = &x[i * ci_n..(i + 1) * ci_n];
                let dkk = &mut dk[k * ci_n * co_n..(k + 1) * ci_n * co_n];
                for (ci, &xv) in xi.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let row = &mut dkk[ci * co_n..(ci + 1) * co_n];
                    for (acc, &d) in row.iter_mut().zip(dyo) {
                        *acc += xv * d;
                    }
                }
            }
        }
    }
}

fn add_bias(y: &mut Tensor4, bias: &[f64]) {
    for row in y.data.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn bias_grad(dy: &Tensor4, grad: &mut [f64]) {
    for row in dy.data.chunks_exact(grad.len()) {
        for (g, d) in grad.iter_mut().zip(row) {
            *g += d;
        }
    }
}

/// Same-padded convolution along the width axis.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// When false, `backward` skips the input gradient and returns zeros.
    pub input_grad: bool,
    cache: Option<Tensor4>,
}

impl Conv {
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let weight = glorot_uniform(
            format!("{name}.kernel"),
            &[kernel, in_channels, out_channels],
            kernel * in_channels,
            kernel * out_channels,
            rng,
        );
        Self {
            weight,
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            input_grad: true,
            cache: None,
        }
    }

    fn geometry(&self, width: usize) -> Geometry {
        Geometry::new(
            width,
            self.in_channels,
            self.out_channels,
            self.kernel,
            self.stride,
        )
    }
}

impl Layer for Conv {
    fn forward(&mut self, x: &Tensor4, _mode: Mode) -> Result<Tensor4> {
        x.expect_channels(self.in_channels, "conv")?;
        let g = self.geometry(x.width);
        let mut y = Tensor4::zeros(x.batch, g.w_out, self.out_channels);
        for b in 0..x.batch {
            g.forward(x.sample(b), &self.weight.value, y.sample_mut(b));
        }
        add_bias(&mut y, &self.bias.value);
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("conv backward before forward"))?;
        let g = self.geometry(x.width);
        if dy.shape() != [x.batch, 1, g.w_out, self.out_channels] {
            return Err(Error::shape("conv upstream gradient shape"));
        }
        let mut dx = Tensor4::zeros(x.batch, x.width, self.in_channels);
        for b in 0..x.batch {
            g.kernel_grad(x.sample(b), dy.sample(b), &mut self.weight.grad);
            if self.input_grad {
                g.adjoint(dy.sample(b), &self.weight.value, dx.sample_mut(b));
            }
        }
        bias_grad(dy, &mut self.bias.grad);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed convolution: output width is `input width * stride`.
#[derive(Debug, Clone)]
pub struct ConvTranspose {
    /// `[tap][out][in]`.
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    cache: Option<Tensor4>,
}

impl ConvTranspose {
    pub fn new<R: Rng>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let weight = glorot_uniform(
            format!("{name}.kernel"),
            &[kernel, out_channels, in_channels],
            kernel * out_channels,
            kernel * in_channels,
            rng,
        );
        Self {
            weight,
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            cache: None,
        }
    }

    /// Geometry of the convolution this layer is the adjoint of.
    fn geometry(&self, width: usize) -> Geometry {
        Geometry::new(
            width * self.stride,
            self.out_channels,
            self.in_channels,
            self.kernel,
            self.stride,
        )
    }
}

impl Layer for ConvTranspose {
    fn forward(&mut self, x: &Tensor4, _mode: Mode) -> Result<Tensor4> {
        x.expect_channels(self.in_channels, "conv transpose")?;
        let g = self.geometry(x.width);
        debug_assert_eq!(g.w_out, x.width);
        let mut y = Tensor4::zeros(x.batch, g.w_in, self.out_channels);
        for b in 0..x.batch {
            g.adjoint(x.sample(b), &self.weight.value, y.sample_mut(b));
        }
        add_bias(&mut y, &self.bias.value);
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::invalid("conv transpose backward before forward"))?;
        let g = self.geometry(x.width);
        if dy.shape() != [x.batch, 1, g.w_in, self.out_channels] {
            return Err(Error::shape("conv transpose upstream gradient shape"));
        }
        let mut dx = Tensor4::zeros(x.batch, x.width, self.in_channels);
        for b in 0..x.batch {
            g.kernel_grad(dy.sample(b), x.sample(b), &mut self.weight.grad);
            g.forward(dy.sample(b), &self.weight.value, dx.sample_mut(b));
        }
        bias_grad(dy, &mut self.bias.grad);
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
