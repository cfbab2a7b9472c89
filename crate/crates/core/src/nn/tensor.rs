use crate::error::{Error, Result};

/// `[batch, 1, width, channels]` tensor, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub batch: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(batch: usize, width: usize, channels: usize) -> Self {
        Self {
            batch,
            width,
            channels,
            data: vec![0.0; batch * width * channels],
        }
    }

    pub fn from_vec(batch: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * width * channels {
            return Err(Error::shape(format!(
                "{} values cannot fill ({batch}, 1, {width}, {channels})",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.batch, 1, self.width, self.channels]
    }

    /// Per-sample stride.
    pub fn sample_len(&self) -> usize {
        self.width * self.channels
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Same data viewed with a new `(width, channels)`; flatten and reshape
    /// are both this.
    pub fn reshaped(mut self, width: usize, channels: usize) -> Result<Self> {
        if width * channels != self.sample_len() {
            return Err(Error::shape(format!(
                "cannot reshape (1, {}, {}) into (1, {width}, {channels})",
                self.width, self.channels
            )));
        }
        self.width = width;
        self.channels = channels;
        Ok(self)
    }

    /// Stacks the listed samples of `self` into a new batch.
    pub fn gather(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.sample_len());
        for &r in rows {
            data.extend_from_slice(self.sample(r));
        }
        Self {
            batch: rows.len(),
            width: self.width,
            channels: self.channels,
            data,
        }
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_channels(&self, channels: usize, what: &str) -> Result<()> {
        if self.channels != channels {
            return Err(Error::shape(format!(
                "{what} expects {channels} channels, got {}",
                self.channels
            )));
        }
        Ok(())
    }
}
