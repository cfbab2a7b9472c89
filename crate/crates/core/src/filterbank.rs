//! Butterworth bandpass filter bank realised as second-order sections and
//! applied forward-backward (zero phase).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One biquad with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Section {
    /// Transfer function at `z`.
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = 1.0 + self.a[0] * zi + self.a[1] * zi * zi;
        num / den
    }

    /// Largest pole magnitude of the section.
    pub fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let p1 = (-a1 + disc) / 2.0;
        let p2 = (-a1 - disc) / 2.0;
        p1.norm().max(p2.norm())
    }

    /// Transposed direct-form II state reached after a unit step input has
    /// settled.
    fn step_state(&self) -> [f64; 2] {
        let dc = self.dc_gain();
        let s2 = self.b[2] - self.a[1] * dc;
        let s1 = self.b[1] - self.a[0] * dc + s2;
        [s1, s2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// A digital Butterworth bandpass filter in second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpassDesign {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub fs: f64,
    pub sections: Vec<Section>,
}

impl BandpassDesign {
    /// Single-pass complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq_hz / self.fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    /// Single-pass magnitude `|H(e^{jw})|`.
    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Magnitude of the forward-backward filter, `|H|^2`.
    pub fn zero_phase_gain(&self, freq_hz: f64) -> f64 {
        self.gain(freq_hz).powi(2)
    }

    /// Odd-reflection padding length applied at each edge.
    pub fn pad_len(&self) -> usize {
        3 * 2 * self.order
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections.iter().map(Section::pole_radius).fold(0.0, f64::max)
    }
}

/// Designs an `order`-th order Butterworth bandpass: analog lowpass
/// prototype, lowpass-to-bandpass transform around prewarped edges, bilinear
/// transform, then pairing of conjugate poles into `order` biquads each with
/// zeros at `z = 1` and `z = -1`.
pub fn design_bandpass(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<BandpassDesign> {
    if order == 0 {
        return Err(Error::invalid("filter order must be >= 1"));
    }
    if !(fs > 0.0) || !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::invalid(format!(
            "band edges must satisfy 0 < low < high < fs/2, got [{low_hz}, {high_hz}] at fs={fs}"
        )));
    }
    let two_fs = 2.0 * fs;
    let w_lo = two_fs * (PI * low_hz / fs).tan();
    let w_hi = two_fs * (PI * high_hz / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let mut analog_poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        // s^2 - p*bw*s + w0^2 = 0
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        analog_poles.push((pb + disc) / 2.0);
        analog_poles.push((pb - disc) / 2.0);
    }
    let digital: Vec<Complex64> = analog_poles
        .iter()
        .map(|&s| (two_fs + s) / (two_fs - s))
        .collect();

    // Overall gain: bw^N (2 fs)^N / prod(2 fs - s_p); real for conjugate sets.
    let mut gain = Complex64::new((bw * two_fs).powi(order as i32), 0.0);
    for &s in &analog_poles {
        gain /= two_fs - s;
    }
    let gain = gain.re;

    let pairs = pair_poles(&digital)?;
    if pairs.len() != order {
        return Err(Error::Numerical(format!(
            "expected {order} pole pairs, found {}",
            pairs.len()
        )));
    }
    let per_section = gain.abs().powf(1.0 / order as f64);
    let mut sections: Vec<Section> = pairs
        .into_iter()
        .map(|(p1, p2)| {
            let a1 = -(p1 + p2).re;
            let a2 = (p1 * p2).re;
            Section {
                b: [per_section, 0.0, -per_section],
                a: [a1, a2],
            }
        })
        .collect();
    if gain < 0.0 {
        for c in &mut sections[0].b {
            *c = -*c;
        }
    }
    let design = BandpassDesign {
        low_hz,
        high_hz,
        order,
        fs,
        sections,
    };
    let r = design.max_pole_radius();
    if !(r < 1.0) {
        return Err(Error::Numerical(format!(
            "unstable design: pole magnitude {r} >= 1"
        )));
    }
    Ok(design)
}

/// Groups poles into conjugate pairs; leftover real poles are paired with
/// each other.
fn pair_poles(poles: &[Complex64]) -> Result<Vec<(Complex64, Complex64)>> {
    const TOL: f64 = 1e-10;
    let mut pairs: Vec<(Complex64, Complex64)> = poles
        .iter()
        .filter(|p| p.im > TOL)
        .map(|&p| (p, p.conj()))
        .collect();
    let mut reals: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= TOL).map(|p| p.re).collect();
    if !reals.len().is_multiple_of(2) {
        return Err(Error::Numerical("odd number of real poles".into()));
    }
    reals.sort_by(|a, b| a.total_cmp(b));
    for chunk in reals.chunks(2) {
        pairs.push((Complex64::new(chunk[0], 0.0), Complex64::new(chunk[1], 0.0)));
    }
    pairs.sort_by(|a, b| a.0.arg().total_cmp(&b.0.arg()));
    Ok(pairs)
}

/// Runs the cascade over `x` with each section started at `x[0]` times its
/// step-settled state.
fn sosfilt_settled(sections: &[Section], x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let mut level = x[0];
    let mut states: Vec<[f64; 2]> = Vec::with_capacity(sections.len());
    for s in sections {
        let st = s.step_state();
        states.push([st[0] * level, st[1] * level]);
        level *= s.dc_gain();
    }
    for (s, st) in sections.iter().zip(states.iter_mut()) {
        for v in x.iter_mut() {
            let xin = *v;
            let y = s.b[0] * xin + st[0];
            st[0] = s.b[1] * xin - s.a[0] * y + st[1];
            st[1] = s.b[2] * xin - s.a[1] * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd-reflection edge padding of
/// `3 * 2 * order` samples.
pub fn zero_phase_filter(x: &[f64], design: &BandpassDesign) -> Result<Vec<f64>> {
    let pad = design.pad_len();
    let n = x.len();
    if n <= pad {
        return Err(Error::invalid(format!(
            "signal of {n} samples is too short for padding of {pad}"
        )));
    }
    let mut buf = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        buf.push(2.0 * x[0] - x[i]);
    }
    buf.extend_from_slice(x);
    for i in 1..=pad {
        buf.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    sosfilt_settled(&design.sections, &mut buf);
    buf.reverse();
    sosfilt_settled(&design.sections, &mut buf);
    buf.reverse();
    Ok(buf[pad..pad + n].to_vec())
}

/// Ordered set of bandpass designs sharing order and sampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub bands: Vec<(f64, f64)>,
    pub designs: Vec<BandpassDesign>,
}

pub const DEFAULT_ORDER: usize = 5;

/// `[4,8], [8,12], ..., [36,40]` Hz.
pub fn default_bands() -> Vec<(f64, f64)> {
    (0..9)
        .map(|k| (4.0 + 4.0 * k as f64, 8.0 + 4.0 * k as f64))
        .collect()
}

impl FilterBank {
    pub fn new(bands: &[(f64, f64)], order: usize, fs: f64) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("filter bank needs at least one band"));
        }
        let designs = bands
            .iter()
            .map(|&(lo, hi)| design_bandpass(lo, hi, order, fs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bands: bands.to_vec(),
            designs,
        })
    }

    /// Nine fifth-order 4 Hz bands over 4-40 Hz.
    pub fn default_bank(fs: f64) -> Result<Self> {
        Self::new(&default_bands(), DEFAULT_ORDER, fs)
    }

    pub fn len(&self) -> usize {
        self.designs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.designs.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.designs[0].fs
    }

    /// Filters every channel of a `[channel][time]` trial with every band.
    /// Output is `[band][channel][time]`.
    pub fn apply(&self, trial: &[f64], n_channels: usize, fs: f64) -> Result<Vec<f64>> {
        if (fs - self.fs()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "trial sampled at {fs} Hz but bank designed for {} Hz",
                self.fs()
            )));
        }
        if n_channels == 0 || !trial.len().is_multiple_of(n_channels) {
            return Err(Error::shape(format!(
                "{} samples do not split into {n_channels} channels",
                trial.len()
            )));
        }
        let t = trial.len() / n_channels;
        let mut out = Vec::with_capacity(self.len() * trial.len());
        for design in &self.designs {
            for ch in trial.chunks_exact(t) {
                out.extend(zero_phase_filter(ch, design)?);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`FilterBank::apply`].
pub fn apply_bank(trial: &[f64], n_channels: usize, fs: f64, bank: &FilterBank) -> Result<Vec<f64>> {
    bank.apply(trial, n_channels, fs)
}
