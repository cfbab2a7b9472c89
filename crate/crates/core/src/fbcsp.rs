//! Filter-bank CSP front end: bandpass every band, fit CSP per band on the
//! training trials, and emit channels-last `(1, t, U * N_b)` tensors.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::csp::{class_covariance, csp_apply, csp_fit};
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::store::{self, Dtype};
use crate::trialdata::TrialSet;

pub const TRANSFORM_FORMAT: &str = "mixnet-fbcsp";
const TRANSFORM_BLOB: &str = "filters.f64";

/// Network input for one trial: `(1, t, U * N_b)` with band-major channel
/// order (band `k` occupies channels `k*U .. k*U + U`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSpatialTensor {
    pub values: Vec<f64>,
    pub n_times: usize,
    pub n_channels: usize,
}

impl SpectralSpatialTensor {
    pub fn shape(&self) -> [usize; 3] {
        [1, self.n_times, self.n_channels]
    }
}

/// Fitted per-band spatial filters plus the filter bank that feeds them.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSpatialTransform {
    pub bank: FilterBank,
    /// One `[N_c, U]` matrix per band.
    pub per_band_filters: Vec<DMatrix<f64>>,
    pub u: usize,
    pub n_input_channels: usize,
    /// Fingerprint of the training indices the filters were fitted on.
    pub fitted_on: String,
}

impl SpectralSpatialTransform {
    pub fn n_bands(&self) -> usize {
        self.per_band_filters.len()
    }

    pub fn output_channels(&self) -> usize {
        self.u * self.n_bands()
    }
}

/// Fits per-band CSP on `set[train]`. Labels must cover exactly classes 0
/// and 1.
pub fn fbcsp_fit(
    set: &TrialSet,
    train: &[usize],
    bank: &FilterBank,
    u: usize,
) -> Result<SpectralSpatialTransform> {
    let nc = set.n_channels();
    if u > nc {
        return Err(Error::invalid(format!(
            "{u} spatial filters requested but only {nc} channels"
        )));
    }
    if set.n_classes() != 2 {
        return Err(Error::invalid("filter-bank CSP needs a binary trial set"));
    }
    let mut counts = [0usize; 2];
    for &i in train {
        if i >= set.len() {
            return Err(Error::invalid(format!("train index {i} out of range")));
        }
        counts[set.labels()[i]] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::invalid(format!(
            "both classes must be present in the training set, counts {counts:?}"
        )));
    }

    let t = set.n_times();
    let banded: Vec<Vec<f64>> = train
        .iter()
        .map(|&i| bank.apply(&set.trial_f64(i), nc, set.fs()))
        .collect::<Result<_>>()?;

    let mut per_band_filters = Vec::with_capacity(bank.len());
    for k in 0..bank.len() {
        let block = |j: usize| &banded[j][k * nc * t..(k + 1) * nc * t];
        let mut by_class: [Vec<&[f64]>; 2] = [Vec::new(), Vec::new()];
        for (j, &i) in train.iter().enumerate() {
            by_class[set.labels()[i]].push(block(j));
        }
        let c1 = class_covariance(&by_class[0], nc, 0)?;
        let c2 = class_covariance(&by_class[1], nc, 1)?;
        per_band_filters.push(csp_fit(&c1.sigma, &c2.sigma, u)?.w_selected);
    }
    Ok(SpectralSpatialTransform {
        bank: bank.clone(),
        per_band_filters,
        u,
        n_input_channels: nc,
        fitted_on: store::index_fingerprint(train),
    })
}

/// Filters and projects one `[channel][time]` trial.
pub fn fbcsp_transform(
    xf: &SpectralSpatialTransform,
    trial: &[f64],
    n_channels: usize,
    fs: f64,
) -> Result<SpectralSpatialTensor> {
    if n_channels != xf.n_input_channels {
        return Err(Error::shape(format!(
            "transform fitted on {} channels, trial has {n_channels}",
            xf.n_input_channels
        )));
    }
    let banded = xf.bank.apply(trial, n_channels, fs)?;
    let t = trial.len() / n_channels;
    let c = xf.output_channels();
    let mut values = vec![0.0; t * c];
    for (k, w) in xf.per_band_filters.iter().enumerate() {
        let block = &banded[k * n_channels * t..(k + 1) * n_channels * t];
        let z = csp_apply(w, block, n_channels)?;
        for f in 0..xf.u {
            let ch = k * xf.u + f;
            for n in 0..t {
                values[n * c + ch] = z[f * t + n];
            }
        }
    }
    Ok(SpectralSpatialTensor {
        values,
        n_times: t,
        n_channels: c,
    })
}

/// Transforms `set[indices]` in order.
pub fn transform_trials(
    xf: &SpectralSpatialTransform,
    set: &TrialSet,
    indices: &[usize],
) -> Result<Vec<SpectralSpatialTensor>> {
    indices
        .iter()
        .map(|&i| fbcsp_transform(xf, &set.trial_f64(i), set.n_channels(), set.fs()))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformManifest {
    format: String,
    version: u32,
    endianness: String,
    dtype: Dtype,
    layout: String,
    bands: Vec<(f64, f64)>,
    order: usize,
    fs: f64,
    u: usize,
    n_input_channels: usize,
    fitted_on: String,
    config_hash: String,
    blob: String,
}

pub fn save_transform(xf: &SpectralSpatialTransform, dir: &Path, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = TransformManifest {
        format: TRANSFORM_FORMAT.into(),
        version: 1,
        endianness: store::ENDIANNESS.into(),
        dtype: Dtype::F64,
        layout: "band,channel,filter".into(),
        bands: xf.bank.bands.clone(),
        order: xf.bank.designs[0].order,
        fs: xf.bank.fs(),
        u: xf.u,
        n_input_channels: xf.n_input_channels,
        fitted_on: xf.fitted_on.clone(),
        config_hash: config_hash.into(),
        blob: TRANSFORM_BLOB.into(),
    };
    store::write_json(&dir.join(store::MANIFEST_FILE), &manifest)?;
    let mut values = Vec::new();
    for w in &xf.per_band_filters {
        for ch in 0..w.nrows() {
            values.extend(w.row(ch).iter());
        }
    }
    store::write_blob(&dir.join(TRANSFORM_BLOB), &values, Dtype::F64)
}

pub fn load_transform(dir: &Path) -> Result<SpectralSpatialTransform> {
    let m: TransformManifest = store::read_json(&dir.join(store::MANIFEST_FILE))?;
    if m.format != TRANSFORM_FORMAT || m.version != 1 {
        return Err(Error::Format(format!(
            "unsupported transform format {} v{}",
            m.format, m.version
        )));
    }
    let bank = FilterBank::new(&m.bands, m.order, m.fs)?;
    let per = m.n_input_channels * m.u;
    let values = store::read_blob(&dir.join(&m.blob), m.dtype, per * m.bands.len())?;
    let per_band_filters = values
        .chunks_exact(per)
        .map(|c| DMatrix::from_row_slice(m.n_input_channels, m.u, c))
        .collect();
    Ok(SpectralSpatialTransform {
        bank,
        per_band_filters,
        u: m.u,
        n_input_channels: m.n_input_channels,
        fitted_on: m.fitted_on,
    })
}
