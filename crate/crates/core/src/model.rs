//! The multi-task network: a convolutional encoder to a latent vector, a
//! transposed-convolution decoder back to the input shape, and a softmax
//! classifier on the latent. The latent also feeds the triplet objective.
//!
//! Shape chain for input `(1, t, C)` with `C = U * N_b`:
//!
//! ```text
//! encoder  conv(1,64) C -> BN -> ELU -> avgpool(t/100)  (1, 100, C)
//!          conv(1,32) C/2 -> BN -> ELU -> avgpool(4)    (1, 25, C/2)
//!          flatten (25*C/2) -> dense                    (z)
//! decoder  dense (25*C/2) -> reshape                    (1, 25, C/2)
//!          convT(1,64) stride 4 C/2 -> ELU              (1, 100, C/2)
//!          convT(1,32) stride t/100 C -> ELU            (1, t, C)
//! head     dense N_class -> softmax
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::sq_dist;
use crate::nn::{
    softmax_rows, AvgPool, BatchNorm, Conv, ConvTranspose, Dense, Elu, Layer, Mode, Param, Tensor4,
};
use crate::store::{self, Dtype};

/// Width after the two encoder pooling stages.
pub const BOTTLENECK_WIDTH: usize = 25;
const MID_WIDTH: usize = 100;

pub const CHECKPOINT_FORMAT: &str = "mixnet-checkpoint";
const CHECKPOINT_BLOB: &str = "params.f32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub t: usize,
    pub u: usize,
    pub n_bands: usize,
    pub z: usize,
    pub n_classes: usize,
}

impl ModelDims {
    pub fn channels(&self) -> usize {
        self.u * self.n_bands
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.channels() / 2
    }

    pub fn flat_len(&self) -> usize {
        BOTTLENECK_WIDTH * self.bottleneck_channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || !self.t.is_multiple_of(MID_WIDTH) {
            return Err(Error::invalid(format!(
                "time points must be a positive multiple of {MID_WIDTH}, got {}",
                self.t
            )));
        }
        if self.channels() == 0 || !self.channels().is_multiple_of(2) {
            return Err(Error::invalid("U * N_b must be even and positive"));
        }
        if self.z == 0 || self.n_classes < 2 {
            return Err(Error::invalid("latent size must be >= 1 and classes >= 2"));
        }
        Ok(())
    }
}

/// Outputs of one joint forward pass.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub latent: Tensor4,
    pub recon: Tensor4,
    pub logits: Tensor4,
    pub probs: Tensor4,
}

#[derive(Debug, Clone)]
pub struct MixNetModel {
    pub dims: ModelDims,
    enc_conv1: Conv,
    enc_bn1: BatchNorm,
    enc_elu1: Elu,
    enc_pool1: AvgPool,
    enc_conv2: Conv,
    enc_bn2: BatchNorm,
    enc_elu2: Elu,
    enc_pool2: AvgPool,
    latent: Dense,
    dec_fc: Dense,
    dec_convt1: ConvTranspose,
    dec_elu1: Elu,
    dec_convt2: ConvTranspose,
    dec_elu2: Elu,
    classifier: Dense,
}

/// Parameter values and batch-norm statistics, detached from caches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    values: Vec<Vec<f64>>,
}

impl MixNetModel {
    /// Glorot-initialised model; deterministic in `seed`.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = dims.channels();
        let h = dims.bottleneck_channels();
        let pool1 = dims.t / MID_WIDTH;
        let mut enc_conv1 = Conv::new("encoder.conv1", c, c, 64, 1, &mut rng);
        enc_conv1.input_grad = false;
        Ok(Self {
            dims,
            enc_conv1,
            enc_bn1: BatchNorm::new("encoder.bn1", c),
            enc_elu1: Elu::new(),
            enc_pool1: AvgPool::new(pool1),
            enc_conv2: Conv::new("encoder.conv2", c, h, 32, 1, &mut rng),
            enc_bn2: BatchNorm::new("encoder.bn2", h),
            enc_elu2: Elu::new(),
            enc_pool2: AvgPool::new(MID_WIDTH / BOTTLENECK_WIDTH),
            latent: Dense::new("latent.fc", dims.flat_len(), dims.z, &mut rng),
            dec_fc: Dense::new("decoder.fc", dims.z, dims.flat_len(), &mut rng),
            dec_convt1: ConvTranspose::new("decoder.convt1", h, h, 64, 4, &mut rng),
            dec_elu1: Elu::new(),
            dec_convt2: ConvTranspose::new("decoder.convt2", h, c, 32, pool1, &mut rng),
            dec_elu2: Elu::new(),
            classifier: Dense::new("classifier.fc", dims.z, dims.n_classes, &mut rng),
        })
    }

    /// Enables the input gradient of the first convolution (only needed for
    /// gradient checks against the input).
    pub fn set_input_grad(&mut self, on: bool) {
        self.enc_conv1.input_grad = on;
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let want = [x.batch, 1, self.dims.t, self.dims.channels()];
        if x.shape() != want {
            return Err(Error::shape(format!(
                "model expects {want:?}, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn encode(&mut self, x: &Tensor4, mode: Mode) -> Result<Tensor4> {
        self.check_input(x)?;
        let h = self.enc_conv1.forward(x, mode)?;
        let h = self.enc_bn1.forward(&h, mode)?;
        let h = self.enc_elu1.forward(&h, mode)?;
        let h = self.enc_pool1.forward(&h, mode)?;
        let h = self.enc_conv2.forward(&h, mode)?;
        let h = self.enc_bn2.forward(&h, mode)?;
        let h = self.enc_elu2.forward(&h, mode)?;
        let h = self.enc_pool2.forward(&h, mode)?;
        let flat = h.reshaped(1, self.dims.flat_len())?;
        self.latent.forward(&flat, mode)
    }

    pub fn decode(&mut self, z: &Tensor4, mode: Mode) -> Result<Tensor4> {
        let h = self.dec_fc.forward(z, mode)?;
        let h = h.reshaped(BOTTLENECK_WIDTH, self.dims.bottleneck_channels())?;
        let h = self.dec_convt1.forward(&h, mode)?;
        let h = self.dec_elu1.forward(&h, mode)?;
        let h = self.dec_convt2.forward(&h, mode)?;
        self.dec_elu2.forward(&h, mode)
    }

    pub fn classify_logits(&mut self, z: &Tensor4, mode: Mode) -> Result<Tensor4> {
        self.classifier.forward(z, mode)
    }

    pub fn classify(&mut self, z: &Tensor4, mode: Mode) -> Result<Tensor4> {
        Ok(softmax_rows(&self.classify_logits(z, mode)?))
    }

    pub fn forward(&mut self, x: &Tensor4, mode: Mode) -> Result<Outputs> {
        let latent = self.encode(x, mode)?;
        let recon = self.decode(&latent, mode)?;
        let logits = self.classify_logits(&latent, mode)?;
        let probs = softmax_rows(&logits);
        Ok(Outputs {
            latent,
            recon,
            logits,
            probs,
        })
    }

    /// Backpropagates through the decoder; returns the latent gradient.
    pub fn decoder_backward(&mut self, d_recon: &Tensor4) -> Result<Tensor4> {
        let g = self.dec_elu2.backward(d_recon)?;
        let g = self.dec_convt2.backward(&g)?;
        let g = self.dec_elu1.backward(&g)?;
        let g = self.dec_convt1.backward(&g)?;
        let g = g.reshaped(1, self.dims.flat_len())?;
        self.dec_fc.backward(&g)
    }

    /// Backpropagates through the classifier head; returns the latent
    /// gradient.
    pub fn classifier_backward(&mut self, d_logits: &Tensor4) -> Result<Tensor4> {
        self.classifier.backward(d_logits)
    }

    /// Backpropagates a latent gradient through the encoder; returns the
    /// input gradient (zeros unless [`set_input_grad`](Self::set_input_grad)).
    pub fn encoder_backward(&mut self, d_latent: &Tensor4) -> Result<Tensor4> {
        let g = self.latent.backward(d_latent)?;
        let g = g.reshaped(BOTTLENECK_WIDTH, self.dims.bottleneck_channels())?;
        let g = self.enc_pool2.backward(&g)?;
        let g = self.enc_elu2.backward(&g)?;
        let g = self.enc_bn2.backward(&g)?;
        let g = self.enc_conv2.backward(&g)?;
        let g = self.enc_pool1.backward(&g)?;
        let g = self.enc_elu1.backward(&g)?;
        let g = self.enc_bn1.backward(&g)?;
        self.enc_conv1.backward(&g)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        v.extend(self.enc_conv1.params());
        v.extend(self.enc_bn1.params());
        v.extend(self.enc_conv2.params());
        v.extend(self.enc_bn2.params());
        v.extend(self.latent.params());
        v.extend(self.dec_fc.params());
        v.extend(self.dec_convt1.params());
        v.extend(self.dec_convt2.params());
        v.extend(self.classifier.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        v.extend(self.enc_conv1.params_mut());
        v.extend(self.enc_bn1.params_mut());
        v.extend(self.enc_conv2.params_mut());
        v.extend(self.enc_bn2.params_mut());
        v.extend(self.latent.params_mut());
        v.extend(self.dec_fc.params_mut());
        v.extend(self.dec_convt1.params_mut());
        v.extend(self.dec_convt2.params_mut());
        v.extend(self.classifier.params_mut());
        v
    }

    pub fn n_trainable(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn buffers(&self) -> Vec<(String, &Vec<f64>)> {
        vec![
            ("encoder.bn1.running_mean".into(), &self.enc_bn1.running_mean),
            ("encoder.bn1.running_var".into(), &self.enc_bn1.running_var),
            ("encoder.bn2.running_mean".into(), &self.enc_bn2.running_mean),
            ("encoder.bn2.running_var".into(), &self.enc_bn2.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.enc_bn1.running_mean,
            &mut self.enc_bn1.running_var,
            &mut self.enc_bn2.running_mean,
            &mut self.enc_bn2.running_var,
        ]
    }

    /// Every named array that defines the model: trainables then buffers.
    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = self
            .params()
            .into_iter()
            .map(|p| (p.name.clone(), p.shape.clone(), p.value.as_slice()))
            .collect();
        for (name, b) in self.buffers() {
            out.push((name, vec![b.len()], b.as_slice()));
        }
        out
    }

    pub fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            values: self
                .named_arrays()
                .into_iter()
                .map(|(_, _, v)| v.to_vec())
                .collect(),
        }
    }

    pub fn restore(&mut self, snap: &ModelSnapshot) -> Result<()> {
        let mut it = snap.values.iter();
        let mut next = |len: usize| -> Result<&Vec<f64>> {
            let v = it
                .next()
                .ok_or_else(|| Error::shape("snapshot has too few arrays"))?;
            if v.len() != len {
                return Err(Error::shape("snapshot array length mismatch"));
            }
            Ok(v)
        };
        for p in self.params_mut() {
            let v = next(p.len())?;
            p.value.copy_from_slice(v);
        }
        for b in self.buffers_mut() {
            let v = next(b.len())?;
            b.copy_from_slice(v);
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointManifest {
    format: String,
    version: u32,
    endianness: String,
    dtype: Dtype,
    dims: ModelDims,
    config_hash: String,
    entries: Vec<CheckpointEntry>,
    blob: String,
}

/// Writes the named parameters as a manifest plus one float32 blob.
pub fn save_checkpoint(model: &MixNetModel, dir: &Path, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut values = Vec::new();
    for (name, shape, v) in model.named_arrays() {
        entries.push(CheckpointEntry {
            name,
            shape,
            offset: values.len(),
            len: v.len(),
        });
        values.extend_from_slice(v);
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        endianness: store::ENDIANNESS.into(),
        dtype: Dtype::F32,
        dims: model.dims,
        config_hash: config_hash.into(),
        entries,
        blob: CHECKPOINT_BLOB.into(),
    };
    store::write_json(&dir.join(store::MANIFEST_FILE), &manifest)?;
    store::write_blob(&dir.join(CHECKPOINT_BLOB), &values, Dtype::F32)
}

pub fn load_checkpoint(dir: &Path) -> Result<MixNetModel> {
    let m: CheckpointManifest = store::read_json(&dir.join(store::MANIFEST_FILE))?;
    if m.format != CHECKPOINT_FORMAT || m.version != 1 {
        return Err(Error::Format(format!(
            "unsupported checkpoint format {} v{}",
            m.format, m.version
        )));
    }
    let total: usize = m.entries.iter().map(|e| e.len).sum();
    let values = store::read_blob(&dir.join(&m.blob), m.dtype, total)?;
    let mut model = MixNetModel::new(m.dims, 0)?;
    let expected: Vec<(String, Vec<usize>)> =
        model.named_arrays().into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected.len() != m.entries.len() {
        return Err(Error::Format("checkpoint array count mismatch".into()));
    }
    let mut arrays = Vec::with_capacity(m.entries.len());
    for ((name, shape), e) in expected.iter().zip(&m.entries) {
        if *name != e.name || *shape != e.shape || e.offset + e.len > values.len() {
            return Err(Error::Format(format!("unexpected checkpoint entry {}", e.name)));
        }
        arrays.push(values[e.offset..e.offset + e.len].to_vec());
    }
    model.restore(&ModelSnapshot { values: arrays })?;
    Ok(model)
}

/// Indices of one anchor / positive / negative triple within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// How a triplet's negative was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiningBranch {
    /// `d(a,p) < d(a,n) < d(a,p) + margin`.
    SemiHard,
    /// Closest negative beyond the positive, outside the margin.
    Easy,
    /// No negative beyond the positive: closest negative overall.
    Hardest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub triplets: Vec<Triplet>,
    pub branches: Vec<MiningBranch>,
    pub margin: f64,
}

impl TripletBatch {
    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }
}

/// Online semi-hard mining over every (anchor, positive) pair in a batch
/// using squared Euclidean distances. A single-class batch yields an empty
/// set.
pub fn mine_semi_hard_triplets(latents: &Tensor4, labels: &[usize], margin: f64) -> TripletBatch {
    let n = latents.batch;
    let mut triplets = Vec::new();
    let mut branches = Vec::new();
    let dist = |i: usize, j: usize| sq_dist(latents.sample(i), latents.sample(j));
    for a in 0..n {
        let negatives: Vec<(usize, f64)> = (0..n)
            .filter(|&j| labels[j] != labels[a])
            .map(|j| (j, dist(a, j)))
            .collect();
        if negatives.is_empty() {
            continue;
        }
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let d_ap = dist(a, p);
            let closest_where = |pred: &dyn Fn(f64) -> bool| {
                negatives
                    .iter()
                    .filter(|(_, d)| pred(*d))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .map(|&(j, _)| j)
            };
            let (neg, branch) = if let Some(j) = closest_where(&|d| d > d_ap && d < d_ap + margin) {
                (j, MiningBranch::SemiHard)
            } else if let Some(j) = closest_where(&|d| d > d_ap) {
                (j, MiningBranch::Easy)
            } else {
                (
                    closest_where(&|_| true).expect("negatives non-empty"),
                    MiningBranch::Hardest,
                )
            };
            triplets.push(Triplet {
                anchor: a,
                positive: p,
                negative: neg,
            });
            branches.push(branch);
        }
    }
    TripletBatch {
        triplets,
        branches,
        margin,
    }
}
