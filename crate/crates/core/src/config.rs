//! JSON run configuration.
//!
//! Every section has defaults, so `{}` is a complete config. Unknown keys
//! are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blend::BlendConfig;
use crate::error::{Error, Result};
use crate::filterbank::{default_bands, FilterBank, DEFAULT_ORDER};
use crate::metrics::F1Kind;
use crate::store;
use crate::trainer::{MonitorKind, TrainConfig};
use crate::trialdata::{generate_synthetic, load_trialset, SplitKind, SynthSpec, TrialSet};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset directory written by `save_trialset`.
    pub path: Option<PathBuf>,
    /// Synthetic dataset; its seed is replaced by the run seed.
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbcspConfig {
    pub u: usize,
    pub bands: Vec<(f64, f64)>,
    pub order: usize,
}

impl Default for FbcspConfig {
    fn default() -> Self {
        Self {
            u: 4,
            bands: default_bands(),
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Latent size; `None` means `U * N_b`.
    pub z: Option<usize>,
    /// Triplet margin.
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { z: None, alpha: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    /// `None` picks 32 for subject-dependent and 100 for
    /// subject-independent runs.
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
    pub monitor: MonitorKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr_init: t.lr_init,
            lr_min: t.lr_min,
            lr_factor: t.lr_factor,
            lr_patience: t.lr_patience,
            early_stop_patience: t.early_stop_patience,
            batch_size: None,
            max_epochs: t.max_epochs,
            monitor: t.monitor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub kind: SplitKind,
    pub k: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: SplitKind::SubjectDependent,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub f1: F1Kind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub fbcsp: FbcspConfig,
    pub model: ModelConfig,
    pub blend: BlendConfig,
    pub train: TrainSection,
    pub protocol: ProtocolConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            fbcsp: FbcspConfig::default(),
            model: ModelConfig::default(),
            blend: BlendConfig::default(),
            train: TrainSection::default(),
            protocol: ProtocolConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Seed of an independent stream derived from the run seed (SplitMix64
/// finaliser over `seed` and `stream`).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Fingerprint of the canonical JSON serialisation, ignoring the output
    /// directory.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        store::fingerprint(&bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.path.is_some() && self.data.synth.is_some() {
            return Err(Error::Config(
                "data.path and data.synth are mutually exclusive".into(),
            ));
        }
        if let Some(spec) = &self.data.synth {
            spec.validate()
                .map_err(|e| Error::Config(format!("data.synth: {e}")))?;
        }
        if self.fbcsp.u == 0 || !self.fbcsp.u.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "fbcsp.u must be a positive even number, got {}",
                self.fbcsp.u
            )));
        }
        if self.fbcsp.bands.is_empty() {
            return Err(Error::Config("fbcsp.bands must not be empty".into()));
        }
        if self.model.z == Some(0) {
            return Err(Error::Config("model.z must be positive".into()));
        }
        if self.protocol.k < 2 {
            return Err(Error::Config("protocol.k must be >= 2".into()));
        }
        self.train_config(0).validate()
    }

    pub fn latent_size(&self) -> usize {
        self.model.z.unwrap_or(self.fbcsp.u * self.fbcsp.bands.len())
    }

    pub fn batch_size(&self) -> usize {
        self.train.batch_size.unwrap_or(match self.protocol.kind {
            SplitKind::SubjectDependent => 32,
            SplitKind::SubjectIndependent => 100,
        })
    }

    /// Trainer settings for outer fold `fold`.
    pub fn train_config(&self, fold: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr_init: t.lr_init,
            lr_min: t.lr_min,
            lr_factor: t.lr_factor,
            lr_patience: t.lr_patience,
            early_stop_patience: t.early_stop_patience,
            batch_size: self.batch_size(),
            max_epochs: t.max_epochs,
            alpha: self.model.alpha,
            monitor: t.monitor,
            blend: self.blend,
            seed: derive_seed(self.seed, 2 * fold as u64 + 1),
        }
    }

    pub fn model_seed(&self, fold: usize) -> u64 {
        derive_seed(self.seed, 2 * fold as u64 + 2)
    }

    pub fn filter_bank(&self, fs: f64) -> Result<FilterBank> {
        FilterBank::new(&self.fbcsp.bands, self.fbcsp.order, fs)
    }

    /// Loads or generates the dataset.
    pub fn load_data(&self) -> Result<TrialSet> {
        match (&self.data.path, &self.data.synth) {
            (Some(p), _) => load_trialset(p),
            (None, spec) => {
                let spec = SynthSpec {
                    seed: self.seed,
                    ..spec.clone().unwrap_or_default()
                };
                generate_synthetic(&spec)
            }
        }
    }

    /// Applies one sweep assignment such as `U=4` or `alpha=1.5`.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<()> {
        let bad =
            |e: &dyn std::fmt::Display| Error::Config(format!("invalid value {value:?} for {key}: {e}"));
        let int = || value.trim().parse::<usize>().map_err(|e| bad(&e));
        let real = || value.trim().parse::<f64>().map_err(|e| bad(&e));
        match key.trim() {
            "U" | "u" => self.fbcsp.u = int()?,
            "z" => self.model.z = Some(int()?),
            "alpha" => self.model.alpha = real()?,
            "W_warm" | "warmup_epochs" => self.blend.warmup_epochs = int()?,
            "window" => self.blend.window = int()?,
            "exponent" => self.blend.exponent = real()?,
            "k" => self.protocol.k = int()?,
            "seed" => self.seed = value.trim().parse().map_err(|e| bad(&e))?,
            "max_epochs" => self.train.max_epochs = int()?,
            "batch_size" => self.train.batch_size = Some(int()?),
            "lr_init" => self.train.lr_init = real()?,
            other => return Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
        Ok(())
    }
}

/// One named axis of a sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=v1,v2;key2=v3` into axes.
pub fn parse_grid(text: &str) -> Result<Vec<GridAxis>> {
    let mut axes = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid entry {part:?} lacks '='")))?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::Config(format!("grid entry {part:?} has no values")));
        }
        axes.push(GridAxis {
            key: key.trim().to_string(),
            values,
        });
    }
    if axes.is_empty() {
        return Err(Error::Config("empty sweep grid".into()));
    }
    Ok(axes)
}

/// Cartesian product of the axes, first axis slowest.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let c = RunConfig::from_json_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.latent_size(), 36);
        assert_eq!(c.batch_size(), 32);
        assert_eq!(c.model.alpha, 5.0);
        assert_eq!(c.blend.warmup_epochs, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json_str(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"model": {"beta": 1}}"#).is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let e = RunConfig::from_json_str("{\n \"seed\": ,\n}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn grid_product() {
        let axes = parse_grid("U=2,4; alpha=1,5,10").unwrap();
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(
            pts[1],
            vec![("U".into(), "2".into()), ("alpha".into(), "5".into())]
        );
        let mut c = RunConfig::default();
        for (k, v) in &pts[5] {
            c.set_param(k, v).unwrap();
        }
        assert_eq!((c.fbcsp.u, c.model.alpha), (4, 10.0));
        assert!(c.set_param("bogus", "1").is_err());
        assert!(parse_grid("U").is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let c = RunConfig::default();
        assert_ne!(c.model_seed(0), c.model_seed(1));
        assert_ne!(c.train_config(0).seed, c.model_seed(0));
    }
}
