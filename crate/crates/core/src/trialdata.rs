//! Trial containers, the on-disk dataset format, a seeded synthetic EEG
//! generator and cross-validation split plans.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{self, Dtype};

pub const TRIALSET_FORMAT: &str = "mixnet-trialset";
pub const TRIALSET_VERSION: u32 = 1;
const SIGNALS_FILE: &str = "signals.f32";

/// A set of equally shaped EEG trials, stored row-major as
/// `[trial][channel][time]` in 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    signals: Vec<f32>,
    n_trials: usize,
    n_channels: usize,
    n_times: usize,
    labels: Vec<usize>,
    subject_ids: Vec<u32>,
    session_ids: Vec<u32>,
    n_classes: usize,
    fs: f64,
}

impl TrialSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        signals: Vec<f32>,
        n_channels: usize,
        n_times: usize,
        labels: Vec<usize>,
        subject_ids: Vec<u32>,
        session_ids: Vec<u32>,
        n_classes: usize,
        fs: f64,
    ) -> Result<Self> {
        let n_trials = labels.len();
        if n_trials == 0 {
            return Err(Error::invalid("a trial set needs at least one trial"));
        }
        if n_channels == 0 || n_times == 0 {
            return Err(Error::invalid("channels and time points must be positive"));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if signals.len() != n_trials * n_channels * n_times {
            return Err(Error::shape(format!(
                "{} samples do not fill {n_trials}x{n_channels}x{n_times}",
                signals.len()
            )));
        }
        if subject_ids.len() != n_trials || session_ids.len() != n_trials {
            return Err(Error::shape("subject/session id count differs from label count"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!("label {bad} >= n_classes {n_classes}")));
        }
        Ok(Self {
            signals,
            n_trials,
            n_channels,
            n_times,
            labels,
            subject_ids,
            session_ids,
            n_classes,
            fs,
        })
    }

    pub fn len(&self) -> usize {
        self.n_trials
    }

    pub fn is_empty(&self) -> bool {
        self.n_trials == 0
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[u32] {
        &self.subject_ids
    }

    pub fn session_ids(&self) -> &[u32] {
        &self.session_ids
    }

    pub fn signals(&self) -> &[f32] {
        &self.signals
    }

    /// Trial `i` as a `[channel][time]` slice.
    pub fn trial(&self, i: usize) -> &[f32] {
        let n = self.n_channels * self.n_times;
        &self.signals[i * n..(i + 1) * n]
    }

    /// Trial `i` widened to 64-bit, `[channel][time]`.
    pub fn trial_f64(&self, i: usize) -> Vec<f64> {
        self.trial(i).iter().map(|&v| v as f64).collect()
    }

    /// New set holding the given trials in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<TrialSet> {
        if let Some(bad) = indices.iter().find(|&&i| i >= self.n_trials) {
            return Err(Error::invalid(format!("trial index {bad} out of range")));
        }
        let mut signals = Vec::with_capacity(indices.len() * self.n_channels * self.n_times);
        for &i in indices {
            signals.extend_from_slice(self.trial(i));
        }
        TrialSet::new(
            signals,
            self.n_channels,
            self.n_times,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.subject_ids[i]).collect(),
            indices.iter().map(|&i| self.session_ids[i]).collect(),
            self.n_classes,
            self.fs,
        )
    }

    /// Same trials with labels replaced; used for permutation controls.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<TrialSet> {
        TrialSet::new(
            self.signals.clone(),
            self.n_channels,
            self.n_times,
            labels,
            self.subject_ids.clone(),
            self.session_ids.clone(),
            self.n_classes,
            self.fs,
        )
    }

    pub fn subjects(&self) -> Vec<u32> {
        self.subject_ids
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrialSetManifest {
    format: String,
    version: u32,
    endianness: String,
    dtype: Dtype,
    layout: String,
    n_trials: usize,
    n_channels: usize,
    n_times: usize,
    n_classes: usize,
    fs: f64,
    labels: Vec<usize>,
    subject_ids: Vec<u32>,
    session_ids: Vec<u32>,
    blob: String,
}

/// Writes `set` into directory `dir` as `manifest.json` plus a float32 blob.
pub fn save_trialset(set: &TrialSet, dir: &Path) -> Result<()> {
    if set.is_empty() {
        return Err(Error::invalid("refusing to save an empty trial set"));
    }
    fs::create_dir_all(dir)?;
    let manifest = TrialSetManifest {
        format: TRIALSET_FORMAT.into(),
        version: TRIALSET_VERSION,
        endianness: store::ENDIANNESS.into(),
        dtype: Dtype::F32,
        layout: "trial,channel,time".into(),
        n_trials: set.n_trials,
        n_channels: set.n_channels,
        n_times: set.n_times,
        n_classes: set.n_classes,
        fs: set.fs,
        labels: set.labels.clone(),
        subject_ids: set.subject_ids.clone(),
        session_ids: set.session_ids.clone(),
        blob: SIGNALS_FILE.into(),
    };
    store::write_json(&dir.join(store::MANIFEST_FILE), &manifest)?;
    let bytes: Vec<u8> = set.signals.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(SIGNALS_FILE), bytes)?;
    Ok(())
}

pub fn load_trialset(dir: &Path) -> Result<TrialSet> {
    let m: TrialSetManifest = store::read_json(&dir.join(store::MANIFEST_FILE))?;
    if m.format != TRIALSET_FORMAT {
        return Err(Error::Format(format!("unknown format tag {:?}", m.format)));
    }
    if m.version != TRIALSET_VERSION {
        return Err(Error::Format(format!("unknown format version {}", m.version)));
    }
    if m.endianness != store::ENDIANNESS || m.dtype != Dtype::F32 {
        return Err(Error::Format("trial blobs must be little-endian float32".into()));
    }
    if m.labels.len() != m.n_trials {
        return Err(Error::Format(format!(
            "manifest lists {} labels for {} trials",
            m.labels.len(),
            m.n_trials
        )));
    }
    let bytes = fs::read(dir.join(&m.blob))?;
    let expected = m.n_trials * m.n_channels * m.n_times;
    if bytes.len() != expected * 4 {
        return Err(Error::Format(format!(
            "size mismatch: manifest expects {expected} float32 values, blob holds {} bytes",
            bytes.len()
        )));
    }
    let signals = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    TrialSet::new(
        signals,
        m.n_channels,
        m.n_times,
        m.labels,
        m.subject_ids,
        m.session_ids,
        m.n_classes,
        m.fs,
    )
}

/// Parameters of the two-source synthetic generator.
///
/// Class `c` trials carry a sinusoid at `class_freqs[c]` projected onto the
/// channels through `mixing[c]`, plus white Gaussian noise. Every subject
/// gets its own random orthogonal rotation of the mixing vectors and its
/// own source phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub n_sessions: usize,
    pub trials_per_class_per_session: usize,
    pub n_channels: usize,
    pub fs: f64,
    pub duration: f64,
    pub class_freqs: Vec<f64>,
    pub mixing: Vec<Vec<f64>>,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 2,
            n_sessions: 2,
            trials_per_class_per_session: 50,
            n_channels: 8,
            fs: 100.0,
            duration: 4.0,
            class_freqs: vec![10.0, 22.0],
            mixing: default_mixing(8),
            noise_std: 1.0,
            seed: 0,
        }
    }
}

/// Opposing linear ramps over the channels: class 0 strongest on the first
/// channel, class 1 on the last.
pub fn default_mixing(n_channels: usize) -> Vec<Vec<f64>> {
    let ramp: Vec<f64> = (0..n_channels)
        .map(|j| {
            let frac = if n_channels > 1 {
                j as f64 / (n_channels - 1) as f64
            } else {
                0.0
            };
            1.0 - 0.9 * frac
        })
        .collect();
    let mut reversed = ramp.clone();
    reversed.reverse();
    vec![ramp, reversed]
}

impl SynthSpec {
    pub fn n_times(&self) -> Result<usize> {
        let samples = self.duration * self.fs;
        let rounded = samples.round();
        if !(samples > 0.0) || (samples - rounded).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "duration * fs = {samples} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.n_times()?;
        if self.n_channels < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 channels"));
        }
        if self.class_freqs.len() < 2 || self.mixing.len() != self.class_freqs.len() {
            return Err(Error::invalid(
                "need one mixing vector per class and at least two classes",
            ));
        }
        if let Some(v) = self.mixing.iter().find(|v| v.len() != self.n_channels) {
            return Err(Error::invalid(format!(
                "mixing vector has length {}, expected {}",
                v.len(),
                self.n_channels
            )));
        }
        if self.n_subjects == 0 || self.n_sessions == 0 || self.trials_per_class_per_session == 0 {
            return Err(Error::invalid(
                "subject, session and trial counts must be positive",
            ));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Per-subject randomisation: rotated mixing vectors and per-class phases.
#[derive(Debug, Clone)]
pub struct SubjectDraw {
    pub mixing: Vec<Vec<f64>>,
    pub phases: Vec<f64>,
}

fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Haar-distributed orthogonal matrix: fix the QR sign ambiguity.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Deterministic synthetic trial set; a pure function of `spec`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<TrialSet> {
    spec.validate()?;
    let t = spec.n_times()?;
    let nc = spec.n_channels;
    let n_classes = spec.class_freqs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.n_subjects * spec.n_sessions * spec.trials_per_class_per_session * n_classes;
    let mut signals = Vec::with_capacity(total * nc * t);
    let mut labels = Vec::with_capacity(total);
    let mut subject_ids = Vec::with_capacity(total);
    let mut session_ids = Vec::with_capacity(total);

    for subject in 0..spec.n_subjects {
        let draw = draw_subject(spec, &mut rng);
        for session in 0..spec.n_sessions {
            for _ in 0..spec.trials_per_class_per_session {
                for class in 0..n_classes {
                    let f = spec.class_freqs[class];
                    let phase = draw.phases[class];
                    let v = &draw.mixing[class];
                    for &gain in v.iter().take(nc) {
                        for n in 0..t {
                            let s = (2.0 * PI * f * n as f64 / spec.fs + phase).sin();
                            let noise: f64 = if spec.noise_std > 0.0 {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                spec.noise_std * z
                            } else {
                                0.0
                            };
                            signals.push((gain * s + noise) as f32);
                        }
                    }
                    labels.push(class);
                    subject_ids.push(subject as u32);
                    session_ids.push(session as u32);
                }
            }
        }
    }
    TrialSet::new(
        signals,
        nc,
        t,
        labels,
        subject_ids,
        session_ids,
        n_classes,
        spec.fs,
    )
}

fn draw_subject(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> SubjectDraw {
    let rot = random_rotation(spec.n_channels, rng);
    let mixing = spec
        .mixing
        .iter()
        .map(|v| {
            let rotated = &rot * nalgebra::DVector::from_column_slice(v);
            rotated.iter().copied().collect()
        })
        .collect();
    let phases = (0..spec.class_freqs.len())
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    SubjectDraw { mixing, phases }
}

/// The per-subject mixing vectors and phases `generate_synthetic` uses for
/// `subject` (replays the generator's random stream).
pub fn subject_draw(spec: &SynthSpec, subject: usize) -> Result<SubjectDraw> {
    spec.validate()?;
    let t = spec.n_times()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_subject_noise = if spec.noise_std > 0.0 {
        spec.n_sessions * spec.trials_per_class_per_session * spec.class_freqs.len() * spec.n_channels * t
    } else {
        0
    };
    for s in 0..=subject {
        let draw = draw_subject(spec, &mut rng);
        if s == subject {
            return Ok(draw);
        }
        for _ in 0..per_subject_noise {
            let _: f64 = StandardNormal.sample(&mut rng);
        }
    }
    unreachable!("loop returns at s == subject")
}

/// Cross-validation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Per subject: first session is the train/validation pool, the remaining
    /// sessions are the test set.
    SubjectDependent,
    /// Leave one subject out: the other subjects form the pool.
    SubjectIndependent,
}

/// One inner fold of one outer split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    /// Subject evaluated by this fold (the held-out subject for LOSO).
    pub subject: u32,
    pub inner: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for part in [&self.train, &self.val, &self.test] {
            bytes.extend_from_slice(store::index_fingerprint(part).as_bytes());
            bytes.push(b'|');
        }
        store::fingerprint(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    pub fn fingerprint(&self) -> String {
        let joined: Vec<String> = self.folds.iter().map(Fold::fingerprint).collect();
        store::fingerprint(joined.join(",").as_bytes())
    }
}

/// Stratified k-fold assignment of `pool`; returns the validation index
/// lists. Classes are dealt round-robin after a seeded shuffle, so per-class
/// counts across folds differ by at most one.
fn stratified_folds(
    set: &TrialSet,
    pool: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in 0..set.n_classes() {
        let mut members: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| set.labels()[i] == class)
            .collect();
        if members.is_empty() {
            return Err(Error::invalid(format!(
                "class {class} is absent from a split pool"
            )));
        }
        members.shuffle(rng);
        for idx in members {
            folds[next % k].push(idx);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn inner_folds(
    set: &TrialSet,
    subject: u32,
    pool: &[usize],
    test: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Fold>> {
    let vals = stratified_folds(set, pool, k, rng)?;
    Ok(vals
        .into_iter()
        .enumerate()
        .map(|(inner, val)| {
            let val_set: BTreeSet<usize> = val.iter().copied().collect();
            let train = pool.iter().copied().filter(|i| !val_set.contains(i)).collect();
            Fold {
                subject,
                inner,
                train,
                val,
                test: test.to_vec(),
            }
        })
        .collect())
}

pub fn make_splits(set: &TrialSet, kind: SplitKind, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = set.subjects();
    let mut folds = Vec::new();
    match kind {
        SplitKind::SubjectDependent => {
            for &s in &subjects {
                let sessions: BTreeSet<u32> = (0..set.len())
                    .filter(|&i| set.subject_ids()[i] == s)
                    .map(|i| set.session_ids()[i])
                    .collect();
                if sessions.len() < 2 {
                    return Err(Error::invalid(format!(
                        "subject {s} has {} session(s); subject-dependent splits need 2",
                        sessions.len()
                    )));
                }
                let first = *sessions.iter().next().unwrap();
                let (pool, test): (Vec<usize>, Vec<usize>) = (0..set.len())
                    .filter(|&i| set.subject_ids()[i] == s)
                    .partition(|&i| set.session_ids()[i] == first);
                folds.extend(inner_folds(set, s, &pool, &test, k, &mut rng)?);
            }
        }
        SplitKind::SubjectIndependent => {
            if subjects.len() < 2 {
                return Err(Error::invalid(
                    "leave-one-subject-out splits need at least 2 subjects",
                ));
            }
            for &s in &subjects {
                let (test, pool): (Vec<usize>, Vec<usize>) =
                    (0..set.len()).partition(|&i| set.subject_ids()[i] == s);
                folds.extend(inner_folds(set, s, &pool, &test, k, &mut rng)?);
            }
        }
    }
    Ok(SplitPlan { kind, k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            n_subjects: 1,
            trials_per_class_per_session: 20,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noise_free_trials_are_rank_one() {
        let spec = SynthSpec {
            n_subjects: 2,
            trials_per_class_per_session: 2,
            noise_std: 0.0,
            ..SynthSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let t = set.n_times();
        for subject in 0..2 {
            let draw = subject_draw(&spec, subject).unwrap();
            let i = set
                .subject_ids()
                .iter()
                .position(|&s| s == subject as u32)
                .unwrap();
            let class = set.labels()[i];
            let trial = set.trial(i);
            for ch in 0..set.n_channels() {
                for n in 0..t {
                    let want = draw.mixing[class][ch]
                        * (2.0 * PI * spec.class_freqs[class] * n as f64 / spec.fs + draw.phases[class])
                            .sin();
                    assert!((trial[ch * t + n] as f64 - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn noise_free_variance_ratio_is_squared_mixing_ratio() {
        let spec = SynthSpec {
            n_subjects: 1,
            trials_per_class_per_session: 1,
            noise_std: 0.0,
            ..SynthSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let draw = subject_draw(&spec, 0).unwrap();
        let t = set.n_times();
        let var = |trial: &[f32], ch: usize| {
            let row = &trial[ch * t..(ch + 1) * t];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
            row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t as f64
        };
        let (a, b) = (set.trial(0), set.trial(1));
        for ch in 0..set.n_channels() {
            let ratio = var(a, ch) / var(b, ch);
            let want = (draw.mixing[0][ch] / draw.mixing[1][ch]).powi(2);
            assert!((ratio / want - 1.0).abs() < 1e-4, "ch {ch}: {ratio} vs {want}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SynthSpec {
            seed: 1,
            ..spec.clone()
        };
        assert_ne!(
            generate_synthetic(&spec).unwrap().signals(),
            generate_synthetic(&other).unwrap().signals()
        );
    }

    #[test]
    fn rejects_fractional_sample_count_and_one_channel() {
        let spec = SynthSpec {
            duration: 4.005,
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
        let spec = SynthSpec {
            n_channels: 1,
            mixing: vec![vec![1.0], vec![0.5]],
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn save_load_roundtrip_is_bitwise() {
        let set = generate_synthetic(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_trialset(&set, dir.path()).unwrap();
        let back = load_trialset(dir.path()).unwrap();
        assert_eq!(set.signals().len(), back.signals().len());
        assert!(set
            .signals()
            .iter()
            .zip(back.signals())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(set, back);
    }

    #[test]
    fn truncated_blob_is_a_size_mismatch() {
        let spec = SynthSpec {
            n_subjects: 1,
            n_sessions: 1,
            trials_per_class_per_session: 5,
            ..SynthSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        assert_eq!(set.len(), 10);
        let dir = tempfile::tempdir().unwrap();
        save_trialset(&set, dir.path()).unwrap();
        let blob = dir.path().join(SIGNALS_FILE);
        let bytes = fs::read(&blob).unwrap();
        let per_trial = set.n_channels() * set.n_times() * 4;
        fs::write(&blob, &bytes[..bytes.len() - per_trial]).unwrap();
        let err = load_trialset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn unknown_version_is_rejected() {
        let set = generate_synthetic(&small_spec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_trialset(&set, dir.path()).unwrap();
        let path = dir.path().join(store::MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 9");
        fs::write(&path, text).unwrap();
        assert!(load_trialset(dir.path())
            .unwrap_err()
            .to_string()
            .contains("version"));
    }

    #[test]
    fn empty_set_cannot_exist_or_be_saved() {
        assert!(TrialSet::new(vec![], 2, 4, vec![], vec![], vec![], 2, 100.0).is_err());
    }

    #[test]
    fn subject_dependent_split_arithmetic() {
        let set = generate_synthetic(&small_spec()).unwrap();
        let plan = make_splits(&set, SplitKind::SubjectDependent, 5, 7).unwrap();
        assert_eq!(plan.folds.len(), 5);
        for fold in &plan.folds {
            for class in 0..2 {
                let n = fold.val.iter().filter(|&&i| set.labels()[i] == class).count();
                assert_eq!(n, 4);
            }
            assert_eq!(fold.test.len(), 40);
            assert!(fold.test.iter().all(|&i| set.session_ids()[i] == 1));
            assert_eq!(fold.train.len(), 32);
        }
    }

    #[test]
    fn loso_has_one_outer_fold_per_subject() {
        let spec = SynthSpec {
            n_subjects: 3,
            n_sessions: 1,
            trials_per_class_per_session: 10,
            ..SynthSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        let plan = make_splits(&set, SplitKind::SubjectIndependent, 5, 0).unwrap();
        assert_eq!(plan.folds.len(), 15);
        for s in 0..3u32 {
            let folds: Vec<_> = plan.folds.iter().filter(|f| f.subject == s).collect();
            assert_eq!(folds.len(), 5);
            for f in folds {
                assert!(f.test.iter().all(|&i| set.subject_ids()[i] == s));
                assert_eq!(f.test.len(), 20);
                assert!(f.train.iter().chain(&f.val).all(|&i| set.subject_ids()[i] != s));
            }
        }
    }

    #[test]
    fn split_preconditions() {
        let spec = SynthSpec {
            n_subjects: 1,
            n_sessions: 1,
            trials_per_class_per_session: 10,
            ..SynthSpec::default()
        };
        let set = generate_synthetic(&spec).unwrap();
        assert!(make_splits(&set, SplitKind::SubjectDependent, 5, 0).is_err());
        assert!(make_splits(&set, SplitKind::SubjectIndependent, 5, 0).is_err());
        let set2 = generate_synthetic(&small_spec()).unwrap();
        assert!(make_splits(&set2, SplitKind::SubjectDependent, 1, 0).is_err());
        // one class only in the pool
        let only0: Vec<usize> = (0..set2.len()).filter(|&i| set2.labels()[i] == 0).collect();
        let sub = set2.subset(&only0).unwrap();
        assert!(make_splits(&sub, SplitKind::SubjectDependent, 2, 0).is_err());
    }
}
