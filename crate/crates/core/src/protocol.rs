//! Outer evaluation loop: per fold, fit the front end on the training
//! indices only, train, and score on the held-out test trials.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fbcsp::{fbcsp_fit, transform_trials, SpectralSpatialTransform};
use crate::metrics::{score, EvalReport, FoldResult};
use crate::model::{MixNetModel, ModelDims};
use crate::store;
use crate::trainer::{predict_proba, train, LabeledTensors, TrainOutcome};
use crate::trialdata::{Fold, SplitPlan, TrialSet};

/// Network inputs of one fold's three partitions.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub transform: SpectralSpatialTransform,
    pub train: LabeledTensors,
    pub val: LabeledTensors,
    pub test: LabeledTensors,
}

/// Everything one trained fold produced.
#[derive(Debug, Clone)]
pub struct FoldRun {
    pub result: FoldResult,
    pub model: MixNetModel,
    pub transform: SpectralSpatialTransform,
    pub outcome: TrainOutcome,
}

/// Errors unless the fold's partitions are pairwise disjoint.
pub fn check_disjoint(fold: &Fold) -> Result<()> {
    let test: BTreeSet<usize> = fold.test.iter().copied().collect();
    let train: BTreeSet<usize> = fold.train.iter().copied().collect();
    if fold.train.iter().chain(&fold.val).any(|i| test.contains(i)) {
        return Err(Error::invalid(format!(
            "fold {}/{} leaks test trials into training",
            fold.subject, fold.inner
        )));
    }
    if fold.val.iter().any(|i| train.contains(i)) {
        return Err(Error::invalid(format!(
            "fold {}/{} shares trials between train and validation",
            fold.subject, fold.inner
        )));
    }
    Ok(())
}

/// Transforms `set[idx]` into network inputs with labels.
pub fn labeled_partition(
    set: &TrialSet,
    xf: &SpectralSpatialTransform,
    idx: &[usize],
) -> Result<LabeledTensors> {
    let labels = idx.iter().map(|&i| set.labels()[i]).collect();
    LabeledTensors::from_spectral(&transform_trials(xf, set, idx)?, labels)
}

/// Fits the filter-bank CSP on `fold.train` and transforms all partitions.
pub fn prepare_fold(set: &TrialSet, fold: &Fold, cfg: &RunConfig) -> Result<FoldData> {
    check_disjoint(fold)?;
    let bank = cfg.filter_bank(set.fs())?;
    let transform = fbcsp_fit(set, &fold.train, &bank, cfg.fbcsp.u)?;
    if transform.fitted_on != store::index_fingerprint(&fold.train) {
        return Err(Error::invalid(
            "transform was not fitted on the training partition",
        ));
    }
    Ok(FoldData {
        train: labeled_partition(set, &transform, &fold.train)?,
        val: labeled_partition(set, &transform, &fold.val)?,
        test: labeled_partition(set, &transform, &fold.test)?,
        transform,
    })
}

pub fn model_dims(set: &TrialSet, cfg: &RunConfig) -> ModelDims {
    ModelDims {
        t: set.n_times(),
        u: cfg.fbcsp.u,
        n_bands: cfg.fbcsp.bands.len(),
        z: cfg.latent_size(),
        n_classes: set.n_classes(),
    }
}

/// Trains and scores outer fold number `index` of a plan.
pub fn run_fold(set: &TrialSet, fold: &Fold, index: usize, cfg: &RunConfig) -> Result<FoldRun> {
    let data = prepare_fold(set, fold, cfg)?;
    let mut model = MixNetModel::new(model_dims(set, cfg), cfg.model_seed(index))?;
    let outcome = train(&mut model, &data.train, &data.val, &cfg.train_config(index))?;
    let probs = predict_proba(&mut model, &data.test.x)?;
    let scores = score(&data.test.labels, &probs, cfg.eval.f1)?;
    Ok(FoldRun {
        result: FoldResult {
            subject: fold.subject,
            inner: fold.inner,
            scores,
            fold_fingerprint: fold.fingerprint(),
            epochs: outcome.log.epochs.len(),
        },
        model,
        transform: data.transform,
        outcome,
    })
}

/// Runs every fold of `plan` (in parallel when threads are available) and
/// aggregates the test scores.
pub fn run_protocol(set: &TrialSet, plan: &SplitPlan, cfg: &RunConfig) -> Result<EvalReport> {
    let results: Vec<FoldResult> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| run_fold(set, fold, i, cfg).map(|r| r.result))
        .collect::<Result<_>>()?;
    EvalReport::from_folds(results, plan.fingerprint(), cfg.hash())
}

/// Copy of `set` with labels permuted within each subject.
pub fn shuffled_labels(set: &TrialSet, seed: u64) -> Result<TrialSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = set.labels().to_vec();
    for s in set.subjects() {
        let idx: Vec<usize> = (0..set.len()).filter(|&i| set.subject_ids()[i] == s).collect();
        let mut vals: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        vals.shuffle(&mut rng);
        for (&i, v) in idx.iter().zip(vals) {
            labels[i] = v;
        }
    }
    set.with_labels(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trialdata::{generate_synthetic, SynthSpec};

    #[test]
    fn overlapping_partitions_are_rejected() {
        let fold = Fold {
            subject: 0,
            inner: 0,
            train: vec![0, 1],
            val: vec![2],
            test: vec![1, 3],
        };
        assert!(check_disjoint(&fold).is_err());
    }

    #[test]
    fn shuffle_keeps_label_counts_per_subject() {
        let set = generate_synthetic(&SynthSpec {
            trials_per_class_per_session: 5,
            ..SynthSpec::default()
        })
        .unwrap();
        let s = shuffled_labels(&set, 3).unwrap();
        for subj in set.subjects() {
            let count = |t: &TrialSet| {
                (0..t.len())
                    .filter(|&i| t.subject_ids()[i] == subj && t.labels()[i] == 1)
                    .count()
            };
            assert_eq!(count(&set), count(&s));
        }
        assert_ne!(s.labels(), set.labels());
    }
}
