//! Accuracy, F1 and ROC AUC, plus the fold/subject report aggregation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Kind {
    /// F1 of class 1.
    #[default]
    Binary,
    /// Unweighted mean of the per-class F1 scores.
    Macro,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::invalid("metrics need at least one sample"));
    }
    if a != b {
        return Err(Error::shape(format!("{a} labels but {b} predictions")));
    }
    Ok(())
}

pub fn accuracy(y: &[usize], y_hat: &[usize]) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    let hits = y.iter().zip(y_hat).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y.len() as f64)
}

/// F1 of `class`; 0 when the class is neither predicted nor present.
pub fn f1_for_class(y: &[usize], y_hat: &[usize], class: usize) -> Result<f64> {
    check_lengths(y.len(), y_hat.len())?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&t, &p) in y.iter().zip(y_hat) {
        match (t == class, p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

pub fn f1(y: &[usize], y_hat: &[usize], kind: F1Kind) -> Result<f64> {
    match kind {
        F1Kind::Binary => f1_for_class(y, y_hat, 1),
        F1Kind::Macro => Ok((f1_for_class(y, y_hat, 0)? + f1_for_class(y, y_hat, 1)?) / 2.0),
    }
}

/// Area under the ROC curve of `scores` for class 1, computed from
/// average ranks (equal to the trapezoidal area with ties). Errors when
/// only one class is present.
pub fn auc(y: &[usize], scores: &[f64]) -> Result<f64> {
    check_lengths(y.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUC scores contain NaN"));
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "AUC is undefined with a single class in the ground truth",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = y
        .iter()
        .zip(&ranks)
        .filter(|(&v, _)| v == 1)
        .map(|(_, r)| r)
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Arg-max class of each probability row.
pub fn argmax_rows(probs: &[Vec<f64>]) -> Vec<usize> {
    probs
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &p)| if p > best.1 { (i, p) } else { best },
                )
                .0
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
}

/// All three metrics from class probabilities; AUC uses the class-1
/// probability.
pub fn score(y: &[usize], probs: &[Vec<f64>], kind: F1Kind) -> Result<Scores> {
    check_lengths(y.len(), probs.len())?;
    let y_hat = argmax_rows(probs);
    let p1: Vec<f64> = probs
        .iter()
        .map(|r| {
            r.get(1)
                .copied()
                .ok_or_else(|| Error::shape("probability rows need 2 classes"))
        })
        .collect::<Result<_>>()?;
    Ok(Scores {
        accuracy: accuracy(y, &y_hat)?,
        f1: f1(y, &y_hat, kind)?,
        auc: auc(y, &p1)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub subject: u32,
    pub inner: usize,
    pub scores: Scores,
    pub fold_fingerprint: String,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: u32,
    pub n_folds: usize,
    pub mean: Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: MeanSd,
    pub f1: MeanSd,
    pub auc: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub split_fingerprint: String,
    pub folds: Vec<FoldResult>,
    pub subjects: Vec<SubjectSummary>,
    /// Mean and sample SD over the per-subject means.
    pub aggregate: Aggregate,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanSd { mean, sd }
}

impl EvalReport {
    /// Averages folds within each subject, then summarises across subjects.
    pub fn from_folds(
        folds: Vec<FoldResult>,
        split_fingerprint: String,
        config_hash: String,
    ) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::invalid("an evaluation report needs at least one fold"));
        }
        let mut by_subject: BTreeMap<u32, Vec<Scores>> = BTreeMap::new();
        for f in &folds {
            by_subject.entry(f.subject).or_default().push(f.scores);
        }
        let subjects: Vec<SubjectSummary> = by_subject
            .into_iter()
            .map(|(subject, s)| {
                let n = s.len() as f64;
                SubjectSummary {
                    subject,
                    n_folds: s.len(),
                    mean: Scores {
                        accuracy: s.iter().map(|v| v.accuracy).sum::<f64>() / n,
                        f1: s.iter().map(|v| v.f1).sum::<f64>() / n,
                        auc: s.iter().map(|v| v.auc).sum::<f64>() / n,
                    },
                }
            })
            .collect();
        let pick = |f: fn(&Scores) -> f64| mean_sd(&subjects.iter().map(|s| f(&s.mean)).collect::<Vec<_>>());
        let aggregate = Aggregate {
            accuracy: pick(|s| s.accuracy),
            f1: pick(|s| s.f1),
            auc: pick(|s| s.auc),
        };
        Ok(Self {
            config_hash,
            split_fingerprint,
            folds,
            subjects,
            aggregate,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::store::write_json(path, self)
    }

    /// Fold rows, then one `mean` and one `sd` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "# config_hash={}", self.config_hash)?;
        writeln!(file, "# split_fingerprint={}", self.split_fingerprint)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "subject",
            "fold",
            "accuracy",
            "f1",
            "auc",
            "epochs",
            "fold_fingerprint",
        ])?;
        for f in &self.folds {
            w.write_record([
                f.subject.to_string(),
                f.inner.to_string(),
                format!("{:.6}", f.scores.accuracy),
                format!("{:.6}", f.scores.f1),
                format!("{:.6}", f.scores.auc),
                f.epochs.to_string(),
                f.fold_fingerprint.clone(),
            ])?;
        }
        let a = &self.aggregate;
        for (name, get) in [
            ("mean", (|m: &MeanSd| m.mean) as fn(&MeanSd) -> f64),
            ("sd", |m| m.sd),
        ] {
            w.write_record([
                name.to_string(),
                String::new(),
                format!("{:.6}", get(&a.accuracy)),
                format!("{:.6}", get(&a.f1)),
                format!("{:.6}", get(&a.auc)),
                String::new(),
                String::new(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
