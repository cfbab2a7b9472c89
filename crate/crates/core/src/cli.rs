//! Command-line front end. The binary only parses arguments and maps the
//! result of [`run`] to an exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blend::write_curves_csv;
use crate::config::{grid_points, parse_grid, RunConfig};
use crate::error::{Error, Result};
use crate::fbcsp::{load_transform, save_transform};
use crate::metrics::{score, EvalReport, FoldResult};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::protocol::{labeled_partition, run_fold, run_protocol};
use crate::store;
use crate::trainer::{predict_proba, TrainLog};
use crate::trialdata::{generate_synthetic, make_splits, save_trialset, SplitPlan, SynthSpec, TrialSet};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const MODEL_DIR: &str = "model";
pub const TRANSFORM_DIR: &str = "transform";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";
pub const TRAIN_LOG_JSON: &str = "train_log.json";
pub const BLEND_CURVES_CSV: &str = "blend_curves.csv";
pub const REPORT_JSON: &str = "eval_report.json";
pub const REPORT_CSV: &str = "eval_report.csv";
pub const SWEEP_SUMMARY_CSV: &str = "sweep_summary.csv";

#[derive(Debug, Parser)]
#[command(
    name = "mixnet",
    version,
    about = "Filter-bank CSP + multi-task autoencoder for motor-imagery EEG"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// JSON synthetic-data spec; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the first fold of the configured protocol.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint, or run the whole protocol when none is given.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Model directory written by `train`; its transform is expected in
        /// the sibling `transform` directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the protocol for every point of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// For example `U=2,4;alpha=1,5`.
        #[arg(long)]
        grid: String,
    },
    /// Turn a JSON training log into a loss/weight curve table.
    ExportCurves {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error: configuration problems are 2, the rest 3.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// JSON training record written next to the CSV log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub config_hash: String,
    pub fold_fingerprint: String,
    pub test_scores: crate::metrics::Scores,
    pub log: TrainLog,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out } => cmd_synth(spec.as_deref(), &out),
        Command::Train { config } => cmd_train(&RunConfig::load(&config)?).map(|_| ()),
        Command::Eval { config, checkpoint } => {
            cmd_eval(&RunConfig::load(&config)?, checkpoint.as_deref()).map(|_| ())
        }
        Command::Sweep { config, grid } => cmd_sweep(&RunConfig::load(&config)?, &grid).map(|_| ()),
        Command::ExportCurves { log, out } => cmd_export_curves(&log, &out),
    }
}

pub fn cmd_synth(spec: Option<&Path>, out: &Path) -> Result<()> {
    let spec: SynthSpec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    save_trialset(&generate_synthetic(&spec)?, out)
}

fn data_and_plan(cfg: &RunConfig) -> Result<(TrialSet, SplitPlan)> {
    let set = cfg.load_data()?;
    let plan = make_splits(&set, cfg.protocol.kind, cfg.protocol.k, cfg.seed)?;
    Ok((set, plan))
}

/// Trains on fold 0 and writes the model, transform, logs and curves into
/// the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainRecord> {
    let (set, plan) = data_and_plan(cfg)?;
    let fold = &plan.folds[0];
    let hash = cfg.hash();
    let run = run_fold(&set, fold, 0, cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    save_checkpoint(&run.model, &out.join(MODEL_DIR), &hash)?;
    save_transform(&run.transform, &out.join(TRANSFORM_DIR), &hash)?;
    run.outcome.log.write_csv(&out.join(TRAIN_LOG_CSV), &hash)?;
    write_curves_csv(&out.join(BLEND_CURVES_CSV), &run.outcome.log.curve_rows(), &hash)?;
    let record = TrainRecord {
        config_hash: hash,
        fold_fingerprint: run.result.fold_fingerprint.clone(),
        test_scores: run.result.scores,
        log: run.outcome.log,
    };
    store::write_json(&out.join(TRAIN_LOG_JSON), &record)?;
    Ok(record)
}

fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    report.write_json(&dir.join(REPORT_JSON))?;
    report.write_csv(&dir.join(REPORT_CSV))
}

/// With a checkpoint: scores it on the test partition of the fold it was
/// trained on. Without: runs the full protocol.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalReport> {
    let (set, plan) = data_and_plan(cfg)?;
    let hash = cfg.hash();
    let report = match checkpoint {
        None => run_protocol(&set, &plan, cfg)?,
        Some(dir) => {
            let mut model = load_checkpoint(dir)?;
            let xf_dir = dir
                .parent()
                .map(|p| p.join(TRANSFORM_DIR))
                .ok_or_else(|| Error::invalid("checkpoint path has no parent directory"))?;
            let xf = load_transform(&xf_dir)?;
            let fold = plan
                .folds
                .iter()
                .position(|f| store::index_fingerprint(&f.train) == xf.fitted_on)
                .map(|i| &plan.folds[i])
                .ok_or_else(|| Error::invalid("checkpoint was not trained on a fold of this plan"))?;
            let test = labeled_partition(&set, &xf, &fold.test)?;
            let probs = predict_proba(&mut model, &test.x)?;
            let fold_result = FoldResult {
                subject: fold.subject,
                inner: fold.inner,
                scores: score(&test.labels, &probs, cfg.eval.f1)?,
                fold_fingerprint: fold.fingerprint(),
                epochs: 0,
            };
            EvalReport::from_folds(vec![fold_result], plan.fingerprint(), hash)?
        }
    };
    write_report(&report, &cfg.output_dir)?;
    Ok(report)
}

/// One report per grid point under `sweep/point_<i>/`, plus a summary
/// table with one row per point.
pub fn cmd_sweep(cfg: &RunConfig, grid: &str) -> Result<Vec<EvalReport>> {
    let axes = parse_grid(grid)?;
    let points = grid_points(&axes);
    let configs: Vec<RunConfig> = points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let mut c = cfg.clone();
            for (k, v) in point {
                c.set_param(k, v)?;
            }
            c.output_dir = cfg.output_dir.join("sweep").join(format!("point_{i}"));
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let reports: Vec<EvalReport> = configs
        .par_iter()
        .map(|c| cmd_eval(c, None))
        .collect::<Result<_>>()?;

    fs::create_dir_all(&cfg.output_dir)?;
    let mut file = fs::File::create(cfg.output_dir.join(SWEEP_SUMMARY_CSV))?;
    writeln!(file, "# config_hash={}", cfg.hash())?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = axes.iter().map(|a| a.key.clone()).collect();
    header.extend(
        [
            "accuracy",
            "accuracy_sd",
            "f1",
            "f1_sd",
            "auc",
            "auc_sd",
            "config_hash",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for (point, r) in points.iter().zip(&reports) {
        let a = &r.aggregate;
        let mut row: Vec<String> = point.iter().map(|(_, v)| v.clone()).collect();
        for m in [a.accuracy, a.f1, a.auc] {
            row.push(format!("{:.6}", m.mean));
            row.push(format!("{:.6}", m.sd));
        }
        row.push(r.config_hash.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(reports)
}

pub fn cmd_export_curves(log: &Path, out: &Path) -> Result<()> {
    let record: TrainRecord = store::read_json(log)?;
    write_curves_csv(out, &record.log.curve_rows(), &record.config_hash)
}
