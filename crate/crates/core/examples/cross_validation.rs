//! Subject-dependent cross-validation on synthetic data, next to a
//! shuffled-label control that should sit at chance.
//!
//! Training runs are shortened so the example finishes in a few minutes.

use mixnet::config::RunConfig;
use mixnet::protocol::{run_protocol, shuffled_labels};
use mixnet::trialdata::{make_splits, SplitKind, SynthSpec};

fn main() -> mixnet::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.data.synth = Some(SynthSpec {
        trials_per_class_per_session: 30,
        ..SynthSpec::default()
    });
    cfg.protocol.k = 3;
    cfg.train.max_epochs = 12;
    cfg.blend.warmup_epochs = 3;
    let set = cfg.load_data()?;

    let plan = make_splits(&set, SplitKind::SubjectDependent, cfg.protocol.k, cfg.seed)?;
    let report = run_protocol(&set, &plan, &cfg)?;
    for f in &report.folds {
        println!(
            "subject {} fold {}: acc {:.3} f1 {:.3} auc {:.3} ({} epochs)",
            f.subject, f.inner, f.scores.accuracy, f.scores.f1, f.scores.auc, f.epochs
        );
    }
    let a = &report.aggregate;
    println!(
        "mean accuracy {:.3} +- {:.3}, AUC {:.3} +- {:.3}",
        a.accuracy.mean, a.accuracy.sd, a.auc.mean, a.auc.sd
    );

    let control = shuffled_labels(&set, 7)?;
    let plan = make_splits(&control, SplitKind::SubjectDependent, cfg.protocol.k, cfg.seed)?;
    let report = run_protocol(&control, &plan, &cfg)?;
    println!(
        "shuffled labels: accuracy {:.3}, AUC {:.3}",
        report.aggregate.accuracy.mean, report.aggregate.auc.mean
    );
    Ok(())
}
