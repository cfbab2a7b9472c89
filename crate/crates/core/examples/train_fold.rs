//! Train the multi-task autoencoder on one subject-dependent fold, print
//! the per-epoch log and save a checkpoint.

use mixnet::config::RunConfig;
use mixnet::model::{load_checkpoint, save_checkpoint};
use mixnet::protocol::run_fold;
use mixnet::trialdata::{make_splits, SynthSpec};

fn main() -> mixnet::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.data.synth = Some(SynthSpec {
        n_subjects: 1,
        ..SynthSpec::default()
    });
    cfg.train.max_epochs = 15;
    cfg.blend.warmup_epochs = 3;
    let set = cfg.load_data()?;
    let plan = make_splits(&set, cfg.protocol.kind, cfg.protocol.k, cfg.seed)?;

    let run = run_fold(&set, &plan.folds[0], 0, &cfg)?;
    let log = &run.outcome.log;
    println!("epoch  lr        train total  monitored");
    for e in &log.epochs {
        println!(
            "{:5}  {:.1e}  {:11.4}  {:9.4}",
            e.epoch, e.lr, e.train_total, e.monitored
        );
    }
    let last = log.checkpoints.last().unwrap();
    println!("final weights (mse, triplet, ce): {:.3?}", last.weights);
    println!("best epoch {}, test {:?}", log.best_epoch, run.result.scores);

    let dir = std::env::temp_dir().join("mixnet_train_example");
    save_checkpoint(&run.model, &dir, &cfg.hash())?;
    let back = load_checkpoint(&dir)?;
    println!(
        "checkpoint with {} trainable values at {}",
        back.n_trainable(),
        dir.display()
    );
    Ok(())
}
