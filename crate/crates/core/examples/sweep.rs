//! Build a config from JSON, expand a hyper-parameter grid and evaluate
//! each point.

use mixnet::config::{grid_points, parse_grid, RunConfig};
use mixnet::protocol::run_protocol;
use mixnet::trialdata::make_splits;

const CONFIG: &str = r#"{
  "seed": 1,
  "data": { "synth": { "n_subjects": 1, "trials_per_class_per_session": 24 } },
  "protocol": { "k": 2 },
  "train": { "max_epochs": 8 },
  "blend": { "warmup_epochs": 2 }
}"#;

fn main() -> mixnet::Result<()> {
    let base = RunConfig::from_json_str(CONFIG)?;
    println!("base config hash {}", base.hash());
    let axes = parse_grid("U=2,4;alpha=1,5")?;
    for point in grid_points(&axes) {
        let mut cfg = base.clone();
        for (k, v) in &point {
            cfg.set_param(k, v)?;
        }
        cfg.validate()?;
        let set = cfg.load_data()?;
        let plan = make_splits(&set, cfg.protocol.kind, cfg.protocol.k, cfg.seed)?;
        let report = run_protocol(&set, &plan, &cfg)?;
        println!(
            "{point:?}: accuracy {:.3}, AUC {:.3}",
            report.aggregate.accuracy.mean, report.aggregate.auc.mean
        );
    }
    Ok(())
}
