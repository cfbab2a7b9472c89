//! Drive the adaptive blender with hand-made loss curves. The third task
//! starts to overfit halfway through and loses most of its weight.

use mixnet::blend::{BlendConfig, BlendCurves, BlendState, TASK_NAMES};

fn main() -> mixnet::Result<()> {
    let cfg = BlendConfig {
        warmup_epochs: 3,
        ..BlendConfig::default()
    };
    let mut state = BlendState::new(cfg);
    let mut curves = BlendCurves::default();
    for n in 1..=30usize {
        let x = n as f64;
        let train = 2.0 / x;
        // every validation curve drifts away from its training curve; the
        // third one starts to climb halfway through
        let climb = if n > 15 { 0.02 * (x - 15.0).powi(2) } else { 0.0 };
        curves.record_checkpoint(0, n, train, train + 0.001 * x * x)?;
        curves.record_checkpoint(1, n, 1.5 * train, 1.5 * train + 0.002 * x * x)?;
        curves.record_checkpoint(2, n, 0.5 * train, 0.5 * train + 0.001 * x * x + climb)?;
        let w = state.update_weights(&curves, n)?;
        if n % 3 == 0 {
            let r = state.history.last().unwrap();
            println!(
                "checkpoint {n:2}{} weights {:.3?}  G {:.3?}  O {:?}",
                if r.warmup { " (warm-up)" } else { "" },
                w,
                r.g,
                r.o.map(|v| format!("{v:.1e}"))
            );
        }
    }
    for (m, name) in TASK_NAMES.iter().enumerate() {
        if let Some(r) = state.references[m] {
            println!(
                "{name}: reference checkpoint {}, val tangent {:.4}",
                r.checkpoint, r.tan_val
            );
        }
    }
    Ok(())
}
