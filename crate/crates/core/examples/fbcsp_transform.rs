//! Fit the filter-bank CSP front end on a training fold, map trials to
//! spectral-spatial tensors and round-trip the fitted transform.

use mixnet::fbcsp::{fbcsp_fit, load_transform, save_transform, transform_trials};
use mixnet::filterbank::FilterBank;
use mixnet::store::index_fingerprint;
use mixnet::trialdata::{generate_synthetic, make_splits, SplitKind, SynthSpec};

fn main() -> mixnet::Result<()> {
    let set = generate_synthetic(&SynthSpec {
        n_subjects: 1,
        ..SynthSpec::default()
    })?;
    let plan = make_splits(&set, SplitKind::SubjectDependent, 5, 0)?;
    let fold = &plan.folds[0];
    let bank = FilterBank::default_bank(set.fs())?;
    let xf = fbcsp_fit(&set, &fold.train, &bank, 4)?;
    assert_eq!(xf.fitted_on, index_fingerprint(&fold.train));
    println!(
        "{} bands x U={} -> {} channels, fitted on {}",
        xf.n_bands(),
        xf.u,
        xf.output_channels(),
        xf.fitted_on
    );

    let test = transform_trials(&xf, &set, &fold.test[..4])?;
    for (i, s) in fold.test.iter().zip(&test) {
        println!("trial {i} (class {}): shape {:?}", set.labels()[*i], s.shape());
    }

    let dir = std::env::temp_dir().join("mixnet_fbcsp_example");
    save_transform(&xf, &dir, "example")?;
    let back = load_transform(&dir)?;
    let again = transform_trials(&back, &set, &fold.test[..1])?;
    let diff = again[0]
        .values
        .iter()
        .zip(&test[0].values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("reloaded transform, max difference {diff:.2e}");
    Ok(())
}
