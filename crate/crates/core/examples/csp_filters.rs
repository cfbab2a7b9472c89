//! Fit CSP on one band of synthetic data and check that the first and last
//! filters separate the classes by variance on held-out trials.

use mixnet::csp::{class_covariance, csp_apply, csp_fit};
use mixnet::filterbank::FilterBank;
use mixnet::trialdata::{generate_synthetic, SynthSpec};

fn main() -> mixnet::Result<()> {
    let set = generate_synthetic(&SynthSpec {
        n_subjects: 1,
        ..SynthSpec::default()
    })?;
    let nc = set.n_channels();
    let t = set.n_times();
    let bank = FilterBank::default_bank(set.fs())?;
    let band = 1; // 8-12 Hz

    let block = |i: usize| -> mixnet::Result<Vec<f64>> {
        let all = bank.apply(&set.trial_f64(i), nc, set.fs())?;
        Ok(all[band * nc * t..(band + 1) * nc * t].to_vec())
    };
    let (train, test): (Vec<usize>, Vec<usize>) = (0..set.len()).partition(|&i| set.session_ids()[i] == 0);
    let class_blocks = |idx: &[usize], c: usize| -> mixnet::Result<Vec<Vec<f64>>> {
        idx.iter()
            .filter(|&&i| set.labels()[i] == c)
            .map(|&i| block(i))
            .collect()
    };
    let s0 = class_covariance(&class_blocks(&train, 0)?, nc, 0)?;
    let s1 = class_covariance(&class_blocks(&train, 1)?, nc, 1)?;
    let sol = csp_fit(&s0.sigma, &s1.sigma, 4)?;
    println!("generalized eigenvalues: {:.3?}", sol.eigvals);

    let log_var = |z: &[f64], row: usize| {
        let r = &z[row * t..(row + 1) * t];
        let m = r.iter().sum::<f64>() / t as f64;
        (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64).ln()
    };
    for c in 0..2 {
        let blocks = class_blocks(&test, c)?;
        let mut first = 0.0;
        let mut last = 0.0;
        for b in &blocks {
            let z = csp_apply(&sol.w_selected, b, nc)?;
            first += log_var(&z, 0);
            last += log_var(&z, 3);
        }
        let n = blocks.len() as f64;
        println!(
            "class {c}: mean log-var first filter {:.3}, last filter {:.3}",
            first / n,
            last / n
        );
    }
    Ok(())
}
