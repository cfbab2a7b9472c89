//! Design the 9-band Butterworth bank and look at its zero-phase response.

use mixnet::filterbank::{zero_phase_filter, FilterBank};

fn main() -> mixnet::Result<()> {
    let fs = 250.0;
    let bank = FilterBank::default_bank(fs)?;
    println!("band       center  |H|^2 at center  at lo-4 Hz  at hi+4 Hz  max pole radius");
    for d in &bank.designs {
        let center = 0.5 * (d.low_hz + d.high_hz);
        println!(
            "{:>4}-{:<4}  {center:>6}  {:>15.6}  {:>10.2e}  {:>10.2e}  {:.6}",
            d.low_hz,
            d.high_hz,
            d.zero_phase_gain(center),
            d.zero_phase_gain((d.low_hz - 4.0).max(0.0)),
            d.zero_phase_gain(d.high_hz + 4.0),
            d.max_pole_radius()
        );
    }

    // 10 Hz plus 30 Hz; the 8-12 Hz band keeps only the first
    let x: Vec<f64> = (0..1000)
        .map(|n| {
            let t = n as f64 / fs;
            (2.0 * std::f64::consts::PI * 10.0 * t).sin() + (2.0 * std::f64::consts::PI * 30.0 * t).sin()
        })
        .collect();
    let y = zero_phase_filter(&x, &bank.designs[1])?;
    let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
    println!(
        "input rms {:.3}, 8-12 Hz output rms {:.3}",
        rms(&x[250..750]),
        rms(&y[250..750])
    );
    Ok(())
}
