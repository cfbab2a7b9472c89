//! Generate a two-class synthetic motor-imagery set, save it and read it
//! back.

use mixnet::trialdata::{generate_synthetic, load_trialset, save_trialset, SynthSpec};

fn main() -> mixnet::Result<()> {
    let spec = SynthSpec::default();
    let set = generate_synthetic(&spec)?;
    println!(
        "{} trials, {} channels x {} samples at {} Hz",
        set.len(),
        set.n_channels(),
        set.n_times(),
        set.fs()
    );
    for s in set.subjects() {
        let n = set.subject_ids().iter().filter(|&&id| id == s).count();
        println!("subject {s}: {n} trials");
    }

    let dir = std::env::temp_dir().join("mixnet_synthetic_example");
    save_trialset(&set, &dir)?;
    let back = load_trialset(&dir)?;
    assert_eq!(back.labels(), set.labels());
    println!("saved to {} and reloaded", dir.display());
    Ok(())
}
