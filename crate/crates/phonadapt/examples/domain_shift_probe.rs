//! Measuring domain shift before adapting to it: train a logistic
//! probe to distinguish source from target features and read off its
//! accuracy and the proxy A-distance (2(2 acc - 1), clamped at 0).
//! Sweeps the synthetic fixture's rotation and translation to show
//! both numbers tracking the size of the shift.
//!
//!     cargo run --example domain_shift_probe

use phonadapt::error::Result;
use phonadapt::eval::{domain_probe_accuracy, proxy_a_distance};
use phonadapt::synth::{fixtures, gen_domains};

fn main() -> Result<()> {
    let seed = 1;
    println!(
        "{:>10} {:>12} {:>12} {:>10}",
        "rotation", "translation", "probe acc", "proxy A"
    );
    for (rotation, translation) in [(0.0, 0.0), (10.0, 0.5), (30.0, 2.0), (60.0, 4.0)] {
        let mut spec = fixtures::standard_synth(seed);
        spec.rotation_degrees = rotation;
        spec.translation_sigmas = translation;
        let data = gen_domains(&spec)?;
        let acc = domain_probe_accuracy(data.source.features(), data.target.features(), 7)?;
        let a_dist = proxy_a_distance(data.source.features(), data.target.features(), 7)?;
        println!("{rotation:>9}d {translation:>11}s {acc:>12.3} {a_dist:>10.3}");
    }
    println!("\n(an identity transform should sit near 0.5 / 0.0; bigger shifts push both up)");
    Ok(())
}
