//! From a phone alignment to multi-label training targets: every frame
//! gets the 14-bit articulatory feature vector of the phone it falls
//! inside (vocalic, consonantal, nasal, ... , silence), looked up in the
//! built-in feature table. Gaps and out-of-range frames get the
//! silence vector.
//!
//!     cargo run --example phonetic_targets

use phonadapt::error::Result;
use phonadapt::phonetics::{frame_targets, parse_alignment, SpeTable, N_FEATURES};

fn main() -> Result<()> {
    let table = SpeTable::builtin_timit();
    println!(
        "built-in table: {} phones x {N_FEATURES} features, silence symbol {:?}",
        table.len(),
        table.symbol(table.silence_id())?
    );
    for phone in ["aa", "m", "s"] {
        println!("  {phone:<4} -> {:?}", table.features(phone)?);
    }

    // Alignments are plain text: start and end in seconds, then the
    // phone. A deliberate gap sits between "s" and "iy".
    let alignment = "\
0.00 0.30 aa
0.30 0.45 s
0.55 0.80 iy
";
    let segments = parse_alignment(alignment)?;
    println!("\nalignment with {} segments (one gap):", segments.len());

    // Ten frames at 100 ms spacing, comfortably spanning the alignment
    // and running past its end.
    let frame_times: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
    let (targets, ids) = frame_targets(&segments, &frame_times, &table)?;
    println!("{:>6}  {:<5} target bits", "t", "phone");
    for (i, &t) in frame_times.iter().enumerate() {
        let bits: String = (0..targets.cols())
            .map(|c| if targets.get(i, c) > 0.5 { '1' } else { '0' })
            .collect();
        println!("{t:>5.2}s  {:<5} {bits}", table.symbol(ids[i])?);
    }
    println!("(frames in the 0.45-0.55s gap and past 0.80s fall back to silence)");
    Ok(())
}
