//! The acoustic frontend, end to end: synthesize a short wav file,
//! read it back, and walk the feature stages the pipeline uses —
//! 23 log mel filter-bank energies per frame, delta and delta-delta
//! appended (69), and an 11-frame context splice (759 here; 913 once
//! phonetic scores are appended first).
//!
//!     cargo run --example extract_features

use std::env::temp_dir;

use phonadapt::error::Result;
use phonadapt::frontend::{
    add_deltas, fbank, frame_centers, normalize_apply, normalize_fit, read_wav, splice_context,
    write_wav_mono16, FbankConfig,
};

fn main() -> Result<()> {
    // A one-second 16 kHz tone with a mid-file frequency step, so the
    // filter-bank output visibly changes over time.
    let samples: Vec<i16> = (0..16_000)
        .map(|t| {
            let freq = if t < 8_000 { 440.0 } else { 1760.0 };
            let phase = 2.0 * std::f64::consts::PI * freq * t as f64 / 16_000.0;
            (9_000.0 * phase.sin()) as i16
        })
        .collect();
    let path = temp_dir().join("phonadapt_example_tone.wav");
    write_wav_mono16(&path, &samples, 16_000)?;

    let utt = read_wav(&path)?;
    println!(
        "read {:?}: {} samples at {} Hz",
        path.file_name().unwrap(),
        utt.samples.len(),
        utt.sample_rate
    );

    let cfg = FbankConfig::default();
    let feats = fbank(&utt, &cfg)?;
    println!(
        "fbank: {} frames x {} coefficients ({} ms window, {} ms hop)",
        feats.rows(),
        feats.cols(),
        cfg.win_ms,
        cfg.hop_ms
    );

    // Frame centers give each frame a timestamp; the alignment side of
    // extraction (see the phonetic_targets example) indexes into these.
    let centers = frame_centers(feats.rows(), &cfg, utt.sample_rate);
    println!(
        "frame centers run {:.3}s .. {:.3}s",
        centers.first().unwrap(),
        centers.last().unwrap()
    );

    let with_deltas = add_deltas(&feats);
    let spliced = splice_context(&with_deltas, 5);
    println!(
        "deltas: {} -> {} dims; +/-5 splice: {} -> {} dims",
        feats.cols(),
        with_deltas.cols(),
        with_deltas.cols(),
        spliced.cols()
    );

    // Mean/variance normalization, fit and applied per corpus split in
    // the real pipeline.
    let stats = normalize_fit(&with_deltas)?;
    let normed = normalize_apply(&with_deltas, &stats)?;
    let frame = feats.rows() / 2;
    let row = normed.row(frame);
    println!(
        "frame {frame} (t = {:.3}s), first 6 normalized dims: {:?}",
        centers[frame],
        row[..6].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    Ok(())
}
