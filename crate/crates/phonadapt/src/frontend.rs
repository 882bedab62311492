//! Acoustic frontend: WAV ingestion, log-mel filterbank (FBANK)
//! features, delta and delta-delta appending, per-dimension
//! normalization, and fixed-context splicing.
//!
//! Defaults follow common ASR practice: 23 filters over a 25 ms Hamming
//! window every 10 ms, pre-emphasis 0.97, HTK mel scale, power
//! spectrum. Identical input yields bit-identical features.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One audio recording: mono samples in `[-1, 1)` at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Filterbank geometry and numerics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbankConfig {
    pub n_filters: usize,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub preemphasis: f64,
    /// Lowest mel-filter edge in Hz.
    pub mel_low_hz: f64,
    /// Highest mel-filter edge in Hz; 0 means the Nyquist frequency.
    pub mel_high_hz: f64,
    /// Floor applied in the log domain; silence maps here.
    pub log_floor: f64,
}

impl Default for FbankConfig {
    fn default() -> FbankConfig {
        FbankConfig {
            n_filters: 23,
            win_ms: 25.0,
            hop_ms: 10.0,
            preemphasis: 0.97,
            mel_low_hz: 20.0,
            mel_high_hz: 0.0,
            log_floor: 1e-10_f64.ln(),
        }
    }
}

impl FbankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_filters == 0 {
            return Err(Error::Config("n_filters must be >= 1".into()));
        }
        if !(self.hop_ms > 0.0 && self.win_ms > self.hop_ms) {
            return Err(Error::Config(format!(
                "need win_ms > hop_ms > 0, got win {} hop {}",
                self.win_ms, self.hop_ms
            )));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::Config(format!("preemphasis must be in [0, 1), got {}", self.preemphasis)));
        }
        if self.mel_low_hz < 0.0 {
            return Err(Error::Config("mel_low_hz must be >= 0".into()));
        }
        Ok(())
    }

    pub fn win_samples(&self, rate: u32) -> usize {
        (self.win_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }
}

/// `floor((n_samples - win) / hop) + 1`, the number of full analysis
/// windows; 0 when the signal is shorter than one window.
pub fn frame_count(n_samples: usize, win: usize, hop: usize) -> usize {
    if n_samples < win {
        0
    } else {
        (n_samples - win) / hop + 1
    }
}

/// Time (seconds) of each frame's center, for alignment lookup.
pub fn frame_centers(n_frames: usize, cfg: &FbankConfig, rate: u32) -> Vec<f64> {
    let win = cfg.win_samples(rate) as f64;
    let hop = cfg.hop_samples(rate) as f64;
    (0..n_frames).map(|i| (i as f64 * hop + win / 2.0) / rate as f64).collect()
}

// ---- WAV ---------------------------------------------------------------

fn le_u16(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| truncated(at))
}

fn le_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| truncated(at))
}

fn truncated(at: usize) -> Error {
    Error::Parse {
        what: "wav file".into(),
        detail: format!("truncated at byte {at}"),
    }
}

/// Reads a RIFF/WAVE file; PCM 16-bit mono only. Samples are scaled by
/// 1/32768 into `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<Utterance> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Parse {
            what: "wav file".into(),
            detail: "missing RIFF/WAVE header".into(),
        });
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // codec, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let chunk_id = &bytes[pos..pos + 4];
        let chunk_len = le_u32(&bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        if body_start + chunk_len > bytes.len() {
            return Err(truncated(body_start));
        }
        match chunk_id {
            b"fmt " => {
                if chunk_len < 16 {
                    return Err(truncated(body_start));
                }
                fmt = Some((
                    le_u16(&bytes, body_start)?,
                    le_u16(&bytes, body_start + 2)?,
                    le_u32(&bytes, body_start + 4)?,
                    le_u16(&bytes, body_start + 14)?,
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_start + chunk_len]),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_start + chunk_len + (chunk_len & 1);
    }
    let (codec, channels, rate, bits) = fmt.ok_or_else(|| Error::Parse {
        what: "wav file".into(),
        detail: "no fmt chunk".into(),
    })?;
    if codec != 1 {
        return Err(Error::UnsupportedWav(format!("codec {codec}, only PCM (1) is supported")));
    }
    if channels != 1 {
        return Err(Error::UnsupportedWav(format!("{channels} channels, only mono is supported")));
    }
    if bits != 16 {
        return Err(Error::UnsupportedWav(format!("{bits}-bit samples, only 16-bit is supported")));
    }
    let data = data.ok_or_else(|| Error::Parse {
        what: "wav file".into(),
        detail: "no data chunk".into(),
    })?;
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    if samples.is_empty() {
        return Err(Error::Parse {
            what: "wav file".into(),
            detail: "empty data chunk".into(),
        });
    }
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "utt".into());
    Ok(Utterance {
        id,
        samples,
        sample_rate: rate,
    })
}

/// Writes a PCM 16-bit mono WAV; the inverse of [`read_wav`] for
/// fixtures and demos.
pub fn write_wav_mono16(path: &Path, samples: &[i16], sample_rate: u32) -> Result<()> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

// ---- FBANK -------------------------------------------------------------

/// HTK mel scale.
fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank as per-filter weights over FFT bins
/// `0..=n_fft/2`.
fn mel_filterbank(cfg: &FbankConfig, rate: u32, n_fft: usize) -> Result<Vec<Vec<f64>>> {
    let nyquist = rate as f64 / 2.0;
    let high = if cfg.mel_high_hz <= 0.0 { nyquist } else { cfg.mel_high_hz };
    if !(cfg.mel_low_hz < high && high <= nyquist) {
        return Err(Error::Config(format!(
            "mel range [{}, {high}] invalid for Nyquist {nyquist}",
            cfg.mel_low_hz
        )));
    }
    let mel_lo = hz_to_mel(cfg.mel_low_hz);
    let mel_hi = hz_to_mel(high);
    // n_filters triangles need n_filters + 2 edge points.
    let points: Vec<f64> = (0..cfg.n_filters + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_filters + 1) as f64))
        .collect();
    let bin_hz = rate as f64 / n_fft as f64;
    let n_bins = n_fft / 2 + 1;
    let mut filters = Vec::with_capacity(cfg.n_filters);
    for m in 0..cfg.n_filters {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        let mut w = vec![0.0; n_bins];
        for (k, wk) in w.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            if f > left && f < right {
                *wk = if f <= center {
                    (f - left) / (center - left)
                } else {
                    (right - f) / (right - center)
                };
            }
        }
        filters.push(w);
    }
    Ok(filters)
}

/// Center frequencies (Hz) of the configured filters; exposed for
/// diagnostics and tests.
pub fn mel_filter_centers(cfg: &FbankConfig, rate: u32) -> Result<Vec<f64>> {
    let nyquist = rate as f64 / 2.0;
    let high = if cfg.mel_high_hz <= 0.0 { nyquist } else { cfg.mel_high_hz };
    if !(cfg.mel_low_hz < high && high <= nyquist) {
        return Err(Error::Config(format!(
            "mel range [{}, {high}] invalid for Nyquist {nyquist}",
            cfg.mel_low_hz
        )));
    }
    let mel_lo = hz_to_mel(cfg.mel_low_hz);
    let mel_hi = hz_to_mel(high);
    Ok((1..=cfg.n_filters)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_filters + 1) as f64))
        .collect())
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Log-mel filterbank features, one row per frame.
pub fn fbank(u: &Utterance, cfg: &FbankConfig) -> Result<Matrix> {
    cfg.validate()?;
    let win = cfg.win_samples(u.sample_rate);
    let hop = cfg.hop_samples(u.sample_rate);
    if u.samples.len() < win {
        return Err(Error::TooShort {
            samples: u.samples.len(),
            window: win,
        });
    }
    let t_frames = frame_count(u.samples.len(), win, hop);
    let n_fft = next_pow2(win);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_fft);
    let filters = mel_filterbank(cfg, u.sample_rate, n_fft)?;
    let hamming: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos())
        .collect();

    // Pre-emphasis over the whole signal; the first sample uses itself
    // as its predecessor.
    let mut emphasized = Vec::with_capacity(u.samples.len());
    emphasized.push(u.samples[0] - cfg.preemphasis * u.samples[0]);
    for i in 1..u.samples.len() {
        emphasized.push(u.samples[i] - cfg.preemphasis * u.samples[i - 1]);
    }

    let mut out = Matrix::zeros(t_frames, cfg.n_filters);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..t_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < win {
                Complex::new(emphasized[start + i] * hamming[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for (m, filter) in filters.iter().enumerate() {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            let log_e = energy.ln(); // ln(0) = -inf handled by the floor
            out.set(t, m, if log_e.is_finite() && log_e > cfg.log_floor { log_e } else { cfg.log_floor });
        }
    }
    Ok(out)
}

// ---- Deltas and splicing -------------------------------------------------

/// Appends delta and delta-delta columns: `T x D -> T x 3D`.
///
/// Regression deltas with window 2 and edge replication:
/// `delta_t = sum_{n=1..2} n (f_{t+n} - f_{t-n}) / (2 sum n^2)`.
pub fn add_deltas(feat: &Matrix) -> Matrix {
    let (t_frames, d) = (feat.rows(), feat.cols());
    let denom = 2.0 * (1.0 + 4.0); // 2 * sum n^2 for n = 1, 2
    let delta_of = |src: &Matrix| -> Matrix {
        let mut out = Matrix::zeros(t_frames, d);
        for t in 0..t_frames {
            for c in 0..d {
                let mut acc = 0.0;
                for n in 1..=2usize {
                    let fwd = (t + n).min(t_frames - 1);
                    let back = t.saturating_sub(n);
                    acc += n as f64 * (src.get(fwd, c) - src.get(back, c));
                }
                out.set(t, c, acc / denom);
            }
        }
        out
    };
    let delta = delta_of(feat);
    let delta2 = delta_of(&delta);
    feat.hstack(&delta).expect("same rows").hstack(&delta2).expect("same rows")
}

/// Splices each frame with its +-k neighbors (edge replication):
/// `T x D -> T x D(2k+1)`. `k = 0` is the identity.
pub fn splice_context(feat: &Matrix, k: usize) -> Matrix {
    let (t_frames, d) = (feat.rows(), feat.cols());
    let mut out = Matrix::zeros(t_frames, d * (2 * k + 1));
    for t in 0..t_frames {
        for (slot, off) in (-(k as isize)..=k as isize).enumerate() {
            let src = (t as isize + off).clamp(0, t_frames as isize - 1) as usize;
            out.row_mut(t)[slot * d..(slot + 1) * d].copy_from_slice(feat.row(src));
        }
    }
    out
}

// ---- Normalization -------------------------------------------------------

/// Per-dimension mean and deviation fitted on a declared set of
/// (unlabeled) features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits zero-mean/unit-variance statistics with a variance floor of
/// 1e-8 (constant columns normalize to zero instead of blowing up).
pub fn normalize_fit(feat: &Matrix) -> Result<NormStats> {
    if feat.rows() == 0 {
        return Err(Error::Data("cannot fit normalization on an empty matrix".into()));
    }
    let n = feat.rows() as f64;
    let d = feat.cols();
    let mut mean = vec![0.0; d];
    for r in 0..feat.rows() {
        for (m, v) in mean.iter_mut().zip(feat.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for r in 0..feat.rows() {
        for (c, v) in feat.row(r).iter().enumerate() {
            let diff = v - mean[c];
            var[c] += diff * diff;
        }
    }
    let std = var.iter().map(|v| (v / n).max(1e-8).sqrt()).collect();
    Ok(NormStats { mean, std })
}

/// Applies stored statistics: `(x - mean) / std` per column.
pub fn normalize_apply(feat: &Matrix, stats: &NormStats) -> Result<Matrix> {
    if feat.cols() != stats.mean.len() {
        return Err(Error::Dim(format!(
            "features have {} columns, stats have {}",
            feat.cols(),
            stats.mean.len()
        )));
    }
    let mut out = feat.clone();
    for r in 0..out.rows() {
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
    }
    Ok(out)
}

impl NormStats {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Parse {
            what: "normalization stats".into(),
            detail: e.to_string(),
        })?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NormStats> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Parse {
            what: "normalization stats".into(),
            detail: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> Utterance {
        let n = (rate as f64 * secs) as usize;
        Utterance {
            id: "tone".into(),
            samples: (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            sample_rate: rate,
        }
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_count(16000, 400, 160), 98);
        assert_eq!(frame_count(400, 400, 160), 1);
        assert_eq!(frame_count(399, 400, 160), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let win = rng.random_range(2..500usize);
            let hop = rng.random_range(1..win);
            let n = rng.random_range(win..5000);
            let mut t = 0;
            while t * hop + win <= n {
                t += 1;
            }
            assert_eq!(frame_count(n, win, hop), t);
        }
    }

    #[test]
    fn one_second_at_16k_gives_98_frames() {
        let u = tone(440.0, 16000, 1.0, 0.5);
        let f = fbank(&u, &FbankConfig::default()).unwrap();
        assert_eq!(f.rows(), 98);
        assert_eq!(f.cols(), 23);
    }

    #[test]
    fn all_zero_signal_hits_the_log_floor() {
        let cfg = FbankConfig::default();
        let u = Utterance {
            id: "z".into(),
            samples: vec![0.0; 8000],
            sample_rate: 16000,
        };
        let f = fbank(&u, &cfg).unwrap();
        assert!(f.data().iter().all(|&v| v == cfg.log_floor));
    }

    #[test]
    fn too_short_signal_is_rejected() {
        let u = Utterance {
            id: "s".into(),
            samples: vec![0.1; 100],
            sample_rate: 16000,
        };
        assert!(matches!(fbank(&u, &FbankConfig::default()), Err(Error::TooShort { .. })));
    }

    #[test]
    fn pure_tone_peaks_at_the_nearest_filter() {
        let cfg = FbankConfig::default();
        let u = tone(1000.0, 16000, 0.5, 0.5);
        let f = fbank(&u, &cfg).unwrap();
        let centers = mel_filter_centers(&cfg, 16000).unwrap();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().partial_cmp(&(b.1 - 1000.0).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        // Check the argmax on a middle frame, away from onset effects.
        let row = f.row(f.rows() / 2);
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn fbank_is_bit_deterministic() {
        let u = tone(700.0, 16000, 0.3, 0.4);
        let a = fbank(&u, &FbankConfig::default()).unwrap();
        let b = fbank(&u, &FbankConfig::default()).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn deltas_of_constant_are_zero_and_width_triples() {
        let feat = Matrix::from_vec(5, 23, vec![3.25; 5 * 23]).unwrap();
        let out = add_deltas(&feat);
        assert_eq!(out.cols(), 69);
        for r in 0..out.rows() {
            assert!(out.row(r)[23..].iter().all(|&v| v == 0.0));
            assert!(out.row(r)[..23].iter().all(|&v| v == 3.25));
        }
    }

    #[test]
    fn deltas_of_linear_ramp_are_one_in_the_interior() {
        // f_t = t over one filter: interior delta = (1*2 + 2*4)/10 = 1.
        let feat = Matrix::from_vec(9, 1, (0..9).map(|t| t as f64).collect()).unwrap();
        let out = add_deltas(&feat);
        for t in 2..7 {
            assert!((out.get(t, 1) - 1.0).abs() < 1e-12, "delta at {t}");
        }
    }

    #[test]
    fn splice_widths_and_edge_replication() {
        let feat = Matrix::from_vec(1, 69, (0..69).map(|i| i as f64).collect()).unwrap();
        let out = splice_context(&feat, 5);
        assert_eq!(out.cols(), 759);
        for slot in 0..11 {
            assert_eq!(&out.row(0)[slot * 69..(slot + 1) * 69], feat.row(0));
        }
        let id = splice_context(&feat, 0);
        assert!(id.bit_eq(&feat));
    }

    #[test]
    fn splice_interior_matches_brute_force_gather() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feat = Matrix::from_vec(12, 4, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let out = splice_context(&feat, 2);
        assert_eq!(out.cols(), 20);
        for t in 2..10 {
            for (slot, off) in (-2i32..=2).enumerate() {
                let src = (t as i32 + off) as usize;
                assert_eq!(&out.row(t)[slot * 4..(slot + 1) * 4], feat.row(src));
            }
        }
    }

    #[test]
    fn normalize_fit_then_apply_centers_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let feat = Matrix::from_vec(200, 3, (0..600).map(|_| rng.random_range(-5.0..9.0)).collect()).unwrap();
        let stats = normalize_fit(&feat).unwrap();
        let normed = normalize_apply(&feat, &stats).unwrap();
        for c in 0..3 {
            let mean: f64 = (0..200).map(|r| normed.get(r, c)).sum::<f64>() / 200.0;
            assert!(mean.abs() <= 1e-9, "column {c} mean {mean}");
            let var: f64 = (0..200).map(|r| normed.get(r, c).powi(2)).sum::<f64>() / 200.0;
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_columns_normalize_to_zero() {
        let feat = Matrix::from_vec(4, 1, vec![7.5; 4]).unwrap();
        let stats = normalize_fit(&feat).unwrap();
        let normed = normalize_apply(&feat, &stats).unwrap();
        assert!(normed.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_is_affine_in_its_input() {
        let stats = NormStats {
            mean: vec![1.0, -2.0],
            std: vec![2.0, 0.5],
        };
        let x = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        let y = normalize_apply(&x, &stats).unwrap();
        assert_eq!(y.data(), &[1.0, 12.0]);
        // f(a*x) - f(0) scales linearly.
        let x2 = Matrix::from_vec(1, 2, vec![6.0, 8.0]).unwrap();
        let y2 = normalize_apply(&x2, &stats).unwrap();
        let zero = normalize_apply(&Matrix::zeros(1, 2), &stats).unwrap();
        for c in 0..2 {
            let lin = y.get(0, c) - zero.get(0, c);
            let lin2 = y2.get(0, c) - zero.get(0, c);
            assert!((lin2 - 2.0 * lin).abs() < 1e-12);
        }
    }

    #[test]
    fn wav_round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("const.wav");
        write_wav_mono16(&path, &vec![8192i16; 16000], 16000).unwrap();
        let u = read_wav(&path).unwrap();
        assert_eq!(u.sample_rate, 16000);
        assert_eq!(u.samples.len(), 16000);
        for &s in &u.samples {
            assert!((s - 0.25).abs() < 1.0 / 32768.0);
        }
    }

    #[test]
    fn stereo_wav_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        // Hand-build a stereo header.
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&40u32.to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes()); // stereo
        out.extend_from_slice(&16000u32.to_le_bytes());
        out.extend_from_slice(&64000u32.to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&path, out).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::UnsupportedWav(_))));
    }

    #[test]
    fn truncated_wav_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        write_wav_mono16(&path, &[100i16; 50], 8000).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..60]).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Parse { .. })));
    }
}
