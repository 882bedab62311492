//! Evaluation: frame error rate, per-class accuracy, multi-label
//! macro-F1, an approximate phoneme error rate from collapsed frame
//! decisions, and domain-divergence diagnostics (probe accuracy and
//! proxy A-distance).
//!
//! `approx_per` is a desk-scale proxy: it collapses consecutive
//! identical frame predictions into a sequence and compares by edit
//! distance. It is NOT the PER of a full HMM decoding pipeline, and
//! reports flag it as an approximation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dann::{predict_label_probs, DannParams, HeadKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::sigmoid;
use crate::seeding::{self, streams};

/// Metrics of one model on one dataset; pair-level domain diagnostics
/// are filled in by the caller when a source/target pair is available.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub frame_error_rate: f64,
    pub per_class_accuracy: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1_multilabel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_classifier_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proxy_a_distance: Option<f64>,
    /// Collapsed-frame edit-distance rate; an approximation, not a
    /// decoder PER.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approx_per: Option<f64>,
}

/// Row-wise argmax (first maximum wins).
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            m.row(r)
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Misclassified frames / total frames.
pub fn frame_error_rate(pred: &[usize], reference: &[usize]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::Eval(format!("{} predictions vs {} references", pred.len(), reference.len())));
    }
    if reference.is_empty() {
        return Err(Error::Eval("cannot score an empty dataset".into()));
    }
    let wrong = pred.iter().zip(reference).filter(|(p, r)| p != r).count();
    Ok(wrong as f64 / reference.len() as f64)
}

/// Accuracy per reference class, keyed by the supplied class names.
/// Classes absent from the reference are omitted.
pub fn per_class_accuracy(pred: &[usize], reference: &[usize], names: &[String]) -> Result<BTreeMap<String, f64>> {
    if pred.len() != reference.len() {
        return Err(Error::Eval(format!("{} predictions vs {} references", pred.len(), reference.len())));
    }
    let mut correct: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&p, &r) in pred.iter().zip(reference) {
        let e = correct.entry(r).or_insert((0, 0));
        e.1 += 1;
        if p == r {
            e.0 += 1;
        }
    }
    let mut out = BTreeMap::new();
    for (class, (hits, total)) in correct {
        let name = names
            .get(class)
            .cloned()
            .ok_or_else(|| Error::Index(format!("class id {class} has no name (have {})", names.len())))?;
        out.insert(name, hits as f64 / total as f64);
    }
    Ok(out)
}

/// Macro-averaged F1 over labels at threshold 0.5 (score >= 0.5 counts
/// as positive). A label with no positives in either reference or
/// prediction contributes an F1 of 0, the usual strict convention.
pub fn macro_f1(scores: &Matrix, targets: &Matrix) -> Result<f64> {
    if scores.rows() != targets.rows() || scores.cols() != targets.cols() {
        return Err(Error::Dim(format!(
            "scores are {}x{}, targets {}x{}",
            scores.rows(),
            scores.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    if scores.cols() == 0 {
        return Err(Error::Eval("no labels to score".into()));
    }
    let mut f1_sum = 0.0;
    for l in 0..scores.cols() {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for r in 0..scores.rows() {
            let pred = scores.get(r, l) >= 0.5;
            let truth = targets.get(r, l) == 1.0;
            match (pred, truth) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(f1_sum / scores.cols() as f64)
}

/// Levenshtein distance between two id sequences (two-row DP).
pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ai) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Collapses consecutive identical frame ids and removes the silence
/// id; the decoding proxy used by [`approx_per`].
pub fn collapse_frames(frame_ids: &[usize], silence_id: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<usize> = None;
    for &id in frame_ids {
        if Some(id) != prev && id != silence_id {
            out.push(id);
        }
        prev = Some(id);
    }
    out
}

/// Approximate phoneme error rate: collapse consecutive identical
/// frame predictions, drop silence from both sides, and divide the
/// edit distance by the reference length. Expects already-folded ids.
pub fn approx_per(frame_preds: &[usize], reference: &[usize], silence_id: usize) -> Result<f64> {
    let hyp = collapse_frames(frame_preds, silence_id);
    let refs: Vec<usize> = reference.iter().copied().filter(|&r| r != silence_id).collect();
    if refs.is_empty() {
        return Err(Error::Metric("empty reference sequence after silence removal".into()));
    }
    Ok(edit_distance(&hyp, &refs) as f64 / refs.len() as f64)
}

/// Accuracy of a freshly trained logistic domain probe on held-out
/// halves of the two feature sets (per-domain 50/50 split, seeded).
///
/// The probe is fit by full-batch gradient descent from zero
/// initialization on mean/variance-normalized inputs — deterministic
/// for a given seed.
pub fn domain_probe_accuracy(features_src: &Matrix, features_tgt: &Matrix, seed: u64) -> Result<f64> {
    if features_src.rows() < 20 || features_tgt.rows() < 20 {
        return Err(Error::InsufficientData(format!(
            "domain probe needs >= 20 frames per domain, got {} and {}",
            features_src.rows(),
            features_tgt.rows()
        )));
    }
    if features_src.cols() != features_tgt.cols() {
        return Err(Error::Dim(format!(
            "domain feature dims differ: {} vs {}",
            features_src.cols(),
            features_tgt.cols()
        )));
    }
    let mut rng = seeding::rng_for(seed, streams::PROBE);
    let mut split = |m: &Matrix| -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..m.rows()).collect();
        idx.shuffle(&mut rng);
        let half = m.rows() / 2;
        let test = idx.split_off(half);
        (idx, test)
    };
    let (src_train, src_test) = split(features_src);
    let (tgt_train, tgt_test) = split(features_tgt);

    let train_x = features_src.gather_rows(&src_train).vstack_with(features_tgt.gather_rows(&tgt_train))?;
    let stats = crate::frontend::normalize_fit(&train_x)?;
    let train_x = crate::frontend::normalize_apply(&train_x, &stats)?;
    let train_d: Vec<f64> = std::iter::repeat(0.0)
        .take(src_train.len())
        .chain(std::iter::repeat(1.0).take(tgt_train.len()))
        .collect();

    // Logistic regression, full batch, fixed iteration budget.
    let d = train_x.cols();
    let n = train_x.rows() as f64;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let lr = 0.5;
    for _ in 0..400 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for r in 0..train_x.rows() {
            let row = train_x.row(r);
            let t: f64 = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let err = (sigmoid(t) - train_d[r]) / n;
            for (g, &x) in gw.iter_mut().zip(row) {
                *g += err * x;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }

    let mut correct = 0usize;
    let mut total = 0usize;
    for (rows, d_label) in [(src_test, 0.0), (tgt_test, 1.0)] {
        for r in rows {
            let feats = if d_label == 0.0 { features_src } else { features_tgt };
            let row_m = feats.gather_rows(&[r]);
            let row = crate::frontend::normalize_apply(&row_m, &stats)?;
            let t: f64 = w.iter().zip(row.row(0)).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let pred = if sigmoid(t) > 0.5 { 1.0 } else { 0.0 };
            if pred == d_label {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Proxy A-distance `2 (1 - 2 eps)` for held-out probe error `eps`,
/// clipped to `[0, 2]`.
pub fn proxy_a_distance(features_src: &Matrix, features_tgt: &Matrix, seed: u64) -> Result<f64> {
    let acc = domain_probe_accuracy(features_src, features_tgt, seed)?;
    let eps = 1.0 - acc;
    Ok((2.0 * (1.0 - 2.0 * eps)).clamp(0.0, 2.0))
}

impl Matrix {
    /// Rowwise concatenation helper local to evaluation plumbing.
    fn vstack_with(&self, other: Matrix) -> Result<Matrix> {
        Matrix::vstack(&[self, &other])
    }
}

/// Scores a DANN's label head on a labeled dataset: frame metrics for a
/// single-label head, macro-F1 for a multi-label head.
pub fn evaluate(params: &DannParams, data: &Dataset, class_names: &[String]) -> Result<EvalReport> {
    let probs = predict_label_probs(params, data.features())?;
    match params.head_kind {
        HeadKind::SoftmaxSingleLabel => {
            let reference = data.phoneme_ids().ok_or_else(|| Error::Eval("dataset has no labels".into()))?;
            let pred = argmax_rows(&probs);
            Ok(EvalReport {
                frame_error_rate: frame_error_rate(&pred, reference)?,
                per_class_accuracy: per_class_accuracy(&pred, reference, class_names)?,
                macro_f1_multilabel: None,
                domain_classifier_accuracy: None,
                proxy_a_distance: None,
                approx_per: None,
            })
        }
        HeadKind::SigmoidMultiLabel => {
            let targets = data
                .multilabel_targets()
                .ok_or_else(|| Error::Eval("dataset has no multi-label targets".into()))?;
            Ok(EvalReport {
                frame_error_rate: 0.0,
                per_class_accuracy: BTreeMap::new(),
                macro_f1_multilabel: Some(macro_f1(&probs, targets)?),
                domain_classifier_accuracy: None,
                proxy_a_distance: None,
                approx_per: None,
            })
        }
    }
}
