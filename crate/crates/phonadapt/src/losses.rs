//! Loss functions with values and gradients: softmax cross-entropy,
//! multi-label binary cross-entropy, per-label squared loss, the
//! pairwise error (PWE) over positive/negative label pairs, and the
//! binary domain loss.
//!
//! Gradient conventions differ by loss and are stated on each function:
//! the cross-entropy family returns gradients w.r.t. pre-squashing
//! *logits* (the usual fused form), while the squared and pairwise
//! losses return gradients w.r.t. the *predictions* they were handed.

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any
/// logarithm so losses stay finite on saturated outputs.
pub const PROB_EPS: f64 = 1e-12;

/// A binary target vector over L labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiLabelTarget {
    bits: Vec<u8>,
}

impl MultiLabelTarget {
    pub fn new(bits: Vec<u8>) -> Result<MultiLabelTarget> {
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Data(format!("multi-label target entries must be 0 or 1, got {bad}")));
        }
        Ok(MultiLabelTarget { bits })
    }

    /// Interprets a real-valued row (e.g. a target-matrix row) as bits.
    pub fn from_row(row: &[f64]) -> Result<MultiLabelTarget> {
        let bits = row
            .iter()
            .map(|&v| {
                if v == 0.0 {
                    Ok(0u8)
                } else if v == 1.0 {
                    Ok(1u8)
                } else {
                    Err(Error::Data(format!("multi-label target entries must be 0 or 1, got {v}")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(MultiLabelTarget { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Indices with bit 1 (the positive label set).
    pub fn positives(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i).collect()
    }

    /// Indices with bit 0 (the complement set).
    pub fn negatives(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 0).map(|(i, _)| i).collect()
    }

    /// True when the pairwise loss is undefined: no positives or no
    /// negatives to pair up.
    pub fn is_degenerate(&self) -> bool {
        let pos = self.bits.iter().filter(|&&b| b == 1).count();
        pos == 0 || pos == self.bits.len()
    }
}

/// A scalar loss plus its gradient. The gradient's basis (logits or
/// predictions) is documented on the producing function.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Max-subtracted softmax; rows of finite logits map to a probability
/// vector summing to 1.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Negative log-probability of the correct class.
///
/// `grad` is w.r.t. the logits that produced `probs`: `probs - onehot(y)`.
pub fn softmax_ce(probs: &[f64], y: usize) -> Result<LossValue> {
    if y >= probs.len() {
        return Err(Error::Index(format!("class id {y} out of range for {} classes", probs.len())));
    }
    let value = -clamp_prob(probs[y]).ln();
    let mut grad = probs.to_vec();
    grad[y] -= 1.0;
    Ok(LossValue { value, grad })
}

/// Multi-label binary cross-entropy over independent sigmoid outputs.
///
/// `grad` is w.r.t. the pre-sigmoid logits: `p - y` per label.
pub fn bce_multilabel(p: &[f64], y: &MultiLabelTarget) -> Result<LossValue> {
    if p.len() != y.len() {
        return Err(Error::Dim(format!("{} predictions vs {} target labels", p.len(), y.len())));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pl, &yl) in p.iter().zip(y.bits()) {
        let pc = clamp_prob(pl);
        value -= if yl == 1 { pc.ln() } else { (1.0 - pc).ln() };
        grad.push(pl - yl as f64);
    }
    Ok(LossValue { value, grad })
}

/// Per-label squared loss `sum_l (p_l - y_l)^2`.
///
/// `grad` is w.r.t. the predictions: `2 (p - y)`.
pub fn squared_multilabel(p: &[f64], y: &MultiLabelTarget) -> Result<LossValue> {
    if p.len() != y.len() {
        return Err(Error::Dim(format!("{} predictions vs {} target labels", p.len(), y.len())));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pl, &yl) in p.iter().zip(y.bits()) {
        let diff = pl - yl as f64;
        value += diff * diff;
        grad.push(2.0 * diff);
    }
    Ok(LossValue { value, grad })
}

/// Pairwise error over positive x negative label pairs:
/// `(1 / (|L||Lbar|)) * sum exp(-(p_k - p_l))` for k positive, l negative.
///
/// `grad` is w.r.t. the predictions. Frames with no positive or no
/// negative label have an undefined normalizer and return
/// [`Error::DegenerateTarget`]; callers skip those frames (zero loss and
/// gradient) and count them.
pub fn pwe_loss(p: &[f64], y: &MultiLabelTarget) -> Result<LossValue> {
    if p.len() != y.len() {
        return Err(Error::Dim(format!("{} predictions vs {} target labels", p.len(), y.len())));
    }
    let pos = y.positives();
    let neg = y.negatives();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateTarget);
    }
    let norm = 1.0 / (pos.len() * neg.len()) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; p.len()];
    for &k in &pos {
        for &l in &neg {
            let term = (-(p[k] - p[l])).exp();
            value += term;
            grad[k] -= term;
            grad[l] += term;
        }
    }
    value *= norm;
    for g in &mut grad {
        *g *= norm;
    }
    Ok(LossValue { value, grad })
}

/// Binary domain loss `d log(1/o) + (1-d) log(1/(1-o))` for a logistic
/// domain output `o`.
///
/// `grad` is the single-entry gradient w.r.t. the pre-sigmoid logit:
/// `o - d`. This is `bce_multilabel` with one label.
pub fn domain_loss(o: f64, d: u8) -> Result<LossValue> {
    if d > 1 {
        return Err(Error::DomainLabel(d));
    }
    let oc = clamp_prob(o);
    let value = if d == 1 { -oc.ln() } else { -(1.0 - oc).ln() };
    Ok(LossValue {
        value,
        grad: vec![o - d as f64],
    })
}
