//! Reverse cross-validation: hyperparameter selection without target
//! labels. For each grid point a forward DANN is trained source to
//! target, the target set is self-labeled with that model's
//! predictions, a reverse model is trained treating the self-labeled
//! target as the source (with the unlabeled source as its target), and
//! the reverse model is scored on held-out labeled source data. The
//! grid point whose reverse model scores best wins.
//!
//! Protocol constants are fixed for reproducibility: the source is
//! split 90/10 train/validation; self-labels are argmax classes for a
//! single-label head and 0.5-thresholded bits for a multi-label head.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dann::{predict_label_probs, train_dann, AdvTrainConfig, DannSpec, HeadKind};
use crate::dataset::{Dataset, UttSpan};
use crate::error::{Error, Result};
use crate::eval::{argmax_rows, frame_error_rate, macro_f1};
use crate::matrix::Matrix;
use crate::seeding::{self, streams};

/// One hyperparameter combination under evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub lambda: f64,
    pub lr0: f64,
    pub hidden_dims: Vec<usize>,
}

/// The model family and training template the grid varies around.
#[derive(Debug, Clone)]
pub struct RcvBase {
    pub n_outputs: usize,
    pub head_kind: HeadKind,
    pub train: AdvTrainConfig,
}

/// Outcome for one grid point. `reverse_score` is an accuracy-like
/// quantity (higher is better): label accuracy for single-label heads,
/// macro-F1 for multi-label heads. Degenerate self-labels force the
/// worst possible score.
#[derive(Debug, Clone, Serialize)]
pub struct RcvRow {
    pub index: usize,
    pub point: GridPoint,
    pub reverse_score: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RcvOutcome {
    pub best_index: usize,
    pub best: GridPoint,
    pub rows: Vec<RcvRow>,
}

fn self_label_single(probs: &Matrix) -> (Vec<usize>, bool) {
    let ids = argmax_rows(probs);
    let degenerate = ids.windows(2).all(|w| w[0] == w[1]);
    (ids, degenerate)
}

fn self_label_multi(probs: &Matrix) -> (Matrix, bool) {
    let mut bits = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        for c in 0..probs.cols() {
            bits.set(r, c, if probs.get(r, c) >= 0.5 { 1.0 } else { 0.0 });
        }
    }
    let first = bits.row(0).to_vec();
    let degenerate = (1..bits.rows()).all(|r| bits.row(r) == first.as_slice());
    (bits, degenerate)
}

/// Runs the full protocol over the grid. Deterministic per seed; the
/// returned table has exactly one row per grid point, in grid order.
pub fn reverse_cross_validation(
    grid: &[GridPoint],
    source: &Dataset,
    target: &Dataset,
    base: &RcvBase,
    seed: u64,
) -> Result<RcvOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("reverse cross-validation needs a non-empty grid".into()));
    }
    base.train.validate()?;
    if source.n_frames() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 source frames for a 90/10 split, got {}",
            source.n_frames()
        )));
    }
    match base.head_kind {
        HeadKind::SoftmaxSingleLabel => {
            source.require_phoneme_ids()?;
        }
        HeadKind::SigmoidMultiLabel => {
            source.require_multilabel_targets()?;
        }
    }

    let mut order: Vec<usize> = (0..source.n_frames()).collect();
    let mut rng = seeding::rng_for(seed, streams::RCV);
    order.shuffle(&mut rng);
    let val_n = (source.n_frames() / 10).max(1);
    let val = source.subset(&order[..val_n])?;
    let train = source.subset(&order[val_n..])?;
    let train_unlabeled = train.unlabeled();
    let target_unlabeled = target.unlabeled();

    let mut rows = Vec::with_capacity(grid.len());
    for (index, point) in grid.iter().enumerate() {
        let mut cfg = base.train.clone();
        cfg.lambda = point.lambda;
        cfg.sgd.lr0 = point.lr0;
        let spec = DannSpec {
            input_dim: source.dim(),
            hidden_dims: point.hidden_dims.clone(),
            n_outputs: base.n_outputs,
            head_kind: base.head_kind,
        };

        let (forward, _) = train_dann(&train, &target_unlabeled, &spec, &cfg)?;
        let probs = predict_label_probs(&forward, target.features())?;

        let (reverse_source, degenerate) = match base.head_kind {
            HeadKind::SoftmaxSingleLabel => {
                let (ids, degenerate) = self_label_single(&probs);
                (target_unlabeled.with_phoneme_ids(ids)?, degenerate)
            }
            HeadKind::SigmoidMultiLabel => {
                let (bits, degenerate) = self_label_multi(&probs);
                let n = target.n_frames();
                (
                    Dataset::new(
                        target.features().clone(),
                        None,
                        Some(bits),
                        target.domains().to_vec(),
                        vec![UttSpan {
                            id: "self-labeled".into(),
                            range: 0..n,
                        }],
                    )?,
                    degenerate,
                )
            }
        };

        if degenerate {
            rows.push(RcvRow {
                index,
                point: point.clone(),
                reverse_score: -1.0,
                degenerate: true,
            });
            continue;
        }

        let (reverse, _) = train_dann(&reverse_source, &train_unlabeled, &spec, &cfg)?;
        let val_probs = predict_label_probs(&reverse, val.features())?;
        let reverse_score = match base.head_kind {
            HeadKind::SoftmaxSingleLabel => {
                1.0 - frame_error_rate(&argmax_rows(&val_probs), val.require_phoneme_ids()?)?
            }
            HeadKind::SigmoidMultiLabel => macro_f1(&val_probs, val.require_multilabel_targets()?)?,
        };
        rows.push(RcvRow {
            index,
            point: point.clone(),
            reverse_score,
            degenerate: false,
        });
    }

    let mut best_index = 0;
    for row in &rows {
        if row.reverse_score > rows[best_index].reverse_score {
            best_index = row.index;
        }
    }
    Ok(RcvOutcome {
        best_index,
        best: grid[best_index].clone(),
        rows,
    })
}
