//! The two-stage adaptation pipeline: a multi-label DANN is trained on
//! phonetic-feature targets, its probability scores are appended to the
//! acoustic features, and a phoneme classifier is trained on spliced
//! segments of the appended features. Phonetic scores for test data
//! come from the already-trained DANN; the phoneme classifier itself
//! has no domain head.
//!
//! Also here: the no-adaptation baseline, the direct single-label-DANN
//! arm those experiments are compared against, and the shared
//! frame-to-segment scoring used by reports.
//!
//! Data flow is strictly unsupervised on the target side: every
//! training call receives the target split through
//! [`Dataset::unlabeled`], so label-bearing views never reach a
//! training loop.

use serde::Serialize;

use crate::dann::{self, phonetic_scores, train_dann, AdvTrainConfig, DannSpec, EpochStats, HeadKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{self, argmax_rows, EvalReport};
use crate::frontend::{add_deltas, normalize_apply, normalize_fit, splice_context, NormStats};
use crate::losses::softmax_ce;
use crate::matrix::Matrix;
use crate::nn::{
    dense_backward, dense_forward, init_layer, mlp_backward_all, mlp_forward_all, sgd_step, sgd_update_slice,
    Activation, DenseLayer, LayerGrads, MlpParams, SgdConfig,
};
use crate::phonetics::{FoldMap, SpeTable, N_FEATURES};
use crate::seeding::{self, streams};

/// Columnwise concatenation `[acoustic | scores]`; the first block of
/// the result is bit-identical to the acoustic input.
pub fn append_scores(acoustic: &Matrix, scores: &Matrix) -> Result<Matrix> {
    acoustic.hstack(scores)
}

/// The phoneme classifier: an activation stack plus a linear softmax
/// head. Deliberately has no domain parameters — adaptation reaches
/// this stage only through the appended scores.
#[derive(Debug, Clone)]
pub struct PhonemeDnn {
    pub hidden: MlpParams,
    pub head: DenseLayer,
    pub activation: Activation,
}

impl PhonemeDnn {
    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.head.out_dim()
    }
}

/// Softmax class probabilities, one row per input frame.
pub fn classifier_probs(dnn: &PhonemeDnn, x: &Matrix) -> Result<Matrix> {
    let outs = mlp_forward_all(x, &dnn.hidden, dnn.activation)?;
    let h = outs.last().expect("classifier has layers");
    let logits = dense_forward(h, &dnn.head, Activation::Identity)?;
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        probs.row_mut(r).copy_from_slice(&crate::losses::softmax(logits.row(r)));
    }
    Ok(probs)
}

/// Trains the phoneme classifier with seeded minibatch SGD. Returns the
/// parameters and the mean cross-entropy per epoch.
pub fn train_phoneme_dnn(
    features: &Matrix,
    phoneme_ids: &[usize],
    n_classes: usize,
    hidden_dims: &[usize],
    activation: Activation,
    sgd: &SgdConfig,
) -> Result<(PhonemeDnn, Vec<f64>)> {
    sgd.validate()?;
    if features.rows() != phoneme_ids.len() {
        return Err(Error::Dim(format!(
            "{} frames vs {} labels",
            features.rows(),
            phoneme_ids.len()
        )));
    }
    if features.rows() == 0 {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if let Some(&bad) = phoneme_ids.iter().find(|&&id| id >= n_classes) {
        return Err(Error::Index(format!("phoneme id {bad} out of range for {n_classes} classes")));
    }
    let mut rng = seeding::rng_for(sgd.seed, streams::DNN_TRAIN);
    let mut dims = vec![features.cols()];
    dims.extend_from_slice(hidden_dims);
    let mut layers = Vec::with_capacity(dims.len().saturating_sub(1));
    for w in dims.windows(2) {
        layers.push(init_layer(w[0], w[1], &mut rng));
    }
    if layers.is_empty() {
        return Err(Error::Config("phoneme classifier needs at least one hidden layer".into()));
    }
    let mut hidden = MlpParams { layers };
    let mut head = init_layer(*dims.last().expect("non-empty"), n_classes, &mut rng);

    let mut shuffle_rng = seeding::rng_for(sgd.seed, streams::SHUFFLE_SOURCE);
    let n = features.rows();
    let steps = (n / sgd.batch_size).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(sgd.epochs);
    let mut t = 0usize;
    for _epoch in 0..sgd.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for step in 0..steps {
            let rows = &order[step * sgd.batch_size..((step + 1) * sgd.batch_size).min(n)];
            let x = features.gather_rows(rows);
            let outs = mlp_forward_all(&x, &hidden, activation)?;
            let h = outs.last().expect("has layers");
            let logits = dense_forward(h, &head, Activation::Identity)?;
            let b = rows.len() as f64;
            let mut upstream = Matrix::zeros(logits.rows(), logits.cols());
            let mut batch_loss = 0.0;
            for (i, &row) in rows.iter().enumerate() {
                let probs = crate::losses::softmax(logits.row(i));
                let lv = softmax_ce(&probs, phoneme_ids[row])?;
                batch_loss += lv.value;
                for (c, g) in lv.grad.iter().enumerate() {
                    upstream.set(i, c, g / b);
                }
            }
            loss_sum += batch_loss / b;
            let (head_grads, grad_h) = dense_backward(h, &head, Activation::Identity, &logits, &upstream)?;
            let (hidden_grads, _) = mlp_backward_all(&x, &hidden, activation, &outs, &grad_h)?;
            sgd_step(&mut hidden, &hidden_grads, t, sgd)?;
            apply_layer_update(&mut head, &head_grads, t, sgd)?;
            t += 1;
        }
        epoch_losses.push(loss_sum / steps as f64);
    }
    Ok((
        PhonemeDnn {
            hidden,
            head,
            activation,
        },
        epoch_losses,
    ))
}

fn apply_layer_update(layer: &mut DenseLayer, grads: &LayerGrads, t: usize, sgd: &SgdConfig) -> Result<()> {
    sgd_update_slice(layer.w.data_mut(), grads.w.data(), t, sgd)?;
    sgd_update_slice(&mut layer.b, &grads.b, t, sgd)
}

/// Dimensions observed at each stage of one experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DimsTrace {
    pub raw: usize,
    pub with_deltas: usize,
    pub appended: usize,
    pub spliced: usize,
}

/// Everything an adaptation experiment needs besides the data.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Splice half-width; 5 gives the 11-frame segments.
    pub context: usize,
    /// Feed the DANN spliced context windows rather than single frames.
    pub splice_dann_input: bool,
    pub dann_hidden: Vec<usize>,
    pub dann_train: AdvTrainConfig,
    pub dnn_hidden: Vec<usize>,
    pub dnn_activation: Activation,
    pub dnn_sgd: SgdConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.dann_train.validate()?;
        self.dnn_sgd.validate()?;
        if self.dann_hidden.is_empty() || self.dnn_hidden.is_empty() {
            return Err(Error::Config("hidden layer lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// One experiment's outputs: reports for both test splits plus the
/// dimension trace and training diagnostics.
#[derive(Debug, Clone)]
pub struct AdaptationOutcome {
    pub source_report: EvalReport,
    pub target_report: EvalReport,
    pub dims: DimsTrace,
    pub dann_history: Vec<EpochStats>,
    pub dnn_losses: Vec<f64>,
}

/// Applies a per-utterance feature transform, leaving labels and
/// utterance structure untouched.
fn map_features_per_utterance(ds: &Dataset, f: impl Fn(&Matrix) -> Matrix) -> Result<Dataset> {
    let mut parts = Vec::with_capacity(ds.utterances().len());
    for span in ds.utterances() {
        let rows: Vec<usize> = span.range.clone().collect();
        parts.push(f(&ds.features().gather_rows(&rows)));
    }
    let stacked = Matrix::vstack(&parts.iter().collect::<Vec<_>>())?;
    ds.with_features(stacked)
}

/// Normalized 69-dim features for the four splits plus the stats that
/// produced them. Fit uses source and target TRAIN features only —
/// both unlabeled views, so this respects the unsupervised protocol.
struct Prepared {
    train_source: Dataset,
    train_target: Dataset,
    test_source: Dataset,
    test_target: Dataset,
    raw_dim: usize,
    delta_dim: usize,
}

fn prepare_splits(
    train_source: &Dataset,
    train_target: &Dataset,
    test_source: &Dataset,
    test_target: &Dataset,
) -> Result<Prepared> {
    let raw_dim = train_source.dim();
    let with_deltas =
        |ds: &Dataset| map_features_per_utterance(ds, add_deltas);
    let tr_s = with_deltas(train_source)?;
    let tr_t = with_deltas(train_target)?;
    let te_s = with_deltas(test_source)?;
    let te_t = with_deltas(test_target)?;
    let delta_dim = tr_s.dim();

    let pooled = Matrix::vstack(&[tr_s.features(), tr_t.features()])?;
    let stats: NormStats = normalize_fit(&pooled)?;
    let norm = |ds: Dataset| -> Result<Dataset> {
        let f = normalize_apply(ds.features(), &stats)?;
        ds.with_features(f)
    };
    Ok(Prepared {
        train_source: norm(tr_s)?,
        train_target: norm(tr_t)?,
        test_source: norm(te_s)?,
        test_target: norm(te_t)?,
        raw_dim,
        delta_dim,
    })
}

fn spliced(ds: &Dataset, k: usize) -> Result<Dataset> {
    map_features_per_utterance(ds, |m| splice_context(m, k))
}

/// Aggregate approximate PER over a dataset: per utterance, fold both
/// the frame predictions and the reference ids to the reduced phone
/// set, collapse, drop silence, and pool edit distances over the total
/// reference length.
pub fn approx_per_dataset(pred_ids: &[usize], data: &Dataset, table: &SpeTable, fold: &FoldMap) -> Result<f64> {
    let refs = data.require_phoneme_ids()?;
    if pred_ids.len() != refs.len() {
        return Err(Error::Eval(format!("{} predictions vs {} frames", pred_ids.len(), refs.len())));
    }
    let (fold_of, inventory) = fold.fold_ids(table);
    let fold_frame = |ids: &[usize]| -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let mapped = fold_of
                .get(id)
                .ok_or_else(|| Error::Index(format!("phoneme id {id} outside the table")))?;
            if let Some(m) = mapped {
                out.push(*m);
            }
        }
        Ok(out)
    };
    let silence_folded = inventory
        .iter()
        .position(|s| s == crate::phonetics::SILENCE)
        .ok_or_else(|| Error::Metric("fold inventory lacks silence".into()))?;
    let mut dist = 0usize;
    let mut ref_len = 0usize;
    for span in data.utterances() {
        let hyp = eval::collapse_frames(&fold_frame(&pred_ids[span.range.clone()])?, silence_folded);
        let ref_seq = eval::collapse_frames(&fold_frame(&refs[span.range.clone()])?, silence_folded);
        if ref_seq.is_empty() {
            continue; // all-silence utterance contributes nothing
        }
        dist += eval::edit_distance(&hyp, &ref_seq);
        ref_len += ref_seq.len();
    }
    if ref_len == 0 {
        return Err(Error::Metric("no non-silence reference material".into()));
    }
    Ok(dist as f64 / ref_len as f64)
}

fn classifier_report(
    dnn: &PhonemeDnn,
    data: &Dataset,
    table: &SpeTable,
    fold: &FoldMap,
) -> Result<EvalReport> {
    let probs = classifier_probs(dnn, data.features())?;
    let pred = argmax_rows(&probs);
    let refs = data.require_phoneme_ids()?;
    let names: Vec<String> = table.phonemes().map(str::to_string).collect();
    Ok(EvalReport {
        frame_error_rate: eval::frame_error_rate(&pred, refs)?,
        per_class_accuracy: eval::per_class_accuracy(&pred, refs, &names)?,
        macro_f1_multilabel: None,
        domain_classifier_accuracy: None,
        proxy_a_distance: None,
        approx_per: Some(approx_per_dataset(&pred, data, table, fold)?),
    })
}

/// Runs the full adaptation flow on prepared splits and returns the
/// source-test and target-test reports. Any stage failure is wrapped
/// with the stage's name.
pub fn run_adaptation_experiment(
    train_source: &Dataset,
    train_target: &Dataset,
    test_source: &Dataset,
    test_target: &Dataset,
    table: &SpeTable,
    cfg: &PipelineConfig,
) -> Result<AdaptationOutcome> {
    cfg.validate()?;
    let prep = prepare_splits(train_source, train_target, test_source, test_target).map_err(|e| e.in_stage("frontend"))?;
    let k = cfg.context;

    // Stage 1: the multi-label DANN on phonetic targets. The target
    // split enters as an unlabeled view.
    let dann_view = |ds: &Dataset| -> Result<Dataset> {
        if cfg.splice_dann_input {
            spliced(ds, k)
        } else {
            Ok(ds.clone())
        }
    };
    let dann_train_src = dann_view(&prep.train_source).map_err(|e| e.in_stage("dann"))?;
    let dann_train_tgt = dann_view(&prep.train_target).map_err(|e| e.in_stage("dann"))?.unlabeled();
    let spec = DannSpec {
        input_dim: dann_train_src.dim(),
        hidden_dims: cfg.dann_hidden.clone(),
        n_outputs: N_FEATURES,
        head_kind: HeadKind::SigmoidMultiLabel,
    };
    let (dann_params, dann_history) =
        train_dann(&dann_train_src, &dann_train_tgt, &spec, &cfg.dann_train).map_err(|e| e.in_stage("dann"))?;

    // Stage 2: scores from the already-trained DANN for all splits.
    let score_split = |ds: &Dataset| -> Result<Matrix> {
        let view = dann_view(ds)?;
        phonetic_scores(&dann_params, view.features())
    };
    let scores_train_src = score_split(&prep.train_source).map_err(|e| e.in_stage("scores"))?;
    let scores_test_src = score_split(&prep.test_source).map_err(|e| e.in_stage("scores"))?;
    let scores_test_tgt = score_split(&prep.test_target).map_err(|e| e.in_stage("scores"))?;

    // Stage 3: append and splice.
    let appended = |ds: &Dataset, scores: &Matrix| -> Result<Dataset> {
        let a = append_scores(ds.features(), scores)?;
        ds.with_features(a)
    };
    let app_train_src = appended(&prep.train_source, &scores_train_src).map_err(|e| e.in_stage("append"))?;
    let app_test_src = appended(&prep.test_source, &scores_test_src).map_err(|e| e.in_stage("append"))?;
    let app_test_tgt = appended(&prep.test_target, &scores_test_tgt).map_err(|e| e.in_stage("append"))?;
    let appended_dim = app_train_src.dim();
    let spl_train_src = spliced(&app_train_src, k).map_err(|e| e.in_stage("splice"))?;
    let spl_test_src = spliced(&app_test_src, k).map_err(|e| e.in_stage("splice"))?;
    let spl_test_tgt = spliced(&app_test_tgt, k).map_err(|e| e.in_stage("splice"))?;

    // Stage 4: the phoneme classifier, trained on labeled source only.
    let (dnn, dnn_losses) = train_phoneme_dnn(
        spl_train_src.features(),
        spl_train_src.require_phoneme_ids().map_err(|e| e.in_stage("phoneme-dnn"))?,
        table.len(),
        &cfg.dnn_hidden,
        cfg.dnn_activation,
        &cfg.dnn_sgd,
    )
    .map_err(|e| e.in_stage("phoneme-dnn"))?;

    // Stage 5: evaluation plus domain diagnostics on the DANN's
    // representation of the test splits.
    let fold = FoldMap::builtin_timit39();
    let mut source_report = classifier_report(&dnn, &spl_test_src, table, &fold).map_err(|e| e.in_stage("evaluate"))?;
    let mut target_report = classifier_report(&dnn, &spl_test_tgt, table, &fold).map_err(|e| e.in_stage("evaluate"))?;
    let f1_of = |scores: &Matrix, ds: &Dataset| -> Result<f64> {
        eval::macro_f1(scores, ds.require_multilabel_targets()?)
    };
    source_report.macro_f1_multilabel =
        Some(f1_of(&scores_test_src, &prep.test_source).map_err(|e| e.in_stage("evaluate"))?);
    target_report.macro_f1_multilabel =
        Some(f1_of(&scores_test_tgt, &prep.test_target).map_err(|e| e.in_stage("evaluate"))?);
    let repr = |ds: &Dataset| -> Result<Matrix> {
        let view = dann_view(ds)?;
        dann::representation(&dann_params, view.features())
    };
    let h_src = repr(&prep.test_source).map_err(|e| e.in_stage("evaluate"))?;
    let h_tgt = repr(&prep.test_target).map_err(|e| e.in_stage("evaluate"))?;
    let probe_seed = cfg.dann_train.sgd.seed;
    if h_src.rows() >= 20 && h_tgt.rows() >= 20 {
        let acc = eval::domain_probe_accuracy(&h_src, &h_tgt, probe_seed).map_err(|e| e.in_stage("evaluate"))?;
        let pad = (2.0 * (1.0 - 2.0 * (1.0 - acc))).clamp(0.0, 2.0);
        for report in [&mut source_report, &mut target_report] {
            report.domain_classifier_accuracy = Some(acc);
            report.proxy_a_distance = Some(pad);
        }
    }

    Ok(AdaptationOutcome {
        source_report,
        target_report,
        dims: DimsTrace {
            raw: prep.raw_dim,
            with_deltas: prep.delta_dim,
            appended: appended_dim,
            spliced: spl_train_src.dim(),
        },
        dann_history,
        dnn_losses,
    })
}

/// The no-adaptation baseline: the same phoneme classifier trained on
/// the plain delta features — no DANN, no scores, no context splice.
pub fn run_baseline_experiment(
    train_source: &Dataset,
    train_target: &Dataset,
    test_source: &Dataset,
    test_target: &Dataset,
    table: &SpeTable,
    cfg: &PipelineConfig,
) -> Result<AdaptationOutcome> {
    cfg.validate()?;
    let prep = prepare_splits(train_source, train_target, test_source, test_target).map_err(|e| e.in_stage("frontend"))?;
    let (dnn, dnn_losses) = train_phoneme_dnn(
        prep.train_source.features(),
        prep.train_source.require_phoneme_ids().map_err(|e| e.in_stage("phoneme-dnn"))?,
        table.len(),
        &cfg.dnn_hidden,
        cfg.dnn_activation,
        &cfg.dnn_sgd,
    )
    .map_err(|e| e.in_stage("phoneme-dnn"))?;
    let fold = FoldMap::builtin_timit39();
    let source_report = classifier_report(&dnn, &prep.test_source, table, &fold).map_err(|e| e.in_stage("evaluate"))?;
    let target_report = classifier_report(&dnn, &prep.test_target, table, &fold).map_err(|e| e.in_stage("evaluate"))?;
    Ok(AdaptationOutcome {
        source_report,
        target_report,
        dims: DimsTrace {
            raw: prep.raw_dim,
            with_deltas: prep.delta_dim,
            appended: prep.delta_dim,
            spliced: prep.delta_dim,
        },
        dann_history: Vec::new(),
        dnn_losses,
    })
}

/// Adaptation applied directly to the phoneme task: one single-label
/// DANN over spliced acoustic features, no phonetic stage. The
/// comparison arm for the two-stage design.
pub fn run_direct_dann_experiment(
    train_source: &Dataset,
    train_target: &Dataset,
    test_source: &Dataset,
    test_target: &Dataset,
    table: &SpeTable,
    cfg: &PipelineConfig,
) -> Result<AdaptationOutcome> {
    cfg.validate()?;
    let prep = prepare_splits(train_source, train_target, test_source, test_target).map_err(|e| e.in_stage("frontend"))?;
    let k = cfg.context;
    let spl_train_src = spliced(&prep.train_source, k).map_err(|e| e.in_stage("splice"))?;
    let spl_train_tgt = spliced(&prep.train_target, k).map_err(|e| e.in_stage("splice"))?.unlabeled();
    let spl_test_src = spliced(&prep.test_source, k).map_err(|e| e.in_stage("splice"))?;
    let spl_test_tgt = spliced(&prep.test_target, k).map_err(|e| e.in_stage("splice"))?;
    let spec = DannSpec {
        input_dim: spl_train_src.dim(),
        hidden_dims: cfg.dnn_hidden.clone(),
        n_outputs: table.len(),
        head_kind: HeadKind::SoftmaxSingleLabel,
    };
    let (params, dann_history) =
        train_dann(&spl_train_src, &spl_train_tgt, &spec, &cfg.dann_train).map_err(|e| e.in_stage("dann"))?;
    let fold = FoldMap::builtin_timit39();
    let names: Vec<String> = table.phonemes().map(str::to_string).collect();
    let report_for = |ds: &Dataset| -> Result<EvalReport> {
        let probs = dann::predict_label_probs(&params, ds.features())?;
        let pred = argmax_rows(&probs);
        let refs = ds.require_phoneme_ids()?;
        Ok(EvalReport {
            frame_error_rate: eval::frame_error_rate(&pred, refs)?,
            per_class_accuracy: eval::per_class_accuracy(&pred, refs, &names)?,
            macro_f1_multilabel: None,
            domain_classifier_accuracy: None,
            proxy_a_distance: None,
            approx_per: Some(approx_per_dataset(&pred, ds, table, &fold)?),
        })
    };
    let source_report = report_for(&spl_test_src).map_err(|e| e.in_stage("evaluate"))?;
    let target_report = report_for(&spl_test_tgt).map_err(|e| e.in_stage("evaluate"))?;
    Ok(AdaptationOutcome {
        source_report,
        target_report,
        dims: DimsTrace {
            raw: prep.raw_dim,
            with_deltas: prep.delta_dim,
            appended: prep.delta_dim,
            spliced: spl_train_src.dim(),
        },
        dann_history,
        dnn_losses: Vec::new(),
    })
}
