//! Domain-adversarial networks: a shared feature extractor, a label
//! head (softmax single-label or sigmoid multi-label), and a logistic
//! domain head trained at a saddle point.
//!
//! The objective is
//!
//! ```text
//! E = (1/n) sum_src L_y  -  lambda * [ (1/n) sum_src L_d + (1/n') sum_tgt L_d ]
//! ```
//!
//! minimized over the extractor and label head and maximized over the
//! domain head. The maximization is realized with a gradient-reversal
//! layer: forward identity, backward multiplication by `-lambda`. All
//! gradients returned by [`dann_objective`] are descent directions for
//! the optimizer; for the domain head that means the negative of
//! `dE/d(u,z)`, i.e. descending them *ascends* E.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SOURCE_DOMAIN, TARGET_DOMAIN};
use crate::error::{Error, Result};
use crate::losses::{self, MultiLabelTarget, PROB_EPS};
use crate::matrix::Matrix;
use crate::nn::{
    self, dense_backward, dense_forward, init_layer, mlp_backward_all, mlp_forward_all, sigmoid, Activation,
    DenseLayer, LayerGrads, MlpParams, MlpSpec, SgdConfig,
};
use crate::seeding::{self, streams};

/// Output-layer form of the label head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    SoftmaxSingleLabel,
    SigmoidMultiLabel,
}

/// Which loss the multi-label head trains with. BCE is the default;
/// the pairwise loss is selectable for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiLabelLoss {
    #[default]
    Bce,
    Pwe,
}

/// Architecture of a DANN. The feature extractor applies a sigmoid
/// after every layer (the learned representation is the last sigmoid
/// output); its final width is the representation size D shared by both
/// heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DannSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub n_outputs: usize,
    pub head_kind: HeadKind,
}

impl DannSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("feature extractor needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.n_outputs == 0 || self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("all DANN dims must be >= 1".into()));
        }
        Ok(())
    }

    /// Representation width D (the extractor's output size).
    pub fn repr_dim(&self) -> usize {
        *self.hidden_dims.last().expect("validated non-empty")
    }

    fn extractor_spec(&self) -> MlpSpec {
        let mut hidden = self.hidden_dims.clone();
        let out = hidden.pop().expect("validated non-empty");
        MlpSpec::new(self.input_dim, hidden, Activation::Sigmoid, out)
    }
}

/// All trainable parameters: extractor (W, b per layer), label head
/// (V, c), domain head (u, z).
#[derive(Debug, Clone)]
pub struct DannParams {
    pub extractor: MlpParams,
    pub label_head: DenseLayer,
    pub domain_head: DenseLayer,
    pub head_kind: HeadKind,
}

impl DannParams {
    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    pub fn repr_dim(&self) -> usize {
        self.extractor.output_dim()
    }

    pub fn n_outputs(&self) -> usize {
        self.label_head.out_dim()
    }

    pub fn bit_eq(&self, other: &DannParams) -> bool {
        fn layer_eq(a: &DenseLayer, b: &DenseLayer) -> bool {
            a.w.bit_eq(&b.w) && a.b.len() == b.b.len() && a.b.iter().zip(&b.b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.head_kind == other.head_kind
            && self.extractor.bit_eq(&other.extractor)
            && layer_eq(&self.label_head, &other.label_head)
            && layer_eq(&self.domain_head, &other.domain_head)
    }
}

/// Seeded initialization: extractor, label head, and domain head each
/// draw from their own derived stream, so e.g. a run that never touches
/// the domain head still initializes everything else identically.
pub fn init_dann(spec: &DannSpec, seed: u64) -> Result<DannParams> {
    spec.validate()?;
    let extractor = nn::init_params(&spec.extractor_spec(), seed)?;
    let d = spec.repr_dim();
    let mut label_rng = seeding::rng_for(seed, streams::INIT_LABEL_HEAD);
    let label_head = init_layer(d, spec.n_outputs, &mut label_rng);
    let mut domain_rng = seeding::rng_for(seed, streams::INIT_DOMAIN_HEAD);
    let domain_head = init_layer(d, 1, &mut domain_rng);
    Ok(DannParams {
        extractor,
        label_head,
        domain_head,
        head_kind: spec.head_kind,
    })
}

/// Ramp schedule for the adversarial weight: `constant` uses `lambda`
/// as-is; `ramp` scales it by `2/(1+exp(-gamma*progress)) - 1` with
/// training progress in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    #[default]
    Constant,
    Ramp { gamma: f64 },
}

impl LambdaSchedule {
    pub fn lambda_at(&self, base: f64, progress: f64) -> f64 {
        match *self {
            LambdaSchedule::Constant => base,
            LambdaSchedule::Ramp { gamma } => base * (2.0 / (1.0 + (-gamma * progress).exp()) - 1.0),
        }
    }
}

/// Adversarial training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvTrainConfig {
    pub sgd: SgdConfig,
    pub lambda: f64,
    #[serde(default)]
    pub lambda_schedule: LambdaSchedule,
    /// Probability clamp applied before logarithms during training;
    /// never below the crate-wide floor.
    #[serde(default = "default_clamp_eps")]
    pub clamp_eps: f64,
    #[serde(default)]
    pub multilabel_loss: MultiLabelLoss,
}

fn default_clamp_eps() -> f64 {
    PROB_EPS
}

impl AdvTrainConfig {
    pub fn new(sgd: SgdConfig, lambda: f64) -> AdvTrainConfig {
        AdvTrainConfig {
            sgd,
            lambda,
            lambda_schedule: LambdaSchedule::Constant,
            clamp_eps: PROB_EPS,
            multilabel_loss: MultiLabelLoss::Bce,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if let LambdaSchedule::Ramp { gamma } = self.lambda_schedule {
            if gamma <= 0.0 || !gamma.is_finite() {
                return Err(Error::Config(format!("ramp gamma must be > 0, got {gamma}")));
            }
        }
        if !(0.0..0.5).contains(&self.clamp_eps) {
            return Err(Error::Config(format!("clamp_eps must be in [0, 0.5), got {}", self.clamp_eps)));
        }
        Ok(())
    }
}

/// Gradient-reversal layer, forward half: the identity map.
pub fn grad_reverse_forward(x: &Matrix) -> Matrix {
    x.clone()
}

/// Gradient-reversal layer, backward half: `-lambda * upstream`.
pub fn grad_reverse(upstream: &Matrix, lambda: f64) -> Matrix {
    upstream.scale(-lambda)
}

/// Logistic domain output `o = sigmoid(u.h + z)` per row of `h`.
pub fn domain_head_forward(h: &Matrix, head: &DenseLayer) -> Result<Vec<f64>> {
    if head.out_dim() != 1 {
        return Err(Error::Dim(format!("domain head must have one output unit, has {}", head.out_dim())));
    }
    let logits = dense_forward(h, head, Activation::Identity)?;
    Ok(logits.data().iter().map(|&t| sigmoid(t)).collect())
}

/// Source labels carried by one adversarial batch.
#[derive(Debug, Clone)]
pub enum BatchLabels {
    Single(Vec<usize>),
    Multi(Matrix),
}

/// One balanced training batch: labeled source rows and unlabeled
/// target rows, with implicit pseudo-domain labels d=0 (source) and
/// d=1 (target).
#[derive(Debug, Clone)]
pub struct DomainBatch {
    pub source_x: Matrix,
    pub source_labels: BatchLabels,
    pub target_x: Matrix,
}

/// Descent gradients for every parameter block. `domain_head` is
/// `-dE/d(u,z)` (equivalently `lambda * d(domain loss sums)/d(u,z)`), so
/// one plain SGD step on all blocks realizes the saddle point.
#[derive(Debug, Clone)]
pub struct DannGrads {
    pub extractor: Vec<LayerGrads>,
    pub label_head: LayerGrads,
    pub domain_head: LayerGrads,
}

/// Value breakdown of one objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveValue {
    /// The full adversarial objective E.
    pub e: f64,
    /// `(1/n) sum_src L_y`.
    pub label_loss: f64,
    /// `(1/n) sum_src L_d`.
    pub domain_loss_src: f64,
    /// `(1/n') sum_tgt L_d`.
    pub domain_loss_tgt: f64,
    /// Multi-label frames skipped by the pairwise loss (no positive or
    /// no negative label).
    pub degenerate_targets: usize,
}

fn clamp_prob_to(p: f64, eps: f64) -> f64 {
    let e = eps.max(PROB_EPS);
    p.clamp(e, 1.0 - e)
}

/// Label-head forward/backward on source rows. Returns the mean label
/// loss, the gradient w.r.t. the head logits (already divided by n),
/// the head logits, and the degenerate-target count.
fn label_path(
    h_src: &Matrix,
    labels: &BatchLabels,
    head: &DenseLayer,
    head_kind: HeadKind,
    ml_loss: MultiLabelLoss,
    clamp_eps: f64,
) -> Result<(f64, Matrix, Matrix, usize)> {
    let n = h_src.rows();
    let logits = dense_forward(h_src, head, Activation::Identity)?;
    let inv_n = 1.0 / n as f64;
    let mut upstream = Matrix::zeros(n, head.out_dim());
    let mut loss_sum = 0.0;
    let mut degenerate = 0;
    match (head_kind, labels) {
        (HeadKind::SoftmaxSingleLabel, BatchLabels::Single(ys)) => {
            if ys.len() != n {
                return Err(Error::Dim(format!("{} labels for {n} source rows", ys.len())));
            }
            for r in 0..n {
                let probs = losses::softmax(logits.row(r));
                if ys[r] >= probs.len() {
                    return Err(Error::Index(format!("class id {} out of range for {} classes", ys[r], probs.len())));
                }
                loss_sum += -clamp_prob_to(probs[ys[r]], clamp_eps).ln();
                let row = upstream.row_mut(r);
                for (u, &p) in row.iter_mut().zip(&probs) {
                    *u = p * inv_n;
                }
                row[ys[r]] -= inv_n;
            }
        }
        (HeadKind::SigmoidMultiLabel, BatchLabels::Multi(targets)) => {
            if targets.rows() != n || targets.cols() != head.out_dim() {
                return Err(Error::Dim(format!(
                    "targets are {}x{}, expected {n}x{}",
                    targets.rows(),
                    targets.cols(),
                    head.out_dim()
                )));
            }
            for r in 0..n {
                let p: Vec<f64> = logits.row(r).iter().map(|&t| sigmoid(t)).collect();
                let y = MultiLabelTarget::from_row(targets.row(r))?;
                match ml_loss {
                    MultiLabelLoss::Bce => {
                        for (l, (&pl, &yl)) in p.iter().zip(y.bits()).enumerate() {
                            let pc = clamp_prob_to(pl, clamp_eps);
                            loss_sum -= if yl == 1 { pc.ln() } else { (1.0 - pc).ln() };
                            upstream.set(r, l, (pl - yl as f64) * inv_n);
                        }
                    }
                    MultiLabelLoss::Pwe => match losses::pwe_loss(&p, &y) {
                        Ok(lv) => {
                            loss_sum += lv.value;
                            // Chain through the sigmoid: dL/dt = dL/dp * p(1-p).
                            for (l, (&g, &pl)) in lv.grad.iter().zip(&p).enumerate() {
                                upstream.set(r, l, g * pl * (1.0 - pl) * inv_n);
                            }
                        }
                        Err(Error::DegenerateTarget) => degenerate += 1,
                        Err(other) => return Err(other),
                    },
                }
            }
        }
        _ => return Err(Error::Batch("label kind does not match the head kind".into())),
    }
    Ok((loss_sum * inv_n, upstream, logits, degenerate))
}

/// Domain-head forward/backward over one domain's representations.
/// Returns the mean domain loss, correct-classification count at
/// threshold 0.5, the gradient w.r.t. the head logits scaled by
/// `1/rows`, and the logits.
fn domain_path(h: &Matrix, head: &DenseLayer, d: u8, clamp_eps: f64) -> Result<(f64, usize, Matrix, Matrix)> {
    let rows = h.rows();
    let logits = dense_forward(h, head, Activation::Identity)?;
    let inv = 1.0 / rows as f64;
    let mut upstream = Matrix::zeros(rows, 1);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for r in 0..rows {
        let o = sigmoid(logits.get(r, 0));
        let oc = clamp_prob_to(o, clamp_eps);
        loss_sum += if d == 1 { -oc.ln() } else { -(1.0 - oc).ln() };
        let pred: u8 = if o > 0.5 { 1 } else { 0 };
        if pred == d {
            correct += 1;
        }
        upstream.set(r, 0, (o - d as f64) * inv);
    }
    Ok((loss_sum * inv, correct, upstream, logits))
}

/// Evaluates the adversarial objective and all gradients on one
/// balanced batch.
///
/// Returned gradients are descent directions: exact `dE/d(params)` for
/// the extractor and label head, and `-dE/d(u,z)` for the domain head
/// (the gradient-reversal construction). When `lambda == 0` the domain
/// terms of E vanish; domain statistics are still computed, but the
/// domain path contributes nothing to the extractor gradient and the
/// domain-head gradient is zero.
pub fn dann_objective(
    batch: &DomainBatch,
    params: &DannParams,
    lambda: f64,
    ml_loss: MultiLabelLoss,
    clamp_eps: f64,
) -> Result<(ObjectiveValue, DannGrads)> {
    let n = batch.source_x.rows();
    let n_tgt = batch.target_x.rows();
    if n == 0 || n_tgt == 0 {
        return Err(Error::Batch("batch has an empty domain".into()));
    }
    if n != n_tgt {
        return Err(Error::Batch(format!("unbalanced batch: {n} source rows vs {n_tgt} target rows")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }

    let src_outs = mlp_forward_all(&batch.source_x, &params.extractor, Activation::Sigmoid)?;
    let tgt_outs = mlp_forward_all(&batch.target_x, &params.extractor, Activation::Sigmoid)?;
    let h_src = src_outs.last().expect("extractor has layers");
    let h_tgt = tgt_outs.last().expect("extractor has layers");

    // Label term (source rows only).
    let (label_loss, label_upstream, label_logits, degenerate) =
        label_path(h_src, &batch.source_labels, &params.label_head, params.head_kind, ml_loss, clamp_eps)?;
    let (label_grads, label_h_grad) =
        dense_backward(h_src, &params.label_head, Activation::Identity, &label_logits, &label_upstream)?;

    // Domain term on both halves.
    let (dl_src, _, dom_up_src, dom_logits_src) = domain_path(h_src, &params.domain_head, SOURCE_DOMAIN, clamp_eps)?;
    let (dl_tgt, _, dom_up_tgt, dom_logits_tgt) = domain_path(h_tgt, &params.domain_head, TARGET_DOMAIN, clamp_eps)?;

    let e = label_loss - lambda * (dl_src + dl_tgt);
    if !e.is_finite() {
        return Err(Error::Training {
            at: "objective".into(),
            detail: format!("non-finite objective {e}"),
        });
    }

    // Domain-head descent gradient: lambda * d(sums)/d(u,z).
    let (dh_src, dom_h_src) =
        dense_backward(h_src, &params.domain_head, Activation::Identity, &dom_logits_src, &dom_up_src)?;
    let (dh_tgt, dom_h_tgt) =
        dense_backward(h_tgt, &params.domain_head, Activation::Identity, &dom_logits_tgt, &dom_up_tgt)?;
    let mut domain_grads = dh_src;
    domain_grads.add_in_place(&dh_tgt);
    domain_grads.scale_in_place(lambda);

    // Extractor gradient: label path plus the reversed domain path.
    // lambda == 0 contributes nothing by construction; skip the
    // accumulation so a lambda=0 run is arithmetically identical to
    // source-only training.
    let mut up_src = label_h_grad;
    let mut up_tgt: Option<Matrix> = None;
    if lambda != 0.0 {
        up_src.add_in_place(&grad_reverse(&dom_h_src, lambda));
        up_tgt = Some(grad_reverse(&dom_h_tgt, lambda));
    }
    let (mut ext_grads, _) = mlp_backward_all(&batch.source_x, &params.extractor, Activation::Sigmoid, &src_outs, &up_src)?;
    if let Some(up_tgt) = up_tgt {
        let (tgt_grads, _) = mlp_backward_all(&batch.target_x, &params.extractor, Activation::Sigmoid, &tgt_outs, &up_tgt)?;
        for (acc, g) in ext_grads.iter_mut().zip(&tgt_grads) {
            acc.add_in_place(g);
        }
    }

    Ok((
        ObjectiveValue {
            e,
            label_loss,
            domain_loss_src: dl_src,
            domain_loss_tgt: dl_tgt,
            degenerate_targets: degenerate,
        },
        DannGrads {
            extractor: ext_grads,
            label_head: label_grads,
            domain_head: domain_grads,
        },
    ))
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean label loss over the epoch's batches.
    pub label_loss: f64,
    /// Mean domain loss over the epoch's batches; absent in
    /// source-only training.
    pub domain_loss: Option<f64>,
    /// Domain-head accuracy on the held-out split; absent in
    /// source-only training.
    pub domain_acc: Option<f64>,
    /// Frames skipped by the pairwise loss this epoch.
    pub degenerate_targets: usize,
}

fn gather_labels(ds: &Dataset, head_kind: HeadKind, rows: &[usize]) -> Result<BatchLabels> {
    match head_kind {
        HeadKind::SoftmaxSingleLabel => {
            let ids = ds.require_phoneme_ids()?;
            Ok(BatchLabels::Single(rows.iter().map(|&r| ids[r]).collect()))
        }
        HeadKind::SigmoidMultiLabel => {
            let targets = ds.require_multilabel_targets()?;
            Ok(BatchLabels::Multi(targets.gather_rows(rows)))
        }
    }
}

/// Splits `0..n` into (train, holdout) with a seeded shuffle. Domains
/// with fewer than 10 frames keep everything in train and measure
/// holdout statistics on the training frames instead.
fn holdout_split(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = if n >= 10 { n / 10 } else { 0 };
    let held = idx.split_off(n - k);
    (idx, held)
}

fn domain_accuracy(params: &DannParams, x: &Matrix, d: u8) -> Result<(usize, usize)> {
    if x.rows() == 0 {
        return Ok((0, 0));
    }
    let outs = mlp_forward_all(x, &params.extractor, Activation::Sigmoid)?;
    let o = domain_head_forward(outs.last().expect("layers"), &params.domain_head)?;
    let correct = o
        .iter()
        .filter(|&&p| if p > 0.5 { d == 1 } else { d == 0 })
        .count();
    Ok((correct, x.rows()))
}

/// Shared trainer behind [`train_dann`] and [`train_source_only`].
///
/// The source-side arithmetic (initialization streams, holdout draw,
/// per-epoch shuffles, batch assembly, label gradients, step indices)
/// is identical whether or not a target domain is present, which is
/// what makes the lambda=0 bit-identity reduction hold.
fn train_loop(
    source: &Dataset,
    target: Option<&Dataset>,
    spec: &DannSpec,
    cfg: &AdvTrainConfig,
) -> Result<(DannParams, Vec<EpochStats>)> {
    spec.validate()?;
    cfg.validate()?;
    if source.n_frames() == 0 {
        return Err(Error::Data("empty domain: source has no frames".into()));
    }
    if source.dim() != spec.input_dim {
        return Err(Error::Dim(format!(
            "source features have {} dims, spec expects {}",
            source.dim(),
            spec.input_dim
        )));
    }
    if let Some(t) = target {
        if t.n_frames() == 0 {
            return Err(Error::Data("empty domain: target has no frames".into()));
        }
        if t.dim() != spec.input_dim {
            return Err(Error::Dim(format!(
                "target features have {} dims, spec expects {}",
                t.dim(),
                spec.input_dim
            )));
        }
    }

    let seed = cfg.sgd.seed;
    let mut params = init_dann(spec, seed)?;

    // Holdout draws: source first, then target, from one stream, so the
    // source split is the same with or without a target domain.
    let mut holdout_rng = seeding::rng_for(seed, streams::HOLDOUT_SPLIT);
    let (src_train, src_held) = holdout_split(source.n_frames(), &mut holdout_rng);
    let (tgt_train, tgt_held) = match target {
        Some(t) => holdout_split(t.n_frames(), &mut holdout_rng),
        None => (Vec::new(), Vec::new()),
    };

    let half = cfg.sgd.batch_size / 2;
    let steps_per_epoch = src_train.len() / half;
    if steps_per_epoch == 0 {
        return Err(Error::Data(format!(
            "not enough source frames for one batch: {} train frames, need {half}",
            src_train.len()
        )));
    }
    let total_steps = steps_per_epoch * cfg.sgd.epochs;

    let mut src_rng = seeding::rng_for(seed, streams::SHUFFLE_SOURCE);
    let mut tgt_rng = seeding::rng_for(seed, streams::SHUFFLE_TARGET);
    let mut src_order = src_train.clone();
    let mut tgt_order = tgt_train.clone();

    let mut history = Vec::with_capacity(cfg.sgd.epochs);
    let mut t_global = 0usize;
    for epoch in 0..cfg.sgd.epochs {
        src_order.shuffle(&mut src_rng);
        if target.is_some() {
            tgt_order.shuffle(&mut tgt_rng);
        }
        let mut label_loss_sum = 0.0;
        let mut domain_loss_sum = 0.0;
        let mut degenerate = 0usize;
        let mut tgt_cursor = 0usize;
        for step in 0..steps_per_epoch {
            let src_rows = &src_order[step * half..(step + 1) * half];
            let src_x = source.features().gather_rows(src_rows);
            let labels = gather_labels(source, spec.head_kind, src_rows)?;

            match target {
                Some(t) => {
                    // Target rows wrap around when the target domain is
                    // smaller; the step count is always source-driven.
                    let mut tgt_rows = Vec::with_capacity(half);
                    for _ in 0..half {
                        tgt_rows.push(tgt_order[tgt_cursor]);
                        tgt_cursor = (tgt_cursor + 1) % tgt_order.len();
                    }
                    let tgt_x = t.features().gather_rows(&tgt_rows);
                    let progress = t_global as f64 / total_steps as f64;
                    let lambda_t = cfg.lambda_schedule.lambda_at(cfg.lambda, progress);
                    let batch = DomainBatch {
                        source_x: src_x,
                        source_labels: labels,
                        target_x: tgt_x,
                    };
                    let (value, grads) = dann_objective(&batch, &params, lambda_t, cfg.multilabel_loss, cfg.clamp_eps)
                        .map_err(|e| match e {
                            Error::Training { detail, .. } => Error::Training {
                                at: format!("epoch {epoch}"),
                                detail,
                            },
                            other => other,
                        })?;
                    label_loss_sum += value.label_loss;
                    domain_loss_sum += (value.domain_loss_src + value.domain_loss_tgt) / 2.0;
                    degenerate += value.degenerate_targets;
                    nn::sgd_step(&mut params.extractor, &grads.extractor, t_global, &cfg.sgd)?;
                    nn::sgd_update_slice(params.label_head.w.data_mut(), grads.label_head.w.data(), t_global, &cfg.sgd)?;
                    nn::sgd_update_slice(&mut params.label_head.b, &grads.label_head.b, t_global, &cfg.sgd)?;
                    if lambda_t != 0.0 {
                        nn::sgd_update_slice(params.domain_head.w.data_mut(), grads.domain_head.w.data(), t_global, &cfg.sgd)?;
                        nn::sgd_update_slice(&mut params.domain_head.b, &grads.domain_head.b, t_global, &cfg.sgd)?;
                    }
                }
                None => {
                    // Plain source-only classification; identical label
                    // arithmetic, no domain path.
                    let src_outs = mlp_forward_all(&src_x, &params.extractor, Activation::Sigmoid)?;
                    let h_src = src_outs.last().expect("layers");
                    let (loss, upstream, logits, degen) =
                        label_path(h_src, &labels, &params.label_head, spec.head_kind, cfg.multilabel_loss, cfg.clamp_eps)?;
                    if !loss.is_finite() {
                        return Err(Error::Training {
                            at: format!("epoch {epoch}"),
                            detail: format!("non-finite loss {loss}"),
                        });
                    }
                    let (label_grads, label_h_grad) =
                        dense_backward(h_src, &params.label_head, Activation::Identity, &logits, &upstream)?;
                    let (ext_grads, _) =
                        mlp_backward_all(&src_x, &params.extractor, Activation::Sigmoid, &src_outs, &label_h_grad)?;
                    label_loss_sum += loss;
                    degenerate += degen;
                    nn::sgd_step(&mut params.extractor, &ext_grads, t_global, &cfg.sgd)?;
                    nn::sgd_update_slice(params.label_head.w.data_mut(), label_grads.w.data(), t_global, &cfg.sgd)?;
                    nn::sgd_update_slice(&mut params.label_head.b, &label_grads.b, t_global, &cfg.sgd)?;
                }
            }
            t_global += 1;
        }

        let (domain_loss, domain_acc) = match target {
            Some(t) => {
                // Accuracy on the held-out split; tiny domains fall back
                // to their training frames.
                let src_eval = if src_held.is_empty() { &src_train } else { &src_held };
                let tgt_eval = if tgt_held.is_empty() { &tgt_train } else { &tgt_held };
                let (c1, n1) = domain_accuracy(&params, &source.features().gather_rows(src_eval), SOURCE_DOMAIN)?;
                let (c2, n2) = domain_accuracy(&params, &t.features().gather_rows(tgt_eval), TARGET_DOMAIN)?;
                (
                    Some(domain_loss_sum / steps_per_epoch as f64),
                    Some((c1 + c2) as f64 / (n1 + n2) as f64),
                )
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            label_loss: label_loss_sum / steps_per_epoch as f64,
            domain_loss,
            domain_acc,
            degenerate_targets: degenerate,
        });
    }
    Ok((params, history))
}

/// Adversarial training: labeled source, unlabeled target. Batches are
/// balanced halves with seeded shuffling per epoch; deterministic per
/// seed.
pub fn train_dann(
    source: &Dataset,
    target: &Dataset,
    spec: &DannSpec,
    cfg: &AdvTrainConfig,
) -> Result<(DannParams, Vec<EpochStats>)> {
    train_loop(source, Some(target), spec, cfg)
}

/// Non-adversarial baseline: the same architecture trained on source
/// labels alone. With the same seed and config this consumes source
/// rows identically to [`train_dann`], so a lambda=0 adversarial run
/// produces bit-identical parameters.
pub fn train_source_only(source: &Dataset, spec: &DannSpec, cfg: &AdvTrainConfig) -> Result<(DannParams, Vec<EpochStats>)> {
    train_loop(source, None, spec, cfg)
}

/// Extractor output — the representation both heads read; what domain
/// probes inspect.
pub fn representation(params: &DannParams, x: &Matrix) -> Result<Matrix> {
    let outs = mlp_forward_all(x, &params.extractor, Activation::Sigmoid)?;
    Ok(outs.into_iter().last().expect("extractor has layers"))
}

/// Label-head probabilities for a batch of inputs: softmax rows for a
/// single-label head, independent sigmoids for a multi-label head.
pub fn predict_label_probs(params: &DannParams, x: &Matrix) -> Result<Matrix> {
    let outs = mlp_forward_all(x, &params.extractor, Activation::Sigmoid)?;
    let h = outs.last().expect("extractor has layers");
    let logits = dense_forward(h, &params.label_head, Activation::Identity)?;
    let mut probs = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        match params.head_kind {
            HeadKind::SoftmaxSingleLabel => {
                let p = losses::softmax(logits.row(r));
                probs.row_mut(r).copy_from_slice(&p);
            }
            HeadKind::SigmoidMultiLabel => {
                for (o, &t) in probs.row_mut(r).iter_mut().zip(logits.row(r)) {
                    *o = sigmoid(t);
                }
            }
        }
    }
    Ok(probs)
}

/// Raw sigmoid outputs of a trained multi-label DANN, one column per
/// phonetic feature; probabilities, never thresholded.
pub fn phonetic_scores(params: &DannParams, x: &Matrix) -> Result<Matrix> {
    if params.head_kind != HeadKind::SigmoidMultiLabel {
        return Err(Error::Config("phonetic scores require a sigmoid multi-label head".into()));
    }
    if params.n_outputs() != crate::phonetics::N_FEATURES {
        return Err(Error::Config(format!(
            "phonetic scores require {} outputs, head has {}",
            crate::phonetics::N_FEATURES,
            params.n_outputs()
        )));
    }
    predict_label_probs(params, x)
}

/// Everything the manifest records about a saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub schema_version: u32,
    pub spec: DannSpec,
    pub seed: u64,
    pub train: Option<AdvTrainConfig>,
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

fn push_matrix(blob: &mut Vec<u8>, m: &Matrix) {
    for v in m.data() {
        blob.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_slice(blob: &mut Vec<u8>, s: &[f64]) {
    for v in s {
        blob.extend_from_slice(&v.to_le_bytes());
    }
}

/// Writes a model as a text manifest plus a binary parameter blob
/// (little-endian 64-bit reals, matrices in declared order: extractor
/// layers input-side first, each weights-then-bias; label head; domain
/// head). The round-trip is bit-exact.
pub fn save_model(params: &DannParams, manifest: &ModelManifest, manifest_path: &Path, blob_path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(manifest).map_err(|e| Error::Parse {
        what: "model manifest".into(),
        detail: e.to_string(),
    })?;
    fs::write(manifest_path, text)?;

    let mut blob = Vec::new();
    for layer in &params.extractor.layers {
        push_matrix(&mut blob, &layer.w);
        push_slice(&mut blob, &layer.b);
    }
    push_matrix(&mut blob, &params.label_head.w);
    push_slice(&mut blob, &params.label_head.b);
    push_matrix(&mut blob, &params.domain_head.w);
    push_slice(&mut blob, &params.domain_head.b);
    let mut f = fs::File::create(blob_path)?;
    f.write_all(&blob)?;
    Ok(())
}

fn read_block(bytes: &[u8], cursor: &mut usize, count: usize, what: &str) -> Result<Vec<f64>> {
    let need = count * 8;
    if *cursor + need > bytes.len() {
        return Err(Error::Parse {
            what: "model blob".into(),
            detail: format!("truncated while reading {what}: need {need} bytes at offset {cursor}"),
        });
    }
    let out = bytes[*cursor..*cursor + need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    *cursor += need;
    Ok(out)
}

pub fn load_model(manifest_path: &Path, blob_path: &Path) -> Result<(DannParams, ModelManifest)> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: ModelManifest = toml::from_str(&text).map_err(|e| Error::Parse {
        what: "model manifest".into(),
        detail: e.to_string(),
    })?;
    if manifest.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    manifest.spec.validate()?;

    let mut bytes = Vec::new();
    fs::File::open(blob_path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;

    let dims = {
        let mut d = vec![manifest.spec.input_dim];
        d.extend_from_slice(&manifest.spec.hidden_dims);
        d
    };
    let mut layers = Vec::new();
    for pair in dims.windows(2) {
        let (ind, outd) = (pair[0], pair[1]);
        let w = read_block(&bytes, &mut cursor, ind * outd, "extractor weights")?;
        let b = read_block(&bytes, &mut cursor, outd, "extractor bias")?;
        layers.push(DenseLayer {
            w: Matrix::from_vec(outd, ind, w)?,
            b,
        });
    }
    let d = manifest.spec.repr_dim();
    let lw = read_block(&bytes, &mut cursor, d * manifest.spec.n_outputs, "label head weights")?;
    let lb = read_block(&bytes, &mut cursor, manifest.spec.n_outputs, "label head bias")?;
    let dw = read_block(&bytes, &mut cursor, d, "domain head weights")?;
    let db = read_block(&bytes, &mut cursor, 1, "domain head bias")?;
    if cursor != bytes.len() {
        return Err(Error::Parse {
            what: "model blob".into(),
            detail: format!("{} trailing bytes", bytes.len() - cursor),
        });
    }
    Ok((
        DannParams {
            extractor: MlpParams { layers },
            label_head: DenseLayer {
                w: Matrix::from_vec(manifest.spec.n_outputs, d, lw)?,
                b: lb,
            },
            domain_head: DenseLayer {
                w: Matrix::from_vec(1, d, dw)?,
                b: db,
            },
            head_kind: manifest.spec.head_kind,
        },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LrSchedule;

    fn zero_params(spec: &DannSpec) -> DannParams {
        let mut p = init_dann(spec, 0).unwrap();
        for layer in &mut p.extractor.layers {
            layer.w.data_mut().fill(0.0);
            layer.b.fill(0.0);
        }
        p.label_head.w.data_mut().fill(0.0);
        p.label_head.b.fill(0.0);
        p.domain_head.w.data_mut().fill(0.0);
        p.domain_head.b.fill(0.0);
        p
    }

    fn single_spec() -> DannSpec {
        DannSpec {
            input_dim: 2,
            hidden_dims: vec![3],
            n_outputs: 2,
            head_kind: HeadKind::SoftmaxSingleLabel,
        }
    }

    #[test]
    fn grad_reverse_forward_is_identity() {
        let x = Matrix::from_vec(1, 3, vec![1.0, -2.5, 0.25]).unwrap();
        assert!(grad_reverse_forward(&x).bit_eq(&x));
    }

    #[test]
    fn grad_reverse_scales_and_negates() {
        let g = Matrix::from_vec(1, 2, vec![2.0, -4.0]).unwrap();
        let r = grad_reverse(&g, 0.5);
        assert_eq!(r.data(), &[-1.0, 2.0]);
        let z = grad_reverse(&g, 0.0);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn domain_head_of_zero_params_is_half() {
        let head = DenseLayer {
            w: Matrix::zeros(1, 3),
            b: vec![0.0],
        };
        let h = Matrix::from_vec(2, 3, vec![0.4, 0.5, 0.6, 0.1, 0.2, 0.3]).unwrap();
        let o = domain_head_forward(&h, &head).unwrap();
        assert!(o.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn domain_head_hand_case() {
        // u = (1, 1), z = -1, h = (1, 0) -> sigmoid(0) = 0.5.
        let head = DenseLayer {
            w: Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap(),
            b: vec![-1.0],
        };
        let h = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(domain_head_forward(&h, &head).unwrap(), vec![0.5]);
    }

    #[test]
    fn domain_head_matches_dense_forward() {
        let mut rng = seeding::rng_for(5, 77);
        let head = init_layer(4, 1, &mut rng);
        let h = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64) * 0.1 - 0.5).collect()).unwrap();
        let a = domain_head_forward(&h, &head).unwrap();
        let b = dense_forward(&h, &head, Activation::Sigmoid).unwrap();
        for (x, y) in a.iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_hand_case_all_zero_params() {
        // Zero params: uniform label probs and 0.5 domain outputs, so
        // E = ln 2 - 2 * lambda * ln 2 for one source and one target row.
        let spec = single_spec();
        let params = zero_params(&spec);
        let batch = DomainBatch {
            source_x: Matrix::from_vec(1, 2, vec![0.3, -0.4]).unwrap(),
            source_labels: BatchLabels::Single(vec![1]),
            target_x: Matrix::from_vec(1, 2, vec![-0.2, 0.9]).unwrap(),
        };
        for lambda in [0.0, 0.5, 2.0] {
            let (v, _) = dann_objective(&batch, &params, lambda, MultiLabelLoss::Bce, PROB_EPS).unwrap();
            let ln2 = 2.0_f64.ln();
            assert!((v.e - (ln2 - 2.0 * lambda * ln2)).abs() < 1e-12, "lambda={lambda}");
        }
    }

    #[test]
    fn objective_rejects_unbalanced_batches() {
        let spec = single_spec();
        let params = init_dann(&spec, 1).unwrap();
        let batch = DomainBatch {
            source_x: Matrix::zeros(2, 2),
            source_labels: BatchLabels::Single(vec![0, 1]),
            target_x: Matrix::zeros(3, 2),
        };
        assert!(matches!(
            dann_objective(&batch, &params, 1.0, MultiLabelLoss::Bce, PROB_EPS),
            Err(Error::Batch(_))
        ));
    }

    #[test]
    fn lambda_ramp_starts_at_zero_and_approaches_base() {
        let s = LambdaSchedule::Ramp { gamma: 10.0 };
        assert_eq!(s.lambda_at(0.8, 0.0), 0.0);
        assert!(s.lambda_at(0.8, 1.0) > 0.79);
        assert!(s.lambda_at(0.8, 0.5) < s.lambda_at(0.8, 1.0));
    }

    fn toy_source(n: usize) -> Dataset {
        // Two separable classes on a line.
        let mut rows = Vec::new();
        let mut ids = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let x = if c == 0 { -1.0 } else { 1.0 } + (i as f64 % 7.0) * 0.01;
            rows.push(vec![x, 0.5 * x]);
            ids.push(c);
        }
        let feats = Matrix::from_rows(&rows).unwrap();
        let n = feats.rows();
        Dataset::new(
            feats,
            Some(ids),
            None,
            vec![0; n],
            vec![crate::dataset::UttSpan {
                id: "toy".into(),
                range: 0..n,
            }],
        )
        .unwrap()
    }

    fn toy_target(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 % 5.0) * 0.1 + 2.0, -0.3]).collect();
        Dataset::from_features(Matrix::from_rows(&rows).unwrap(), TARGET_DOMAIN).unwrap()
    }

    fn toy_cfg(lambda: f64, seed: u64) -> AdvTrainConfig {
        AdvTrainConfig::new(
            SgdConfig {
                lr0: 0.05,
                schedule: LrSchedule::Constant,
                batch_size: 8,
                epochs: 3,
                seed,
            },
            lambda,
        )
    }

    #[test]
    fn lambda_zero_bit_matches_source_only() {
        let spec = single_spec();
        let source = toy_source(40);
        let target = toy_target(40);
        let (adv, _) = train_dann(&source, &target, &spec, &toy_cfg(0.0, 9)).unwrap();
        let (plain, _) = train_source_only(&source, &spec, &toy_cfg(0.0, 9)).unwrap();
        assert!(adv.bit_eq(&plain));
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let spec = single_spec();
        let source = toy_source(40);
        let target = toy_target(40);
        let (a, ha) = train_dann(&source, &target, &spec, &toy_cfg(0.3, 4)).unwrap();
        let (b, hb) = train_dann(&source, &target, &spec, &toy_cfg(0.3, 4)).unwrap();
        assert!(a.bit_eq(&b));
        assert_eq!(ha.len(), hb.len());
        for (x, y) in ha.iter().zip(&hb) {
            assert_eq!(x.label_loss.to_bits(), y.label_loss.to_bits());
        }
    }

    #[test]
    fn predict_probs_sum_to_one_for_single_label() {
        let spec = single_spec();
        let params = init_dann(&spec, 2).unwrap();
        let x = Matrix::from_vec(4, 2, (0..8).map(|i| i as f64 * 0.2 - 0.7).collect()).unwrap();
        let p = predict_label_probs(&params, &x).unwrap();
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_weight_heads_output_half_or_uniform() {
        let mut spec = single_spec();
        let params = zero_params(&spec);
        let x = Matrix::from_vec(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let p = predict_label_probs(&params, &x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        spec.head_kind = HeadKind::SigmoidMultiLabel;
        spec.n_outputs = 14;
        let params = zero_params(&spec);
        let p = predict_label_probs(&params, &x).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn phonetic_scores_require_multilabel_head() {
        let params = init_dann(&single_spec(), 3).unwrap();
        let x = Matrix::zeros(1, 2);
        assert!(matches!(phonetic_scores(&params, &x), Err(Error::Config(_))));
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let spec = DannSpec {
            input_dim: 5,
            hidden_dims: vec![4, 3],
            n_outputs: 14,
            head_kind: HeadKind::SigmoidMultiLabel,
        };
        let params = init_dann(&spec, 77).unwrap();
        let manifest = ModelManifest {
            schema_version: MODEL_SCHEMA_VERSION,
            spec,
            seed: 77,
            train: Some(toy_cfg(0.25, 77)),
        };
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("model.manifest");
        let bp = dir.path().join("model.params");
        save_model(&params, &manifest, &mp, &bp).unwrap();
        let (loaded, loaded_manifest) = load_model(&mp, &bp).unwrap();
        assert!(params.bit_eq(&loaded));
        assert_eq!(manifest, loaded_manifest);
    }

    #[test]
    fn load_rejects_truncated_blob() {
        let spec = single_spec();
        let params = init_dann(&spec, 1).unwrap();
        let manifest = ModelManifest {
            schema_version: MODEL_SCHEMA_VERSION,
            spec,
            seed: 1,
            train: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let mp = dir.path().join("m.manifest");
        let bp = dir.path().join("m.params");
        save_model(&params, &manifest, &mp, &bp).unwrap();
        let bytes = fs::read(&bp).unwrap();
        fs::write(&bp, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_model(&mp, &bp), Err(Error::Parse { .. })));
    }
}
