//! Committed benchmark recipes and the pass/fail criteria behind the
//! `synth-bench` command.
//!
//! Everything here is deliberately frozen: fixture geometry, training
//! hyperparameters, seeds, thresholds. The per-seed trial functions
//! (`synth_adaptation_trial`, `corpus_trial`, `rcv_trial`) expose the
//! raw numbers so callers can apply their own judgement; the
//! `criterion_*` functions wrap them with the committed thresholds and
//! produce one line each.

use std::time::Instant;

use rand::Rng;

use crate::dann::{
    self, dann_objective, predict_label_probs, train_dann, train_source_only, AdvTrainConfig,
    BatchLabels, DannSpec, DomainBatch, HeadKind, LambdaSchedule, MultiLabelLoss,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{self, argmax_rows, domain_probe_accuracy, frame_error_rate};
use crate::frontend::{normalize_apply, normalize_fit};
use crate::losses::{bce_multilabel, domain_loss, pwe_loss, softmax, softmax_ce, MultiLabelTarget};
use crate::matrix::Matrix;
use crate::nn::{Activation, LrSchedule, SgdConfig};
use crate::phonetics::{SpeTable, N_FEATURES, SILENCE};
use crate::pipeline::{
    run_adaptation_experiment, run_baseline_experiment, run_direct_dann_experiment, DimsTrace,
    PipelineConfig,
};
use crate::rcv::{reverse_cross_validation, GridPoint, RcvBase};
use crate::report::{experiment_report, to_toml};
use crate::seeding;
use crate::synth::{fixtures, gen_domains, gen_phonetics_corpus, PhoneticsCorpus};

/// Seeds the logistic probe used by the adaptation benchmarks.
pub const PROBE_SEED: u64 = 7;

/// The committed base seed; `bench_seeds(DEFAULT_BASE_SEED)` yields the
/// five seeds the acceptance thresholds were derived on.
pub const DEFAULT_BASE_SEED: u64 = 1;

/// The five consecutive seeds a benchmark run medians over.
pub fn bench_seeds(base: u64) -> [u64; 5] {
    [base, base + 1, base + 2, base + 3, base + 4]
}

/// One criterion's verdict, formatted by the `synth-bench` command as a
/// single line.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionResult {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("criterion {:2} {} [{}] {}", self.index, verdict, self.name, self.detail)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

// ---- Committed recipes ----------------------------------------------------

/// DANN shape for the standard synthetic fixture.
pub fn synth_dann_spec() -> DannSpec {
    DannSpec {
        input_dim: 10,
        hidden_dims: vec![16],
        n_outputs: 5,
        head_kind: HeadKind::SoftmaxSingleLabel,
    }
}

/// Optimizer for the standard synthetic fixture.
pub fn synth_sgd(seed: u64) -> SgdConfig {
    SgdConfig {
        lr0: 0.2,
        schedule: LrSchedule::Constant,
        batch_size: 32,
        epochs: 120,
        seed,
    }
}

/// Adversarial training config for the standard synthetic fixture.
pub fn synth_adv_config(seed: u64, lambda: f64) -> AdvTrainConfig {
    AdvTrainConfig::new(synth_sgd(seed), lambda)
}

/// The λ grid reverse cross-validation searches on the standard
/// fixture. λ=0 is deliberately absent: reverse validation overrates
/// the unadapted model, whose self-labels are a realizable function of
/// the target features.
pub fn rcv_grid() -> Vec<GridPoint> {
    [0.1, 0.3, 1.0, 3.0]
        .iter()
        .map(|&lambda| GridPoint {
            lambda,
            lr0: 0.2,
            hidden_dims: vec![16],
        })
        .collect()
}

/// Two-stage pipeline config for the synthetic phonetics corpus.
pub fn corpus_pipeline_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        context: 5,
        splice_dann_input: true,
        dann_hidden: vec![64],
        dann_train: AdvTrainConfig {
            sgd: SgdConfig {
                lr0: 0.1,
                schedule: LrSchedule::Constant,
                batch_size: 32,
                epochs: 30,
                seed,
            },
            lambda: 3.0,
            lambda_schedule: LambdaSchedule::Constant,
            clamp_eps: 1e-12,
            multilabel_loss: MultiLabelLoss::Bce,
        },
        dnn_hidden: vec![64],
        dnn_activation: Activation::Sigmoid,
        dnn_sgd: SgdConfig {
            lr0: 0.2,
            schedule: LrSchedule::Constant,
            batch_size: 32,
            epochs: 20,
            seed: seeding::derive_seed(seed, 100),
        },
    }
}

/// The standard fixture as the benchmarks consume it: train and eval
/// splits for both domains, normalized with stats pooled over the two
/// train views, plus the eval-target labels.
pub fn normalized_synth_splits(seed: u64) -> Result<(Dataset, Dataset, Dataset, Dataset, Vec<usize>)> {
    let train = gen_domains(&fixtures::standard_synth(seed))?;
    let eval = gen_domains(&fixtures::standard_synth_eval(seed))?;
    let pooled = Matrix::vstack(&[train.source.features(), train.target.features()])?;
    let stats = normalize_fit(&pooled)?;
    let normed = |ds: &Dataset| -> Result<Dataset> { ds.with_features(normalize_apply(ds.features(), &stats)?) };
    let tgt_ids = eval.target.require_phoneme_ids()?.to_vec();
    Ok((
        normed(&train.source)?,
        normed(&train.target)?,
        normed(&eval.source)?,
        normed(&eval.target)?,
        tgt_ids,
    ))
}

// ---- Per-seed trials -------------------------------------------------------

/// Numbers from one seed of the synthetic adaptation benchmark.
#[derive(Debug, Clone, Copy)]
pub struct SynthTrial {
    pub adv_target_acc: f64,
    pub base_target_acc: f64,
    pub probe_adv: f64,
    pub probe_base: f64,
}

/// Trains the adversarial and λ=0 arms on the standard fixture and
/// probes both representations on held-out draws.
pub fn synth_adaptation_trial(seed: u64) -> Result<SynthTrial> {
    let (train_src, train_tgt, eval_src, eval_tgt, tgt_ids) = normalized_synth_splits(seed)?;
    let spec = synth_dann_spec();
    let cfg = synth_adv_config(seed, 1.0);
    let (adv, _) = train_dann(&train_src, &train_tgt.unlabeled(), &spec, &cfg)?;
    let (base, _) = train_source_only(&train_src, &spec, &cfg)?;
    let acc_of = |params: &dann::DannParams| -> Result<f64> {
        let probs = predict_label_probs(params, eval_tgt.features())?;
        Ok(1.0 - frame_error_rate(&argmax_rows(&probs), &tgt_ids)?)
    };
    let probe_of = |params: &dann::DannParams| -> Result<f64> {
        let hs = dann::representation(params, eval_src.features())?;
        let ht = dann::representation(params, eval_tgt.features())?;
        domain_probe_accuracy(&hs, &ht, PROBE_SEED)
    };
    Ok(SynthTrial {
        adv_target_acc: acc_of(&adv)?,
        base_target_acc: acc_of(&base)?,
        probe_adv: probe_of(&adv)?,
        probe_base: probe_of(&base)?,
    })
}

/// Frame errors from one seed of the three-arm corpus benchmark.
#[derive(Debug, Clone, Copy)]
pub struct CorpusTrial {
    pub proposed_target_err: f64,
    pub proposed_source_err: f64,
    pub baseline_target_err: f64,
    pub direct_source_err: f64,
}

/// Runs proposed / baseline / direct arms on the phonetics corpus.
pub fn corpus_trial(seed: u64) -> Result<CorpusTrial> {
    let corpus = gen_phonetics_corpus(&fixtures::phonetics_corpus(seed))?;
    let cfg = corpus_pipeline_config(seed);
    let PhoneticsCorpus {
        train_source,
        train_target,
        test_source,
        test_target,
        table,
        ..
    } = &corpus;
    let proposed = run_adaptation_experiment(train_source, train_target, test_source, test_target, table, &cfg)?;
    let baseline = run_baseline_experiment(train_source, train_target, test_source, test_target, table, &cfg)?;
    let direct = run_direct_dann_experiment(train_source, train_target, test_source, test_target, table, &cfg)?;
    Ok(CorpusTrial {
        proposed_target_err: proposed.target_report.frame_error_rate,
        proposed_source_err: proposed.source_report.frame_error_rate,
        baseline_target_err: baseline.target_report.frame_error_rate,
        direct_source_err: direct.source_report.frame_error_rate,
    })
}

/// One seed of the RCV-vs-oracle comparison: the target accuracy each
/// grid point's final model reaches, and both selections.
#[derive(Debug, Clone)]
pub struct RcvTrial {
    pub target_accs: Vec<f64>,
    pub oracle_index: usize,
    pub rcv_index: usize,
}

impl RcvTrial {
    /// How far the RCV pick's target accuracy falls below the oracle pick's.
    pub fn accuracy_gap(&self) -> f64 {
        self.target_accs[self.oracle_index] - self.target_accs[self.rcv_index]
    }
}

/// Trains a final model per grid point, then compares oracle selection
/// (peeking at target labels) against reverse cross-validation.
pub fn rcv_trial(seed: u64) -> Result<RcvTrial> {
    let (train_src, train_tgt, _eval_src, eval_tgt, tgt_ids) = normalized_synth_splits(seed)?;
    let grid = rcv_grid();
    let spec = synth_dann_spec();
    let mut target_accs = Vec::with_capacity(grid.len());
    for point in &grid {
        let cfg = synth_adv_config(seed, point.lambda);
        let (params, _) = train_dann(&train_src, &train_tgt.unlabeled(), &spec, &cfg)?;
        let probs = predict_label_probs(&params, eval_tgt.features())?;
        target_accs.push(1.0 - frame_error_rate(&argmax_rows(&probs), &tgt_ids)?);
    }
    let oracle_index = (0..target_accs.len())
        .max_by(|&a, &b| target_accs[a].total_cmp(&target_accs[b]))
        .expect("grid is non-empty");
    let base = RcvBase {
        n_outputs: 5,
        head_kind: HeadKind::SoftmaxSingleLabel,
        train: synth_adv_config(seed, 1.0),
    };
    let outcome = reverse_cross_validation(&grid, &train_src, &train_tgt.unlabeled(), &base, seed)?;
    Ok(RcvTrial {
        target_accs,
        oracle_index,
        rcv_index: outcome.best_index,
    })
}

/// A fast, structurally complete pipeline run: the corpus fixture with
/// few utterances and short training, enough to trace dimensions and
/// produce a full report.
pub fn mini_pipeline_report(seed: u64) -> Result<(DimsTrace, String)> {
    let mut spec = fixtures::phonetics_corpus(seed);
    spec.train_utterances_per_domain = 8;
    spec.test_utterances_per_domain = 3;
    let corpus = gen_phonetics_corpus(&spec)?;
    let mut cfg = corpus_pipeline_config(seed);
    cfg.dann_train.sgd.epochs = 2;
    cfg.dnn_sgd.epochs = 2;
    let outcome = run_adaptation_experiment(
        &corpus.train_source,
        &corpus.train_target,
        &corpus.test_source,
        &corpus.test_target,
        &corpus.table,
        &cfg,
    )?;
    let report = experiment_report(seed, &outcome);
    Ok((outcome.dims, to_toml(&report)?))
}

// ---- Criteria --------------------------------------------------------------

/// Published PERs are out of reach (licensed corpus, HMM decoding), so
/// the bench asserts the substituted structural properties instead: the
/// committed feature table is intact and every report flags its PER as
/// a frame-level proxy.
pub fn criterion_1(base: u64) -> Result<CriterionResult> {
    let table = SpeTable::builtin_timit();
    let mut ok = table.len() >= 40 && !table.is_empty();
    let sil = table.features(SILENCE)?;
    ok &= sil.iter().take(N_FEATURES - 1).all(|&b| b == 0) && sil[N_FEATURES - 1] == 1;
    let (_, report) = mini_pipeline_report(base)?;
    ok &= report.contains("approx_per_is_proxy = true");
    Ok(CriterionResult {
        index: 1,
        name: "published-per-substitution",
        passed: ok,
        detail: format!(
            "published PERs not reproduced; {} phones x {N_FEATURES} features intact, reports mark approx_per as proxy",
            table.len()
        ),
    })
}

/// Relative error with an absolute floor of 1e-2 in the denominator:
/// central differences on an objective of magnitude ~10 carry ~1e-9 of
/// f64 roundoff, so entries below the floor are judged on absolute
/// terms. A wrong gradient errs at the scale of the gradient itself
/// and still trips the 1e-6 bound.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-2)
}

/// Central-difference check over every parameter block of the
/// adversarial objective, across head kinds and multi-label losses.
pub fn criterion_2() -> Result<CriterionResult> {
    let started = Instant::now();
    let mut rng = seeding::rng_for(0xFD, 1);
    let mut instances = 0usize;
    let mut max_rel = 0.0f64;
    while instances < 120 {
        let input_dim = rng.random_range(2..=5usize);
        let n_layers = rng.random_range(1..=2usize);
        let hidden_dims: Vec<usize> = (0..n_layers).map(|_| rng.random_range(2..=4usize)).collect();
        let n_outputs = rng.random_range(2..=6usize);
        let n = rng.random_range(1..=4usize);
        let lambda = rng.random_range(0.25..2.0);
        // Every fourth instance checks the standalone squared loss,
        // which the training loop does not consume.
        if instances % 4 == 3 {
            let l = rng.random_range(2..=8usize);
            let p: Vec<f64> = (0..l).map(|_| rng.random_range(0.05..0.95)).collect();
            let bits: Vec<u8> = (0..l).map(|_| rng.random_range(0..2u8)).collect();
            let analytic = crate::losses::squared_multilabel(&p, &MultiLabelTarget::new(bits.clone())?)?.grad;
            let h = 1e-6;
            for i in 0..l {
                let mut up = p.clone();
                up[i] += h;
                let mut down = p.clone();
                down[i] -= h;
                let y = MultiLabelTarget::new(bits.clone())?;
                let fd = (crate::losses::squared_multilabel(&up, &y)?.value
                    - crate::losses::squared_multilabel(&down, &y)?.value)
                    / (2.0 * h);
                max_rel = max_rel.max(rel_err(analytic[i], fd));
            }
            instances += 1;
            continue;
        }
        let (head_kind, ml_loss) = match instances % 4 {
            0 => (HeadKind::SoftmaxSingleLabel, MultiLabelLoss::Bce),
            1 => (HeadKind::SigmoidMultiLabel, MultiLabelLoss::Bce),
            _ => (HeadKind::SigmoidMultiLabel, MultiLabelLoss::Pwe),
        };
        let spec = DannSpec {
            input_dim,
            hidden_dims,
            n_outputs,
            head_kind,
        };
        let mut params = dann::init_dann(&spec, rng.random())?;
        for layer in params
            .extractor
            .layers
            .iter_mut()
            .chain([&mut params.label_head, &mut params.domain_head])
        {
            for w in layer.w.data_mut() {
                *w = rng.random_range(-0.8..0.8);
            }
            for b in &mut layer.b {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize| {
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
        };
        let labels = match head_kind {
            HeadKind::SoftmaxSingleLabel => {
                BatchLabels::Single((0..n).map(|_| rng.random_range(0..n_outputs)).collect())
            }
            HeadKind::SigmoidMultiLabel => {
                let mut bits = Matrix::zeros(n, n_outputs);
                for r in 0..n {
                    for c in 0..n_outputs {
                        bits.set(r, c, f64::from(rng.random_range(0..2u8)));
                    }
                    // The pairwise loss needs a positive and a negative.
                    bits.set(r, 0, 1.0);
                    bits.set(r, 1, 0.0);
                }
                BatchLabels::Multi(bits)
            }
        };
        let batch = DomainBatch {
            source_x: rand_mat(&mut rng, n, input_dim),
            source_labels: labels,
            target_x: rand_mat(&mut rng, n, input_dim),
        };
        let (_, grads) = dann_objective(&batch, &params, lambda, ml_loss, 1e-12)?;

        // Blocks 0..L are extractor layers, then the label head, then
        // the domain head. One parameter slot at a time: nudge, re-run
        // the objective, compare the central difference.
        fn slot<'p>(p: &'p mut dann::DannParams, block: usize, n_layers: usize, n_w: usize, i: usize) -> &'p mut f64 {
            let layer = if block == n_layers + 1 {
                &mut p.domain_head
            } else if block == n_layers {
                &mut p.label_head
            } else {
                &mut p.extractor.layers[block]
            };
            if i < n_w {
                &mut layer.w.data_mut()[i]
            } else {
                &mut layer.b[i - n_w]
            }
        }
        let e_of = |p: &dann::DannParams| -> f64 { dann_objective(&batch, p, lambda, ml_loss, 1e-12).unwrap().0.e };
        let h = 1e-6;
        let n_layers = params.extractor.layers.len();
        for block in 0..n_layers + 2 {
            // Extractor and label head descend on E; the applied
            // domain-head update is an ascent step.
            let (layer_grads, sign) = if block == n_layers + 1 {
                (&grads.domain_head, -1.0)
            } else if block == n_layers {
                (&grads.label_head, 1.0)
            } else {
                (&grads.extractor[block], 1.0)
            };
            let n_w = layer_grads.w.data().len();
            let n_b = layer_grads.b.len();
            for i in 0..n_w + n_b {
                let orig = *slot(&mut params, block, n_layers, n_w, i);
                *slot(&mut params, block, n_layers, n_w, i) = orig + h;
                let up = e_of(&params);
                *slot(&mut params, block, n_layers, n_w, i) = orig - h;
                let down = e_of(&params);
                *slot(&mut params, block, n_layers, n_w, i) = orig;
                let fd = sign * (up - down) / (2.0 * h);
                let an = if i < n_w { layer_grads.w.data()[i] } else { layer_grads.b[i - n_w] };
                max_rel = max_rel.max(rel_err(an, fd));
            }
        }
        instances += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    Ok(CriterionResult {
        index: 2,
        name: "gradient-suite",
        passed: max_rel <= 1e-6 && elapsed < 60.0,
        detail: format!("{instances} instances, max rel err {max_rel:.2e}, {elapsed:.1}s"),
    })
}

/// Exact loss values at hand-computable inputs.
pub fn criterion_3() -> Result<CriterionResult> {
    let tol = 1e-12;
    let uniform = softmax(&[0.0; 5]);
    let ce = softmax_ce(&uniform, 2)?.value;
    let bce = bce_multilabel(&[0.5; 14], &MultiLabelTarget::new(vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0])?)?.value;
    let dl = domain_loss(0.5, 0)?.value;
    let pwe = pwe_loss(&[0.3; 6], &MultiLabelTarget::new(vec![1, 1, 0, 0, 1, 0])?)?.value;
    let checks = [
        (ce, 5.0f64.ln(), "softmax_ce(uniform, K=5) = ln 5"),
        (bce, 14.0 * 2.0f64.ln(), "bce(all 0.5, L=14) = 14 ln 2"),
        (dl, 2.0f64.ln(), "domain_loss(0.5) = ln 2"),
        (pwe, 1.0, "pwe(equal scores) = 1"),
    ];
    let worst = checks
        .iter()
        .map(|(got, want, _)| (got - want).abs())
        .fold(0.0f64, f64::max);
    Ok(CriterionResult {
        index: 3,
        name: "closed-forms",
        passed: worst <= tol,
        detail: format!("worst deviation {worst:.2e} over {} identities", checks.len()),
    })
}

/// λ=0 adversarial training must be indistinguishable, bit for bit,
/// from the plain source-only classifier.
pub fn criterion_4(base: u64) -> Result<CriterionResult> {
    let seed = base;
    let (train_src, train_tgt, ..) = normalized_synth_splits(seed)?;
    let spec = synth_dann_spec();
    let mut cfg = synth_adv_config(seed, 0.0);
    cfg.sgd.epochs = 15;
    let (adv, _) = train_dann(&train_src, &train_tgt.unlabeled(), &spec, &cfg)?;
    let (plain, _) = train_source_only(&train_src, &spec, &cfg)?;
    let layers_eq = adv
        .extractor
        .layers
        .iter()
        .zip(&plain.extractor.layers)
        .all(|(a, b)| a.w.bit_eq(&b.w) && a.b == b.b);
    let head_eq = adv.label_head.w.bit_eq(&plain.label_head.w) && adv.label_head.b == plain.label_head.b;
    Ok(CriterionResult {
        index: 4,
        name: "lambda0-bit-match",
        passed: layers_eq && head_eq,
        detail: format!(
            "extractor {}  label head {}",
            if layers_eq { "bit-identical" } else { "DIFFERS" },
            if head_eq { "bit-identical" } else { "DIFFERS" }
        ),
    })
}

/// Median adaptation gain and probe bands on the standard fixture.
pub fn criterion_5(base: u64) -> Result<CriterionResult> {
    let started = Instant::now();
    let mut gains = Vec::new();
    let mut probes_adv = Vec::new();
    let mut probes_base = Vec::new();
    for seed in bench_seeds(base) {
        let trial = synth_adaptation_trial(seed)?;
        gains.push(trial.adv_target_acc - trial.base_target_acc);
        probes_adv.push(trial.probe_adv);
        probes_base.push(trial.probe_base);
    }
    let gain = median(&mut gains);
    let probe_adv = median(&mut probes_adv);
    let probe_base = median(&mut probes_base);
    let elapsed = started.elapsed().as_secs_f64();
    let passed = gain >= 0.05 && (0.50..=0.65).contains(&probe_adv) && probe_base >= 0.90 && elapsed < 300.0;
    Ok(CriterionResult {
        index: 5,
        name: "synthetic-adaptation",
        passed,
        detail: format!(
            "median gain {gain:+.3} (>= .05), probe adv {probe_adv:.3} (in [.50,.65]), probe base {probe_base:.3} (>= .90), {elapsed:.1}s"
        ),
    })
}

/// The qualitative two-column story on the synthetic corpus: the
/// two-stage pipeline beats no adaptation on target and keeps source
/// error no worse than direct adaptation.
pub fn criterion_6(base: u64) -> Result<CriterionResult> {
    let started = Instant::now();
    let mut target_margin = Vec::new();
    let mut source_margin = Vec::new();
    for seed in bench_seeds(base) {
        let t = corpus_trial(seed)?;
        target_margin.push(t.baseline_target_err - t.proposed_target_err);
        source_margin.push(t.direct_source_err - t.proposed_source_err);
    }
    let tgt = median(&mut target_margin);
    let src = median(&mut source_margin);
    let elapsed = started.elapsed().as_secs_f64();
    Ok(CriterionResult {
        index: 6,
        name: "pipeline-arms",
        passed: tgt > 0.0 && src >= 0.0 && elapsed < 600.0,
        detail: format!(
            "median target err margin {tgt:+.3} (> 0), median source err margin vs direct {src:+.3} (>= 0), {elapsed:.1}s"
        ),
    })
}

/// 23 -> 69 -> 83 -> 913, traced through one real pipeline run.
pub fn criterion_7(base: u64) -> Result<CriterionResult> {
    let (dims, _) = mini_pipeline_report(base)?;
    let want = DimsTrace {
        raw: 23,
        with_deltas: 69,
        appended: 83,
        spliced: 913,
    };
    let passed = dims == want;
    Ok(CriterionResult {
        index: 7,
        name: "dimension-contract",
        passed,
        detail: format!(
            "raw {} -> deltas {} -> appended {} -> spliced {}",
            dims.raw, dims.with_deltas, dims.appended, dims.spliced
        ),
    })
}

/// approx_per against an independently coded full-matrix edit distance.
pub fn criterion_8() -> Result<CriterionResult> {
    let mut rng = seeding::rng_for(0x8, 1);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    while checked < 1000 {
        let t = rng.random_range(1..=20usize);
        let preds: Vec<usize> = (0..t).map(|_| rng.random_range(0..5usize)).collect();
        let ref_len = rng.random_range(1..=20usize);
        let reference: Vec<usize> = (0..ref_len).map(|_| rng.random_range(0..5usize)).collect();
        if reference.iter().all(|&s| s == 0) {
            continue; // empty after silence filtering; approx_per rejects it
        }
        let got = eval::approx_per(&preds, &reference, 0)?;
        // Oracle: same collapse/filter semantics, independent O(nm)
        // full-matrix DP instead of the two-row implementation.
        let hyp = eval::collapse_frames(&preds, 0);
        let refs: Vec<usize> = reference.iter().copied().filter(|&s| s != 0).collect();
        let (n, m) = (hyp.len(), refs.len());
        let mut dp = vec![vec![0usize; m + 1]; n + 1];
        for (i, row) in dp.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=m {
            dp[0][j] = j;
        }
        for i in 1..=n {
            for j in 1..=m {
                let sub = dp[i - 1][j - 1] + usize::from(hyp[i - 1] != refs[j - 1]);
                dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
            }
        }
        let want = dp[n][m] as f64 / m as f64;
        if got.to_bits() != want.to_bits() {
            mismatches += 1;
        }
        checked += 1;
    }
    Ok(CriterionResult {
        index: 8,
        name: "approx-per-oracle",
        passed: mismatches == 0,
        detail: format!("{checked} instances, {mismatches} mismatches (exact bit equality)"),
    })
}

/// Reverse cross-validation must land within two points of oracle λ
/// selection on the standard fixture.
pub fn criterion_9(base: u64) -> Result<CriterionResult> {
    let started = Instant::now();
    let mut gaps = Vec::new();
    for seed in bench_seeds(base) {
        gaps.push(rcv_trial(seed)?.accuracy_gap());
    }
    let gap = median(&mut gaps);
    let elapsed = started.elapsed().as_secs_f64();
    Ok(CriterionResult {
        index: 9,
        name: "rcv-selection",
        passed: gap <= 0.02,
        detail: format!("median oracle-vs-RCV target accuracy gap {gap:.3} (<= .02), {elapsed:.1}s"),
    })
}

/// Identical seed and config must reproduce artifacts byte for byte.
pub fn criterion_10(base: u64) -> Result<CriterionResult> {
    let (_, report_a) = mini_pipeline_report(base + 2)?;
    let (_, report_b) = mini_pipeline_report(base + 2)?;
    let reports_eq = report_a == report_b;
    let synth_a = gen_domains(&fixtures::standard_synth(base + 2))?;
    let synth_b = gen_domains(&fixtures::standard_synth(base + 2))?;
    let synth_eq = synth_a.source.features().bit_eq(synth_b.source.features())
        && synth_a.target.features().bit_eq(synth_b.target.features());
    Ok(CriterionResult {
        index: 10,
        name: "determinism",
        passed: reports_eq && synth_eq,
        detail: format!(
            "pipeline report {}  synth draw {}",
            if reports_eq { "byte-identical" } else { "DIFFERS" },
            if synth_eq { "bit-identical" } else { "DIFFERS" }
        ),
    })
}

pub const N_CRITERIA: usize = 10;

/// Runs one criterion by its 1-based index. Criteria 2, 3 and 8 ignore
/// the base seed (their instance generators are fixed).
pub fn run_one(index: usize, base: u64) -> Result<CriterionResult> {
    match index {
        1 => criterion_1(base),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(base),
        5 => criterion_5(base),
        6 => criterion_6(base),
        7 => criterion_7(base),
        8 => criterion_8(),
        9 => criterion_9(base),
        10 => criterion_10(base),
        _ => Err(Error::Config(format!("no criterion {index}; valid indices are 1..={N_CRITERIA}"))),
    }
}

/// Runs every criterion in order. Failures of individual criteria are
/// reported in the results, not as errors; an `Err` here means a
/// criterion could not run at all.
pub fn run_all(base: u64) -> Result<Vec<CriterionResult>> {
    (1..=N_CRITERIA).map(|i| run_one(i, base)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass() {
        for result in [
            criterion_1(DEFAULT_BASE_SEED).unwrap(),
            criterion_3().unwrap(),
            criterion_7(DEFAULT_BASE_SEED).unwrap(),
            criterion_8().unwrap(),
        ] {
            assert!(result.passed, "{}", result.line());
        }
    }

    #[test]
    fn gradient_suite_passes() {
        let result = criterion_2().unwrap();
        assert!(result.passed, "{}", result.line());
    }

    #[test]
    fn criterion_lines_are_single_lines() {
        let result = criterion_3().unwrap();
        assert!(!result.line().contains('\n'));
        assert!(result.line().contains("criterion  3"));
    }
}
