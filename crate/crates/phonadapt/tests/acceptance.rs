//! The release gate: ten numbered go/no-go checks, one test per
//! criterion, each printing a single `criterion N PASS/FAIL` line (run
//! with `--nocapture` to see them).
//!
//! Where a criterion needs a reference value, the reference is computed
//! here, independently of the library: finite differences for
//! gradients, a memoized top-down edit distance for the PER proxy, and
//! decimal constants frozen into the source for the closed forms. The
//! multi-seed thresholds (criteria 5, 6, 9) come from the committed
//! recipes in `phonadapt::bench` and are asserted at the advertised
//! tolerances.

use std::time::Instant;

use rand::Rng;

use phonadapt::bench::{
    bench_seeds, corpus_trial, mini_pipeline_report, normalized_synth_splits, rcv_trial,
    synth_adaptation_trial, synth_adv_config, synth_dann_spec, DEFAULT_BASE_SEED,
};
use phonadapt::dann::{
    dann_objective, train_dann, train_source_only, BatchLabels, DannGrads, DannParams, DannSpec,
    DomainBatch, HeadKind, MultiLabelLoss,
};
use phonadapt::eval::approx_per;
use phonadapt::losses::{
    bce_multilabel, domain_loss, pwe_loss, softmax, softmax_ce, squared_multilabel,
    MultiLabelTarget,
};
use phonadapt::matrix::Matrix;
use phonadapt::phonetics::{SpeTable, SILENCE};
use phonadapt::seeding;
use phonadapt::synth::{fixtures, gen_domains};

fn check(index: usize, name: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!("criterion {index:2} {verdict} [{name}] {detail}");
    assert!(passed, "criterion {index} [{name}] failed: {detail}");
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

// ---- criterion 1 -------------------------------------------------------------

/// Published corpus error rates are out of reach at desk scale (the
/// corpus is licensed and lattice decoding is out of scope), so the
/// gate checks the substituted structural properties: the committed
/// feature table is intact and every experiment report labels its PER
/// figure as a proxy.
#[test]
fn criterion_01_published_per_substitution() {
    let table = SpeTable::builtin_timit();
    let mut ok = table.len() == 62;
    for p in table.phonemes() {
        ok &= table.features(p).unwrap().len() == 14;
    }
    let sil = table.features(SILENCE).unwrap();
    ok &= sil[..13].iter().all(|&b| b == 0) && sil[13] == 1;
    let (_, report) = mini_pipeline_report(DEFAULT_BASE_SEED).unwrap();
    ok &= report.contains("approx_per_is_proxy = true");
    check(
        1,
        "published-per-substitution",
        ok,
        &format!("{} phones x 14 features, reports flag approx_per as a proxy", table.len()),
    );
}

// ---- criterion 2 -------------------------------------------------------------

/// Relative error with a floor: central differences on an objective of
/// magnitude ~10 carry ~1e-9 of f64 roundoff, which would read as a
/// huge "relative" error against a near-zero gradient. Real defects
/// show up at gradient scale, far above the floor.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-2)
}

/// Central difference of a scalar function at coordinate `i`.
fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    const H: f64 = 1e-6;
    let mut up = x.to_vec();
    up[i] += H;
    let mut down = x.to_vec();
    down[i] -= H;
    (f(&up) - f(&down)) / (2.0 * H)
}

/// All parameters in one vector: extractor layers input-side first,
/// weights then bias, then label head, then domain head.
fn flatten_params(p: &DannParams) -> Vec<f64> {
    let mut flat = Vec::new();
    for layer in p.extractor.layers.iter().chain([&p.label_head, &p.domain_head]) {
        flat.extend_from_slice(layer.w.data());
        flat.extend_from_slice(&layer.b);
    }
    flat
}

fn unflatten_params(template: &DannParams, flat: &[f64]) -> DannParams {
    let mut out = template.clone();
    let mut it = flat.iter();
    for layer in out
        .extractor
        .layers
        .iter_mut()
        .chain([&mut out.label_head, &mut out.domain_head])
    {
        for w in layer.w.data_mut() {
            *w = *it.next().unwrap();
        }
        for b in &mut layer.b {
            *b = *it.next().unwrap();
        }
    }
    assert!(it.next().is_none(), "flat vector longer than parameter count");
    out
}

/// The descent direction the trainer applies, flattened in the same
/// order. The domain head runs gradient *ascent* on the objective, so
/// its block is negated to compare against plain dE/dθ.
fn flatten_grads(g: &DannGrads) -> Vec<f64> {
    let mut flat = Vec::new();
    for block in g.extractor.iter().chain([&g.label_head]) {
        flat.extend_from_slice(block.w.data());
        flat.extend_from_slice(&block.b);
    }
    flat.extend(g.domain_head.w.data().iter().map(|v| -v));
    flat.extend(g.domain_head.b.iter().map(|v| -v));
    flat
}

#[test]
fn criterion_02_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = seeding::rng_for(0xACCE97, 2);
    let mut max_rel = 0.0f64;
    let mut network_instances = 0;
    let mut loss_instances = 0;

    // Logistic map for the losses whose gradients are taken w.r.t.
    // pre-activation logits; logits stay in [-2, 2], far from the
    // probability clamp.
    let sigmoid = |t: f64| 1.0 / (1.0 + (-t).exp());

    for round in 0..120 {
        // Standalone loss gradients, cycling through all five losses.
        // softmax_ce, bce_multilabel, and domain_loss differentiate
        // w.r.t. logits, so the difference quotient runs through the
        // activation; the squared and pairwise losses differentiate
        // w.r.t. the predictions directly.
        let l = rng.random_range(2..=8usize);
        let z: Vec<f64> = (0..l).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..l).map(|_| rng.random_range(0.1..0.9)).collect();
        let mut bits: Vec<u8> = (0..l).map(|_| rng.random_range(0..2u8)).collect();
        bits[0] = 1;
        bits[1] = 0;
        let target = MultiLabelTarget::new(bits.clone()).unwrap();
        let (value_of, x, analytic): (Box<dyn Fn(&[f64]) -> f64>, Vec<f64>, Vec<f64>) = match round % 5 {
            0 => {
                let y = rng.random_range(0..l);
                let analytic = softmax_ce(&softmax(&z), y).unwrap().grad;
                (
                    Box::new(move |x: &[f64]| softmax_ce(&softmax(x), y).unwrap().value),
                    z.clone(),
                    analytic,
                )
            }
            1 => {
                let t = target.clone();
                let probs: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
                let analytic = bce_multilabel(&probs, &target).unwrap().grad;
                (
                    Box::new(move |x: &[f64]| {
                        let probs: Vec<f64> = x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
                        bce_multilabel(&probs, &t).unwrap().value
                    }),
                    z.clone(),
                    analytic,
                )
            }
            2 => {
                let t = target.clone();
                let analytic = squared_multilabel(&p, &target).unwrap().grad;
                (
                    Box::new(move |x: &[f64]| squared_multilabel(x, &t).unwrap().value),
                    p.clone(),
                    analytic,
                )
            }
            3 => {
                let t = target.clone();
                let analytic = pwe_loss(&p, &target).unwrap().grad;
                (
                    Box::new(move |x: &[f64]| pwe_loss(x, &t).unwrap().value),
                    p.clone(),
                    analytic,
                )
            }
            _ => {
                let d = rng.random_range(0..2u8);
                let analytic = domain_loss(sigmoid(z[0]), d).unwrap().grad;
                (
                    Box::new(move |x: &[f64]| domain_loss(1.0 / (1.0 + (-x[0]).exp()), d).unwrap().value),
                    z[..1].to_vec(),
                    analytic,
                )
            }
        };
        for (i, &an) in analytic.iter().enumerate() {
            max_rel = max_rel.max(rel_err(an, central_diff(value_of.as_ref(), &x, i)));
        }
        loss_instances += 1;

        // Whole-network gradients through the adversarial objective.
        let (head_kind, ml_loss) = match round % 3 {
            0 => (HeadKind::SoftmaxSingleLabel, MultiLabelLoss::Bce),
            1 => (HeadKind::SigmoidMultiLabel, MultiLabelLoss::Bce),
            _ => (HeadKind::SigmoidMultiLabel, MultiLabelLoss::Pwe),
        };
        let spec = DannSpec {
            input_dim: rng.random_range(2..=5),
            hidden_dims: vec![rng.random_range(2..=4)],
            n_outputs: rng.random_range(2..=6),
            head_kind,
        };
        let n = rng.random_range(1..=4usize);
        let lambda = rng.random_range(0.25..2.0);
        let params = {
            let mut p = phonadapt::dann::init_dann(&spec, rng.random()).unwrap();
            let flat: Vec<f64> = flatten_params(&p)
                .iter()
                .map(|_| rng.random_range(-0.8..0.8))
                .collect();
            p = unflatten_params(&p, &flat);
            p
        };
        let labels = match head_kind {
            HeadKind::SoftmaxSingleLabel => {
                BatchLabels::Single((0..n).map(|_| rng.random_range(0..spec.n_outputs)).collect())
            }
            HeadKind::SigmoidMultiLabel => {
                let mut m = Matrix::zeros(n, spec.n_outputs);
                for r in 0..n {
                    for c in 0..spec.n_outputs {
                        m.set(r, c, f64::from(rng.random_range(0..2u8)));
                    }
                    m.set(r, 0, 1.0);
                    m.set(r, 1, 0.0);
                }
                BatchLabels::Multi(m)
            }
        };
        let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize| {
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect())
                .unwrap()
        };
        let batch = DomainBatch {
            source_x: rand_mat(&mut rng, n, spec.input_dim),
            source_labels: labels,
            target_x: rand_mat(&mut rng, n, spec.input_dim),
        };
        let (_, grads) = dann_objective(&batch, &params, lambda, ml_loss, 1e-12).unwrap();
        let analytic = flatten_grads(&grads);
        let flat = flatten_params(&params);
        let objective = |x: &[f64]| {
            let p = unflatten_params(&params, x);
            dann_objective(&batch, &p, lambda, ml_loss, 1e-12).unwrap().0.e
        };
        for (i, &an) in analytic.iter().enumerate() {
            max_rel = max_rel.max(rel_err(an, central_diff(&objective, &flat, i)));
        }
        network_instances += 1;
    }

    let elapsed = started.elapsed().as_secs_f64();
    check(
        2,
        "gradient-suite",
        max_rel <= 1e-6 && elapsed < 60.0 && network_instances + loss_instances >= 100,
        &format!(
            "{} network + {} loss instances, max rel err {max_rel:.2e} (<= 1e-6), {elapsed:.1}s (< 60s)",
            network_instances, loss_instances
        ),
    );
}

// ---- criterion 3 -------------------------------------------------------------

#[test]
#[allow(clippy::approx_constant)] // reference values are pinned decimals on purpose
fn criterion_03_closed_form_losses() {
    // Frozen reference values: ln 5, 14 ln 2, ln 2 to f64 precision.
    const LN_5: f64 = 1.609_437_912_434_100_3;
    const FOURTEEN_LN_2: f64 = 9.704_060_527_839_234;
    const LN_2: f64 = 0.693_147_180_559_945_3;

    let uniform = softmax(&[0.0; 5]);
    let half = MultiLabelTarget::new(vec![1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0]).unwrap();
    let equal = MultiLabelTarget::new(vec![1, 1, 0, 0, 1, 0]).unwrap();
    let deviations = [
        (softmax_ce(&uniform, 2).unwrap().value - LN_5).abs(),
        (bce_multilabel(&[0.5; 14], &half).unwrap().value - FOURTEEN_LN_2).abs(),
        (domain_loss(0.5, 0).unwrap().value - LN_2).abs(),
        (pwe_loss(&[0.3; 6], &equal).unwrap().value - 1.0).abs(),
    ];
    let worst = deviations.iter().copied().fold(0.0f64, f64::max);
    check(
        3,
        "closed-forms",
        worst <= 1e-12,
        &format!("worst deviation {worst:.2e} (<= 1e-12) over {} identities", deviations.len()),
    );
}

// ---- criterion 4 -------------------------------------------------------------

#[test]
fn criterion_04_lambda_zero_reduction() {
    let (train_src, train_tgt, ..) = normalized_synth_splits(DEFAULT_BASE_SEED).unwrap();
    let spec = synth_dann_spec();
    let mut cfg = synth_adv_config(DEFAULT_BASE_SEED, 0.0);
    cfg.sgd.epochs = 15;
    let (adv, _) = train_dann(&train_src, &train_tgt.unlabeled(), &spec, &cfg).unwrap();
    let (plain, _) = train_source_only(&train_src, &spec, &cfg).unwrap();
    let same = adv
        .extractor
        .layers
        .iter()
        .zip(&plain.extractor.layers)
        .all(|(a, b)| a.w.bit_eq(&b.w) && a.b == b.b)
        && adv.label_head.w.bit_eq(&plain.label_head.w)
        && adv.label_head.b == plain.label_head.b;
    check(
        4,
        "lambda0-bit-match",
        same,
        "lambda = 0 training bit-matches the source-only classifier",
    );
}

// ---- criteria 5 and 6 --------------------------------------------------------

#[test]
fn criterion_05_synthetic_adaptation() {
    let started = Instant::now();
    let mut gains = Vec::new();
    let mut probes_adv = Vec::new();
    let mut probes_base = Vec::new();
    for seed in bench_seeds(DEFAULT_BASE_SEED) {
        let t = synth_adaptation_trial(seed).unwrap();
        gains.push(t.adv_target_acc - t.base_target_acc);
        probes_adv.push(t.probe_adv);
        probes_base.push(t.probe_base);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let gain = median(gains);
    let probe_adv = median(probes_adv);
    let probe_base = median(probes_base);
    let passed = gain >= 0.05
        && (0.50..=0.65).contains(&probe_adv)
        && probe_base >= 0.90
        && elapsed < 300.0;
    check(
        5,
        "synthetic-adaptation",
        passed,
        &format!(
            "median target gain {gain:+.3} (>= .05), domain probe {probe_adv:.3} on adapted features \
             (in [.50,.65]) vs {probe_base:.3} on baseline (>= .90), {elapsed:.1}s (< 300s)"
        ),
    );
}

#[test]
fn criterion_06_pipeline_comparison() {
    let started = Instant::now();
    let mut target_margins = Vec::new();
    let mut source_margins = Vec::new();
    for seed in bench_seeds(DEFAULT_BASE_SEED) {
        let t = corpus_trial(seed).unwrap();
        target_margins.push(t.baseline_target_err - t.proposed_target_err);
        source_margins.push(t.direct_source_err - t.proposed_source_err);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let target_margin = median(target_margins);
    let source_margin = median(source_margins);
    let passed = target_margin > 0.0 && source_margin >= 0.0 && elapsed < 600.0;
    check(
        6,
        "pipeline-arms",
        passed,
        &format!(
            "median target err improvement {target_margin:+.3} (> 0), median source err margin \
             vs direct {source_margin:+.3} (>= 0), {elapsed:.1}s (< 600s)"
        ),
    );
}

// ---- criterion 7 -------------------------------------------------------------

#[test]
fn criterion_07_dimension_contract() {
    let (dims, _) = mini_pipeline_report(DEFAULT_BASE_SEED).unwrap();
    let passed = dims.raw == 23 && dims.with_deltas == 69 && dims.appended == 83 && dims.spliced == 913;
    check(
        7,
        "dimension-contract",
        passed,
        &format!(
            "raw {} -> deltas {} -> appended {} -> spliced {} (want 23 -> 69 -> 83 -> 913)",
            dims.raw, dims.with_deltas, dims.appended, dims.spliced
        ),
    );
}

// ---- criterion 8 -------------------------------------------------------------

/// Reference collapse, written from the contract: emit a frame id when
/// it differs from the *previous frame* (not the previously emitted
/// symbol) and is not silence.
fn oracle_collapse(frames: &[usize], silence: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &id) in frames.iter().enumerate() {
        if (i == 0 || frames[i - 1] != id) && id != silence {
            out.push(id);
        }
    }
    out
}

/// Reference edit distance: memoized top-down recursion, as distinct
/// from the library's iterative two-row table as practical.
fn oracle_edit(a: &[usize], b: &[usize], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
    if i == 0 {
        return j;
    }
    if j == 0 {
        return i;
    }
    if let Some(v) = memo[i][j] {
        return v;
    }
    let sub = oracle_edit(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]);
    let del = oracle_edit(a, b, i - 1, j, memo) + 1;
    let ins = oracle_edit(a, b, i, j - 1, memo) + 1;
    let v = sub.min(del).min(ins);
    memo[i][j] = Some(v);
    v
}

#[test]
fn criterion_08_approx_per_matches_oracle() {
    let mut rng = seeding::rng_for(0xACCE97, 8);
    let mut checked = 0;
    let mut mismatches = 0;
    while checked < 1000 {
        let silence = 0usize;
        let t = rng.random_range(1..=20usize);
        let preds: Vec<usize> = (0..t).map(|_| rng.random_range(0..5)).collect();
        let ref_len = rng.random_range(1..=20usize);
        let reference: Vec<usize> = (0..ref_len).map(|_| rng.random_range(0..5)).collect();
        if reference.iter().all(|&s| s == silence) {
            continue; // approx_per rejects an empty reference, by contract
        }
        let got = approx_per(&preds, &reference, silence).unwrap();

        let hyp = oracle_collapse(&preds, silence);
        let refs: Vec<usize> = reference.iter().copied().filter(|&s| s != silence).collect();
        let mut memo = vec![vec![None; refs.len() + 1]; hyp.len() + 1];
        let want = oracle_edit(&hyp, &refs, hyp.len(), refs.len(), &mut memo) as f64 / refs.len() as f64;

        if got.to_bits() != want.to_bits() {
            mismatches += 1;
        }
        checked += 1;
    }
    check(
        8,
        "approx-per-oracle",
        mismatches == 0,
        &format!("{checked} instances (T <= 20), {mismatches} mismatches under exact bit equality"),
    );
}

// ---- criteria 9 and 10 -------------------------------------------------------

#[test]
fn criterion_09_rcv_near_oracle() {
    let mut gaps = Vec::new();
    for seed in bench_seeds(DEFAULT_BASE_SEED) {
        gaps.push(rcv_trial(seed).unwrap().accuracy_gap());
    }
    let gap = median(gaps);
    check(
        9,
        "rcv-selection",
        gap <= 0.02,
        &format!("median target-accuracy gap between RCV pick and oracle pick {gap:.3} (<= .02)"),
    );
}

#[test]
fn criterion_10_determinism() {
    let (_, report_a) = mini_pipeline_report(DEFAULT_BASE_SEED + 2).unwrap();
    let (_, report_b) = mini_pipeline_report(DEFAULT_BASE_SEED + 2).unwrap();
    let synth_a = gen_domains(&fixtures::standard_synth(DEFAULT_BASE_SEED + 2)).unwrap();
    let synth_b = gen_domains(&fixtures::standard_synth(DEFAULT_BASE_SEED + 2)).unwrap();
    let passed = report_a == report_b
        && synth_a.source.features().bit_eq(synth_b.source.features())
        && synth_a.target.features().bit_eq(synth_b.target.features());
    check(
        10,
        "determinism",
        passed,
        "identical seed and config reproduce reports and datasets byte for byte",
    );
}
