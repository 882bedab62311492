//! Picking the adversarial weight without target labels: reverse
//! cross-validation trains a forward model per grid point, self-labels
//! the target domain with it, trains a *reverse* model on those
//! self-labels, and scores it on held-out labeled source data. The
//! example also peeks at the true target accuracies — something a real
//! unsupervised run cannot do — to show how close the pick lands to the
//! oracle.
//!
//! Takes roughly fifteen seconds (two trainings per grid point).
//!
//!     cargo run --example rcv_sweep

use phonadapt::bench::{normalized_synth_splits, rcv_grid, synth_adv_config, synth_dann_spec};
use phonadapt::dann::{predict_label_probs, train_dann, HeadKind};
use phonadapt::error::Result;
use phonadapt::eval::{argmax_rows, frame_error_rate};
use phonadapt::rcv::{reverse_cross_validation, RcvBase};

fn main() -> Result<()> {
    let seed = 1;
    let (train_src, train_tgt, _, eval_tgt, tgt_ids) = normalized_synth_splits(seed)?;
    let grid = rcv_grid();
    let spec = synth_dann_spec();

    // Oracle side: true target accuracy per grid point (labels used
    // for reporting only).
    let mut true_accs = Vec::new();
    for point in &grid {
        let cfg = synth_adv_config(seed, point.lambda);
        let (params, _) = train_dann(&train_src, &train_tgt.unlabeled(), &spec, &cfg)?;
        let probs = predict_label_probs(&params, eval_tgt.features())?;
        true_accs.push(1.0 - frame_error_rate(&argmax_rows(&probs), &tgt_ids)?);
    }

    // Unsupervised side: reverse cross-validation over the same grid.
    let base = RcvBase {
        n_outputs: 5,
        head_kind: HeadKind::SoftmaxSingleLabel,
        train: synth_adv_config(seed, 1.0),
    };
    let outcome = reverse_cross_validation(&grid, &train_src, &train_tgt.unlabeled(), &base, seed)?;

    println!("{:>8} {:>16} {:>16}", "lambda", "reverse score", "true target acc");
    for (row, &acc) in outcome.rows.iter().zip(&true_accs) {
        let marker = if row.index == outcome.best_index { "  <- picked" } else { "" };
        println!("{:>8} {:>16.3} {:>16.3}{marker}", row.point.lambda, row.reverse_score, acc);
    }
    let oracle = (0..true_accs.len())
        .max_by(|&a, &b| true_accs[a].total_cmp(&true_accs[b]))
        .unwrap();
    println!(
        "\noracle would pick lambda = {}; the gap in target accuracy is {:.3}",
        grid[oracle].lambda,
        true_accs[oracle] - true_accs[outcome.best_index]
    );
    Ok(())
}
