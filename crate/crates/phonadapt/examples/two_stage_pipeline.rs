//! The full two-stage adaptation pipeline on the synthetic phonetics
//! corpus: a multi-label DANN learns domain-invariant articulatory
//! feature scores (stage 1), those 14 scores are appended to the 69
//! acoustic dims and spliced into 913-dim segments, and a phoneme
//! classifier trains on top (stage 2). Compares the two test splits
//! against the no-adaptation baseline.
//!
//! Takes roughly ten seconds.
//!
//!     cargo run --example two_stage_pipeline

use phonadapt::dann::{AdvTrainConfig, LambdaSchedule, MultiLabelLoss};
use phonadapt::error::Result;
use phonadapt::nn::{Activation, LrSchedule, SgdConfig};
use phonadapt::pipeline::{run_adaptation_experiment, run_baseline_experiment, PipelineConfig};
use phonadapt::report::{experiment_report, render_text, to_toml};
use phonadapt::seeding::derive_seed;
use phonadapt::synth::{fixtures, gen_phonetics_corpus};

fn main() -> Result<()> {
    let seed = 1;
    let corpus = gen_phonetics_corpus(&fixtures::phonetics_corpus(seed))?;
    println!(
        "corpus: {} train / {} test utterances per domain, {} phones",
        corpus.train_source.utterances().len(),
        corpus.test_source.utterances().len(),
        corpus.table.len()
    );

    let cfg = PipelineConfig {
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
            seed: derive_seed(seed, 100),
        },
    };

    println!("running the two-stage arm...");
    let proposed = run_adaptation_experiment(
        &corpus.train_source,
        &corpus.train_target,
        &corpus.test_source,
        &corpus.test_target,
        &corpus.table,
        &cfg,
    )?;
    println!("running the no-adaptation baseline...");
    let baseline = run_baseline_experiment(
        &corpus.train_source,
        &corpus.train_target,
        &corpus.test_source,
        &corpus.test_target,
        &corpus.table,
        &cfg,
    )?;

    let d = proposed.dims;
    println!(
        "\nfeature dims: raw {} -> with deltas {} -> scores appended {} -> spliced {}",
        d.raw, d.with_deltas, d.appended, d.spliced
    );
    println!("\n{:<12} {:>12} {:>12}", "frame error", "source test", "target test");
    println!(
        "{:<12} {:>12.3} {:>12.3}",
        "baseline", baseline.source_report.frame_error_rate, baseline.target_report.frame_error_rate
    );
    println!(
        "{:<12} {:>12.3} {:>12.3}",
        "two-stage", proposed.source_report.frame_error_rate, proposed.target_report.frame_error_rate
    );

    println!("\nfull two-stage report:\n");
    print!("{}", render_text(&to_toml(&experiment_report(seed, &proposed))?)?);
    Ok(())
}
