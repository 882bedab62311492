//! The experiment config format: a strict, versioned TOML schema with
//! dotted-path overrides and one top-level seed that every training
//! stage derives from. Shows a parse, an override, the typo safety
//! net, and the seed plumbing.
//!
//!     cargo run --example experiment_config

use phonadapt::config::ExperimentConfig;
use phonadapt::error::Result;

const CONFIG: &str = r#"
schema_version = 1
seed = 42

[dann]
hidden_dims = [64]

[dann.train]
lambda = 3.0

[dann.train.sgd]
lr0 = 0.1
batch_size = 32
epochs = 30

[dann.train.sgd.schedule]
kind = "constant"

[phoneme_dnn]
hidden_dims = [64]

[phoneme_dnn.sgd]
lr0 = 0.2
batch_size = 32
epochs = 20

[phoneme_dnn.sgd.schedule]
kind = "inverse_decay"
alpha = 0.01
beta = 0.75
"#;

fn main() -> Result<()> {
    let cfg = ExperimentConfig::parse(CONFIG, &[])?;
    println!(
        "parsed: seed {}, dann lambda {}, dnn schedule {:?}",
        cfg.seed, cfg.dann.train.lambda, cfg.phoneme_dnn.sgd.schedule
    );

    // Overrides take dotted key paths; values parse as TOML, so
    // numbers, arrays, and inline tables all work.
    let overrides = vec![
        "dann.train.lambda=0.5".to_string(),
        "pipeline.context=3".to_string(),
        "dann.hidden_dims=[32, 32]".to_string(),
    ];
    let tweaked = ExperimentConfig::parse(CONFIG, &overrides)?;
    println!(
        "with overrides: lambda {}, context {}, dann hidden {:?}",
        tweaked.dann.train.lambda, tweaked.pipeline.context, tweaked.dann.hidden_dims
    );

    // Unknown keys are rejected with the offending name, whether they
    // come from the file or an override.
    let typo = ExperimentConfig::parse(CONFIG, &["dann.train.lambada=0.5".to_string()]);
    println!("\ntypo'd override -> {}", typo.unwrap_err());

    // Stage seeds never appear in the file; they derive from the
    // top-level seed, so one value pins the whole experiment.
    let pc = cfg.pipeline_config();
    println!(
        "\ntop-level seed {} derives: dann sgd seed {}, dnn sgd seed {}",
        cfg.seed, pc.dann_train.sgd.seed, pc.dnn_sgd.seed
    );
    Ok(())
}
