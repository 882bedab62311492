//! Command-line front door. Every subcommand is a thin wrapper over the
//! library: it loads a config (embedded default unless `--config` is
//! given, `--set key.path=value` overrides either), does one unit of
//! work, writes a machine-readable TOML artifact into `--out`, and
//! prints a short human summary.
//!
//! Exit status is 0 only if all requested work succeeded; `extract`
//! keeps going past bad input files but then exits 1, and `synth-bench`
//! exits 1 if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use phonadapt::bench;
use phonadapt::config::ExperimentConfig;
use phonadapt::dann::{
    load_model, save_model, train_dann, DannSpec, HeadKind, ModelManifest, MODEL_SCHEMA_VERSION,
};
use phonadapt::dataset::{Dataset, UttSpan};
use phonadapt::error::{Error, Result};
use phonadapt::frontend::{fbank, frame_centers, read_wav};
use phonadapt::matrix::Matrix;
use phonadapt::phonetics::{frame_targets, load_alignment, SpeTable, N_FEATURES};
use phonadapt::pipeline::{
    run_adaptation_experiment, run_baseline_experiment, run_direct_dann_experiment,
};
use phonadapt::rcv::{reverse_cross_validation, RcvBase};
use phonadapt::report::{experiment_report, render_text, to_toml, write_toml};
use phonadapt::seeding::{derive_seed, streams};
use phonadapt::synth::{fixtures, gen_phonetics_corpus};
use phonadapt::{archive, dann};

/// The config used when `--config` is absent: the committed recipe for
/// the synthetic phonetics corpus, including the reverse-validation
/// grid. `--set` overrides apply on top.
const DEFAULT_CONFIG: &str = r#"
schema_version = 1
seed = 1

[dann]
hidden_dims = [64]

[dann.train]
lambda = 3.0
clamp_eps = 1e-12

[dann.train.sgd]
lr0 = 0.1
batch_size = 32
epochs = 30

[dann.train.sgd.schedule]
kind = "constant"

[phoneme_dnn]
hidden_dims = [64]
activation = "sigmoid"

[phoneme_dnn.sgd]
lr0 = 0.2
batch_size = 32
epochs = 20

[phoneme_dnn.sgd.schedule]
kind = "constant"

[[rcv.grid]]
lambda = 0.1
lr0 = 0.2
hidden_dims = [16]

[[rcv.grid]]
lambda = 0.3
lr0 = 0.2
hidden_dims = [16]

[[rcv.grid]]
lambda = 1.0
lr0 = 0.2
hidden_dims = [16]

[[rcv.grid]]
lambda = 3.0
lr0 = 0.2
hidden_dims = [16]
"#;

#[derive(Parser)]
#[command(name = "phonadapt", version, about = "Domain-adversarial phoneme adaptation toolkit")]
struct Cli {
    /// Directory artifacts are written into (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Experiment config file; omitted means the embedded default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Config override, `key.path=value`; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print per-epoch training diagnostics to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract filter-bank features and phonetic frame targets from
    /// paired wav + alignment files.
    Extract {
        /// Input wav file; repeat for a batch. Pairs with --align by
        /// position.
        #[arg(long = "wav", value_name = "WAV", required = true)]
        wavs: Vec<PathBuf>,
        /// Phone alignment for the wav at the same position
        /// (start end phone, seconds, one segment per line).
        #[arg(long = "align", value_name = "ALIGN", required = true)]
        aligns: Vec<PathBuf>,
        /// Phonetic feature table; omitted means the built-in one.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Parse a phonetic feature table and report its shape.
    ValidateTable {
        /// Table file; omitted means the built-in one.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Train a multi-label DANN on extracted features and targets.
    TrainDann {
        /// Source-domain feature archive.
        #[arg(long)]
        source_features: PathBuf,
        /// Frame-target archive matching --source-features.
        #[arg(long)]
        source_targets: PathBuf,
        /// Unlabeled target-domain feature archive.
        #[arg(long)]
        target_features: PathBuf,
    },
    /// Run a trained DANN's label head over a feature archive.
    Score {
        /// Model manifest written by train-dann.
        #[arg(long)]
        model: PathBuf,
        /// Parameter blob; defaults to the manifest path with a .bin
        /// extension.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Feature archive to score.
        #[arg(long)]
        features: PathBuf,
    },
    /// Run one arm of the adaptation experiment on the synthetic
    /// phonetics corpus.
    Pipeline {
        /// Which arm: the two-stage proposal, the no-adaptation
        /// baseline, or the direct single-label DANN.
        #[arg(long, value_enum, default_value_t = Arm::Proposed)]
        arm: Arm,
    },
    /// Select lambda by reverse cross-validation on the standard
    /// synthetic fixture.
    Rcv,
    /// Run the committed benchmark suite and print one line per
    /// criterion.
    SynthBench {
        /// Base seed; each multi-seed criterion uses this and the next
        /// four.
        #[arg(long, default_value_t = bench::DEFAULT_BASE_SEED)]
        seed: u64,
        /// Run only these criterion indices (comma-separated, 1-based);
        /// default is all of them.
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
    /// Render a TOML report as an indented text tree.
    Report {
        /// Any report file produced by this tool.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arm {
    Proposed,
    Baseline,
    Direct,
}

impl Arm {
    fn name(self) -> &'static str {
        match self {
            Arm::Proposed => "proposed",
            Arm::Baseline => "baseline",
            Arm::Direct => "direct",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Extract { wavs, aligns, table } => cmd_extract(cli, wavs, aligns, table.as_deref()),
        Command::ValidateTable { table } => cmd_validate_table(cli, table.as_deref()),
        Command::TrainDann {
            source_features,
            source_targets,
            target_features,
        } => cmd_train_dann(cli, source_features, source_targets, target_features),
        Command::Score { model, params, features } => cmd_score(cli, model, params.as_deref(), features),
        Command::Pipeline { arm } => cmd_pipeline(cli, *arm),
        Command::Rcv => cmd_rcv(cli),
        Command::SynthBench { seed, only } => cmd_synth_bench(cli, *seed, only),
        Command::Report { input } => cmd_report(cli, input),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    match &cli.config {
        Some(path) => ExperimentConfig::load(path, &cli.overrides),
        None => ExperimentConfig::parse(DEFAULT_CONFIG, &cli.overrides),
    }
}

fn load_table(path: Option<&Path>) -> Result<SpeTable> {
    match path {
        Some(p) => SpeTable::load(p),
        None => Ok(SpeTable::builtin_timit()),
    }
}

// ---- extract ----------------------------------------------------------------

#[derive(Serialize)]
struct UttRecord {
    id: String,
    frames: usize,
}

#[derive(Serialize)]
struct FailRecord {
    wav: String,
    error: String,
}

#[derive(Serialize)]
struct ExtractSummary {
    n_ok: usize,
    n_failed: usize,
    total_frames: usize,
    feature_dim: usize,
    target_dim: usize,
    utterances: Vec<UttRecord>,
    failures: Vec<FailRecord>,
}

fn extract_one(
    wav: &Path,
    align: &Path,
    table: &SpeTable,
    cfg: &ExperimentConfig,
) -> Result<(Matrix, Matrix, Vec<String>)> {
    let utt = read_wav(wav)?;
    let feats = fbank(&utt, &cfg.frontend)?;
    let times = frame_centers(feats.rows(), &cfg.frontend, utt.sample_rate);
    let segments = load_alignment(align)?;
    let (targets, ids) = frame_targets(&segments, &times, table)?;
    let symbols = ids
        .iter()
        .map(|&id| table.symbol(id).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    Ok((feats, targets, symbols))
}

fn cmd_extract(cli: &Cli, wavs: &[PathBuf], aligns: &[PathBuf], table: Option<&Path>) -> Result<ExitCode> {
    if wavs.len() != aligns.len() {
        return Err(Error::Config(format!(
            "{} --wav flags but {} --align flags; they pair by position",
            wavs.len(),
            aligns.len()
        )));
    }
    let cfg = load_config(cli)?;
    let table = load_table(table)?;

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut labels = String::new();
    let mut summary = ExtractSummary {
        n_ok: 0,
        n_failed: 0,
        total_frames: 0,
        feature_dim: cfg.frontend.n_filters,
        target_dim: N_FEATURES,
        utterances: Vec::new(),
        failures: Vec::new(),
    };
    for (wav, align) in wavs.iter().zip(aligns) {
        let id = wav
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| wav.to_string_lossy().into_owned());
        match extract_one(wav, align, &table, &cfg) {
            Ok((feats, tgts, symbols)) => {
                println!("{id}: {} frames", feats.rows());
                summary.n_ok += 1;
                summary.total_frames += feats.rows();
                summary.utterances.push(UttRecord {
                    id: id.clone(),
                    frames: feats.rows(),
                });
                labels.push_str(&format!("{id} {}\n", symbols.join(" ")));
                features.push((id.clone(), feats));
                targets.push((id, tgts));
            }
            Err(e) => {
                eprintln!("{}: {e}", wav.display());
                summary.n_failed += 1;
                summary.failures.push(FailRecord {
                    wav: wav.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }

    archive::write_archive(&cli.out.join("features.farc"), &features)?;
    archive::write_archive(&cli.out.join("targets.farc"), &targets)?;
    fs::write(cli.out.join("labels.txt"), labels)?;
    write_toml(&cli.out.join("extract.toml"), &summary)?;
    println!(
        "extracted {} utterances ({} frames), {} failed",
        summary.n_ok, summary.total_frames, summary.n_failed
    );
    Ok(if summary.n_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

// ---- validate-table ---------------------------------------------------------

#[derive(Serialize)]
struct TableSummary {
    phonemes: usize,
    feature_dim: usize,
    silence_symbol: String,
    source: String,
}

fn cmd_validate_table(cli: &Cli, table: Option<&Path>) -> Result<ExitCode> {
    let parsed = load_table(table)?;
    let summary = TableSummary {
        phonemes: parsed.len(),
        feature_dim: N_FEATURES,
        silence_symbol: parsed.symbol(parsed.silence_id())?.to_string(),
        source: table.map_or("builtin".into(), |p| p.display().to_string()),
    };
    write_toml(&cli.out.join("table.toml"), &summary)?;
    println!(
        "table ok: {} phonemes x {} features, silence = {:?}",
        summary.phonemes, summary.feature_dim, summary.silence_symbol
    );
    Ok(ExitCode::SUCCESS)
}

// ---- train-dann / score -----------------------------------------------------

/// Reassembles archive entries into one dataset, each entry an
/// utterance, all frames tagged with `domain`.
fn dataset_from_archives(
    features: &[(String, Matrix)],
    targets: Option<&[(String, Matrix)]>,
    domain: u8,
) -> Result<Dataset> {
    if features.is_empty() {
        return Err(Error::InsufficientData("feature archive has no entries".into()));
    }
    if let Some(tgts) = targets {
        if tgts.len() != features.len() {
            return Err(Error::Dim(format!(
                "{} feature entries vs {} target entries",
                features.len(),
                tgts.len()
            )));
        }
        for ((fid, f), (tid, t)) in features.iter().zip(tgts) {
            if fid != tid || f.rows() != t.rows() {
                return Err(Error::Data(format!(
                    "entry {fid:?} ({} rows) does not match target entry {tid:?} ({} rows)",
                    f.rows(),
                    t.rows()
                )));
            }
        }
    }
    let mut spans = Vec::with_capacity(features.len());
    let mut cursor = 0;
    for (id, m) in features {
        spans.push(UttSpan {
            id: id.clone(),
            range: cursor..cursor + m.rows(),
        });
        cursor += m.rows();
    }
    let stacked = Matrix::vstack(&features.iter().map(|(_, m)| m).collect::<Vec<_>>())?;
    let multilabel = targets
        .map(|tgts| Matrix::vstack(&tgts.iter().map(|(_, m)| m).collect::<Vec<_>>()))
        .transpose()?;
    let n = stacked.rows();
    Dataset::new(stacked, None, multilabel, vec![domain; n], spans)
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    epochs: usize,
    final_label_loss: f64,
    final_domain_acc: Option<f64>,
    history: Vec<dann::EpochStats>,
}

fn cmd_train_dann(
    cli: &Cli,
    source_features: &Path,
    source_targets: &Path,
    target_features: &Path,
) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let source = dataset_from_archives(
        &archive::read_archive(source_features)?,
        Some(&archive::read_archive(source_targets)?),
        0,
    )?;
    let target = dataset_from_archives(&archive::read_archive(target_features)?, None, 1)?;

    let spec = DannSpec {
        input_dim: source.dim(),
        hidden_dims: cfg.dann.hidden_dims.clone(),
        n_outputs: N_FEATURES,
        head_kind: HeadKind::SigmoidMultiLabel,
    };
    let mut train = cfg.dann.train.clone();
    train.sgd.seed = derive_seed(cfg.seed, streams::STAGE_DANN);
    let (params, history) = train_dann(&source, &target, &spec, &train)?;
    if cli.verbose {
        for s in &history {
            eprintln!(
                "epoch {:3}  label_loss {:.4}  domain_acc {:.3}",
                s.epoch,
                s.label_loss,
                s.domain_acc.unwrap_or(f64::NAN)
            );
        }
    }

    let manifest = ModelManifest {
        schema_version: MODEL_SCHEMA_VERSION,
        spec,
        seed: cfg.seed,
        train: Some(train),
    };
    save_model(&params, &manifest, &cli.out.join("model.toml"), &cli.out.join("model.bin"))?;
    let last = history.last().ok_or_else(|| Error::Config("training ran zero epochs".into()))?;
    let summary = TrainSummary {
        seed: cfg.seed,
        epochs: history.len(),
        final_label_loss: last.label_loss,
        final_domain_acc: last.domain_acc,
        history: history.clone(),
    };
    write_toml(&cli.out.join("train_dann.toml"), &summary)?;
    println!(
        "trained {} epochs on {} source + {} target frames; final label loss {:.4}",
        summary.epochs,
        source.n_frames(),
        target.n_frames(),
        summary.final_label_loss
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ScoreSummary {
    utterances: usize,
    frames: usize,
    score_dim: usize,
}

fn cmd_score(cli: &Cli, model: &Path, params: Option<&Path>, features: &Path) -> Result<ExitCode> {
    let blob = params
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model.with_extension("bin"));
    let (params, _manifest) = load_model(model, &blob)?;
    let entries = archive::read_archive(features)?;
    let mut scored = Vec::with_capacity(entries.len());
    let mut frames = 0;
    for (id, m) in &entries {
        let s = dann::phonetic_scores(&params, m)?;
        frames += s.rows();
        scored.push((id.clone(), s));
    }
    archive::write_archive(&cli.out.join("scores.farc"), &scored)?;
    let summary = ScoreSummary {
        utterances: scored.len(),
        frames,
        score_dim: N_FEATURES,
    };
    write_toml(&cli.out.join("score.toml"), &summary)?;
    println!("scored {} utterances ({frames} frames)", scored.len());
    Ok(ExitCode::SUCCESS)
}

// ---- pipeline / rcv / synth-bench / report -----------------------------------

fn cmd_pipeline(cli: &Cli, arm: Arm) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let corpus = gen_phonetics_corpus(&fixtures::phonetics_corpus(cfg.seed))?;
    let pc = cfg.pipeline_config();
    let run = match arm {
        Arm::Proposed => run_adaptation_experiment,
        Arm::Baseline => run_baseline_experiment,
        Arm::Direct => run_direct_dann_experiment,
    };
    let outcome = run(
        &corpus.train_source,
        &corpus.train_target,
        &corpus.test_source,
        &corpus.test_target,
        &corpus.table,
        &pc,
    )?;
    if cli.verbose {
        for s in &outcome.dann_history {
            eprintln!(
                "dann epoch {:3}  label_loss {:.4}  domain_acc {:.3}",
                s.epoch,
                s.label_loss,
                s.domain_acc.unwrap_or(f64::NAN)
            );
        }
    }
    let report = experiment_report(cfg.seed, &outcome);
    let toml_text = to_toml(&report)?;
    fs::write(cli.out.join(format!("pipeline_{}.toml", arm.name())), &toml_text)?;
    print!("{}", render_text(&toml_text)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_rcv(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    let grid = if cfg.rcv.grid.is_empty() {
        bench::rcv_grid()
    } else {
        cfg.rcv.grid.clone()
    };
    let (train_src, train_tgt, _, _, _) = bench::normalized_synth_splits(cfg.seed)?;
    let n_classes = train_src.require_phoneme_ids()?.iter().max().map_or(0, |m| m + 1);
    let base = RcvBase {
        n_outputs: n_classes,
        head_kind: HeadKind::SoftmaxSingleLabel,
        train: bench::synth_adv_config(cfg.seed, 1.0),
    };
    let outcome = reverse_cross_validation(&grid, &train_src, &train_tgt.unlabeled(), &base, cfg.seed)?;
    for row in &outcome.rows {
        println!(
            "lambda {:<5} reverse score {:.4}{}",
            row.point.lambda,
            row.reverse_score,
            if row.degenerate { "  (degenerate self-labels)" } else { "" }
        );
    }
    println!("selected lambda = {}", outcome.best.lambda);
    write_toml(&cli.out.join("rcv.toml"), &outcome)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct BenchSummary {
    base_seed: u64,
    passed: bool,
    criteria: Vec<bench::CriterionResult>,
}

fn cmd_synth_bench(cli: &Cli, seed: u64, only: &[usize]) -> Result<ExitCode> {
    let criteria = if only.is_empty() {
        bench::run_all(seed)?
    } else {
        only.iter().map(|&i| bench::run_one(i, seed)).collect::<Result<_>>()?
    };
    for c in &criteria {
        println!("{}", c.line());
    }
    let summary = BenchSummary {
        base_seed: seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    };
    write_toml(&cli.out.join("synth_bench.toml"), &summary)?;
    Ok(if summary.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_report(cli: &Cli, input: &Path) -> Result<ExitCode> {
    let text = render_text(&fs::read_to_string(input)?)?;
    fs::write(cli.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_parses_and_matches_committed_recipe() {
        let cfg = ExperimentConfig::parse(DEFAULT_CONFIG, &[]).unwrap();
        let committed = bench::corpus_pipeline_config(derive_seed(cfg.seed, streams::STAGE_DANN));
        let pc = cfg.pipeline_config();
        assert_eq!(pc.dann_hidden, committed.dann_hidden);
        assert_eq!(pc.dann_train.lambda, committed.dann_train.lambda);
        assert_eq!(pc.dann_train.sgd.epochs, committed.dann_train.sgd.epochs);
        assert_eq!(pc.dnn_sgd.lr0, committed.dnn_sgd.lr0);
        assert_eq!(cfg.rcv.grid.len(), bench::rcv_grid().len());
        for (a, b) in cfg.rcv.grid.iter().zip(bench::rcv_grid()) {
            assert_eq!(a.lambda, b.lambda);
        }
    }

    #[test]
    fn cli_declares_every_subcommand() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        let names: Vec<_> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
        for want in [
            "extract",
            "validate-table",
            "train-dann",
            "score",
            "pipeline",
            "rcv",
            "synth-bench",
            "report",
        ] {
            assert!(names.iter().any(|n| n == want), "missing subcommand {want}");
        }
    }
}
