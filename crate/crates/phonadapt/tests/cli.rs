//! End-to-end checks of the command-line binary: real process spawns,
//! real files, tempdir-scoped. Training steps run with tiny epoch
//! overrides so the whole file stays fast.

use std::path::Path;
use std::process::{Command, Output};

use phonadapt::frontend::write_wav_mono16;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phonadapt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary spawns")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A 1 s, 16 kHz tone plus a matching three-segment alignment.
fn write_fixture(dir: &Path, stem: &str, freq: f64) {
    let samples: Vec<i16> = (0..16_000)
        .map(|t| (8000.0 * (2.0 * std::f64::consts::PI * freq * t as f64 / 16_000.0).sin()) as i16)
        .collect();
    write_wav_mono16(&dir.join(format!("{stem}.wav")), &samples, 16_000).unwrap();
    std::fs::write(
        dir.join(format!("{stem}.phn")),
        "0.00 0.40 aa\n0.40 0.70 s\n0.70 1.00 iy\n",
    )
    .unwrap();
}

#[test]
fn extract_train_score_report_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    write_fixture(dir.path(), "utt_a", 440.0);
    write_fixture(dir.path(), "utt_b", 220.0);
    let wav = |s: &str| dir.path().join(format!("{s}.wav")).to_str().unwrap().to_owned();
    let phn = |s: &str| dir.path().join(format!("{s}.phn")).to_str().unwrap().to_owned();

    let extracted = run(&[
        "extract",
        "--wav", &wav("utt_a"), "--align", &phn("utt_a"),
        "--wav", &wav("utt_b"), "--align", &phn("utt_b"),
        "--out", out_s,
    ]);
    assert!(extracted.status.success(), "{}", stderr(&extracted));
    // One second at a 25 ms window / 10 ms hop is exactly 98 frames.
    assert!(stdout(&extracted).contains("utt_a: 98 frames"), "{}", stdout(&extracted));
    for artifact in ["features.farc", "targets.farc", "labels.txt", "extract.toml"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }

    let features = out.join("features.farc");
    let trained = run(&[
        "train-dann",
        "--source-features", features.to_str().unwrap(),
        "--source-targets", out.join("targets.farc").to_str().unwrap(),
        "--target-features", features.to_str().unwrap(),
        "--set", "dann.train.sgd.epochs=2",
        "--set", "phoneme_dnn.sgd.epochs=2",
        "--out", out_s,
    ]);
    assert!(trained.status.success(), "{}", stderr(&trained));
    assert!(out.join("model.toml").exists() && out.join("model.bin").exists());

    let scored = run(&[
        "score",
        "--model", out.join("model.toml").to_str().unwrap(),
        "--features", features.to_str().unwrap(),
        "--out", out_s,
    ]);
    assert!(scored.status.success(), "{}", stderr(&scored));
    assert!(stdout(&scored).contains("scored 2 utterances"));
    assert!(out.join("scores.farc").exists());

    let report = run(&["report", "--input", out.join("train_dann.toml").to_str().unwrap(), "--out", out_s]);
    assert!(report.status.success(), "{}", stderr(&report));
    assert!(stdout(&report).contains("final_label_loss:"));
}

#[test]
fn extract_reports_bad_files_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    write_fixture(dir.path(), "good", 330.0);

    let result = run(&[
        "extract",
        "--wav", dir.path().join("good.wav").to_str().unwrap(),
        "--align", dir.path().join("good.phn").to_str().unwrap(),
        "--wav", dir.path().join("missing.wav").to_str().unwrap(),
        "--align", dir.path().join("missing.phn").to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(!result.status.success(), "missing input must fail the run");
    // The good file is still extracted and the summary names the bad one.
    assert!(stdout(&result).contains("good: 98 frames"));
    let summary = std::fs::read_to_string(out.join("extract.toml")).unwrap();
    assert!(summary.contains("n_ok = 1"), "{summary}");
    assert!(summary.contains("n_failed = 1"), "{summary}");
    assert!(summary.contains("missing.wav"), "{summary}");
}

#[test]
fn pipeline_report_has_both_test_sections() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "pipeline",
        "--arm", "baseline",
        "--set", "dann.train.sgd.epochs=1",
        "--set", "phoneme_dnn.sgd.epochs=1",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    let report = std::fs::read_to_string(out.join("pipeline_baseline.toml")).unwrap();
    assert!(report.contains("[source_test]"), "{report}");
    assert!(report.contains("[target_test]"), "{report}");
    assert!(report.contains("approx_per_is_proxy = true"), "{report}");
}

#[test]
fn rcv_singleton_grid_selects_that_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "rcv",
        "--set", "rcv.grid=[{lambda = 0.7, lr0 = 0.2, hidden_dims = [16]}]",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", stderr(&result));
    assert!(stdout(&result).contains("selected lambda = 0.7"), "{}", stdout(&result));
    let outcome = std::fs::read_to_string(out.join("rcv.toml")).unwrap();
    assert!(outcome.contains("best_index = 0"), "{outcome}");
}

#[test]
fn synth_bench_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = run(&[
            "synth-bench",
            "--seed", "9",
            "--only", "3,7,10",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{}", stderr(&result));
        for line in stdout(&result).lines() {
            assert!(line.starts_with("criterion "), "unexpected line {line:?}");
        }
    }
    let a = std::fs::read(out_a.join("synth_bench.toml")).unwrap();
    let b = std::fs::read(out_b.join("synth_bench.toml")).unwrap();
    assert_eq!(a, b, "same seed must produce byte-identical bench reports");
}

#[test]
fn config_typos_are_rejected_with_the_key_path() {
    let result = run(&["pipeline", "--set", "dann.train.lambada=0.5", "--out", "/tmp/unused-cli-out"]);
    assert!(!result.status.success());
    assert!(stderr(&result).contains("lambada"), "{}", stderr(&result));
}

#[test]
fn help_lists_every_subcommand() {
    let result = run(&["--help"]);
    assert!(result.status.success());
    let text = stdout(&result);
    for sub in ["extract", "validate-table", "train-dann", "score", "pipeline", "rcv", "synth-bench", "report"] {
        assert!(text.contains(sub), "help is missing {sub}");
    }
}
