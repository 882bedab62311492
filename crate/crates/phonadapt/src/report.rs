//! Structured experiment reports: TOML on disk (stable, versioned,
//! byte-deterministic for a fixed seed) plus a plain-text rendering for
//! terminals.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::pipeline::{AdaptationOutcome, DimsTrace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Disk form of one experiment run: both test splits, the dimension
/// trace, and a note keeping the PER proxy honest.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub seed: u64,
    /// approx_per collapses consecutive frame predictions; it is a
    /// desk-scale proxy, not a decoder phoneme error rate.
    pub approx_per_is_proxy: bool,
    pub dims: DimsTrace,
    pub source_test: EvalReport,
    pub target_test: EvalReport,
}

pub fn experiment_report(seed: u64, outcome: &AdaptationOutcome) -> ExperimentReport {
    ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        approx_per_is_proxy: true,
        dims: outcome.dims,
        source_test: outcome.source_report.clone(),
        target_test: outcome.target_report.clone(),
    }
}

/// Serializes any report value to TOML text. Key order comes from
/// struct fields and sorted maps, so output is deterministic.
pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_toml(value)?)?;
    Ok(())
}

/// Renders stored TOML (any report produced by this crate) as an
/// indented tree for terminals.
pub fn render_text(toml_text: &str) -> Result<String> {
    let table: toml::Table = toml_text.parse().map_err(|e| Error::Parse {
        what: "report".into(),
        detail: format!("{e}"),
    })?;
    let value = toml::Value::Table(table);
    let mut out = String::new();
    render_value(&value, 0, &mut out);
    Ok(out)
}

fn render_value(v: &toml::Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        toml::Value::Table(t) => {
            for (k, inner) in t {
                match inner {
                    toml::Value::Table(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render_value(inner, indent + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", scalar(inner))),
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", scalar(other))),
    }
}

fn scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(a) => format!("[{}]", a.iter().map(scalar).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample_report() -> ExperimentReport {
        let mut per_class = BTreeMap::new();
        per_class.insert("aa".to_string(), 0.75);
        per_class.insert("sil".to_string(), 0.96);
        let r = EvalReport {
            frame_error_rate: 0.25,
            per_class_accuracy: per_class,
            macro_f1_multilabel: Some(0.8),
            domain_classifier_accuracy: Some(0.55),
            proxy_a_distance: Some(0.2),
            approx_per: Some(0.31),
        };
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            seed: 7,
            approx_per_is_proxy: true,
            dims: DimsTrace {
                raw: 23,
                with_deltas: 69,
                appended: 83,
                spliced: 913,
            },
            source_test: r.clone(),
            target_test: r,
        }
    }

    #[test]
    fn report_has_both_sections_and_is_deterministic() {
        let rep = sample_report();
        let a = to_toml(&rep).unwrap();
        let b = to_toml(&rep).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("[source_test]"));
        assert!(a.contains("[target_test]"));
        assert!(a.contains("approx_per_is_proxy = true"));
    }

    #[test]
    fn text_rendering_indents_nested_tables() {
        let toml_text = to_toml(&sample_report()).unwrap();
        let text = render_text(&toml_text).unwrap();
        assert!(text.contains("source_test:"));
        assert!(text.contains("  frame_error_rate: 0.25"));
        assert!(text.contains("  per_class_accuracy:"));
        assert!(text.contains("    aa: 0.75"));
    }

    #[test]
    fn rates_stay_in_bounds() {
        let rep = sample_report();
        for r in [&rep.source_test, &rep.target_test] {
            assert!((0.0..=1.0).contains(&r.frame_error_rate));
            for v in r.per_class_accuracy.values() {
                assert!((0.0..=1.0).contains(v));
            }
            let pad = r.proxy_a_distance.unwrap();
            assert!((0.0..=2.0).contains(&pad));
        }
    }
}
