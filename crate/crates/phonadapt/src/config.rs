//! Declarative experiment configuration: a versioned TOML schema with
//! strict (unknown keys rejected) parsing and dotted-path overrides.
//!
//! All randomness is surfaced as the single top-level `seed`; per-stage
//! seeds in the file are ignored and rewritten from it, so one value
//! reproduces an entire experiment.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dann::AdvTrainConfig;
use crate::error::{Error, Result};
use crate::frontend::FbankConfig;
use crate::nn::{Activation, SgdConfig};
use crate::pipeline::PipelineConfig;
use crate::rcv::GridPoint;
use crate::seeding::{derive_seed, streams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// The only seed that matters; stage seeds derive from it.
    pub seed: u64,
    #[serde(default)]
    pub frontend: FbankConfig,
    pub dann: DannSection,
    pub phoneme_dnn: DnnSection,
    #[serde(default)]
    pub rcv: RcvSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DannSection {
    pub hidden_dims: Vec<usize>,
    pub train: AdvTrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DnnSection {
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    pub sgd: SgdConfig,
}

fn default_activation() -> Activation {
    Activation::Sigmoid
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcvSection {
    #[serde(default)]
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// Splice half-width; 5 means 11-frame segments.
    pub context: usize,
    /// Whether the multi-label DANN sees spliced windows (the default)
    /// or single frames.
    pub splice_dann_input: bool,
}

impl Default for PipelineSection {
    fn default() -> PipelineSection {
        PipelineSection {
            context: 5,
            splice_dann_input: true,
        }
    }
}

/// Applies one `a.b.c=value` override onto a parsed TOML tree. The
/// leaf is parsed as TOML (numbers, booleans, arrays, inline tables);
/// anything unparsable is taken as a string.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key.path=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(Error::Config(format!("override '{spec}' has an empty key path")));
    }
    let leaf: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{}' is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), leaf);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("loop returns on the last path segment")
}

impl ExperimentConfig {
    /// Parses config text, applies dotted overrides, then enforces the
    /// schema strictly — unknown keys and version mismatches are errors
    /// that name the offending key.
    pub fn parse(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
        let table: toml::Table = text.parse().map_err(|e| Error::Parse {
            what: "experiment config".into(),
            detail: format!("{e}"),
        })?;
        let mut value = toml::Value::Table(table);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let version = value
            .get("schema_version")
            .and_then(toml::Value::as_integer)
            .ok_or_else(|| Error::Config("config is missing schema_version".into()))?;
        if version != CONFIG_SCHEMA_VERSION as i64 {
            return Err(Error::Config(format!(
                "config schema_version {version} is not supported (expected {CONFIG_SCHEMA_VERSION})"
            )));
        }
        let cfg: ExperimentConfig = value.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)?;
        ExperimentConfig::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        self.dann.train.validate()?;
        self.phoneme_dnn.sgd.validate()?;
        if self.dann.hidden_dims.is_empty() || self.phoneme_dnn.hidden_dims.is_empty() {
            return Err(Error::Config("hidden_dims must be non-empty".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// The pipeline view of this config, with stage seeds derived from
    /// the top-level seed.
    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut dann_train = self.dann.train.clone();
        dann_train.sgd.seed = derive_seed(self.seed, streams::STAGE_DANN);
        let mut dnn_sgd = self.phoneme_dnn.sgd.clone();
        dnn_sgd.seed = derive_seed(self.seed, streams::STAGE_DNN);
        PipelineConfig {
            context: self.pipeline.context,
            splice_dann_input: self.pipeline.splice_dann_input,
            dann_hidden: self.dann.hidden_dims.clone(),
            dann_train,
            dnn_hidden: self.phoneme_dnn.hidden_dims.clone(),
            dnn_activation: self.phoneme_dnn.activation,
            dnn_sgd,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dann::{LambdaSchedule, MultiLabelLoss};
    use crate::nn::LrSchedule;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7

[dann]
hidden_dims = [32]

[dann.train]
lambda = 0.5

[dann.train.sgd]
lr0 = 0.1
batch_size = 32
epochs = 10

[dann.train.sgd.schedule]
kind = "constant"

[phoneme_dnn]
hidden_dims = [48]

[phoneme_dnn.sgd]
lr0 = 0.2
batch_size = 64
epochs = 12

[phoneme_dnn.sgd.schedule]
kind = "constant"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.frontend.n_filters, 23);
        assert_eq!(cfg.pipeline.context, 5);
        assert!(cfg.pipeline.splice_dann_input);
        assert_eq!(cfg.dann.train.lambda, 0.5);
        assert_eq!(cfg.dann.train.lambda_schedule, LambdaSchedule::Constant);
        assert_eq!(cfg.dann.train.multilabel_loss, MultiLabelLoss::Bce);
        assert!(cfg.rcv.grid.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = MINIMAL.replace("[phoneme_dnn]", "[phoneme_dnn]\nlerning_rate = 3");
        let err = ExperimentConfig::parse(&text, &[]).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("lerning_rate"), "error lacks key name: {msg}");
    }

    #[test]
    fn schema_version_checked() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(ExperimentConfig::parse(&text, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_rewrite_nested_values() {
        let overrides = vec![
            "dann.train.lambda=1.25".to_string(),
            "phoneme_dnn.sgd.lr0=0.05".to_string(),
            "pipeline.context=3".to_string(),
            "dann.train.sgd.schedule={ kind = \"inverse_decay\", alpha = 0.01, beta = 0.75 }".to_string(),
        ];
        let cfg = ExperimentConfig::parse(MINIMAL, &overrides).unwrap();
        assert_eq!(cfg.dann.train.lambda, 1.25);
        assert_eq!(cfg.phoneme_dnn.sgd.lr0, 0.05);
        assert_eq!(cfg.pipeline.context, 3);
        assert!(matches!(
            cfg.dann.train.sgd.schedule,
            LrSchedule::InverseDecay { .. }
        ));
    }

    #[test]
    fn override_with_bogus_key_is_a_schema_error() {
        let overrides = vec!["dann.train.lambada=0.5".to_string()];
        let err = ExperimentConfig::parse(MINIMAL, &overrides).unwrap_err();
        assert!(format!("{err}").contains("lambada"));
    }

    #[test]
    fn top_seed_rewrites_stage_seeds() {
        let with_seed = MINIMAL.replace("epochs = 10", "epochs = 10\nseed = 999");
        let cfg = ExperimentConfig::parse(&with_seed, &[]).unwrap();
        let pc = cfg.pipeline_config();
        // The file's sgd seed is ignored in favor of the derived one.
        assert_ne!(pc.dann_train.sgd.seed, 999);
        assert_eq!(pc.dann_train.sgd.seed, derive_seed(7, streams::STAGE_DANN));
        assert_eq!(pc.dnn_sgd.seed, derive_seed(7, streams::STAGE_DNN));
        assert_ne!(pc.dann_train.sgd.seed, pc.dnn_sgd.seed);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::parse(MINIMAL, &[]).unwrap();
        let text = cfg.to_toml_string().unwrap();
        let again = ExperimentConfig::parse(&text, &[]).unwrap();
        assert_eq!(again.seed, cfg.seed);
        assert_eq!(again.dann.train, cfg.dann.train);
        assert_eq!(again.phoneme_dnn.sgd, cfg.phoneme_dnn.sgd);
    }

    #[test]
    fn rcv_grid_parses() {
        let text = format!(
            "{MINIMAL}\n[[rcv.grid]]\nlambda = 0.0\nlr0 = 0.1\nhidden_dims = [16]\n\n[[rcv.grid]]\nlambda = 0.5\nlr0 = 0.1\nhidden_dims = [16]\n"
        );
        let cfg = ExperimentConfig::parse(&text, &[]).unwrap();
        assert_eq!(cfg.rcv.grid.len(), 2);
        assert_eq!(cfg.rcv.grid[1].lambda, 0.5);
    }
}
