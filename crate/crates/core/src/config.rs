//! Run configuration: `key=value` lines with section prefixes.
//!
//! ```text
//! # comments and blank lines are ignored
//! model.kind=deepfwfm
//! prune.target_dnn=0.99
//! ```
//!
//! Later assignments win, so applying the file and then command-line
//! overrides gives flags > file > defaults.

use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{FieldSchema, NumericTransform};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::pruning::{EmbeddingMode, MaskMode, PruneSchedule};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub numeric_fields: usize,
    pub categorical_fields: usize,
    pub min_freq: usize,
    pub train_fraction: f64,
    pub transform: NumericTransform,

    pub model_kind: ModelKind,
    pub embed_dim: usize,
    pub mlp_widths: Vec<usize>,

    pub train: TrainConfig,
    pub prune: PruneSchedule,

    pub raw: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            numeric_fields: 13,
            categorical_fields: 26,
            min_freq: 8,
            train_fraction: 0.9,
            transform: NumericTransform::default(),
            model_kind: ModelKind::DeepFwFm,
            embed_dim: 10,
            mlp_widths: vec![400, 400, 400],
            train: TrainConfig::default(),
            prune: PruneSchedule::default(),
            raw: None,
            dictionary: None,
            train_data: None,
            test_data: None,
            checkpoint: None,
            metrics_csv: None,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("`{key}`: expected true or false, got `{value}`")),
    }
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Every recognised key, in the order [`RunConfig::to_text`] writes them.
    pub const KEYS: &'static [&'static str] = &[
        "data.numeric_fields",
        "data.categorical_fields",
        "data.min_freq",
        "data.train_fraction",
        "data.log_floor",
        "data.clamp_negative",
        "data.raw",
        "data.dictionary",
        "data.train",
        "data.test",
        "model.kind",
        "model.embed_dim",
        "model.mlp_widths",
        "model.dropout",
        "train.learning_rate",
        "train.l2",
        "train.batch_size",
        "train.epochs",
        "train.threads",
        "prune.target_dnn",
        "prune.target_r",
        "prune.target_emb",
        "prune.damping",
        "prune.frequency",
        "prune.every",
        "prune.warmup_epochs",
        "prune.embedding_mode",
        "prune.freeze",
        "output.checkpoint",
        "output.metrics",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "data.numeric_fields" => self.numeric_fields = parse(key, v)?,
            "data.categorical_fields" => self.categorical_fields = parse(key, v)?,
            "data.min_freq" => self.min_freq = parse(key, v)?,
            "data.train_fraction" => self.train_fraction = parse(key, v)?,
            "data.log_floor" => self.transform.floor = parse_bool(key, v)?,
            "data.clamp_negative" => self.transform.clamp_negative = parse_bool(key, v)?,
            "data.raw" => self.raw = path(v),
            "data.dictionary" => self.dictionary = path(v),
            "data.train" => self.train_data = path(v),
            "data.test" => self.test_data = path(v),
            "model.kind" => self.model_kind = v.parse().map_err(|e: Error| format!("`{key}`: {e}"))?,
            "model.embed_dim" => self.embed_dim = parse(key, v)?,
            "model.mlp_widths" => self.mlp_widths = parse_list(key, v)?,
            "model.dropout" => self.train.dropout_rate = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.l2" => self.train.l2_penalty = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.threads" => self.train.threads = parse(key, v)?,
            "prune.target_dnn" => self.prune.target_dnn = parse(key, v)?,
            "prune.target_r" => self.prune.target_r = parse(key, v)?,
            "prune.target_emb" => self.prune.target_emb = parse(key, v)?,
            "prune.damping" => self.prune.damping = parse(key, v)?,
            "prune.frequency" => self.prune.frequency = parse(key, v)?,
            "prune.every" => self.prune.prune_every = parse(key, v)?,
            "prune.warmup_epochs" => self.prune.warmup_epochs = parse(key, v)?,
            "prune.embedding_mode" => {
                self.prune.embedding_mode = match v {
                    "global" => EmbeddingMode::Global,
                    "per_field" => EmbeddingMode::PerField,
                    _ => return Err(format!("`{key}`: expected global or per_field, got `{v}`")),
                }
            }
            "prune.freeze" => {
                self.prune.mask_mode = if parse_bool(key, v)? {
                    MaskMode::Frozen
                } else {
                    MaskMode::Revivable
                }
            }
            "output.checkpoint" => self.checkpoint = path(v),
            "output.metrics" => self.metrics_csv = path(v),
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Apply `key=value` lines; every bad line is reported.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut problems = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v) {
                        problems.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => problems.push(format!("line {}: expected key=value, got `{line}`", i + 1)),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Apply `key=value` overrides, e.g. from `--set` flags.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut problems = Vec::new();
        for o in overrides {
            let o = o.as_ref();
            match o.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v) {
                        problems.push(e);
                    }
                }
                None => problems.push(format!("override `{o}` is not key=value")),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let b = |x: bool| x.to_string();
        Some(match key {
            "data.numeric_fields" => self.numeric_fields.to_string(),
            "data.categorical_fields" => self.categorical_fields.to_string(),
            "data.min_freq" => self.min_freq.to_string(),
            "data.train_fraction" => format!("{:?}", self.train_fraction),
            "data.log_floor" => b(self.transform.floor),
            "data.clamp_negative" => b(self.transform.clamp_negative),
            "data.raw" => show_path(&self.raw),
            "data.dictionary" => show_path(&self.dictionary),
            "data.train" => show_path(&self.train_data),
            "data.test" => show_path(&self.test_data),
            "model.kind" => self.model_kind.to_string(),
            "model.embed_dim" => self.embed_dim.to_string(),
            "model.mlp_widths" => self.mlp_widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            "model.dropout" => format!("{:?}", self.train.dropout_rate),
            "train.learning_rate" => format!("{:?}", self.train.learning_rate),
            "train.l2" => format!("{:?}", self.train.l2_penalty),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.threads" => self.train.threads.to_string(),
            "prune.target_dnn" => format!("{:?}", self.prune.target_dnn),
            "prune.target_r" => format!("{:?}", self.prune.target_r),
            "prune.target_emb" => format!("{:?}", self.prune.target_emb),
            "prune.damping" => format!("{:?}", self.prune.damping),
            "prune.frequency" => format!("{:?}", self.prune.frequency),
            "prune.every" => self.prune.prune_every.to_string(),
            "prune.warmup_epochs" => self.prune.warmup_epochs.to_string(),
            "prune.embedding_mode" => match self.prune.embedding_mode {
                EmbeddingMode::Global => "global".into(),
                EmbeddingMode::PerField => "per_field".into(),
            },
            "prune.freeze" => b(self.prune.mask_mode == MaskMode::Frozen),
            "output.checkpoint" => show_path(&self.checkpoint),
            "output.metrics" => show_path(&self.metrics_csv),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// The full effective configuration as `(key, value)` pairs.
    pub fn entries(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("every listed key is readable")))
            .collect()
    }

    /// The full effective configuration; parses back to an equal value.
    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn schema(&self) -> Result<FieldSchema> {
        FieldSchema::leading_numeric(self.numeric_fields, self.categorical_fields)
    }

    /// Value-level checks; path existence is left to the command that needs
    /// each file.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut collect = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(match e {
                    Error::Config(m) | Error::Input(m) => m,
                    other => other.to_string(),
                });
            }
        };
        collect(self.schema().map(|_| ()));
        if self.min_freq == 0 {
            collect(Err(Error::Config("data.min_freq must be >= 1".into())));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            collect(Err(Error::Config(format!(
                "data.train_fraction {} must lie in (0, 1)",
                self.train_fraction
            ))));
        }
        if self.model_kind != ModelKind::Lr && self.embed_dim == 0 {
            collect(Err(Error::Config("model.embed_dim must be >= 1".into())));
        }
        if self.model_kind == ModelKind::DeepFwFm && self.mlp_widths.contains(&0) {
            collect(Err(Error::Config("model.mlp_widths must all be >= 1".into())));
        }
        collect(self.train.validate());
        collect(self.prune.validate());
        if self.prune.target_dnn > 0.0 && self.model_kind != ModelKind::DeepFwFm {
            collect(Err(Error::Config(format!(
                "prune.target_dnn needs a DNN; model.kind is {}",
                self.model_kind
            ))));
        }
        if self.prune.target_r > 0.0 && !matches!(self.model_kind, ModelKind::FwFm | ModelKind::DeepFwFm) {
            collect(Err(Error::Config(format!(
                "prune.target_r needs a field matrix; model.kind is {}",
                self.model_kind
            ))));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
