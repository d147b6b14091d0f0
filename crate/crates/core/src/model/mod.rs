//! Parameter containers, forward passes, and FLOP/parameter accounting for
//! the four supported model families.

mod accounting;
mod forward;
mod params;

use std::fmt;
use std::str::FromStr;

pub use accounting::{
    count_parameters, flops_estimate, family_estimate, Count, Family, FlopEstimate, ParamCounts,
};
pub use forward::{
    forward_deepfwfm, forward_fm, forward_fwfm, forward_lr, forward_mlp, DenseScratch, Dropout,
};
pub use params::{
    Component, DeepFwFmParams, DenseLayer, InitConfig, LrFmParams, Matrix, Params, TensorRole,
    TensorView, TensorViewMut,
};

use rand::Rng;

use crate::data::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Lr,
    Fm,
    FwFm,
    DeepFwFm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Lr, ModelKind::Fm, ModelKind::FwFm, ModelKind::DeepFwFm];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Fm => "fm",
            ModelKind::FwFm => "fwfm",
            ModelKind::DeepFwFm => "deepfwfm",
        }
    }

    pub fn has_embeddings(&self) -> bool {
        !matches!(self, ModelKind::Lr)
    }

    pub fn has_mlp(&self) -> bool {
        matches!(self, ModelKind::DeepFwFm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(ModelKind::Lr),
            "fm" => Ok(ModelKind::Fm),
            "fwfm" => Ok(ModelKind::FwFm),
            "deepfwfm" => Ok(ModelKind::DeepFwFm),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Architecture of one model. `field_offsets` ties the model to the feature
/// layout of a dictionary: field `f` owns indices `offsets[f]..offsets[f + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n_fields: usize,
    pub embed_dim: usize,
    pub mlp_widths: Vec<usize>,
    pub dropout_rate: f64,
    pub field_offsets: Vec<usize>,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, field_offsets: Vec<usize>, embed_dim: usize) -> Self {
        let n_fields = field_offsets.len().saturating_sub(1);
        ModelConfig {
            kind,
            n_fields,
            embed_dim,
            mlp_widths: if kind.has_mlp() { vec![400, 400, 400] } else { Vec::new() },
            dropout_rate: 0.5,
            field_offsets,
        }
    }

    /// `n_fields` fields with `per_field` features each.
    pub fn uniform(kind: ModelKind, n_fields: usize, per_field: usize, embed_dim: usize) -> Self {
        Self::new(kind, (0..=n_fields).map(|f| f * per_field).collect(), embed_dim)
    }

    pub fn with_mlp(mut self, widths: Vec<usize>) -> Self {
        self.mlp_widths = widths;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    /// `m`: total features across fields.
    pub fn n_features(&self) -> usize {
        self.field_offsets.last().copied().unwrap_or(0)
    }

    pub fn field_range(&self, field: usize) -> std::ops::Range<usize> {
        self.field_offsets[field]..self.field_offsets[field + 1]
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_fields == 0 || self.field_offsets.len() != self.n_fields + 1 {
            problems.push(format!(
                "field_offsets must hold n_fields + 1 entries with n_fields >= 1 (got {} offsets, n_fields {})",
                self.field_offsets.len(),
                self.n_fields
            ));
        } else {
            if self.field_offsets[0] != 0 {
                problems.push("field_offsets must start at 0".into());
            }
            if self.field_offsets.windows(2).any(|w| w[1] <= w[0]) {
                problems.push("every field must own at least one feature".into());
            }
        }
        if self.embed_dim == 0 {
            problems.push("embed_dim must be at least 1".into());
        }
        if self.mlp_widths.contains(&0) {
            problems.push("mlp widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            problems.push(format!("dropout_rate {} must lie in [0, 1)", self.dropout_rate));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Width of the MLP input: `n · k`.
    pub fn mlp_input_width(&self) -> usize {
        self.n_fields * self.embed_dim
    }
}

/// A configured model and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, init: &InitConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, init, rng);
        Ok(Model { config, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(Model { config, params })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn check_sample(&self, sample: &Sample) -> Result<()> {
        check_sample(&self.config, sample)
    }

    /// Inference logit (dropout off).
    pub fn logit(&self, sample: &Sample) -> Result<f64> {
        let mut scratch = DenseScratch::new(&self.config);
        self.logit_with(sample, &mut scratch)
    }

    pub fn logit_with(&self, sample: &Sample, scratch: &mut DenseScratch) -> Result<f64> {
        self.check_sample(sample)?;
        match &self.params {
            Params::LrFm(p) => match self.config.kind {
                ModelKind::Lr => forward_lr(sample, p),
                _ => forward_fm(sample, p),
            },
            Params::FwFm(p) => {
                if self.config.kind == ModelKind::DeepFwFm {
                    forward::deepfwfm_with(sample, p, None, scratch)
                } else {
                    forward_fwfm(sample, p)
                }
            }
        }
    }

    pub fn predict(&self, sample: &Sample) -> Result<f64> {
        Ok(sigmoid(self.logit(sample)?))
    }
}

pub fn check_sample(config: &ModelConfig, sample: &Sample) -> Result<()> {
    if sample.indices.len() != config.n_fields || sample.values.len() != config.n_fields {
        return Err(Error::Shape(format!(
            "sample has {} fields, model expects {}",
            sample.indices.len(),
            config.n_fields
        )));
    }
    for (f, &i) in sample.indices.iter().enumerate() {
        let range = config.field_range(f);
        if !range.contains(&(i as usize)) {
            return Err(Error::IndexMismatch {
                field: f,
                index: i as usize,
                lo: range.start,
                hi: range.end,
            });
        }
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
