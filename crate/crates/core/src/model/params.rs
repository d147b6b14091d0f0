use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{ModelConfig, ModelKind};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out = self · x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fully connected layer, weight shaped `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseLayer {
            weight: Matrix::zeros(n_out, n_in),
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols
    }

    pub fn n_out(&self) -> usize {
        self.weight.rows
    }
}

/// LR and FM parameters. LR leaves `embeddings` with zero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LrFmParams {
    pub w0: f64,
    pub linear: Vec<f64>,
    pub embeddings: Matrix,
}

/// FwFM and DeepFwFM parameters. FwFM has an empty `mlp` and no `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepFwFmParams {
    pub w0: f64,
    /// `m × k` feature embeddings.
    pub embeddings: Matrix,
    /// `n × k` linear field vectors.
    pub field_vectors: Matrix,
    /// `n × n`; only the strict upper triangle is read.
    pub field_matrix: Matrix,
    pub mlp: Vec<DenseLayer>,
    pub output: Option<DenseLayer>,
}

impl DeepFwFmParams {
    /// `R[F, F']` for any ordering of the two fields.
    #[inline]
    pub fn pair_weight(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.field_matrix.get(lo, hi)
    }

    pub fn n_fields(&self) -> usize {
        self.field_vectors.rows
    }

    pub fn dnn_layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.mlp.iter().chain(self.output.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    LrFm(LrFmParams),
    FwFm(DeepFwFmParams),
}

/// The prunable components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Dnn,
    FieldMatrix,
    Embeddings,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Dnn, Component::FieldMatrix, Component::Embeddings];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::Dnn => "dnn",
            Component::FieldMatrix => "R",
            Component::Embeddings => "emb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorRole {
    GlobalBias,
    Linear,
    Embeddings,
    FieldVectors,
    FieldMatrix,
    MlpWeight(usize),
    MlpBias(usize),
    OutputWeight,
    OutputBias,
}

impl TensorRole {
    pub fn name(&self) -> String {
        match self {
            TensorRole::GlobalBias => "w0".into(),
            TensorRole::Linear => "linear".into(),
            TensorRole::Embeddings => "embeddings".into(),
            TensorRole::FieldVectors => "field_vectors".into(),
            TensorRole::FieldMatrix => "field_matrix".into(),
            TensorRole::MlpWeight(i) => format!("mlp.{i}.weight"),
            TensorRole::MlpBias(i) => format!("mlp.{i}.bias"),
            TensorRole::OutputWeight => "output.weight".into(),
            TensorRole::OutputBias => "output.bias".into(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "w0" => TensorRole::GlobalBias,
            "linear" => TensorRole::Linear,
            "embeddings" => TensorRole::Embeddings,
            "field_vectors" => TensorRole::FieldVectors,
            "field_matrix" => TensorRole::FieldMatrix,
            "output.weight" => TensorRole::OutputWeight,
            "output.bias" => TensorRole::OutputBias,
            _ => {
                let rest = name.strip_prefix("mlp.")?;
                let (i, part) = rest.split_once('.')?;
                let i = i.parse().ok()?;
                match part {
                    "weight" => TensorRole::MlpWeight(i),
                    "bias" => TensorRole::MlpBias(i),
                    _ => return None,
                }
            }
        })
    }

    /// Biases and `w0` carry no L2 penalty.
    pub fn regularized(&self) -> bool {
        !matches!(
            self,
            TensorRole::GlobalBias | TensorRole::MlpBias(_) | TensorRole::OutputBias
        )
    }

    pub fn component(&self) -> Option<Component> {
        match self {
            TensorRole::MlpWeight(_) | TensorRole::OutputWeight => Some(Component::Dnn),
            TensorRole::FieldMatrix => Some(Component::FieldMatrix),
            TensorRole::Embeddings => Some(Component::Embeddings),
            _ => None,
        }
    }
}

pub struct TensorView<'a> {
    pub role: TensorRole,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

pub struct TensorViewMut<'a> {
    pub role: TensorRole,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [f64],
}

/// Initialization scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub embed_std: f64,
    pub field_vector_std: f64,
    /// Upper bound for the uniform `[0, r)` field-matrix init.
    pub field_matrix_max: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            embed_std: 0.01,
            field_vector_std: 0.01,
            field_matrix_max: 1.0,
        }
    }
}

fn fill_normal<R: Rng + ?Sized>(data: &mut [f64], std: f64, rng: &mut R) {
    if std <= 0.0 {
        return;
    }
    let dist = Normal::new(0.0, std).expect("finite std");
    for x in data {
        *x = dist.sample(rng);
    }
}

/// Glorot-uniform weights, zero bias.
fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> DenseLayer {
    let mut layer = DenseLayer::zeros(n_in, n_out);
    let bound = (6.0 / (n_in + n_out) as f64).sqrt();
    let dist = Uniform::new(-bound, bound).expect("bound > 0");
    for w in &mut layer.weight.data {
        *w = dist.sample(rng);
    }
    layer
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        let m = config.n_features();
        let n = config.n_fields;
        let k = config.embed_dim;
        match config.kind {
            ModelKind::Lr | ModelKind::Fm => Params::LrFm(LrFmParams {
                w0: 0.0,
                linear: vec![0.0; m],
                embeddings: Matrix::zeros(m, if config.kind == ModelKind::Fm { k } else { 0 }),
            }),
            ModelKind::FwFm | ModelKind::DeepFwFm => {
                let (mlp, output) = if config.kind == ModelKind::DeepFwFm {
                    let mut width = n * k;
                    let mut layers = Vec::new();
                    for &h in &config.mlp_widths {
                        layers.push(DenseLayer::zeros(width, h));
                        width = h;
                    }
                    (layers, Some(DenseLayer::zeros(width, 1)))
                } else {
                    (Vec::new(), None)
                };
                Params::FwFm(DeepFwFmParams {
                    w0: 0.0,
                    embeddings: Matrix::zeros(m, k),
                    field_vectors: Matrix::zeros(n, k),
                    field_matrix: Matrix::zeros(n, n),
                    mlp,
                    output,
                })
            }
        }
    }

    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, init: &InitConfig, rng: &mut R) -> Self {
        let mut params = Params::zeros(config);
        match &mut params {
            Params::LrFm(p) => fill_normal(&mut p.embeddings.data, init.embed_std, rng),
            Params::FwFm(p) => {
                fill_normal(&mut p.embeddings.data, init.embed_std, rng);
                fill_normal(&mut p.field_vectors.data, init.field_vector_std, rng);
                let n = p.field_matrix.rows;
                if init.field_matrix_max > 0.0 {
                    let dist = Uniform::new(0.0, init.field_matrix_max).expect("max > 0");
                    for a in 0..n {
                        for b in a + 1..n {
                            p.field_matrix.set(a, b, dist.sample(rng));
                        }
                    }
                }
                for layer in &mut p.mlp {
                    *layer = glorot(layer.n_in(), layer.n_out(), rng);
                }
                if let Some(out) = &mut p.output {
                    *out = glorot(out.n_in(), 1, rng);
                }
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data.fill(0.0);
        }
        out
    }

    pub fn w0(&self) -> f64 {
        match self {
            Params::LrFm(p) => p.w0,
            Params::FwFm(p) => p.w0,
        }
    }

    pub fn embeddings(&self) -> &Matrix {
        match self {
            Params::LrFm(p) => &p.embeddings,
            Params::FwFm(p) => &p.embeddings,
        }
    }

    pub fn embeddings_mut(&mut self) -> &mut Matrix {
        match self {
            Params::LrFm(p) => &mut p.embeddings,
            Params::FwFm(p) => &mut p.embeddings,
        }
    }

    pub fn as_fwfm(&self) -> Option<&DeepFwFmParams> {
        match self {
            Params::FwFm(p) => Some(p),
            Params::LrFm(_) => None,
        }
    }

    pub fn as_lrfm(&self) -> Option<&LrFmParams> {
        match self {
            Params::LrFm(p) => Some(p),
            Params::FwFm(_) => None,
        }
    }

    /// Every tensor in a fixed order. Empty tensors (LR embeddings) are skipped.
    pub fn tensors<'a>(&'a self) -> Vec<TensorView<'a>> {
        let mut out = Vec::new();
        let mut push = |role: TensorRole, rows: usize, cols: usize, data: &'a [f64]| {
            out.push(TensorView {
                role,
                rows,
                cols,
                data,
            })
        };
        match self {
            Params::LrFm(p) => {
                push(TensorRole::GlobalBias, 1, 1, std::slice::from_ref(&p.w0));
                push(TensorRole::Linear, p.linear.len(), 1, &p.linear);
                if p.embeddings.cols > 0 {
                    let e = &p.embeddings;
                    push(TensorRole::Embeddings, e.rows, e.cols, &e.data);
                }
            }
            Params::FwFm(p) => {
                push(TensorRole::GlobalBias, 1, 1, std::slice::from_ref(&p.w0));
                let e = &p.embeddings;
                push(TensorRole::Embeddings, e.rows, e.cols, &e.data);
                let v = &p.field_vectors;
                push(TensorRole::FieldVectors, v.rows, v.cols, &v.data);
                let r = &p.field_matrix;
                push(TensorRole::FieldMatrix, r.rows, r.cols, &r.data);
                for (i, l) in p.mlp.iter().enumerate() {
                    push(TensorRole::MlpWeight(i), l.weight.rows, l.weight.cols, &l.weight.data);
                    push(TensorRole::MlpBias(i), l.bias.len(), 1, &l.bias);
                }
                if let Some(l) = &p.output {
                    push(TensorRole::OutputWeight, l.weight.rows, l.weight.cols, &l.weight.data);
                    push(TensorRole::OutputBias, l.bias.len(), 1, &l.bias);
                }
            }
        }
        out
    }

    pub fn tensors_mut<'a>(&'a mut self) -> Vec<TensorViewMut<'a>> {
        let mut out = Vec::new();
        let mut push = |role: TensorRole, rows: usize, cols: usize, data: &'a mut [f64]| {
            out.push(TensorViewMut {
                role,
                rows,
                cols,
                data,
            })
        };
        match self {
            Params::LrFm(p) => {
                push(TensorRole::GlobalBias, 1, 1, std::slice::from_mut(&mut p.w0));
                let m = p.linear.len();
                push(TensorRole::Linear, m, 1, &mut p.linear);
                if p.embeddings.cols > 0 {
                    let e = &mut p.embeddings;
                    push(TensorRole::Embeddings, e.rows, e.cols, &mut e.data);
                }
            }
            Params::FwFm(p) => {
                push(TensorRole::GlobalBias, 1, 1, std::slice::from_mut(&mut p.w0));
                let e = &mut p.embeddings;
                push(TensorRole::Embeddings, e.rows, e.cols, &mut e.data);
                let v = &mut p.field_vectors;
                push(TensorRole::FieldVectors, v.rows, v.cols, &mut v.data);
                let r = &mut p.field_matrix;
                push(TensorRole::FieldMatrix, r.rows, r.cols, &mut r.data);
                for (i, l) in p.mlp.iter_mut().enumerate() {
                    let (rows, cols) = (l.weight.rows, l.weight.cols);
                    push(TensorRole::MlpWeight(i), rows, cols, &mut l.weight.data);
                    let b = l.bias.len();
                    push(TensorRole::MlpBias(i), b, 1, &mut l.bias);
                }
                if let Some(l) = &mut p.output {
                    let (rows, cols) = (l.weight.rows, l.weight.cols);
                    push(TensorRole::OutputWeight, rows, cols, &mut l.weight.data);
                    let b = l.bias.len();
                    push(TensorRole::OutputBias, b, 1, &mut l.bias);
                }
            }
        }
        out
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.role == y.role && x.rows == y.rows && x.cols == y.cols)
    }
}
