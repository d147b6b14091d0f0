use super::crs::{from_crs, to_crs, CrsMatrix};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::Scorer;
use crate::model::{
    check_sample, flops_estimate, Count, DeepFwFmParams, DenseLayer, FlopEstimate, LrFmParams, Matrix, Model,
    ModelConfig, ModelKind, ParamCounts, Params,
};
use crate::pruning::SparsityReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPair {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Surviving field pairs `(F, F')`, `F < F'`, sorted, nonzero weights only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairList {
    pub pairs: Vec<FieldPair>,
}

impl PairList {
    pub fn from_field_matrix(r: &Matrix) -> Self {
        let n = r.rows;
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let w = r.get(a, b);
                if w != 0.0 {
                    pairs.push(FieldPair {
                        a: a as u32,
                        b: b as u32,
                        weight: w,
                    });
                }
            }
        }
        PairList { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_field_matrix(&self, n: usize) -> Matrix {
        let mut r = Matrix::zeros(n, n);
        for p in &self.pairs {
            r.set(p.a as usize, p.b as usize, p.weight);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayer {
    pub weight: CrsMatrix,
    pub bias: Vec<f64>,
}

impl SparseLayer {
    fn from_dense(l: &DenseLayer) -> Self {
        SparseLayer {
            weight: to_crs(&l.weight),
            bias: l.bias.clone(),
        }
    }

    fn to_dense(&self) -> DenseLayer {
        DenseLayer {
            weight: from_crs(&self.weight),
            bias: self.bias.clone(),
        }
    }
}

/// Inference-only form of a pruned model.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub config: ModelConfig,
    pub w0: f64,
    /// LR and FM only.
    pub linear: Vec<f64>,
    /// `m × k`; zero columns for LR.
    pub embeddings: CrsMatrix,
    /// `n × k`; FwFM family only.
    pub field_vectors: Matrix,
    pub pairs: PairList,
    pub mlp: Vec<SparseLayer>,
    pub output: Option<SparseLayer>,
}

pub fn compile_sparse(model: &Model) -> SparseModel {
    let config = model.config.clone();
    match &model.params {
        Params::LrFm(p) => SparseModel {
            config,
            w0: p.w0,
            linear: p.linear.clone(),
            embeddings: to_crs(&p.embeddings),
            field_vectors: Matrix::zeros(0, 0),
            pairs: PairList::default(),
            mlp: Vec::new(),
            output: None,
        },
        Params::FwFm(p) => SparseModel {
            config,
            w0: p.w0,
            linear: Vec::new(),
            embeddings: to_crs(&p.embeddings),
            field_vectors: p.field_vectors.clone(),
            pairs: PairList::from_field_matrix(&p.field_matrix),
            mlp: p.mlp.iter().map(SparseLayer::from_dense).collect(),
            output: p.output.as_ref().map(SparseLayer::from_dense),
        },
    }
}

/// Buffers for [`sparse_forward_with`].
#[derive(Debug, Clone, Default)]
pub struct SparseScratch {
    emb: Vec<f64>,
    input: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SparseScratch {
    pub fn new(model: &SparseModel) -> Self {
        let nk = model.config.n_fields * model.embeddings.n_cols;
        let widest = model.mlp.iter().map(|l| l.bias.len()).max().unwrap_or(0);
        SparseScratch {
            emb: vec![0.0; nk],
            input: vec![0.0; nk],
            a: vec![0.0; widest],
            b: vec![0.0; widest],
        }
    }
}

pub fn sparse_forward(sample: &Sample, model: &SparseModel) -> Result<f64> {
    let mut scratch = SparseScratch::new(model);
    sparse_forward_with(sample, model, &mut scratch)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sparse_forward_with(sample: &Sample, model: &SparseModel, scratch: &mut SparseScratch) -> Result<f64> {
    check_sample(&model.config, sample)?;
    if model.embeddings.n_rows != model.config.n_features() {
        return Err(Error::Shape("embedding rows do not match the feature count".into()));
    }
    let n = sample.n_fields();
    let k = model.embeddings.n_cols;
    let emb = &mut scratch.emb[..n * k];
    emb.fill(0.0);
    for (f, &i) in sample.indices.iter().enumerate() {
        let (cols, vals) = model.embeddings.row(i as usize);
        let dst = &mut emb[f * k..(f + 1) * k];
        for (&c, &v) in cols.iter().zip(vals) {
            dst[c as usize] = v;
        }
    }
    let x = &sample.values;
    match model.config.kind {
        ModelKind::Lr | ModelKind::Fm => {
            let mut logit = model.w0;
            logit += sample
                .indices
                .iter()
                .zip(x)
                .map(|(&i, &xv)| xv * model.linear[i as usize])
                .sum::<f64>();
            if k > 0 {
                let mut pairs = 0.0;
                for d in 0..k {
                    let mut s = 0.0;
                    let mut sq = 0.0;
                    for f in 0..n {
                        let t = x[f] * emb[f * k + d];
                        s += t;
                        sq += t * t;
                    }
                    pairs += s * s - sq;
                }
                logit += 0.5 * pairs;
            }
            Ok(logit)
        }
        ModelKind::FwFm | ModelKind::DeepFwFm => {
            let mut logit = model.w0;
            for f in 0..n {
                logit += x[f] * dot(&emb[f * k..(f + 1) * k], model.field_vectors.row(f));
            }
            for p in &model.pairs.pairs {
                let (a, b) = (p.a as usize, p.b as usize);
                logit += x[a] * x[b] * dot(&emb[a * k..(a + 1) * k], &emb[b * k..(b + 1) * k]) * p.weight;
            }
            if let Some(output) = &model.output {
                let input = &mut scratch.input[..n * k];
                for f in 0..n {
                    for d in 0..k {
                        input[f * k + d] = x[f] * emb[f * k + d];
                    }
                }
                logit += sparse_mlp(input, &model.mlp, output, &mut scratch.a, &mut scratch.b);
            }
            Ok(logit)
        }
    }
}

fn sparse_mlp(input: &[f64], layers: &[SparseLayer], output: &SparseLayer, a: &mut [f64], b: &mut [f64]) -> f64 {
    let mut cur: &mut [f64] = a;
    let mut next: &mut [f64] = b;
    let mut width = input.len();
    for (li, layer) in layers.iter().enumerate() {
        let h = layer.bias.len();
        let src: &[f64] = if li == 0 { input } else { &cur[..width] };
        let dst = &mut next[..h];
        layer.weight.matvec_into(src, dst);
        for (y, &bias) in dst.iter_mut().zip(&layer.bias) {
            *y = (*y + bias).max(0.0);
        }
        std::mem::swap(&mut cur, &mut next);
        width = h;
    }
    let last: &[f64] = if layers.is_empty() { input } else { &cur[..width] };
    let mut out = [0.0];
    output.weight.matvec_into(last, &mut out);
    out[0] + output.bias[0]
}

impl Scorer for SparseModel {
    type Scratch = SparseScratch;

    fn scratch(&self) -> SparseScratch {
        SparseScratch::new(self)
    }

    fn logit_with(&self, sample: &Sample, scratch: &mut SparseScratch) -> Result<f64> {
        sparse_forward_with(sample, self, scratch)
    }
}

fn count_slice(data: &[f64]) -> Count {
    Count {
        dense: data.len() as u64,
        nonzero: data.iter().filter(|&&v| v != 0.0).count() as u64,
    }
}

fn count_crs(m: &CrsMatrix) -> Count {
    let nonzero = m.values.iter().filter(|&&v| v != 0.0).count() as u64;
    Count {
        dense: (m.n_rows * m.n_cols) as u64,
        nonzero,
    }
}

impl SparseModel {
    /// Counts measured on the compiled structures.
    pub fn counts(&self) -> ParamCounts {
        let mut c = ParamCounts {
            global_bias: count_slice(std::slice::from_ref(&self.w0)),
            embeddings: count_crs(&self.embeddings),
            ..Default::default()
        };
        match self.config.kind {
            ModelKind::Lr | ModelKind::Fm => c.linear = count_slice(&self.linear),
            ModelKind::FwFm | ModelKind::DeepFwFm => {
                let n = self.config.n_fields as u64;
                c.field_vectors = count_slice(&self.field_vectors.data);
                c.field_matrix = Count {
                    dense: n * n.saturating_sub(1) / 2,
                    nonzero: self.pairs.len() as u64,
                };
                for l in self.mlp.iter().chain(self.output.as_ref()) {
                    let w = count_crs(&l.weight);
                    let b = count_slice(&l.bias);
                    c.dnn_weights.dense += w.dense;
                    c.dnn_weights.nonzero += w.nonzero;
                    c.dnn_biases.dense += b.dense;
                    c.dnn_biases.nonzero += b.nonzero;
                }
            }
        }
        c
    }

    pub fn sparsity_report(&self) -> SparsityReport {
        let c = self.counts();
        SparsityReport {
            dnn: c.dnn_weights,
            field_matrix: c.field_matrix,
            embeddings: c.embeddings,
        }
    }

    /// Nonzero parameters actually stored.
    pub fn params_nnz(&self) -> u64 {
        self.counts().total().nonzero
    }

    /// Multiply-adds per sample on the sparse path, in the same form as
    /// [`flops_estimate`] so that an unpruned compile reports the same totals.
    pub fn flops(&self) -> FlopEstimate {
        let n = self.config.n_fields as u64;
        let k = self.embeddings.n_cols as u64;
        let shallow = match self.config.kind {
            ModelKind::Lr => n,
            ModelKind::Fm => n * k,
            ModelKind::FwFm | ModelKind::DeepFwFm => n * k + 2 * self.pairs.len() as u64 * k,
        };
        let hidden: u64 = self.mlp.iter().map(|l| l.weight.nnz() as u64).sum();
        let out = self.output.as_ref().map_or(0, |l| l.weight.nnz() as u64);
        let (dnn, dnn_exact) = match (&self.output, self.mlp.is_empty()) {
            (None, _) => (0, 0),
            (Some(_), true) => (out, out),
            (Some(_), false) => (hidden, hidden + out),
        };
        FlopEstimate {
            shallow,
            dnn,
            dnn_exact,
        }
    }

    /// Materialize the equivalent dense model.
    pub fn to_dense(&self) -> Model {
        let params = match self.config.kind {
            ModelKind::Lr | ModelKind::Fm => Params::LrFm(LrFmParams {
                w0: self.w0,
                linear: self.linear.clone(),
                embeddings: from_crs(&self.embeddings),
            }),
            ModelKind::FwFm | ModelKind::DeepFwFm => Params::FwFm(DeepFwFmParams {
                w0: self.w0,
                embeddings: from_crs(&self.embeddings),
                field_vectors: self.field_vectors.clone(),
                field_matrix: self.pairs.to_field_matrix(self.config.n_fields),
                mlp: self.mlp.iter().map(SparseLayer::to_dense).collect(),
                output: self.output.as_ref().map(SparseLayer::to_dense),
            }),
        };
        Model {
            config: self.config.clone(),
            params,
        }
    }

    /// Plain-text summary of per-component size and cost.
    pub fn model_card(&self) -> String {
        let c = self.counts();
        let dense = flops_estimate(&self.config);
        let sparse = self.flops();
        let widths: Vec<String> = self.config.mlp_widths.iter().map(|w| w.to_string()).collect();
        let mut s = String::new();
        s.push_str(&format!("model_kind: {}\n", self.config.kind));
        s.push_str(&format!("n_fields: {}\n", self.config.n_fields));
        s.push_str(&format!("n_features: {}\n", self.config.n_features()));
        s.push_str(&format!("embed_dim: {}\n", self.config.embed_dim));
        s.push_str(&format!("mlp_widths: {}\n", widths.join(",")));
        s.push_str("component\tdense\tnonzero\tsparsity\n");
        for (name, cnt) in [
            ("dnn", c.dnn_weights),
            ("R", c.field_matrix),
            ("emb", c.embeddings),
            ("linear", c.linear),
            ("field_vectors", c.field_vectors),
            ("biases", c.dnn_biases),
        ] {
            s.push_str(&format!("{name}\t{}\t{}\t{:.6}\n", cnt.dense, cnt.nonzero, cnt.sparsity()));
        }
        s.push_str(&format!("field_pairs: {}\n", self.pairs.len()));
        s.push_str(&format!("params_nnz: {}\n", c.total().nonzero));
        s.push_str(&format!("flops_dense: {}\n", dense.total()));
        s.push_str(&format!("flops_sparse: {}\n", sparse.total()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{count_parameters, InitConfig};
    use crate::pruning::{prune_component, EmbeddingMode};
    use crate::model::Component;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Sample {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for f in 0..config.n_fields {
            let r = config.field_range(f);
            indices.push(rng.random_range(r.start..r.end) as u32);
            values.push(rng.random_range(0.1..2.0));
        }
        Sample {
            label: 0,
            indices,
            values,
        }
    }

    #[test]
    fn unpruned_compile_is_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in ModelKind::ALL {
            let cfg = ModelConfig::uniform(kind, 6, 4, 3).with_mlp(vec![7, 5]);
            let model = Model::init(cfg.clone(), &InitConfig::default(), &mut rng).unwrap();
            let sparse = compile_sparse(&model);
            assert_eq!(sparse.counts(), count_parameters(&model), "{kind}");
            assert_eq!(sparse.to_dense(), model);
            if kind.has_embeddings() && kind != ModelKind::Fm {
                assert_eq!(sparse.pairs.len(), 15);
                let (sf, df) = (sparse.flops(), flops_estimate(&cfg));
                assert_eq!((sf.shallow, sf.dnn_exact), (df.shallow, df.dnn_exact));
            }
            for _ in 0..50 {
                let s = random_sample(&cfg, &mut rng);
                let d = model.logit(&s).unwrap();
                let p = sparse_forward(&s, &sparse).unwrap();
                assert!((d - p).abs() < 1e-12, "{kind}: {d} vs {p}");
            }
        }
    }

    #[test]
    fn pair_list_counts() {
        let cfg = ModelConfig::uniform(ModelKind::FwFm, 39, 2, 2);
        let mut model = Model::init(cfg, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        prune_component(&mut model, Component::FieldMatrix, 0.9, EmbeddingMode::Global);
        let sparse = compile_sparse(&model);
        assert_eq!(sparse.pairs.len(), 75);
        let w = sparse.pairs.pairs.windows(2).all(|p| (p[0].a, p[0].b) < (p[1].a, p[1].b));
        assert!(w);

        let mut one = Matrix::zeros(4, 4);
        one.set(1, 3, 0.5);
        assert_eq!(PairList::from_field_matrix(&one).len(), 1);
    }

    #[test]
    fn empty_pair_list_leaves_linear_part() {
        let cfg = ModelConfig::uniform(ModelKind::FwFm, 3, 2, 2);
        let mut model = Model::init(cfg.clone(), &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        if let Params::FwFm(p) = &mut model.params {
            p.field_matrix.data.fill(0.0);
            p.w0 = 0.25;
        }
        let sparse = compile_sparse(&model);
        assert!(sparse.pairs.is_empty());
        let s = random_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let p = model.params.as_fwfm().unwrap();
        let mut expect = 0.25;
        for f in 0..3 {
            expect += s.values[f] * dot(p.embeddings.row(s.indices[f] as usize), p.field_vectors.row(f));
        }
        assert!((sparse_forward(&s, &sparse).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn index_errors_surface() {
        let cfg = ModelConfig::uniform(ModelKind::DeepFwFm, 3, 2, 2).with_mlp(vec![4]);
        let model = Model::zeros(cfg).unwrap();
        let sparse = compile_sparse(&model);
        let s = Sample {
            label: 1,
            indices: vec![0, 0, 5],
            values: vec![1.0; 3],
        };
        assert!(matches!(sparse_forward(&s, &sparse), Err(Error::IndexMismatch { field: 1, .. })));
    }

    #[test]
    fn model_card_lists_components() {
        let cfg = ModelConfig::uniform(ModelKind::DeepFwFm, 3, 2, 2).with_mlp(vec![4]);
        let model = Model::init(cfg, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let card = compile_sparse(&model).model_card();
        for key in ["dnn\t", "R\t", "emb\t", "flops_sparse:", "params_nnz:"] {
            assert!(card.contains(key), "{card}");
        }
    }
}
