use super::{Model, ModelConfig, ModelKind, Params};

/// Deep CTR families compared in the complexity table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    DeepFm,
    XDeepFm,
    DeepFwFm,
}

/// Per-sample multiply-add counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopEstimate {
    /// Shallow (FM / CIN / FwFM) component.
    pub shallow: u64,
    /// DNN component in the `l·h² + n·k·h` form.
    pub dnn: u64,
    /// DNN multiply-adds for the actual layer shapes, output layer included.
    pub dnn_exact: u64,
}

impl FlopEstimate {
    pub fn total(&self) -> u64 {
        self.shallow + self.dnn
    }

    /// Shallow plus exact DNN multiply-adds.
    pub fn exact_total(&self) -> u64 {
        self.shallow + self.dnn_exact
    }
}

/// Complexity-table formulas: shallow `nk`, `n k h_c² l`, or `n²k`; DNN
/// `l h² + n k h`.
pub fn family_estimate(family: Family, l: u64, h: u64, n: u64, k: u64, h_c: u64) -> FlopEstimate {
    let shallow = match family {
        Family::DeepFm => n * k,
        Family::XDeepFm => n * k * h_c * h_c * l,
        Family::DeepFwFm => n * n * k,
    };
    let dnn_exact = if l == 0 { n * k } else { n * k * h + (l - 1) * h * h + h };
    FlopEstimate {
        shallow,
        dnn: l * h * h + n * k * h,
        dnn_exact,
    }
}

pub fn flops_estimate(config: &ModelConfig) -> FlopEstimate {
    let n = config.n_fields as u64;
    let k = config.embed_dim as u64;
    let shallow = match config.kind {
        ModelKind::Lr => n,
        ModelKind::Fm => n * k,
        ModelKind::FwFm | ModelKind::DeepFwFm => n * n * k,
    };
    if config.kind != ModelKind::DeepFwFm {
        return FlopEstimate {
            shallow,
            dnn: 0,
            dnn_exact: 0,
        };
    }
    let widths: Vec<u64> = config.mlp_widths.iter().map(|&h| h as u64).collect();
    let input = n * k;
    let (dnn, dnn_exact) = match widths.first() {
        None => (input, input),
        Some(&h1) => {
            let formula = widths.iter().map(|h| h * h).sum::<u64>() + input * h1;
            let mut exact = input * h1;
            for w in widths.windows(2) {
                exact += w[0] * w[1];
            }
            exact += widths.last().copied().unwrap_or(0);
            (formula, exact)
        }
    };
    FlopEstimate {
        shallow,
        dnn,
        dnn_exact,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Count {
    pub dense: u64,
    pub nonzero: u64,
}

impl Count {
    fn of(data: &[f64]) -> Self {
        Count {
            dense: data.len() as u64,
            nonzero: data.iter().filter(|&&x| x != 0.0).count() as u64,
        }
    }

    fn add(&mut self, other: Count) {
        self.dense += other.dense;
        self.nonzero += other.nonzero;
    }

    /// Fraction of zero entries.
    pub fn sparsity(&self) -> f64 {
        if self.dense == 0 {
            0.0
        } else {
            1.0 - self.nonzero as f64 / self.dense as f64
        }
    }
}

/// Per-component parameter counts. `field_matrix` covers only the
/// `n(n−1)/2` entries the model reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCounts {
    pub global_bias: Count,
    pub linear: Count,
    pub embeddings: Count,
    pub field_vectors: Count,
    pub field_matrix: Count,
    pub dnn_weights: Count,
    pub dnn_biases: Count,
}

impl ParamCounts {
    pub fn total(&self) -> Count {
        let mut t = Count::default();
        for c in [
            self.global_bias,
            self.linear,
            self.embeddings,
            self.field_vectors,
            self.field_matrix,
            self.dnn_weights,
            self.dnn_biases,
        ] {
            t.add(c);
        }
        t
    }

    /// Dense counts implied by an architecture alone.
    pub fn for_config(config: &ModelConfig) -> Self {
        let dense = |n: u64| Count { dense: n, nonzero: n };
        let m = config.n_features() as u64;
        let n = config.n_fields as u64;
        let k = config.embed_dim as u64;
        let mut c = ParamCounts {
            global_bias: dense(1),
            ..Default::default()
        };
        match config.kind {
            ModelKind::Lr => c.linear = dense(m),
            ModelKind::Fm => {
                c.linear = dense(m);
                c.embeddings = dense(m * k);
            }
            ModelKind::FwFm | ModelKind::DeepFwFm => {
                c.embeddings = dense(m * k);
                c.field_vectors = dense(n * k);
                c.field_matrix = dense(n * n.saturating_sub(1) / 2);
            }
        }
        if config.kind == ModelKind::DeepFwFm {
            let mut width = n * k;
            let (mut w, mut b) = (0, 0);
            for &h in &config.mlp_widths {
                w += width * h as u64;
                b += h as u64;
                width = h as u64;
            }
            c.dnn_weights = dense(w + width);
            c.dnn_biases = dense(b + 1);
        }
        c
    }
}

/// Exact dense and nonzero counts per component.
pub fn count_parameters(model: &Model) -> ParamCounts {
    let mut c = ParamCounts::default();
    match &model.params {
        Params::LrFm(p) => {
            c.global_bias = Count::of(std::slice::from_ref(&p.w0));
            c.linear = Count::of(&p.linear);
            c.embeddings = Count::of(&p.embeddings.data);
        }
        Params::FwFm(p) => {
            c.global_bias = Count::of(std::slice::from_ref(&p.w0));
            c.embeddings = Count::of(&p.embeddings.data);
            c.field_vectors = Count::of(&p.field_vectors.data);
            let n = p.field_matrix.rows;
            for a in 0..n {
                c.field_matrix.add(Count::of(&p.field_matrix.row(a)[a + 1..]));
            }
            for layer in p.dnn_layers() {
                c.dnn_weights.add(Count::of(&layer.weight.data));
                c.dnn_biases.add(Count::of(&layer.bias));
            }
        }
    }
    c
}
