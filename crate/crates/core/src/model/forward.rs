use rand::{Rng, RngCore};

use super::params::{dot, DeepFwFmParams, LrFmParams};
use super::ModelConfig;
use crate::data::Sample;
use crate::error::{Error, Result};

/// Inverted dropout on MLP hidden activations.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

/// Reusable buffers for the dense inference path.
#[derive(Debug, Clone, Default)]
pub struct DenseScratch {
    input: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DenseScratch {
    pub fn new(config: &ModelConfig) -> Self {
        let widest = config.mlp_widths.iter().copied().max().unwrap_or(0);
        DenseScratch {
            input: vec![0.0; config.mlp_input_width()],
            a: vec![0.0; widest],
            b: vec![0.0; widest],
        }
    }
}

fn check_rows(sample: &Sample, rows: usize) -> Result<()> {
    if sample.indices.len() != sample.values.len() {
        return Err(Error::Shape("sample indices and values differ in length".into()));
    }
    for (f, &i) in sample.indices.iter().enumerate() {
        if i as usize >= rows {
            return Err(Error::IndexMismatch {
                field: f,
                index: i as usize,
                lo: 0,
                hi: rows,
            });
        }
    }
    Ok(())
}

/// `w0 + Σ x_i w_i`.
pub fn forward_lr(sample: &Sample, params: &LrFmParams) -> Result<f64> {
    check_rows(sample, params.linear.len())?;
    Ok(params.w0 + linear_term(sample, params))
}

fn linear_term(sample: &Sample, params: &LrFmParams) -> f64 {
    sample
        .indices
        .iter()
        .zip(&sample.values)
        .map(|(&i, &x)| x * params.linear[i as usize])
        .sum()
}

/// FM logit. The pair sum uses `½(‖Σ x_i e_i‖² − Σ x_i²‖e_i‖²)`.
pub fn forward_fm(sample: &Sample, params: &LrFmParams) -> Result<f64> {
    check_rows(sample, params.linear.len())?;
    let k = params.embeddings.cols;
    let mut pairs = 0.0;
    if k > 0 {
        if params.embeddings.rows != params.linear.len() {
            return Err(Error::Shape("FM embeddings and linear weights disagree on m".into()));
        }
        for d in 0..k {
            let mut s = 0.0;
            let mut sq = 0.0;
            for (&i, &x) in sample.indices.iter().zip(&sample.values) {
                let t = x * params.embeddings.get(i as usize, d);
                s += t;
                sq += t * t;
            }
            pairs += s * s - sq;
        }
        pairs *= 0.5;
    }
    Ok(params.w0 + linear_term(sample, params) + pairs)
}

/// FwFM logit: `w0 + Σ x_i⟨e_i, v_F(i)⟩ + Σ_{i<j} x_i x_j ⟨e_i, e_j⟩ R_{F(i),F(j)}`.
pub fn forward_fwfm(sample: &Sample, params: &DeepFwFmParams) -> Result<f64> {
    check_fwfm(sample, params)?;
    Ok(fwfm_unchecked(sample, params))
}

fn check_fwfm(sample: &Sample, params: &DeepFwFmParams) -> Result<()> {
    check_rows(sample, params.embeddings.rows)?;
    if sample.n_fields() != params.n_fields() {
        return Err(Error::Shape(format!(
            "sample has {} fields, parameters have {}",
            sample.n_fields(),
            params.n_fields()
        )));
    }
    Ok(())
}

fn fwfm_unchecked(sample: &Sample, params: &DeepFwFmParams) -> f64 {
    let n = sample.n_fields();
    let e = &params.embeddings;
    let mut logit = params.w0;
    for f in 0..n {
        let row = e.row(sample.indices[f] as usize);
        logit += sample.values[f] * dot(row, params.field_vectors.row(f));
    }
    for f in 0..n {
        let xf = sample.values[f];
        let ef = e.row(sample.indices[f] as usize);
        let r_row = params.field_matrix.row(f);
        for g in f + 1..n {
            let r = r_row[g];
            if r != 0.0 {
                let eg = e.row(sample.indices[g] as usize);
                logit += xf * sample.values[g] * dot(ef, eg) * r;
            }
        }
    }
    logit
}

/// Deep logit from the concatenated `x_i · e_i` vector.
pub fn forward_mlp(input: &[f64], params: &DeepFwFmParams, dropout: Option<Dropout<'_>>) -> Result<f64> {
    let widest = params.mlp.iter().map(|l| l.n_out()).max().unwrap_or(0);
    let mut a = vec![0.0; widest];
    let mut b = vec![0.0; widest];
    mlp_core(input, params, dropout, &mut a, &mut b)
}

fn mlp_core(
    input: &[f64],
    params: &DeepFwFmParams,
    mut dropout: Option<Dropout<'_>>,
    a: &mut [f64],
    b: &mut [f64],
) -> Result<f64> {
    let Some(output) = &params.output else {
        return Err(Error::Config("model has no MLP".into()));
    };
    let expected = params.mlp.first().map_or(output.n_in(), |l| l.n_in());
    if input.len() != expected {
        return Err(Error::Config(format!(
            "MLP input width {} does not match expected {expected}",
            input.len()
        )));
    }
    let mut cur: &mut [f64] = a;
    let mut next: &mut [f64] = b;
    let mut width = input.len();
    for (li, layer) in params.mlp.iter().enumerate() {
        let h = layer.n_out();
        let src: &[f64] = if li == 0 { input } else { &cur[..width] };
        let dst = &mut next[..h];
        layer.weight.matvec_into(src, dst);
        for (y, &bias) in dst.iter_mut().zip(&layer.bias) {
            *y = (*y + bias).max(0.0);
        }
        if let Some(d) = dropout.as_mut() {
            if d.rate > 0.0 {
                let keep = 1.0 / (1.0 - d.rate);
                for y in dst.iter_mut() {
                    *y = if d.rng.random::<f64>() < d.rate { 0.0 } else { *y * keep };
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        width = h;
    }
    let last: &[f64] = if params.mlp.is_empty() { input } else { &cur[..width] };
    Ok(dot(output.weight.row(0), last) + output.bias[0])
}

pub(crate) fn fill_mlp_input(sample: &Sample, params: &DeepFwFmParams, input: &mut [f64]) {
    let k = params.embeddings.cols;
    for (f, (&i, &x)) in sample.indices.iter().zip(&sample.values).enumerate() {
        let row = params.embeddings.row(i as usize);
        for (dst, &e) in input[f * k..(f + 1) * k].iter_mut().zip(row) {
            *dst = x * e;
        }
    }
}

/// `forward_fwfm + forward_mlp`; `w0` lives in the shallow term only.
pub fn forward_deepfwfm(sample: &Sample, params: &DeepFwFmParams, dropout: Option<Dropout<'_>>) -> Result<f64> {
    check_fwfm(sample, params)?;
    let mut input = vec![0.0; sample.n_fields() * params.embeddings.cols];
    fill_mlp_input(sample, params, &mut input);
    Ok(fwfm_unchecked(sample, params) + forward_mlp(&input, params, dropout)?)
}

pub(crate) fn deepfwfm_with(
    sample: &Sample,
    params: &DeepFwFmParams,
    dropout: Option<Dropout<'_>>,
    scratch: &mut DenseScratch,
) -> Result<f64> {
    check_fwfm(sample, params)?;
    let width = sample.n_fields() * params.embeddings.cols;
    let widest = params.mlp.iter().map(|l| l.n_out()).max().unwrap_or(0);
    if scratch.input.len() < width || scratch.a.len() < widest {
        scratch.input.resize(width, 0.0);
        scratch.a.resize(widest, 0.0);
        scratch.b.resize(widest, 0.0);
    }
    let input = &mut scratch.input[..width];
    fill_mlp_input(sample, params, input);
    let deep = mlp_core(input, params, dropout, &mut scratch.a, &mut scratch.b)?;
    Ok(fwfm_unchecked(sample, params) + deep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DenseLayer, Matrix, Model, ModelConfig, ModelKind, Params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(indices: &[u32], values: &[f64]) -> Sample {
        Sample {
            label: 1,
            indices: indices.to_vec(),
            values: values.to_vec(),
        }
    }

    fn lrfm(m: usize, k: usize) -> LrFmParams {
        LrFmParams {
            w0: 0.0,
            linear: vec![0.0; m],
            embeddings: Matrix::zeros(m, k),
        }
    }

    #[test]
    fn lr_cases() {
        let mut p = lrfm(4, 0);
        p.w0 = 0.3;
        assert_eq!(forward_lr(&sample(&[0, 2], &[1.0, 1.0]), &p).unwrap(), 0.3);
        p.w0 = 0.0;
        p.linear[2] = 0.5;
        assert_eq!(forward_lr(&sample(&[2], &[2.0]), &p).unwrap(), 1.0);
        p.linear[1] = -0.25;
        // 2·0.5 + 3·(−0.25)
        assert!((forward_lr(&sample(&[2, 1], &[2.0, 3.0]), &p).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            forward_lr(&sample(&[9], &[1.0]), &p),
            Err(Error::IndexMismatch { .. })
        ));
    }

    #[test]
    fn fm_degenerate_and_orthogonal() {
        let mut p = lrfm(3, 2);
        p.linear = vec![0.1, 0.2, 0.3];
        p.w0 = -0.5;
        let s = sample(&[0, 2], &[1.0, 2.0]);
        let lr = forward_lr(&s, &p).unwrap();
        assert_eq!(forward_fm(&s, &p).unwrap(), lr);
        p.embeddings = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
        let s = sample(&[0, 2], &[1.0, 1.0]);
        assert_eq!(forward_fm(&s, &p).unwrap(), forward_lr(&s, &p).unwrap());
    }

    fn fwfm(m: usize, n: usize, k: usize) -> DeepFwFmParams {
        DeepFwFmParams {
            w0: 0.0,
            embeddings: Matrix::zeros(m, k),
            field_vectors: Matrix::zeros(n, k),
            field_matrix: Matrix::zeros(n, n),
            mlp: Vec::new(),
            output: None,
        }
    }

    #[test]
    fn fwfm_gating() {
        let mut p = fwfm(3, 3, 2);
        p.w0 = 0.25;
        p.embeddings = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]);
        p.field_vectors = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let s = sample(&[0, 1, 2], &[1.0, 2.0, 0.5]);
        let linear = 1.0 * 1.0 + 2.0 * 0.5 + 0.5 * 0.6;
        assert!((forward_fwfm(&s, &p).unwrap() - (0.25 + linear)).abs() < 1e-12);

        for a in 0..3 {
            for b in a + 1..3 {
                p.field_matrix.set(a, b, 1.0);
            }
        }
        let fm = LrFmParams {
            w0: 0.25,
            linear: vec![0.0; 3],
            embeddings: p.embeddings.clone(),
        };
        let fm_pairs = forward_fm(&s, &fm).unwrap() - 0.25;
        assert!((forward_fwfm(&s, &p).unwrap() - (0.25 + linear + fm_pairs)).abs() < 1e-12);
    }

    #[test]
    fn mlp_identity_toy() {
        let mut p = fwfm(2, 2, 2);
        let mut layer = DenseLayer::zeros(4, 4);
        for i in 0..4 {
            layer.weight.set(i, i, 1.0);
        }
        p.mlp.push(layer);
        let mut out = DenseLayer::zeros(4, 1);
        out.weight.data.fill(1.0);
        p.output = Some(out);
        let y = forward_mlp(&[1.5, -2.0, 0.25, -0.1], &p, None).unwrap();
        assert!((y - 1.75).abs() < 1e-15);
        assert!(forward_mlp(&[1.0, 2.0], &p, None).is_err());

        let zero = {
            let mut q = p.clone();
            q.mlp[0] = DenseLayer::zeros(4, 4);
            q.output = Some(DenseLayer::zeros(4, 1));
            q
        };
        assert_eq!(forward_mlp(&[1.0, 2.0, 3.0, 4.0], &zero, None).unwrap(), 0.0);
    }

    #[test]
    fn dropout_off_is_deterministic_and_on_is_not_identity() {
        let config = ModelConfig::uniform(ModelKind::DeepFwFm, 3, 4, 3).with_mlp(vec![16, 16]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::init(config, &Default::default(), &mut rng).unwrap();
        let Params::FwFm(p) = &model.params else { unreachable!() };
        let s = sample(&[1, 5, 9], &[1.0, 1.0, 1.0]);
        let a = forward_deepfwfm(&s, p, None).unwrap();
        let b = forward_deepfwfm(&s, p, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(model.logit(&s).unwrap(), a);
        let mut drng = ChaCha8Rng::seed_from_u64(1);
        let c = forward_deepfwfm(
            &s,
            p,
            Some(Dropout {
                rate: 0.5,
                rng: &mut drng,
            }),
        )
        .unwrap();
        assert!(c.is_finite());
    }

    #[test]
    fn deepfwfm_component_paths() {
        let config = ModelConfig::uniform(ModelKind::DeepFwFm, 3, 4, 3).with_mlp(vec![8]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = Model::init(config, &Default::default(), &mut rng).unwrap();
        let Params::FwFm(mut p) = model.params else { unreachable!() };
        let s = sample(&[0, 6, 11], &[1.0, 0.5, 2.0]);

        let mut shallow_only = p.clone();
        shallow_only.mlp[0] = DenseLayer::zeros(9, 8);
        shallow_only.output = Some(DenseLayer::zeros(8, 1));
        assert_eq!(
            forward_deepfwfm(&s, &shallow_only, None).unwrap(),
            forward_fwfm(&s, &shallow_only).unwrap()
        );

        p.w0 = 0.0;
        p.field_matrix.data.fill(0.0);
        p.field_vectors.data.fill(0.0);
        let mut input = vec![0.0; 9];
        fill_mlp_input(&s, &p, &mut input);
        assert_eq!(
            forward_deepfwfm(&s, &p, None).unwrap(),
            forward_mlp(&input, &p, None).unwrap()
        );
    }
}
