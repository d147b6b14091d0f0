//! Mini-batch logistic-loss training: manual backpropagation for all four
//! model kinds, L2 regularization, and Adam.
//!
//! The objective for a batch `B` is
//! `(1/|B|) Σ log(1 + exp(−ỹ φ)) + (λ/2) Σ θ²`, where the penalty covers
//! every non-bias tensor and, for the per-feature tables (`linear`,
//! `embeddings`), only the rows touched by the batch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{sigmoid, DeepFwFmParams, LrFmParams, Model, ModelKind, Params, TensorRole};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Worker threads for the data-parallel gradient path. `1` is the
    /// bit-deterministic reference loop.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            l2_penalty: 3e-7,
            batch_size: 2048,
            epochs: 10,
            dropout_rate: 0.5,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            problems.push(format!("l2_penalty {} must be >= 0", self.l2_penalty));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            problems.push(format!("dropout_rate {} must lie in [0, 1)", self.dropout_rate));
        }
        if self.threads == 0 {
            problems.push("threads must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Gradients share the parameter layout.
pub type GradientSet = Params;

/// `log(1 + exp(−ỹ·logit))` with `ỹ = 2·label − 1`.
pub fn loss(logit: f64, label: u8) -> f64 {
    let z = if label == 1 { -logit } else { logit };
    softplus(z)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Row indices touched by a batch, sorted and unique.
fn touched_rows(batch: &[Sample]) -> Vec<u32> {
    let mut rows: Vec<u32> = batch.iter().flat_map(|s| s.indices.iter().copied()).collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// The regularized training objective on one batch (dropout off).
pub fn objective(batch: &[Sample], model: &Model, l2_penalty: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut data = 0.0;
    for s in batch {
        data += loss(model.logit(s)?, s.label);
    }
    data /= batch.len() as f64;
    let touched = touched_rows(batch);
    let mut penalty = 0.0;
    for t in model.params.tensors() {
        if !t.role.regularized() {
            continue;
        }
        match t.role {
            TensorRole::Linear | TensorRole::Embeddings => {
                for &r in &touched {
                    let r = r as usize;
                    penalty += t.data[r * t.cols..(r + 1) * t.cols].iter().map(|x| x * x).sum::<f64>();
                }
            }
            _ => penalty += t.data.iter().map(|x| x * x).sum::<f64>(),
        }
    }
    Ok(data + 0.5 * l2_penalty * penalty)
}

/// Per-sample scratch for the DeepFwFM backward pass.
#[derive(Default)]
struct Trace {
    input: Vec<f64>,
    /// Post-activation (after dropout) outputs per hidden layer.
    acts: Vec<Vec<f64>>,
    /// `relu'(pre) · dropout scale` per hidden unit.
    gates: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

fn lrfm_backward(sample: &Sample, p: &LrFmParams, g: &mut LrFmParams, fm: bool) -> f64 {
    let mut logit = p.w0;
    for (&i, &x) in sample.indices.iter().zip(&sample.values) {
        logit += x * p.linear[i as usize];
    }
    let k = p.embeddings.cols;
    let mut sums = vec![0.0; if fm { k } else { 0 }];
    if fm {
        let mut sq = 0.0;
        for (&i, &x) in sample.indices.iter().zip(&sample.values) {
            for (d, &e) in p.embeddings.row(i as usize).iter().enumerate() {
                sums[d] += x * e;
                sq += x * x * e * e;
            }
        }
        logit += 0.5 * (sums.iter().map(|s| s * s).sum::<f64>() - sq);
    }
    let dlogit = sigmoid(logit) - sample.label as f64;
    g.w0 += dlogit;
    for (&i, &x) in sample.indices.iter().zip(&sample.values) {
        let i = i as usize;
        g.linear[i] += dlogit * x;
        if fm {
            let e = p.embeddings.row(i);
            let ge = g.embeddings.row_mut(i);
            for d in 0..k {
                ge[d] += dlogit * x * (sums[d] - x * e[d]);
            }
        }
    }
    loss(logit, sample.label)
}

fn fwfm_backward<R: RngCore + ?Sized>(
    sample: &Sample,
    p: &DeepFwFmParams,
    g: &mut DeepFwFmParams,
    dropout: Option<(f64, &mut R)>,
    trace: &mut Trace,
) -> f64 {
    let n = sample.n_fields();
    let k = p.embeddings.cols;
    let e = &p.embeddings;
    let row = |f: usize| e.row(sample.indices[f] as usize);

    let mut logit = p.w0;
    for f in 0..n {
        logit += sample.values[f] * dot(row(f), p.field_vectors.row(f));
    }
    for f in 0..n {
        for h in f + 1..n {
            let r = p.field_matrix.get(f, h);
            logit += sample.values[f] * sample.values[h] * dot(row(f), row(h)) * r;
        }
    }

    let deep = p.output.is_some();
    if deep {
        trace.input.clear();
        for f in 0..n {
            let x = sample.values[f];
            trace.input.extend(row(f).iter().map(|v| x * v));
        }
        trace.acts.resize(p.mlp.len(), Vec::new());
        trace.gates.resize(p.mlp.len(), Vec::new());
        let mut dropout = dropout;
        for (li, layer) in p.mlp.iter().enumerate() {
            let h = layer.n_out();
            let (before, rest) = trace.acts.split_at_mut(li);
            let src: &[f64] = if li == 0 { &trace.input } else { &before[li - 1] };
            let act = &mut rest[0];
            let gate = &mut trace.gates[li];
            act.resize(h, 0.0);
            gate.resize(h, 0.0);
            layer.weight.matvec_into(src, act);
            for o in 0..h {
                let pre = act[o] + layer.bias[o];
                let (a, gt) = if pre > 0.0 { (pre, 1.0) } else { (0.0, 0.0) };
                act[o] = a;
                gate[o] = gt;
            }
            if let Some((rate, rng)) = dropout.as_mut() {
                if *rate > 0.0 {
                    let keep = 1.0 / (1.0 - *rate);
                    for o in 0..h {
                        if rng.random::<f64>() < *rate {
                            act[o] = 0.0;
                            gate[o] = 0.0;
                        } else {
                            act[o] *= keep;
                            gate[o] *= keep;
                        }
                    }
                }
            }
        }
        let out = p.output.as_ref().expect("deep");
        let last: &[f64] = trace.acts.last().map_or(&trace.input, |a| a);
        logit += dot(out.weight.row(0), last) + out.bias[0];
    }

    let dlogit = sigmoid(logit) - sample.label as f64;
    g.w0 += dlogit;

    // Shallow FwFM terms.
    for f in 0..n {
        let x = sample.values[f];
        let ef = row(f);
        let vf = p.field_vectors.row(f);
        let gv = g.field_vectors.row_mut(f);
        for d in 0..k {
            gv[d] += dlogit * x * ef[d];
        }
        let ge = g.embeddings.row_mut(sample.indices[f] as usize);
        for d in 0..k {
            ge[d] += dlogit * x * vf[d];
        }
    }
    for f in 0..n {
        for h in f + 1..n {
            let xx = sample.values[f] * sample.values[h];
            let (ef, eh) = (row(f), row(h));
            let r = p.field_matrix.get(f, h);
            let gr = g.field_matrix.get(f, h) + dlogit * xx * dot(ef, eh);
            g.field_matrix.set(f, h, gr);
            let c = dlogit * xx * r;
            if c != 0.0 {
                let gf = g.embeddings.row_mut(sample.indices[f] as usize);
                for d in 0..k {
                    gf[d] += c * eh[d];
                }
                let gh = g.embeddings.row_mut(sample.indices[h] as usize);
                for d in 0..k {
                    gh[d] += c * ef[d];
                }
            }
        }
    }

    if deep {
        let out = p.output.as_ref().expect("deep");
        let gout = g.output.as_mut().expect("deep");
        let last: &[f64] = trace.acts.last().map_or(&trace.input, |a| a);
        for (gw, &a) in gout.weight.data.iter_mut().zip(last) {
            *gw += dlogit * a;
        }
        gout.bias[0] += dlogit;

        // delta holds dJ/d(pre-activation) of the current layer.
        trace.delta.clear();
        trace.delta.extend(out.weight.row(0).iter().map(|w| dlogit * w));
        for li in (0..p.mlp.len()).rev() {
            let layer = &p.mlp[li];
            for (d, &gt) in trace.delta.iter_mut().zip(&trace.gates[li]) {
                *d *= gt;
            }
            let src: &[f64] = if li == 0 { &trace.input } else { &trace.acts[li - 1] };
            let gl = &mut g.mlp[li];
            let n_in = layer.n_in();
            for (o, &d) in trace.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gl.bias[o] += d;
                let gw = gl.weight.row_mut(o);
                for i in 0..n_in {
                    gw[i] += d * src[i];
                }
            }
            trace.delta_prev.clear();
            trace.delta_prev.resize(n_in, 0.0);
            for (o, &d) in trace.delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (dp, &w) in trace.delta_prev.iter_mut().zip(layer.weight.row(o)) {
                    *dp += d * w;
                }
            }
            std::mem::swap(&mut trace.delta, &mut trace.delta_prev);
        }
        // trace.delta is now dJ/d(input); input = x_f · e_f.
        for f in 0..n {
            let x = sample.values[f];
            let ge = g.embeddings.row_mut(sample.indices[f] as usize);
            for d in 0..k {
                ge[d] += trace.delta[f * k + d] * x;
            }
        }
    }
    loss(logit, sample.label)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum of per-sample gradients and losses into `grads`.
fn accumulate<R: RngCore + ?Sized>(
    batch: &[Sample],
    model: &Model,
    grads: &mut GradientSet,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut trace = Trace::default();
    let mut total = 0.0;
    for s in batch {
        model.check_sample(s)?;
        total += match (&model.params, &mut *grads) {
            (Params::LrFm(p), Params::LrFm(g)) => lrfm_backward(s, p, g, model.kind() == ModelKind::Fm),
            (Params::FwFm(p), Params::FwFm(g)) => {
                let dropout = (dropout_rate > 0.0).then_some((dropout_rate, &mut *rng));
                fwfm_backward(s, p, g, dropout, &mut trace)
            }
            _ => return Err(Error::Shape("gradient layout does not match parameters".into())),
        };
    }
    Ok(total)
}

/// Mean gradient of the regularized objective over `batch`, and the mean
/// data loss. Dropout masks are drawn from `rng` when `dropout_rate > 0`.
pub fn backward<R: RngCore + ?Sized>(
    batch: &[Sample],
    model: &Model,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(GradientSet, f64)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let dropout = if model.kind() == ModelKind::DeepFwFm { config.dropout_rate } else { 0.0 };
    let mut grads = model.params.zeros_like();
    let total = if config.threads <= 1 || batch.len() < 2 * config.threads {
        accumulate(batch, model, &mut grads, dropout, rng)?
    } else {
        let chunk = batch.len().div_ceil(config.threads);
        let seeds: Vec<u64> = (0..config.threads).map(|_| rng.next_u64()).collect();
        let partials: Vec<Result<(GradientSet, f64)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .chunks(chunk)
                .zip(&seeds)
                .map(|(part, &seed)| {
                    scope.spawn(move || {
                        let mut g = model.params.zeros_like();
                        let mut r = ChaCha8Rng::seed_from_u64(seed);
                        let l = accumulate(part, model, &mut g, dropout, &mut r)?;
                        Ok((g, l))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut total = 0.0;
        for part in partials {
            let (g, l) = part?;
            total += l;
            for (dst, src) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                for (a, b) in dst.data.iter_mut().zip(src.data) {
                    *a += b;
                }
            }
        }
        total
    };

    let scale = 1.0 / batch.len() as f64;
    let lambda = config.l2_penalty;
    let touched = touched_rows(batch);
    for (gt, pt) in grads.tensors_mut().into_iter().zip(model.params.tensors()) {
        for g in gt.data.iter_mut() {
            *g *= scale;
        }
        if lambda == 0.0 || !gt.role.regularized() {
            continue;
        }
        match gt.role {
            TensorRole::Linear | TensorRole::Embeddings => {
                let c = gt.cols;
                for &r in &touched {
                    let r = r as usize;
                    for j in r * c..(r + 1) * c {
                        gt.data[j] += lambda * pt.data[j];
                    }
                }
            }
            _ => {
                for (g, &p) in gt.data.iter_mut().zip(pt.data) {
                    *g += lambda * p;
                }
            }
        }
    }
    if !grads.all_finite() {
        return Err(Error::TrainingFault {
            batch: 0,
            msg: "non-finite gradient".into(),
        });
    }
    Ok((grads, total * scale))
}

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step(params: &mut Params, grads: &GradientSet, state: &mut AdamState, learning_rate: f64) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::Shape("Adam state, gradients, and parameters differ in shape".into()));
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    let step = learning_rate * c2.sqrt() / c1;
    let eps_hat = eps * c2.sqrt();
    let AdamState { m, v, .. } = state;
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut())
        .zip(v.tensors_mut())
    {
        for j in 0..p.data.len() {
            let gj = g.data[j];
            let mj = b1 * m.data[j] + (1.0 - b1) * gj;
            let vj = b2 * v.data[j] + (1.0 - b2) * gj * gj;
            m.data[j] = mj;
            v.data[j] = vj;
            if mj != 0.0 {
                p.data[j] -= step * mj / (vj.sqrt() + eps_hat);
            }
        }
    }
    Ok(())
}

/// Where the loop is when a hook runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationInfo {
    /// Zero-based epoch, counted across resumed runs.
    pub epoch: usize,
    /// One-based iteration count across all epochs.
    pub global_iteration: u64,
    pub iterations_per_epoch: u64,
}

/// Called after every optimizer step.
pub trait TrainHook {
    fn after_iteration(&mut self, info: &IterationInfo, model: &mut Model) -> Result<()>;
}

pub struct NoHook;

impl TrainHook for NoHook {
    fn after_iteration(&mut self, _: &IterationInfo, _: &mut Model) -> Result<()> {
        Ok(())
    }
}

/// Optimizer state plus progress, persisted in checkpoints for resuming.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    pub epochs_completed: usize,
}

impl TrainState {
    pub fn new(model: &Model) -> Self {
        TrainState {
            adam: AdamState::new(&model.params),
            epochs_completed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test: Option<EvalResult>,
    pub wall_seconds: f64,
}

/// Run `config.epochs` epochs of shuffled mini-batch Adam.
pub fn train_epochs(
    model: &mut Model,
    state: &mut TrainState,
    train: &[Sample],
    test: Option<&[Sample]>,
    config: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if train.is_empty() && config.epochs > 0 {
        return Err(Error::Input("training set is empty".into()));
    }
    let iters_per_epoch = train.len().div_ceil(config.batch_size) as u64;
    let mut out = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        let epoch = state.epochs_completed;
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| train[i].clone()));
            let (grads, batch_loss) = backward(&batch, model, config, &mut rng).map_err(|e| match e {
                Error::TrainingFault { msg, .. } => Error::TrainingFault {
                    batch: epoch * iters_per_epoch as usize + bi,
                    msg,
                },
                other => other,
            })?;
            loss_sum += batch_loss * batch.len() as f64;
            adam_step(&mut model.params, &grads, &mut state.adam, config.learning_rate)?;
            let info = IterationInfo {
                epoch,
                global_iteration: epoch as u64 * iters_per_epoch + bi as u64 + 1,
                iterations_per_epoch: iters_per_epoch,
            };
            hook.after_iteration(&info, model)?;
        }
        state.epochs_completed += 1;
        let test = match test {
            Some(t) if !t.is_empty() => Some(evaluate(&*model, t)?),
            _ => None,
        };
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            test,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} train_loss {:.6} test {:?} ({:.2}s)",
            m.epoch,
            m.train_loss,
            m.test,
            m.wall_seconds
        );
        out.push(m);
    }
    Ok(out)
}

/// Per-epoch CSV: `epoch,train_loss,test_logloss,test_auc,wall_seconds`.
pub fn epoch_csv_row(m: &EpochMetrics) -> String {
    let (ll, auc) = m
        .test
        .map_or((String::new(), String::new()), |t| (format!("{:.6}", t.logloss), format!("{:.6}", t.auc)));
    format!("{},{:.6},{},{},{:.3}", m.epoch, m.train_loss, ll, auc, m.wall_seconds)
}
