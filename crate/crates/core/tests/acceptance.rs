//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use deeplight::bench::{bench_latency, BenchModel};
use deeplight::data::Sample;
use deeplight::metrics::{eval_auc, eval_logloss, evaluate};
use deeplight::model::{
    flops_estimate, forward_fm, forward_fwfm, family_estimate, Component, Family, InitConfig, Matrix, Model,
    ModelConfig, ModelKind, Params,
};
use deeplight::pruning::{prune_component, sparse_rate_at, EmbeddingMode, PruneSchedule, Pruner};
use deeplight::sparse::{
    compile_sparse, encode_dense, encode_sparse, load_checkpoint, save_dense, save_sparse, sparse_forward_with,
    Checkpoint, CheckpointMeta, Precision, SparseScratch,
};
use deeplight::training::{backward, objective, train_epochs, NoHook, TrainConfig, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_sample(cfg: &ModelConfig, rng: &mut ChaCha8Rng, values: (f64, f64)) -> Sample {
    let mut indices = Vec::with_capacity(cfg.n_fields);
    let mut vals = Vec::with_capacity(cfg.n_fields);
    for f in 0..cfg.n_fields {
        let r = cfg.field_range(f);
        indices.push(rng.random_range(r.start..r.end) as u32);
        vals.push(if values.0 == values.1 { values.0 } else { rng.random_range(values.0..values.1) });
    }
    Sample {
        label: rng.random_range(0..2),
        indices,
        values: vals,
    }
}

fn randomize(model: &mut Model, rng: &mut ChaCha8Rng, scale: f64) {
    for t in model.params.tensors_mut() {
        for x in t.data.iter_mut() {
            *x = rng.random_range(-scale..scale);
        }
    }
}

// ---------------------------------------------------------------------------

/// Hidden-layer pre-activations of a DeepFwFM sample, to keep finite
/// differences away from ReLU kinks.
fn min_preactivation(model: &Model, s: &Sample) -> f64 {
    let Params::FwFm(p) = &model.params else { return f64::INFINITY };
    let mut x: Vec<f64> = Vec::new();
    for (f, &i) in s.indices.iter().enumerate() {
        x.extend(p.embeddings.row(i as usize).iter().map(|e| e * s.values[f]));
    }
    let mut worst = f64::INFINITY;
    for layer in &p.mlp {
        let mut z = vec![0.0; layer.n_out()];
        layer.weight.matvec_into(&x, &mut z);
        for (zi, b) in z.iter_mut().zip(&layer.bias) {
            *zi += b;
            worst = worst.min(zi.abs());
        }
        x = z.into_iter().map(|v| v.max(0.0)).collect();
    }
    worst
}

fn gradient_oracle() -> Outcome {
    let lambda = 1e-3;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for kind in ModelKind::ALL {
        for _ in 0..20 {
            let cfg = ModelConfig::uniform(kind, 5, 3, 4).with_mlp(vec![8, 8]).with_dropout(0.0);
            let mut model = Model::zeros(cfg.clone()).unwrap();
            randomize(&mut model, &mut rng, 0.6);
            let batch: Vec<Sample> = loop {
                let b: Vec<Sample> = (0..4).map(|_| random_sample(&cfg, &mut rng, (0.5, 1.5))).collect();
                if b.iter().all(|s| min_preactivation(&model, s) > 1e-3) {
                    break b;
                }
            };
            let tc = TrainConfig {
                l2_penalty: lambda,
                dropout_rate: 0.0,
                ..Default::default()
            };
            let (grads, _) = backward(&batch, &model, &tc, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.data.to_vec()).collect();
            let mut probe = model.clone();
            let mut j = 0;
            for ti in 0..probe.params.tensors().len() {
                for e in 0..probe.params.tensors()[ti].data.len() {
                    let orig = probe.params.tensors()[ti].data[e];
                    probe.params.tensors_mut()[ti].data[e] = orig + h;
                    let up = objective(&batch, &probe, lambda).unwrap();
                    probe.params.tensors_mut()[ti].data[e] = orig - h;
                    let down = objective(&batch, &probe, lambda).unwrap();
                    probe.params.tensors_mut()[ti].data[e] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    // Relative error; gradients below 1e-6 are compared on that scale.
                    let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                    j += 1;
                    checked += 1;
                }
            }
        }
    }
    outcome(
        worst < 1e-4,
        format!("80 configs, {checked} parameters, max relative error {worst:.2e} (limit 1e-4)"),
    )
}

// ---------------------------------------------------------------------------

fn shallow_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=8);
        let per_field = rng.random_range(1..=4);
        for kind in [ModelKind::Fm, ModelKind::FwFm] {
            let cfg = ModelConfig::uniform(kind, n, per_field, k);
            let mut model = Model::zeros(cfg.clone()).unwrap();
            randomize(&mut model, &mut rng, 1.0);
            let s = random_sample(&cfg, &mut rng, (-2.0, 2.0));
            let (fast, brute) = match &model.params {
                Params::LrFm(p) => {
                    let mut b = p.w0;
                    for i in 0..n {
                        b += s.values[i] * p.linear[s.indices[i] as usize];
                    }
                    for i in 0..n {
                        for j in i + 1..n {
                            let ei = p.embeddings.row(s.indices[i] as usize);
                            let ej = p.embeddings.row(s.indices[j] as usize);
                            let d: f64 = ei.iter().zip(ej).map(|(a, b)| a * b).sum();
                            b += s.values[i] * s.values[j] * d;
                        }
                    }
                    (forward_fm(&s, p).unwrap(), b)
                }
                Params::FwFm(p) => {
                    let mut b = p.w0;
                    for i in 0..n {
                        let e = p.embeddings.row(s.indices[i] as usize);
                        let v = p.field_vectors.row(i);
                        b += s.values[i] * e.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
                    }
                    for i in 0..n {
                        for j in 0..n {
                            if i < j {
                                let ei = p.embeddings.row(s.indices[i] as usize);
                                let ej = p.embeddings.row(s.indices[j] as usize);
                                let d: f64 = ei.iter().zip(ej).map(|(a, b)| a * b).sum();
                                b += s.values[i] * s.values[j] * d * p.field_matrix.get(i, j);
                            }
                        }
                    }
                    (forward_fwfm(&s, p).unwrap(), b)
                }
            };
            worst = worst.max((fast - brute).abs() / brute.abs());
        }
    }
    outcome(worst < 1e-10, format!("2000 forwards, max relative error {worst:.2e} (limit 1e-10)"))
}

// ---------------------------------------------------------------------------

fn sparse_dense_equivalence() -> Outcome {
    let cfg = ModelConfig::uniform(ModelKind::DeepFwFm, 12, 25, 8).with_mlp(vec![64, 32]);
    let base = Model::init(cfg.clone(), &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(22)).unwrap();
    let mut base = base;
    // Larger embeddings than the training init so every term matters.
    randomize(&mut base, &mut ChaCha8Rng::seed_from_u64(23), 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let samples: Vec<Sample> = (0..1000).map(|_| random_sample(&cfg, &mut rng, (0.0, 3.0))).collect();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for rate in [0.0, 0.5, 0.9, 0.99] {
        for c in Component::ALL {
            let mut m = base.clone();
            prune_component(&mut m, c, rate, EmbeddingMode::Global);
            let sm = compile_sparse(&m);
            let mut scratch = SparseScratch::new(&sm);
            for s in &samples {
                let d = m.logit(s).unwrap();
                let p = sparse_forward_with(s, &sm, &mut scratch).unwrap();
                worst = worst.max((d - p).abs());
            }
            cases += 1;
        }
    }
    outcome(
        worst < 1e-6,
        format!("{cases} (rate, component) cases x 1000 samples, max |dlogit| {worst:.2e} (limit 1e-6)"),
    )
}

// ---------------------------------------------------------------------------

fn schedule_contract() -> Outcome {
    let (damping, frequency, target): (f64, f64, f64) = (0.99, 100.0, 0.99);
    // Post-warm-up iterations after which s(k) is within 0.5 points of 99%,
    // and a horizon well past it (within 0.1 points) so the run has settled.
    let needed = (frequency * (0.005 / target).ln() / damping.ln()).ceil() as u64;
    let horizon = (frequency * (0.001 / target).ln() / damping.ln()).ceil() as u64;
    let cfg = ModelConfig::uniform(ModelKind::DeepFwFm, 4, 5, 2).with_mlp(vec![16, 16]).with_dropout(0.0);
    let mut model = Model::init(cfg.clone(), &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(25)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let data: Vec<Sample> = (0..80).map(|_| random_sample(&cfg, &mut rng, (1.0, 1.0))).collect();
    let batch_size = 8;
    let iters_per_epoch = data.len().div_ceil(batch_size) as u64;
    let warmup = 2;
    let epochs = warmup + horizon.div_ceil(iters_per_epoch) as usize;
    let schedule = PruneSchedule {
        target_dnn: target,
        damping,
        frequency,
        prune_every: 10,
        warmup_epochs: warmup,
        ..Default::default()
    };
    let mut pruner = Pruner::new(schedule).unwrap();
    let mut state = TrainState::new(&model);
    let tc = TrainConfig {
        learning_rate: 0.01,
        batch_size,
        epochs,
        dropout_rate: 0.0,
        seed: 27,
        ..Default::default()
    };
    train_epochs(&mut model, &mut state, &data, None, &tc, &mut pruner).unwrap();
    let n_weights = pruner.events[0].achieved.dnn.dense;
    let mut max_gap: f64 = 0.0;
    for e in &pruner.events {
        let s = sparse_rate_at(e.k, target, damping, frequency);
        max_gap = max_gap.max((e.achieved.dnn.sparsity() - s).abs());
    }
    let last = pruner.events.last().unwrap();
    let final_s = last.achieved.dnn.sparsity();
    let first_epoch = pruner.events[0].epoch;
    let pass = max_gap <= 0.005 && (target - final_s) <= 0.005 && first_epoch == warmup;
    outcome(
        pass,
        format!(
            "{} events over k<={} ({n_weights} DNN weights), max |achieved - s(k)| {max_gap:.4}, final sparsity \
             {final_s:.4} (needs k>={needed}), first event in epoch {first_epoch}",
            pruner.events.len(),
            last.k
        ),
    )
}

// ---------------------------------------------------------------------------

fn flop_accounting() -> Outcome {
    let (l, h, n, k, hc) = (3, 400, 39, 10, 100);
    let deepfm = family_estimate(Family::DeepFm, l, h, n, k, hc).total();
    let xdeep = family_estimate(Family::XDeepFm, l, h, n, k, hc).total();
    let deepfwfm = family_estimate(Family::DeepFwFm, l, h, n, k, hc).total();
    let cfg = ModelConfig::uniform(ModelKind::DeepFwFm, 39, 1, 10).with_mlp(vec![400, 400, 400]);
    let from_config = flops_estimate(&cfg).total();
    let m2 = |x: u64| (x as f64 / 1e4).round() / 100.0;
    let pass = m2(deepfm) == 0.64 && (xdeep as f64 / 1e6).round() == 12.0 && m2(deepfwfm) == 0.65 && from_config == deepfwfm;
    outcome(
        pass,
        format!("DeepFM {deepfm} (0.64M), xDeepFM {xdeep} (12M), DeepFwFM {deepfwfm} (0.65M), config path {from_config}"),
    )
}

// ---------------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let mut mismatches = 0;
    let mut trials = 0;
    while trials < 2000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(1..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        let mut doubled = 0u64;
        let mut pairs = 0u64;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1;
                    doubled += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
                }
            }
        }
        if eval_auc(&scores, &labels).unwrap() != doubled as f64 / (2 * pairs) as f64 {
            mismatches += 1;
        }
        trials += 1;
    }
    let hand = [
        (vec![0.5, 0.5], vec![1u8, 0], std::f64::consts::LN_2),
        (vec![0.9, 0.2], vec![1, 0], 0.164252033486018),
        (vec![0.3, 0.6, 0.99], vec![0, 1, 1], (-(0.7f64).ln() - (0.6f64).ln() - (0.99f64).ln()) / 3.0),
        (vec![1.0, 0.0], vec![1, 0], -(1.0f64 - 1e-7).ln()),
    ];
    let mut ll_err: f64 = 0.0;
    for (p, y, expect) in &hand {
        ll_err = ll_err.max((eval_logloss(p, y).unwrap() - expect).abs());
    }
    outcome(
        mismatches == 0 && ll_err < 1e-9,
        format!("AUC exact on {trials}/{trials} random instances ({mismatches} mismatches); LogLoss max error {ll_err:.1e}"),
    )
}

// ---------------------------------------------------------------------------

/// AUC gap FwFM - LR that the planted-model run must exceed. Pinned at about
/// half the gap of a pilot run with seed 1 (LR 0.6033, FwFM 0.9131); the
/// acceptance run uses seed 2.
const PLANTED_MARGIN: f64 = 0.15;

fn planted_run(seed: u64) -> (f64, f64, f64) {
    let (n, per_field, k) = (10, 20, 5);
    let truth_cfg = ModelConfig::uniform(ModelKind::FwFm, n, per_field, k);
    let mut truth = Model::zeros(truth_cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = Normal::new(0.0, 0.6).unwrap();
    if let Params::FwFm(p) = &mut truth.params {
        p.w0 = -0.2;
        p.embeddings.data.iter_mut().for_each(|x| *x = emb.sample(&mut rng));
        p.field_vectors.data.iter_mut().for_each(|x| *x = rng.random_range(-0.1..0.1));
        let mut r = Matrix::zeros(n, n);
        for a in 0..n {
            for b in a + 1..n {
                r.set(a, b, rng.random_range(-1.0..1.0));
            }
        }
        p.field_matrix = r;
    }
    let samples: Vec<Sample> = (0..200_000)
        .map(|_| {
            let mut s = random_sample(&truth_cfg, &mut rng, (1.0, 1.0));
            let p = deeplight::model::sigmoid(truth.logit(&s).unwrap());
            s.label = (rng.random::<f64>() < p) as u8;
            s
        })
        .collect();
    let (train, test) = deeplight::data::split_dataset(samples, 0.9, seed).unwrap();
    let oracle = evaluate(&truth, &test).unwrap().auc;
    let tc = TrainConfig {
        learning_rate: 0.01,
        l2_penalty: 1e-6,
        batch_size: 256,
        epochs: 4,
        dropout_rate: 0.0,
        seed,
        ..Default::default()
    };
    let fit = |kind| {
        let cfg = ModelConfig::uniform(kind, n, per_field, k);
        let mut m = Model::init(cfg, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed + 100)).unwrap();
        let mut st = TrainState::new(&m);
        train_epochs(&mut m, &mut st, &train, None, &tc, &mut NoHook).unwrap();
        evaluate(&m, &test).unwrap().auc
    };
    let lr = fit(ModelKind::Lr);
    let fwfm = fit(ModelKind::FwFm);
    (lr, fwfm, oracle)
}

fn planted_recovery() -> Outcome {
    let seed = std::env::var("DEEPLIGHT_PLANTED_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(2);
    let (lr, fwfm, oracle) = planted_run(seed);
    let pass = fwfm - lr > PLANTED_MARGIN && fwfm <= oracle + 0.005;
    outcome(
        pass,
        format!(
            "seed {seed}: LR AUC {lr:.4}, FwFM AUC {fwfm:.4}, generator AUC {oracle:.4}; gap {:.4} (margin {PLANTED_MARGIN})",
            fwfm - lr
        ),
    )
}

// ---------------------------------------------------------------------------

fn latency_ratio() -> Outcome {
    let cfg = ModelConfig::uniform(ModelKind::DeepFwFm, 39, 10, 10).with_mlp(vec![400, 400, 400]);
    let dense = Model::init(cfg.clone(), &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(30)).unwrap();
    let mut pruned = dense.clone();
    prune_component(&mut pruned, Component::Dnn, 0.99, EmbeddingMode::Global);
    prune_component(&mut pruned, Component::FieldMatrix, 0.95, EmbeddingMode::Global);
    let sparse = compile_sparse(&pruned);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let samples: Vec<Sample> = (0..500).map(|_| random_sample(&cfg, &mut rng, (0.0, 2.0))).collect();
    let reports = bench_latency(
        &[("dense", BenchModel::Dense(&dense)), ("sparse", BenchModel::Sparse(&sparse))],
        &samples,
        2000,
        200,
    )
    .unwrap();
    let speedup = reports[1].speedup;
    outcome(
        speedup > 3.0,
        format!(
            "median dense {:.4} ms, sparse {:.4} ms over 2000 timed samples each; speedup {speedup:.1}X (limit 3X)",
            reports[0].stats.median_ms, reports[1].stats.median_ms
        ),
    )
}

// ---------------------------------------------------------------------------

fn memory_reduction() -> Outcome {
    let cfg = ModelConfig::uniform(ModelKind::FwFm, 10, 10_000, 10);
    let mut model = Model::init(cfg, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(32)).unwrap();
    let meta = CheckpointMeta::default();
    let dense = encode_dense(&model, None, &meta).unwrap().len();
    prune_component(&mut model, Component::Embeddings, 0.8, EmbeddingMode::Global);
    let sparse = encode_sparse(&compile_sparse(&model), &meta, Precision::F64).unwrap().len();
    let ratio = sparse as f64 / dense as f64;
    outcome(
        ratio < 0.30,
        format!("dense {dense} bytes, 80%-embedding-pruned sparse {sparse} bytes, ratio {ratio:.4} (limit 0.30)"),
    )
}

// ---------------------------------------------------------------------------

fn bits(p: &Params) -> Vec<u64> {
    p.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
}

fn checkpoint_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::uniform(kind, 6, 8, 4).with_mlp(vec![12, 6]).with_dropout(0.3);
        let mut model = Model::init(cfg.clone(), &InitConfig::default(), &mut rng).unwrap();
        let data: Vec<Sample> = (0..64).map(|_| random_sample(&cfg, &mut rng, (0.0, 2.0))).collect();
        let mut state = TrainState::new(&model);
        let tc = TrainConfig {
            batch_size: 16,
            epochs: 2,
            dropout_rate: 0.3,
            ..Default::default()
        };
        train_epochs(&mut model, &mut state, &data, None, &tc, &mut NoHook).unwrap();
        let meta = CheckpointMeta {
            dictionary_hash: Some("feedbeef".into()),
            epochs_completed: state.epochs_completed,
            extra: vec![("note".into(), "round trip".into())],
        };
        let path = dir.path().join(format!("{kind}.ckpt"));
        save_dense(&path, &model, Some(&state), &meta).unwrap();
        match load_checkpoint(&path).unwrap() {
            Checkpoint::Dense {
                model: m2,
                state: Some(s2),
                meta: meta2,
            } => {
                let same = bits(&m2.params) == bits(&model.params)
                    && bits(&s2.adam.m) == bits(&state.adam.m)
                    && bits(&s2.adam.v) == bits(&state.adam.v)
                    && s2.adam.t == state.adam.t
                    && s2.adam.beta1.to_bits() == state.adam.beta1.to_bits()
                    && s2.adam.beta2.to_bits() == state.adam.beta2.to_bits()
                    && s2.adam.eps.to_bits() == state.adam.eps.to_bits()
                    && s2.epochs_completed == state.epochs_completed
                    && m2.config == model.config
                    && meta2 == meta;
                if !same {
                    failures.push(format!("dense {kind}"));
                }
            }
            _ => failures.push(format!("dense {kind}: state missing")),
        }

        let mut pruned = model.clone();
        for c in Component::ALL {
            prune_component(&mut pruned, c, 0.6, EmbeddingMode::Global);
        }
        let sm = compile_sparse(&pruned);
        let spath = dir.path().join(format!("{kind}.sparse"));
        save_sparse(&spath, &sm, &meta, Precision::F64).unwrap();
        let original = std::fs::read(&spath).unwrap();
        match load_checkpoint(&spath).unwrap() {
            Checkpoint::Sparse { model: s2, meta: meta2 } => {
                let again = encode_sparse(&s2, &meta2, Precision::F64).unwrap();
                if s2 != sm || again != original || meta2 != meta {
                    failures.push(format!("sparse {kind}"));
                }
            }
            _ => failures.push(format!("sparse {kind}: wrong kind")),
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "dense (with Adam state) and sparse checkpoints bit-identical for all four model kinds".to_string()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("gradient_oracle", gradient_oracle),
        ("shallow_model_oracle", shallow_oracle),
        ("sparse_dense_equivalence", sparse_dense_equivalence),
        ("schedule_contract", schedule_contract),
        ("flop_accounting", flop_accounting),
        ("metric_oracles", metric_oracles),
        ("planted_model_recovery", planted_recovery),
        ("latency_ratio", latency_ratio),
        ("memory_reduction", memory_reduction),
        ("checkpoint_round_trip", checkpoint_round_trip),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        println!(
            "[{}] {name}: {} ({secs:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
