use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deeplight::sparse::{load_checkpoint, Checkpoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deeplight"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn deeplight")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Rows with `n_num` numeric and `n_cat` categorical columns; the label
/// depends on two categorical tokens.
fn write_tsv(path: &Path, rows: usize, n_num: usize, n_cat: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..rows {
        let cats: Vec<usize> = (0..n_cat).map(|_| rng.random_range(0..6)).collect();
        let signal = cats[0].is_multiple_of(2) as i32 + (cats[1] < 2) as i32;
        let p = [0.15, 0.5, 0.85][signal as usize];
        let label = (rng.random::<f64>() < p) as u8;
        let mut cols = vec![label.to_string()];
        for _ in 0..n_num {
            cols.push(if rng.random::<f64>() < 0.1 {
                String::new()
            } else {
                rng.random_range(0..50).to_string()
            });
        }
        for (f, c) in cats.iter().enumerate() {
            cols.push(format!("f{f}t{c}"));
        }
        text.push_str(&cols.join("\t"));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

impl Fixture {
    fn new(n_num: usize, n_cat: usize, extra: &str) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        write_tsv(&dir.join("raw.tsv"), 800, n_num, n_cat, 7);
        let cfg = format!(
            "data.numeric_fields={n_num}\ndata.categorical_fields={n_cat}\ndata.min_freq=2\n\
             data.dictionary=dict.txt\ndata.train=train.bin\ndata.test=test.bin\n\
             model.embed_dim=4\nmodel.mlp_widths=16,8\ntrain.batch_size=32\ntrain.learning_rate=0.01\n\
             train.epochs=2\nseed=3\n{extra}"
        );
        fs::write(dir.join("run.cfg"), cfg).unwrap();
        ok(&dir, &["preprocess", "--config", "run.cfg", "--input", "raw.tsv"]);
        Fixture { _tmp: tmp, dir }
    }
}

#[test]
fn preprocess_is_deterministic_and_reports_sizes() {
    let fx = Fixture::new(2, 3, "");
    let first = fs::read(fx.dir.join("dict.txt")).unwrap();
    let train = fs::read(fx.dir.join("train.bin")).unwrap();
    let out = ok(&fx.dir, &["preprocess", "--config", "run.cfg", "--input", "raw.tsv"]);
    assert_eq!(fs::read(fx.dir.join("dict.txt")).unwrap(), first);
    assert_eq!(fs::read(fx.dir.join("train.bin")).unwrap(), train);
    assert!(out.contains("n_fields=5"), "{out}");
    // 2 numeric indices plus 3 fields × (6 tokens + default).
    assert!(out.contains("n_features=23"), "{out}");
    assert!(out.contains("train_samples=720 test_samples=80"), "{out}");
}

#[test]
fn empty_input_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("empty.tsv"), "").unwrap();
    let out = run(
        tmp.path(),
        &["preprocess", "--input", "empty.tsv", "--dictionary", "d.txt", "--train", "a.bin", "--test", "b.bin"],
    );
    assert_eq!(out.status.code(), Some(2));
    for f in ["d.txt", "a.bin", "b.bin"] {
        assert!(!tmp.path().join(f).exists());
    }
}

#[test]
fn malformed_row_is_reported_with_its_number() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.tsv"), "1\t3\ta\tb\tc\n0\t1\ta\tb\n").unwrap();
    let out = run(
        tmp.path(),
        &[
            "preprocess", "--set", "data.numeric_fields=1", "--set", "data.categorical_fields=3", "--set",
            "data.min_freq=1", "--input", "bad.tsv", "--dictionary", "d.txt", "--train", "a.bin", "--test", "b.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn lr_training_reduces_loss_and_writes_csv() {
    let fx = Fixture::new(2, 3, "model.kind=lr\ntrain.epochs=3\n");
    ok(&fx.dir, &["train", "--config", "run.cfg", "--out", "lr.ckpt", "--metrics", "lr.csv"]);
    let csv = fs::read_to_string(fx.dir.join("lr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), deeplight::cli::TRAIN_CSV_HEADER);
    let losses: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 3);
    assert!(losses[2] < losses[0], "{losses:?}");
    let sidecar = fs::read_to_string(fx.dir.join("lr.csv.config")).unwrap();
    assert!(sidecar.contains("model.kind=lr"));
    let ck = load_checkpoint(&fx.dir.join("lr.ckpt")).unwrap();
    assert!(ck.meta().extra.iter().any(|(k, v)| k == "config.train.epochs" && v == "3"));
}

#[test]
fn validation_errors_exit_with_code_two() {
    let fx = Fixture::new(2, 3, "");
    let out = run(
        &fx.dir,
        &["train", "--config", "run.cfg", "--set", "model.dropout=1.0", "--set", "train.batch_size=0", "--out", "x"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dropout") && err.contains("batch_size"), "{err}");
    assert!(!fx.dir.join("x").exists());
    let out = run(&fx.dir, &["train", "--config", "run.cfg", "--set", "nope=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resume_matches_uninterrupted_training() {
    let fx = Fixture::new(2, 3, "model.kind=deepfwfm\nmodel.dropout=0.2\n");
    ok(&fx.dir, &["train", "--config", "run.cfg", "--out", "full.ckpt"]);
    ok(&fx.dir, &["train", "--config", "run.cfg", "--set", "train.epochs=1", "--out", "half.ckpt"]);
    ok(&fx.dir, &["train", "--config", "run.cfg", "--resume", "half.ckpt", "--out", "resumed.ckpt"]);
    let load = |n: &str| match load_checkpoint(&fx.dir.join(n)).unwrap() {
        Checkpoint::Dense {
            model,
            state: Some(state),
            ..
        } => (model, state),
        _ => panic!("expected dense checkpoint with state"),
    };
    let (m_full, s_full) = load("full.ckpt");
    let (m_res, s_res) = load("resumed.ckpt");
    assert_eq!(s_res.epochs_completed, 2);
    assert_eq!(m_full, m_res);
    assert_eq!(s_full, s_res);
}

#[test]
fn prune_compile_eval_bench_pipeline() {
    let extra = "model.kind=deepfwfm\ntrain.epochs=3\nprune.warmup_epochs=1\nprune.every=1\nprune.frequency=1\n\
                 prune.damping=0.5\nprune.target_dnn=0.99\nprune.target_r=0.95\nprune.target_emb=0.4\n";
    let fx = Fixture::new(2, 18, extra);
    ok(&fx.dir, &["train", "--config", "run.cfg", "--out", "p.ckpt", "--metrics", "p.csv"]);
    let csv = fs::read_to_string(fx.dir.join("p.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with(",,,,,")), "no prune events");

    let card = ok(&fx.dir, &["compile", "--checkpoint", "p.ckpt", "--out", "p.sparse"]);
    let sparsity = |name: &str| -> f64 {
        let line = card.lines().find(|l| l.starts_with(&format!("{name}\t"))).unwrap();
        line.split('\t').nth(3).unwrap().parse().unwrap()
    };
    assert!((sparsity("dnn") - 0.99).abs() < 0.005, "{card}");
    assert!((sparsity("R") - 0.95).abs() < 0.005, "{card}");
    assert!((sparsity("emb") - 0.40).abs() < 0.005, "{card}");
    assert!(fx.dir.join("p.sparse.card.txt").exists());
    let first = fs::read(fx.dir.join("p.sparse")).unwrap();
    ok(&fx.dir, &["compile", "--checkpoint", "p.ckpt", "--out", "p.sparse"]);
    assert_eq!(fs::read(fx.dir.join("p.sparse")).unwrap(), first);

    let metric = |out: &str, key: &str| -> f64 {
        let tok = out.split_whitespace().find(|t| t.starts_with(key)).unwrap();
        tok[key.len()..].parse().unwrap()
    };
    let dense = ok(&fx.dir, &["eval", "--checkpoint", "p.ckpt", "--data", "test.bin", "--csv", "e.csv"]);
    let sparse = ok(&fx.dir, &["eval", "--checkpoint", "p.sparse", "--data", "test.bin"]);
    for key in ["logloss=", "auc="] {
        let (a, b) = (metric(&dense, key), metric(&sparse, key));
        assert!(a.is_finite() && (a - b).abs() < 1e-6, "{key} {a} vs {b}");
    }
    assert!(fs::read_to_string(fx.dir.join("e.csv")).unwrap().starts_with(deeplight::cli::EVAL_CSV_HEADER));

    let out = run(
        &fx.dir,
        &["bench", "--checkpoint", "p.ckpt", "--checkpoint", "p.sparse", "--data", "test.bin", "--repetitions", "20"],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], deeplight::bench::CSV_HEADER);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].split(',').nth(7).unwrap(), "1.0000");
    assert!(String::from_utf8_lossy(&out.stderr).contains("not reportable"));
}

#[test]
fn eval_refuses_a_foreign_dictionary() {
    let fx = Fixture::new(2, 3, "model.kind=fwfm\ntrain.epochs=1\n");
    ok(&fx.dir, &["train", "--config", "run.cfg", "--out", "m.ckpt"]);
    let other = tempfile::tempdir().unwrap();
    write_tsv(&other.path().join("raw.tsv"), 300, 2, 3, 99);
    let cfg = fs::read_to_string(fx.dir.join("run.cfg")).unwrap().replace("data.min_freq=2", "data.min_freq=40");
    fs::write(other.path().join("run.cfg"), cfg).unwrap();
    ok(other.path(), &["preprocess", "--config", "run.cfg", "--input", "raw.tsv"]);
    let out = run(
        &fx.dir,
        &["eval", "--checkpoint", "m.ckpt", "--data", &other.path().join("test.bin").display().to_string()],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dictionary"));
}
