//! The `deeplight` command line: preprocess, train, compile, eval, bench.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{bench_latency, bench_throughput, BenchModel, CSV_HEADER};
use crate::config::RunConfig;
use crate::data::{build_dictionary, encode_sample, read_lines, split_dataset, Dataset, FeatureDictionary};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{InitConfig, Model, ModelConfig};
use crate::pruning::Pruner;
use crate::sparse::{compile_sparse, load_checkpoint, save_dense, save_sparse, Checkpoint, CheckpointMeta, Precision};
use crate::training::{epoch_csv_row, train_epochs, NoHook, TrainHook, TrainState};

pub const TRAIN_CSV_HEADER: &str = "epoch,train_loss,test_logloss,test_auc,wall_seconds,event_k,s_dnn,s_R,s_emb";
pub const EVAL_CSV_HEADER: &str = "checkpoint,n_samples,logloss,auc";

#[derive(Debug, Parser)]
#[command(name = "deeplight", version, about = "Train, prune, compile and benchmark CTR models")]
pub struct Cli {
    /// Run configuration file of key=value lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set prune.target_dnn=0.9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the feature dictionary and encode a raw TSV file.
    Preprocess(PreprocessArgs),
    /// Train a model, optionally pruning it on schedule.
    Train(TrainArgs),
    /// Compile a checkpoint into the sparse inference form.
    Compile(CompileArgs),
    /// Report LogLoss and AUC of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Time single-sample inference for one or more checkpoints.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch and per-prune-event CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Continue from a checkpoint with saved optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Model card path; defaults to `<out>.card.txt`.
    #[arg(long)]
    pub card: Option<PathBuf>,
    /// Store values as 32-bit floats (lossy).
    #[arg(long)]
    pub f32: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Checkpoints to time; the first is the speedup baseline.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also report aggregate QPS with this many threads.
    #[arg(long)]
    pub throughput_threads: Option<usize>,
}

/// Process exit code for a result: 0, 2 for validation errors, 1 otherwise.
pub fn exit_code(r: &Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) if e.is_validation() => 2,
        Err(_) => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        let text = fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_overrides(&cli.overrides)?;
    Ok(cfg)
}

fn set_path(cfg: &mut RunConfig, key: &str, p: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = p {
        cfg.set(key, &p.display().to_string()).map_err(Error::Config)?;
    }
    Ok(())
}

fn require_existing<'a>(p: &'a Option<PathBuf>, key: &str, problems: &mut Vec<String>) -> Option<&'a Path> {
    match p.as_deref() {
        None => {
            problems.push(format!("`{key}` is required (config key or flag)"));
            None
        }
        Some(path) if !path.is_file() => {
            problems.push(format!("`{key}`: {} does not exist", path.display()));
            None
        }
        Some(path) => Some(path),
    }
}

fn fail_if(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems.join("; ")))
    }
}

/// Write `bytes` next to `path` and rename into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Compile(a) => cmd_compile(a),
        Command::Eval(a) => cmd_eval(a).map(|_| ()),
        Command::Bench(a) => cmd_bench(a),
    }
}

pub fn cmd_preprocess(mut cfg: RunConfig, a: &PreprocessArgs) -> Result<()> {
    set_path(&mut cfg, "data.raw", &a.input)?;
    set_path(&mut cfg, "data.dictionary", &a.dictionary)?;
    set_path(&mut cfg, "data.train", &a.train)?;
    set_path(&mut cfg, "data.test", &a.test)?;
    let mut problems = Vec::new();
    if let Err(e) = cfg.validate() {
        problems.push(e.to_string());
    }
    let raw = require_existing(&cfg.raw, "data.raw", &mut problems).map(Path::to_path_buf);
    for (p, k) in [(&cfg.dictionary, "data.dictionary"), (&cfg.train_data, "data.train"), (&cfg.test_data, "data.test")] {
        if p.is_none() {
            problems.push(format!("`{k}` is required (config key or flag)"));
        }
    }
    fail_if(problems)?;
    let raw = raw.expect("checked above");
    let schema = cfg.schema()?;
    let lines = read_lines(&raw)?;
    if lines.is_empty() {
        return Err(Error::Input(format!("{} has no rows", raw.display())));
    }
    let dict = build_dictionary(&lines, &schema, cfg.min_freq)?;
    let mut samples = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        samples.push(encode_sample(line, i + 1, &schema, &dict, cfg.transform)?);
    }
    let (train, test) = split_dataset(samples, cfg.train_fraction, cfg.seed)?;
    let hash = dict.hash();
    let pack = |samples| -> Result<Vec<u8>> {
        let ds = Dataset {
            n_fields: dict.n_fields(),
            n_features: dict.total_features(),
            dictionary_hash: hash.clone(),
            samples,
        };
        let mut buf = Vec::new();
        ds.write_to(&mut buf)?;
        Ok(buf)
    };
    let (n_train, n_test) = (train.len(), test.len());
    let train_bytes = pack(train)?;
    let test_bytes = pack(test)?;
    write_atomic(cfg.dictionary.as_deref().unwrap(), dict.to_text().as_bytes())?;
    write_atomic(cfg.train_data.as_deref().unwrap(), &train_bytes)?;
    write_atomic(cfg.test_data.as_deref().unwrap(), &test_bytes)?;

    let mut out = std::io::stdout().lock();
    writeln!(out, "n_fields={}", dict.n_fields())?;
    writeln!(out, "n_features={}", dict.total_features())?;
    writeln!(out, "dictionary_hash={hash}")?;
    writeln!(out, "train_samples={n_train} test_samples={n_test}")?;
    for f in 0..dict.n_fields() {
        writeln!(out, "field {f}: {} features", dict.field_cardinality(f))?;
    }
    Ok(())
}

fn load_dataset(path: &Path, dict_hash: &str, what: &str) -> Result<Dataset> {
    let ds = Dataset::load(path)?;
    if ds.dictionary_hash != dict_hash {
        return Err(Error::DictionaryMismatch(format!(
            "{what} {} was encoded with dictionary {}, expected {dict_hash}",
            path.display(),
            ds.dictionary_hash
        )));
    }
    Ok(ds)
}

const PRUNE_K_KEY: &str = "prune.k";

pub fn cmd_train(mut cfg: RunConfig, a: &TrainArgs) -> Result<()> {
    set_path(&mut cfg, "data.train", &a.train)?;
    set_path(&mut cfg, "data.test", &a.test)?;
    set_path(&mut cfg, "data.dictionary", &a.dictionary)?;
    set_path(&mut cfg, "output.checkpoint", &a.out)?;
    set_path(&mut cfg, "output.metrics", &a.metrics)?;
    let mut problems = Vec::new();
    if let Err(e) = cfg.validate() {
        problems.push(e.to_string());
    }
    let train_path = require_existing(&cfg.train_data, "data.train", &mut problems).map(Path::to_path_buf);
    let dict_path = require_existing(&cfg.dictionary, "data.dictionary", &mut problems).map(Path::to_path_buf);
    if let Some(t) = &cfg.test_data {
        if !t.is_file() {
            problems.push(format!("`data.test`: {} does not exist", t.display()));
        }
    }
    if cfg.checkpoint.is_none() {
        problems.push("`output.checkpoint` is required (config key or flag)".into());
    }
    if let Some(r) = &a.resume {
        if !r.is_file() {
            problems.push(format!("--resume: {} does not exist", r.display()));
        }
    }
    fail_if(problems)?;
    let (train_path, dict_path) = (train_path.unwrap(), dict_path.unwrap());

    let schema = cfg.schema()?;
    let dict = FeatureDictionary::load(&dict_path, &schema)?;
    let hash = dict.hash();
    let train = load_dataset(&train_path, &hash, "training set")?;
    let test = match &cfg.test_data {
        Some(p) => Some(load_dataset(p, &hash, "test set")?),
        None => None,
    };

    let mut pruner = if cfg.prune.is_enabled() {
        Some(Pruner::new(cfg.prune.clone())?)
    } else {
        None
    };
    let (mut model, mut state) = match &a.resume {
        Some(path) => match load_checkpoint(path)? {
            Checkpoint::Dense {
                model,
                state: Some(state),
                meta,
            } => {
                if meta.dictionary_hash.as_deref() != Some(hash.as_str()) {
                    return Err(Error::DictionaryMismatch(format!(
                        "checkpoint {} was trained against dictionary {}, not {hash}",
                        path.display(),
                        meta.dictionary_hash.as_deref().unwrap_or("<none>")
                    )));
                }
                if let Some(p) = pruner.as_mut() {
                    if let Some((_, k)) = meta.extra.iter().find(|(k, _)| k == PRUNE_K_KEY) {
                        p.k = k.parse().map_err(|_| Error::checkpoint("metadata", "bad prune.k"))?;
                    }
                }
                (model, state)
            }
            _ => {
                return Err(Error::Input(format!(
                    "{} has no optimizer state; only dense training checkpoints can be resumed",
                    path.display()
                )))
            }
        },
        None => {
            let mc = ModelConfig::new(cfg.model_kind, dict.field_offsets(), cfg.embed_dim)
                .with_mlp(cfg.mlp_widths.clone())
                .with_dropout(cfg.train.dropout_rate);
            let model = Model::init(mc, &InitConfig::default(), &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
            let state = TrainState::new(&model);
            (model, state)
        }
    };

    let mut tc = cfg.train.clone();
    tc.epochs = cfg.train.epochs.saturating_sub(state.epochs_completed);
    let mut no_hook = NoHook;
    let hook: &mut dyn TrainHook = match pruner.as_mut() {
        Some(p) => p,
        None => &mut no_hook,
    };
    let metrics = train_epochs(
        &mut model,
        &mut state,
        &train.samples,
        test.as_ref().map(|t| t.samples.as_slice()),
        &tc,
        hook,
    )?;

    let mut meta = CheckpointMeta {
        dictionary_hash: Some(hash),
        epochs_completed: state.epochs_completed,
        extra: cfg.entries().into_iter().map(|(k, v)| (format!("config.{k}"), v)).collect(),
    };
    if let Some(p) = &pruner {
        meta.extra.push((PRUNE_K_KEY.into(), p.k.to_string()));
    }
    save_dense(cfg.checkpoint.as_deref().unwrap(), &model, Some(&state), &meta)?;

    let mut csv = String::from(TRAIN_CSV_HEADER);
    csv.push('\n');
    for m in &metrics {
        if let Some(p) = &pruner {
            for e in p.events.iter().filter(|e| e.epoch == m.epoch) {
                csv.push_str(&format!(",,,,,{}\n", e.csv_fields()));
            }
        }
        csv.push_str(&epoch_csv_row(m));
        csv.push_str(",,,,\n");
    }
    for m in &metrics {
        let test = m
            .test
            .map(|t| format!(" test_logloss={:.6} test_auc={:.6}", t.logloss, t.auc))
            .unwrap_or_default();
        println!("epoch {} train_loss={:.6}{test}", m.epoch, m.train_loss);
    }
    if let Some(p) = &cfg.metrics_csv {
        fs::write(p, csv)?;
        fs::write(sidecar(p, ".config"), cfg.to_text())?;
    }
    Ok(())
}

pub fn cmd_compile(a: &CompileArgs) -> Result<()> {
    let (sparse, meta) = match load_checkpoint(&a.checkpoint)? {
        Checkpoint::Dense { model, meta, .. } => (compile_sparse(&model), meta),
        Checkpoint::Sparse { model, meta } => (model, meta),
    };
    let precision = if a.f32 { Precision::F32 } else { Precision::F64 };
    save_sparse(&a.out, &sparse, &meta, precision)?;
    let card_path = a.card.clone().unwrap_or_else(|| sidecar(&a.out, ".card.txt"));
    let mut card = sparse.model_card();
    for (k, v) in &meta.extra {
        card.push_str(&format!("{k}={v}\n"));
    }
    fs::write(&card_path, &card)?;
    print!("{}", sparse.model_card());
    Ok(())
}

fn check_hash(meta: &CheckpointMeta, ds: &Dataset, ckpt: &Path, data: &Path) -> Result<()> {
    if let Some(h) = &meta.dictionary_hash {
        if *h != ds.dictionary_hash {
            return Err(Error::DictionaryMismatch(format!(
                "checkpoint {} expects dictionary {h} but {} was encoded with {}; re-encode the data with the \
                 training dictionary",
                ckpt.display(),
                data.display(),
                ds.dictionary_hash
            )));
        }
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalResult> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let ds = Dataset::load(&a.data)?;
    check_hash(ck.meta(), &ds, &a.checkpoint, &a.data)?;
    let r = match &ck {
        Checkpoint::Dense { model, .. } => evaluate(model, &ds.samples)?,
        Checkpoint::Sparse { model, .. } => evaluate(model, &ds.samples)?,
    };
    println!("logloss={:.6} auc={:.6} n_samples={}", r.logloss, r.auc, r.n_samples);
    if let Some(p) = &a.csv {
        let row = format!("{},{},{:?},{:?}\n", a.checkpoint.display(), r.n_samples, r.logloss, r.auc);
        fs::write(p, format!("{EVAL_CSV_HEADER}\n{row}"))?;
    }
    Ok(r)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let mut loaded = Vec::new();
    for p in &a.checkpoints {
        let ck = load_checkpoint(p)?;
        check_hash(ck.meta(), &ds, p, &a.data)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        loaded.push((name, ck));
    }
    let models: Vec<(&str, BenchModel)> = loaded
        .iter()
        .map(|(n, ck)| {
            let m = match ck {
                Checkpoint::Dense { model, .. } => BenchModel::Dense(model),
                Checkpoint::Sparse { model, .. } => BenchModel::Sparse(model),
            };
            (n.as_str(), m)
        })
        .collect();
    let reports = bench_latency(&models, &ds.samples, a.repetitions, a.warmup)?;
    let mut csv = format!("{CSV_HEADER}\n");
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    print!("{csv}");
    if let Some(t) = a.throughput_threads {
        for (name, m) in &models {
            let qps = bench_throughput(*m, &ds.samples, t, a.repetitions)?;
            println!("throughput {name} threads={t} qps={qps:.1}");
        }
    }
    if let Some(p) = &a.csv {
        fs::write(p, csv)?;
    }
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let r = run(cli);
    if let Err(e) = &r {
        eprintln!("error: {e}");
    }
    exit_code(&r)
}
