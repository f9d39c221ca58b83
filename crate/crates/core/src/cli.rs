//! `proto-ltn` command line: `train`, `eval`, `gradcheck`, `synth`, `export-prototypes`.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad usage or input.
//!
//! Train settings resolve in this order, later winning: preset, `--config`
//! JSON file, flags. The preset defaults to `synthetic` for synthetic data
//! manifests and `awa2` otherwise. The seed falls back to `PROTO_LTN_SEED`
//! when neither the file nor a flag sets it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::datasets::{generate_synthetic, DataSource, SplitDataset, SynthConfig};
use crate::diffcore::OpKind;
use crate::error::Error;
use crate::gradsuite::{run_suite, SuiteConfig};
use crate::grounding::EmbeddingFunction;
use crate::metrics::episode_accuracy;
use crate::trainer::{sample_episode, train, EpisodeConfig, LabeledSet, Mode, Model, TrainConfig};

pub const SEED_ENV: &str = "PROTO_LTN_SEED";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "training_log.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const LABEL_MAP_FILE: &str = "label_map.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PER_CLASS_FILE: &str = "per_class.csv";
pub const PROTOTYPES_FILE: &str = "prototypes.csv";

#[derive(Parser, Debug)]
#[command(name = "proto-ltn", version, about = "Prototype-based fuzzy-logic training for few-shot and zero-shot learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[allow(clippy::large_enum_variant)] // parsed once per process
#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write checkpoint, log, resolved config and label map.
    Train(TrainArgs),
    /// Evaluate a checkpoint (GZSL T1/U/S/H, or episode accuracy for FSL).
    Eval(EvalArgs),
    /// Finite-difference check of every op and of random episode losses.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic dataset as CSV files.
    Synth(SynthArgs),
    /// Write the class prototypes of a checkpoint to prototypes.csv.
    ExportPrototypes(ExportArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory or JSON data manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON file with config keys (and optionally `data`, `out`, `preset`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// awa2, cub, apy, sun or synthetic.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = ["fsl", "gzsl"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub p_agg: Option<f64>,
    #[arg(long)]
    pub p_forall: Option<f64>,
    #[arg(long)]
    pub w_neg: Option<f64>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long, value_parser = ["distance", "relation"])]
    pub predicate: Option<String>,
    #[arg(long)]
    pub episodes_per_epoch: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub n_way: Option<usize>,
    #[arg(long)]
    pub k_shot: Option<usize>,
    #[arg(long)]
    pub n_query: Option<usize>,
    /// Evaluate on a held-out slice after every epoch.
    #[arg(long)]
    pub validate: bool,
    #[arg(long)]
    pub normalize_attributes: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for metrics.json; defaults to the checkpoint's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// FSL models: number of test episodes.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 5)]
    pub n_way: usize,
    #[arg(long, default_value_t = 5)]
    pub k_shot: usize,
    #[arg(long, default_value_t = 15)]
    pub n_query: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corrupt one backward rule (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: Option<OpKind>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file holding a synthetic recipe.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_seen: Option<usize>,
    #[arg(long)]
    pub num_unseen: Option<usize>,
    #[arg(long)]
    pub attr_dim: Option<usize>,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Command failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1.
    Check(String),
    /// Exit 2.
    Input(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Check(_) => 1,
            Failure::Input(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn env_seed() -> std::result::Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| input(format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn read_json(path: &Path) -> std::result::Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}:{}: {e}", path.display(), e.line())))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

/// Train config, data path and output directory after merging every source.
#[derive(Debug)]
pub struct ResolvedTrain {
    pub config: TrainConfig,
    pub data: PathBuf,
    pub out: PathBuf,
}

pub fn resolve_train(args: &TrainArgs) -> std::result::Result<ResolvedTrain, Failure> {
    let mut file = match &args.config {
        Some(p) => match read_json(p)? {
            Value::Object(map) => map,
            _ => return Err(input(format!("{}: config must be a JSON object", p.display()))),
        },
        None => Map::new(),
    };
    let base = args.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
    let take_path = |file: &mut Map<String, Value>, key: &str| -> std::result::Result<Option<PathBuf>, Failure> {
        match file.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => {
                let p = PathBuf::from(s);
                Ok(Some(if p.is_relative() { base.join(p) } else { p }))
            }
            Some(other) => Err(input(format!("config key '{key}' must be a string, got {other}"))),
        }
    };
    let file_data = take_path(&mut file, "data")?;
    let file_out = take_path(&mut file, "out")?;
    let file_preset = match file.remove("preset") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(other) => Err(input(format!("config key 'preset' must be a string, got {other}")))?,
    };

    let data = args
        .data
        .clone()
        .or(file_data)
        .ok_or_else(|| input("--data is required (flag or config key 'data')"))?;
    let out = args
        .out
        .clone()
        .or(file_out)
        .ok_or_else(|| input("--out is required (flag or config key 'out')"))?;
    let preset = match args.preset.clone().or(file_preset) {
        Some(p) => p,
        None => match DataSource::from_path(&data) {
            Ok(DataSource::Synthetic(_)) => "synthetic".to_string(),
            _ => "awa2".to_string(),
        },
    };
    let mut config = TrainConfig::preset(&preset)?;
    let file_has_seed = file.contains_key("seed");
    config = config.merged_with(&Value::Object(file))?;

    let mut flags = Map::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            flags.insert(k.to_string(), v);
        }
    };
    put("mode", args.mode.clone().map(Value::from));
    put("epochs", args.epochs.map(Value::from));
    put("learningRate", args.learning_rate.map(Value::from));
    put("alpha", args.alpha.map(Value::from));
    put("lambda", args.lambda.map(Value::from));
    put("batchSize", args.batch_size.map(Value::from));
    put("pAgg", args.p_agg.map(Value::from));
    put("pForall", args.p_forall.map(Value::from));
    put("wNeg", args.w_neg.map(Value::from));
    put("hiddenWidth", args.hidden_width.map(Value::from));
    put("predicate", args.predicate.clone().map(Value::from));
    put("episodesPerEpoch", args.episodes_per_epoch.map(Value::from));
    put("embedDim", args.embed_dim.map(Value::from));
    put("validate", args.validate.then_some(Value::Bool(true)));
    put("normalizeAttributes", args.normalize_attributes.then_some(Value::Bool(true)));
    let mut episode = Map::new();
    for (k, v) in [("nWay", args.n_way), ("kShot", args.k_shot), ("nQuery", args.n_query)] {
        if let Some(v) = v {
            episode.insert(k.to_string(), Value::from(v));
        }
    }
    if !episode.is_empty() {
        put("episode", Some(Value::Object(episode)));
    }
    let seed = match args.seed {
        Some(s) => Some(s),
        None if file_has_seed => None,
        None => env_seed()?,
    };
    put("seed", seed.map(Value::from));
    config = config.merged_with(&Value::Object(flags))?;
    config.validate()?;
    Ok(ResolvedTrain { config, data, out })
}

fn load_data(path: &Path) -> std::result::Result<SplitDataset, Failure> {
    Ok(DataSource::from_path(path)?.load()?)
}

/// `normalizeAttributes` from a `config.json` next to the checkpoint, if any.
fn checkpoint_normalizes(checkpoint: &Path) -> bool {
    let Some(dir) = checkpoint.parent() else {
        return false;
    };
    fs::read_to_string(dir.join(CONFIG_FILE))
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.get("normalizeAttributes").and_then(Value::as_bool))
        .unwrap_or(false)
}

fn load_model(checkpoint: &Path) -> std::result::Result<Model, Failure> {
    if !checkpoint.is_file() {
        return Err(input(format!("checkpoint {} not found", checkpoint.display())));
    }
    Ok(Model::load(checkpoint)?)
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> CmdResult {
    let resolved = resolve_train(args)?;
    let ds = load_data(&resolved.data)?;
    let cfg = &resolved.config;
    let (model, log) = train(&ds, cfg)?;
    create_dir(&resolved.out)?;
    model.save(&resolved.out.join(CHECKPOINT_FILE))?;
    log.write_csv(&resolved.out.join(LOG_FILE))?;
    ds.write_label_map(&resolved.out.join(LABEL_MAP_FILE))?;
    let data = fs::canonicalize(&resolved.data).unwrap_or(resolved.data.clone());
    let mut resolved_json = serde_json::to_value(cfg).map_err(Error::from)?;
    resolved_json["data"] = Value::from(data.to_string_lossy().into_owned());
    write_file(
        &resolved.out.join(CONFIG_FILE),
        &serde_json::to_string_pretty(&resolved_json).map_err(Error::from)?,
    )?;
    if let Some(last) = log.last() {
        let _ = writeln!(
            out,
            "trained {} epochs: loss {:.6}, phi_aff {:.4}; wrote {}",
            log.records.len(),
            last.loss,
            last.phi_aff,
            resolved.out.display()
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let mut ds = load_data(&args.data)?;
    if checkpoint_normalizes(&args.checkpoint) {
        ds.normalize_attributes();
    }
    let (report, per_class) = match model.mode() {
        Mode::Gzsl => {
            let r = model.evaluate_gzsl(&ds)?;
            (serde_json::to_value(&r).map_err(Error::from)?, Some(r.per_class_csv()))
        }
        Mode::Fsl => (fsl_eval(&model, &ds, args)?, None),
    };
    let dir = args
        .out
        .clone()
        .or_else(|| args.checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    create_dir(&dir)?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    write_file(&dir.join(METRICS_FILE), &text)?;
    if let Some(csv) = per_class {
        write_file(&dir.join(PER_CLASS_FILE), &csv)?;
    }
    let _ = writeln!(out, "{text}");
    Ok(())
}

fn fsl_eval(model: &Model, ds: &SplitDataset, args: &EvalArgs) -> std::result::Result<Value, Failure> {
    let ep = EpisodeConfig {
        n_way: args.n_way,
        k_shot: args.k_shot,
        n_query: args.n_query,
    };
    let rows: Vec<usize> = ds.test_seen_idx.iter().chain(&ds.test_unseen_idx).copied().collect();
    let (x, y) = ds.subset(&rows)?;
    let test = LabeledSet::new(x, y)?;
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accs = Vec::with_capacity(args.episodes);
    for _ in 0..args.episodes.max(1) {
        let e = sample_episode(&test, &ep, &mut rng)?;
        accs.push(episode_accuracy(
            &model.embedding,
            (&e.support.features, &e.support.labels),
            (&e.query.features, &e.query.labels),
            model.scorer(),
        )?);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
    Ok(json!({
        "mode": "fsl",
        "episodes": accs.len(),
        "nWay": ep.n_way,
        "kShot": ep.k_shot,
        "accuracy": mean,
        "std": var.sqrt(),
    }))
}

fn cmd_gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let cfg = SuiteConfig {
        eps: args.eps,
        tolerance: args.tolerance,
        episodes: args.episodes,
        seed,
        fault: args.inject_fault,
    };
    let report = run_suite(&cfg)?;
    let worst = report.worst().ok_or_else(|| input("no checks ran"))?;
    let _ = writeln!(
        out,
        "{} checks, eps {:e}, tolerance {:e}; worst relative error {:e} ({})",
        report.checks.len(),
        report.eps,
        report.tolerance,
        worst.max_rel_error,
        worst.name
    );
    let failures = report.failures();
    if failures.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = failures.iter().map(|c| format!("{} ({:e})", c.name, c.max_rel_error)).collect();
    Err(Failure::Check(format!("gradient check failed: {}", names.join(", "))))
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = match &args.config {
        Some(p) => {
            let v = read_json(p)?;
            let v = v.get("synthetic").cloned().unwrap_or(v);
            serde_json::from_value::<SynthConfig>(v).map_err(|e| input(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    let seed = match args.seed {
        Some(s) => Some(s),
        None if args.config.is_some() => None,
        None => env_seed()?,
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { cfg.$field = v; } )* };
    }
    set!(num_seen, num_unseen, attr_dim, feat_dim, per_class, noise);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ds = generate_synthetic(&cfg)?;
    ds.write_csv(&args.out)?;
    write_file(
        &args.out.join("synth.json"),
        &serde_json::to_string_pretty(&json!({ "synthetic": cfg })).map_err(Error::from)?,
    )?;
    let _ = writeln!(
        out,
        "wrote {} instances of {} classes to {}",
        ds.labels.len(),
        ds.num_classes(),
        args.out.display()
    );
    Ok(())
}

fn cmd_export(args: &ExportArgs, out: &mut dyn Write) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let mut ds = load_data(&args.data)?;
    if checkpoint_normalizes(&args.checkpoint) {
        ds.normalize_attributes();
    }
    let (values, labels) = match model.mode() {
        Mode::Gzsl => {
            let p = model.class_prototypes(&ds)?;
            (p.values, p.labels)
        }
        Mode::Fsl => fsl_class_means(&model.embedding, &ds)?,
    };
    create_dir(&args.out)?;
    let path = args.out.join(PROTOTYPES_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..values.cols()).map(|k| format!("p{k}")));
    let rows = std::iter::once(header).chain(labels.iter().enumerate().map(|(i, &l)| {
        let mut rec = vec![ds.class_names[l].clone()];
        rec.extend(values.row(i).iter().map(|x| format!("{x:?}")));
        rec
    }));
    for rec in rows {
        w.write_record(&rec).map_err(|e| input(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let _ = writeln!(out, "wrote {} prototypes of width {} to {}", labels.len(), values.cols(), path.display());
    Ok(())
}

/// FSL prototypes: mean embedding of every instance of each class.
fn fsl_class_means(f: &EmbeddingFunction, ds: &SplitDataset) -> std::result::Result<(crate::diffcore::Tensor, Vec<usize>), Failure> {
    let emb = f.embed_tensor(&ds.features)?;
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, &l) in ds.labels.iter().enumerate() {
        let e = sums.entry(l).or_insert_with(|| (vec![0.0; emb.cols()], 0));
        e.0.iter_mut().zip(emb.row(i)).for_each(|(s, x)| *s += x);
        e.1 += 1;
    }
    let labels: Vec<usize> = sums.keys().copied().collect();
    let data = sums
        .into_values()
        .flat_map(|(s, n)| s.into_iter().map(move |x| x / n as f64))
        .collect();
    Ok((crate::diffcore::Tensor::matrix(labels.len(), emb.cols(), data)?, labels))
}

/// Runs one command, writing normal output to `out` and diagnostics to `err`.
/// Returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::ExportPrototypes(a) => cmd_export(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let msg = match &f {
                Failure::Check(m) | Failure::Input(m) => m,
            };
            let _ = writeln!(err, "error: {msg}");
            f.code()
        }
    }
}

/// Entry point for the binary: process arguments and standard streams.
pub fn run() -> i32 {
    run_with(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::PredicateKind;

    fn parse_train(args: &[&str]) -> TrainArgs {
        let mut full = vec!["proto-ltn", "train"];
        full.extend_from_slice(args);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Train(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_file_override_preset() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"preset":"cub","epochs":4,"alpha":0.5,"data":"d","out":"o"}"#).unwrap();
        let r = resolve_train(&parse_train(&["--config", cfg.to_str().unwrap(), "--epochs", "2"])).unwrap();
        assert_eq!(r.config.epochs, 2);
        assert_eq!(r.config.alpha, 0.5);
        assert_eq!(r.config.learning_rate, 1e-4);
        assert_eq!(r.config.lambda, 1e-3);
        assert_eq!(r.data, dir.path().join("d"));
        assert_eq!(r.out, dir.path().join("o"));
    }

    #[test]
    fn unknown_config_key_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"epochz": 3}"#).unwrap();
        let err = resolve_train(&parse_train(&["--config", cfg.to_str().unwrap(), "--data", "x", "--out", "y"])).unwrap_err();
        assert_eq!(err.code(), 2);
    }

    #[test]
    fn preset_values() {
        let r = resolve_train(&parse_train(&["--preset", "awa2", "--data", "x", "--out", "y"])).unwrap();
        assert_eq!((r.config.learning_rate, r.config.alpha, r.config.lambda), (1e-4, 1e-5, 1e-3));
        assert_eq!(r.config.predicate, PredicateKind::Distance);
    }

    #[test]
    fn fault_flag_parses_op_names() {
        let cli = Cli::try_parse_from(["proto-ltn", "gradcheck", "--inject-fault", "exp"]).unwrap();
        match cli.command {
            Command::Gradcheck(a) => assert_eq!(a.inject_fault, Some(OpKind::Exp)),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["proto-ltn", "gradcheck", "--inject-fault", "nope"]).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_with(["proto-ltn", "bogus"], &mut o, &mut e), 2);
        assert_eq!(run_with(["proto-ltn", "train"], &mut o, &mut e), 2);
        assert_eq!(run_with(["proto-ltn", "--help"], &mut o, &mut e), 0);
    }
}
