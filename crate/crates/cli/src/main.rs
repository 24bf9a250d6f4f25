use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowcast_core::checkpoint::{Checkpoint, FeatureSchema};
use flowcast_core::data::{all_samples, generate_synthetic, load_dataset, save_dataset, FeatureTable, GeneratorConfig};
use flowcast_core::heads::HeadKind;
use flowcast_core::metrics::{evaluate, permutation_importance, write_evaluation, write_importance, ImportanceOptions, ScoreConfig};
use flowcast_core::predict::{load_predictions, predict, save_predictions, PredictionSet};
use flowcast_core::rng::{stream, Stream};
use flowcast_core::train::{train, write_loss_curve, TrainConfig};
use flowcast_core::{Error, Result};
use serde::Serialize;

mod manifest;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "flowcast", version, about = "Post-process ensemble temperature forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic train-like (11 members) and test-like (51 members) dataset pair.
    Generate(GenerateArgs),
    /// Train a distribution head and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Write per-sample predictive parameters and quantiles.
    Predict(PredictArgs),
    /// Score prediction files and write the report tables.
    Evaluate(EvaluateArgs),
    /// Permutation importance of input lead times for a checkpoint.
    Importance(ImportanceArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Generator settings as JSON; omitted fields take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_head(s: &str) -> std::result::Result<HeadKind, String> {
    match s {
        "flow" => Ok(HeadKind::Flow),
        "normal" => Ok(HeadKind::Normal),
        "bernstein" => Ok(HeadKind::Bernstein),
        other => Err(format!("unknown head '{other}' (expected flow, normal or bernstein)")),
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_head, default_value = "flow")]
    head: HeadKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    weight_decay: f64,
    #[arg(long, default_value_t = 2016)]
    validation_year: i32,
    #[arg(long, default_value_t = 256)]
    hidden_dim: usize,
    /// Output directory for the checkpoint, loss curve and run manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    #[arg(long, required_unless_present = "truth")]
    checkpoint: Option<PathBuf>,
    /// Predict with the dataset's own synthetic truth law instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    truth: bool,
    #[arg(long)]
    data: PathBuf,
    /// Prediction CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Prediction files, optionally as `name=path`.
    #[arg(long = "predictions", required = true, num_args = 1..)]
    predictions: Vec<String>,
    /// Dataset directory holding the observations.
    #[arg(long)]
    data: PathBuf,
    /// Reference prediction file for QSS tables (default: the first model).
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 20)]
    pit_bins: usize,
    /// Add median-filtered per-station CRPS with this kernel to the ranking table.
    #[arg(long)]
    smooth: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ImportanceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Permute with the identity (a debugging aid; the matrix must be all zero).
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    out: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let cfg: GeneratorConfig = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GeneratorConfig::default(),
    };
    let pair = generate_synthetic(&cfg, args.seed)?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    save_dataset(args.out.join("train"), &pair.train)?;
    save_dataset(args.out.join("test"), &pair.test)?;
    let law_path = args.out.join("truth_law.json");
    let law = serde_json::to_string_pretty(&cfg.truth).map_err(|e| Error::Numeric(e.to_string()))?;
    std::fs::write(&law_path, law + "\n").map_err(io_err(&law_path))?;
    #[derive(Serialize)]
    struct Config<'a> {
        seed: u64,
        generator: &'a GeneratorConfig,
    }
    let inputs = match &args.spec {
        Some(p) => manifest::digests(&[p])?,
        None => Default::default(),
    };
    manifest::write(
        &args.out.join("run_manifest.json"),
        &RunManifest {
            command: "generate",
            version: env!("CARGO_PKG_VERSION"),
            config: Config {
                seed: args.seed,
                generator: &cfg,
            },
            inputs,
            outputs: vec!["train".into(), "test".into(), "truth_law.json".into()],
        },
    )
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let cfg = TrainConfig {
        head: args.head,
        seed: args.seed,
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        weight_decay: args.weight_decay,
        validation_year: args.validation_year,
        hidden_dim: args.hidden_dim,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let inputs = manifest::digests(&[&args.data])?;
    let outcome = train(&ds, &cfg)?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let mut ckpt = Checkpoint::from_outcome(&outcome, &cfg, FeatureSchema::of(&ds));
    ckpt.header.run.inputs = inputs.clone();
    ckpt.save(args.out.join("checkpoint.bin"))?;
    write_loss_curve(&args.out.join("loss_curve.csv"), &outcome.history)?;
    log::info!(
        "best validation loss {:.5} at epoch {}",
        outcome.best_val_loss,
        outcome.best_epoch
    );
    manifest::write(
        &args.out.join("run_manifest.json"),
        &RunManifest {
            command: "train",
            version: env!("CARGO_PKG_VERSION"),
            config: &cfg,
            inputs,
            outputs: vec!["checkpoint.bin".into(), "loss_curve.csv".into()],
        },
    )
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let (set, inputs) = match &args.checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            ckpt.check_dataset(&ds)?;
            (predict(&ckpt.model()?, &ds)?, manifest::digests(&[path, &args.data])?)
        }
        None => (PredictionSet::truth(&ds, &all_samples(&ds))?, manifest::digests(&[&args.data])?),
    };
    save_predictions(&args.out, &set)?;
    manifest::write(
        &sidecar(&args.out),
        &RunManifest {
            command: "predict",
            version: env!("CARGO_PKG_VERSION"),
            config: args,
            inputs,
            outputs: vec![args.out.display().to_string()],
        },
    )
}

fn split_named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let name = p.file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
            (name, p)
        }
    }
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let named: Vec<(String, PathBuf)> = args.predictions.iter().map(|s| split_named(s)).collect();
    let sets = named.iter().map(|(_, p)| load_predictions(p)).collect::<Result<Vec<_>>>()?;
    let reference = args.reference.as_deref().map(split_named);
    let ref_set = reference.as_ref().map(|(_, p)| load_predictions(p)).transpose()?;
    let models: Vec<(&str, &PredictionSet)> = named.iter().map(|(n, _)| n.as_str()).zip(&sets).collect();
    let ev = evaluate(
        &models,
        reference.as_ref().zip(ref_set.as_ref()).map(|((n, _), s)| (n.as_str(), s)),
        &ds,
        ScoreConfig {
            pit_bins: args.pit_bins,
        },
    )?;
    write_evaluation(&args.out, &ev, args.smooth)?;
    let mut paths: Vec<&Path> = named.iter().map(|(_, p)| p.as_path()).collect();
    if let Some((_, p)) = &reference {
        paths.push(p);
    }
    paths.push(&args.data);
    manifest::write(
        &args.out.join("run_manifest.json"),
        &RunManifest {
            command: "evaluate",
            version: env!("CARGO_PKG_VERSION"),
            config: args,
            inputs: manifest::digests(&paths)?,
            outputs: [
                "crps_by_lead.csv",
                "bias_by_lead.csv",
                "qss_by_quantile.csv",
                "pit_hist.csv",
                "qss_by_band.csv",
                "station_ranking.csv",
                "station_wins.csv",
                "summary.csv",
            ]
            .map(String::from)
            .to_vec(),
        },
    )
}

fn cmd_importance(args: &ImportanceArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    ckpt.check_dataset(&ds)?;
    let model = ckpt.model()?;
    let table = FeatureTable::build(&ds, &all_samples(&ds))?;
    let m = permutation_importance(
        &model,
        &table,
        ImportanceOptions {
            repetitions: args.repetitions,
            identity: args.identity,
        },
        &mut stream(args.seed, Stream::Permutation),
    )?;
    write_importance(&args.out, &m)?;
    manifest::write(
        &sidecar(&args.out),
        &RunManifest {
            command: "importance",
            version: env!("CARGO_PKG_VERSION"),
            config: args,
            inputs: manifest::digests(&[&args.checkpoint, &args.data])?,
            outputs: vec![args.out.display().to_string()],
        },
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Importance(a) => cmd_importance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flowcast: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
