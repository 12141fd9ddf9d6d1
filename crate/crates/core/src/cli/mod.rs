//! Command-line front end.
//!
//! Subcommands: `gen`, `train`, `eval`, `ensemble`, `gradcheck`, `presets`.
//! A data directory holds `videos.fmat`, `texts.fmat` and `annotations.csv`.
//! Failures print one line `relrank: error[<category>]: <message>` to stderr
//! and exit with the category's code (see [`exit_code`]).

pub mod config;
pub mod presets;

pub use config::{resolve_preset, MetricOptions, Paths, RunConfig};
pub use presets::{preset, PRESET_NAMES};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::encoder::DualEncoder;
use crate::ensemble::ensemble_mean;
use crate::error::{Error, Result};
use crate::formats::{load_checkpoint, load_fmat, save_checkpoint, save_fmat};
use crate::losses::{DirectionWeights, LossConfig};
use crate::matrix::Matrix;
use crate::metrics::evaluate_retrieval;
use crate::relevance::{format_annotations, parse_annotations, relevance_matrix, RelevanceMode};
use crate::synthdata::{generate_dataset, Dataset};
use crate::trainer::{grad_check, random_instance, split_validation, train, InstanceShape, Validation};

pub const VIDEOS_FILE: &str = "videos.fmat";
pub const TEXTS_FILE: &str = "texts.fmat";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const CHECKPOINT_FILE: &str = "model.rrnk";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const SIMILARITY_FILE: &str = "sim.fmat";

/// Gradient-check tolerance on the max relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const EXIT_USAGE: i32 = 2;

/// Process exit code for an error category.
pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        "io" => 3,
        "format" => 4,
        "config" => 5,
        "argument" => 6,
        "numeric" => 7,
        _ => 1,
    }
}

#[derive(Parser, Debug)]
#[command(name = "relrank", version, about = "Relevance-aware text-video retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train an encoder; writes checkpoint, history and similarity matrix.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "relevance-mode")]
        relevance_mode: Option<String>,
        #[arg(long = "map-threshold")]
        map_threshold: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "embedding-dim")]
        embedding_dim: Option<usize>,
    },
    /// Score a similarity matrix (or a checkpoint on a dataset).
    Eval {
        #[arg(long)]
        sim: Option<PathBuf>,
        #[arg(long)]
        ann: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "map-threshold")]
        map_threshold: Option<f64>,
        #[arg(long = "relevance-mode")]
        relevance_mode: Option<String>,
        #[arg(long)]
        percent: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average similarity matrices.
    Ensemble {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on random instances.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long, default_value_t = 20)]
        instances: u64,
    },
    /// Print the frozen training presets as JSON.
    Presets,
}

/// Runs the CLI with process stdout/stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing results to `out` and diagnostics to `err`.
/// `argv[0]` is the program name.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage");
            let first = first.trim_start_matches("error: ");
            let _ = writeln!(err, "relrank: error[usage]: {first}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "relrank: error[{}]: {msg}", e.category());
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Gen { config, out: dir, seed } => cmd_gen(config, dir, seed, out),
        Command::Train {
            config,
            preset,
            data,
            out: dir,
            seed,
            relevance_mode,
            map_threshold,
            epochs,
            embedding_dim,
        } => cmd_train(
            TrainArgs {
                config,
                preset,
                data,
                dir,
                seed,
                relevance_mode,
                map_threshold,
                epochs,
                embedding_dim,
            },
            out,
        ),
        Command::Eval {
            sim,
            ann,
            model,
            data,
            config,
            map_threshold,
            relevance_mode,
            percent,
            out: report_path,
        } => cmd_eval(
            EvalArgs {
                sim,
                ann,
                model,
                data,
                config,
                map_threshold,
                relevance_mode,
                percent,
                report_path,
            },
            out,
        ),
        Command::Ensemble { inputs, out: path } => cmd_ensemble(&inputs, &path, out),
        Command::Gradcheck {
            config,
            preset,
            seed,
            eps,
            instances,
        } => cmd_gradcheck(config, preset, seed, eps, instances, out),
        Command::Presets => cmd_presets(out),
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

fn require_path(flag: Option<PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.cloned())
        .ok_or_else(|| Error::Config(format!("missing --{name} (or `paths.{name}` in the config)")))
}

/// Writes a dataset directory: features as FMAT, annotations as CSV.
pub fn save_dataset(dir: &Path, data: &Dataset<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::at(dir))?;
    save_fmat(dir.join(VIDEOS_FILE), &data.video)?;
    save_fmat(dir.join(TEXTS_FILE), &data.text)?;
    let ann = dir.join(ANNOTATIONS_FILE);
    fs::write(&ann, format_annotations(&data.annotations)).map_err(Error::at(&ann))?;
    Ok(())
}

pub fn load_annotations(path: &Path) -> Result<Vec<crate::relevance::CaptionAnnotation>> {
    parse_annotations(&fs::read_to_string(path).map_err(Error::at(path))?)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset<f32>> {
    let video = load_fmat(dir.join(VIDEOS_FILE))?;
    let text = load_fmat(dir.join(TEXTS_FILE))?;
    let annotations = load_annotations(&dir.join(ANNOTATIONS_FILE))?;
    Dataset::new(video, text, annotations).map_err(|e| Error::Format(e.to_string()))
}

fn cmd_gen(config: Option<PathBuf>, dir: Option<PathBuf>, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let rc = load_run_config(config.as_deref())?;
    let dir = require_path(dir, rc.paths.out.as_ref(), "out")?;
    let mut synth = rc.synth.unwrap_or_default();
    if let Some(seed) = seed {
        synth.seed = seed;
    }
    let data = generate_dataset::<f32>(&synth)?;
    save_dataset(&dir, &data)?;
    emit(
        out,
        &json!({"command": "gen", "items": data.len(), "out": dir, "seed": synth.seed}),
    )
}

struct TrainArgs {
    config: Option<PathBuf>,
    preset: Option<String>,
    data: Option<PathBuf>,
    dir: Option<PathBuf>,
    seed: Option<u64>,
    relevance_mode: Option<String>,
    map_threshold: Option<f64>,
    epochs: Option<usize>,
    embedding_dim: Option<usize>,
}

fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let rc = load_run_config(args.config.as_deref())?;
    let mut cfg = match &args.preset {
        Some(name) if rc.train.is_none() && rc.preset.as_deref().is_none_or(|p| p == name) => {
            resolve_preset(name)?
        }
        Some(_) => {
            return Err(Error::Config(
                "--preset conflicts with the config's `preset`/`train`".into(),
            ))
        }
        None => rc.train_config()?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &args.relevance_mode {
        cfg.relevance_mode = mode.parse()?;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(d) = args.embedding_dim {
        cfg.embedding_dim = d;
    }
    cfg.validate()?;
    let map_threshold = args.map_threshold.unwrap_or(rc.metrics.map_threshold);
    let data_dir = require_path(args.data, rc.paths.data.as_ref(), "data")?;
    let dir = require_path(args.dir, rc.paths.out.as_ref(), "out")?;

    let data = load_dataset(&data_dir)?;
    let (train_idx, val_idx) = split_validation(data.len(), cfg.validation_fraction, cfg.seed)?;
    let train_set = data.subset(&train_idx);
    let val_set = data.subset(&val_idx);
    let validation = (!val_set.is_empty()).then_some(Validation {
        data: &val_set,
        map_threshold,
    });
    let (model, history) = train(&train_set, &cfg, validation)?;

    fs::create_dir_all(&dir).map_err(Error::at(&dir))?;
    save_checkpoint(dir.join(CHECKPOINT_FILE), &model)?;
    let history_path = dir.join(HISTORY_FILE);
    fs::write(&history_path, history.to_json_lines()?).map_err(Error::at(&history_path))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&cfg)?).map_err(Error::at(&config_path))?;
    let sim = model.similarity_matrix(&data.video, &data.text)?;
    save_fmat(dir.join(SIMILARITY_FILE), &sim)?;

    let last = history.epochs.last().expect("epochs >= 1");
    emit(
        out,
        &json!({
            "command": "train",
            "epochs": history.epochs.len(),
            "final_loss": last.mean_loss,
            "validation": last.metrics,
            "out": dir,
        }),
    )
}

struct EvalArgs {
    sim: Option<PathBuf>,
    ann: Option<PathBuf>,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    config: Option<PathBuf>,
    map_threshold: Option<f64>,
    relevance_mode: Option<String>,
    percent: bool,
    report_path: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let rc = load_run_config(args.config.as_deref())?;
    let map_threshold = args.map_threshold.unwrap_or(rc.metrics.map_threshold);
    let percent = args.percent || rc.metrics.percent;
    let mode: RelevanceMode = match &args.relevance_mode {
        Some(m) => m.parse()?,
        None => RelevanceMode::Full,
    };

    let (sim, annotations): (Matrix<f32>, _) = match (args.sim, args.model) {
        (Some(sim), None) => {
            let ann = match (args.ann, &args.data) {
                (Some(a), _) => a,
                (None, Some(d)) => d.join(ANNOTATIONS_FILE),
                (None, None) => return Err(Error::Config("eval --sim needs --ann or --data".into())),
            };
            (load_fmat(sim)?, load_annotations(&ann)?)
        }
        (None, Some(model)) => {
            let dir = require_path(args.data, rc.paths.data.as_ref(), "data")?;
            let data = load_dataset(&dir)?;
            let model: DualEncoder<f32> = load_checkpoint(model)?;
            let annotations = match args.ann {
                Some(a) => load_annotations(&a)?,
                None => data.annotations.clone(),
            };
            (model.similarity_matrix(&data.video, &data.text)?, annotations)
        }
        _ => return Err(Error::Config("eval needs exactly one of --sim or --model".into())),
    };
    if sim.rows() != annotations.len() || sim.cols() != annotations.len() {
        return Err(Error::Format(format!(
            "similarity is {}x{} but there are {} annotations",
            sim.rows(),
            sim.cols(),
            annotations.len()
        )));
    }
    let relevance = relevance_matrix(&annotations, &annotations, mode)?;
    let mut report = evaluate_retrieval(&sim, &relevance, map_threshold)?;
    if percent {
        report = report.to_percent();
    }
    let value = serde_json::to_value(&report)?;
    if let Some(path) = args.report_path {
        fs::write(&path, serde_json::to_string_pretty(&value)?).map_err(Error::at(&path))?;
    }
    emit(out, &value)
}

fn cmd_ensemble(inputs: &[PathBuf], path: &Path, out: &mut dyn Write) -> Result<()> {
    let mats = inputs
        .iter()
        .map(load_fmat::<f32>)
        .collect::<Result<Vec<_>>>()?;
    let mean = ensemble_mean(&mats)?;
    save_fmat(path, &mean)?;
    emit(
        out,
        &json!({"command": "ensemble", "models": mats.len(), "rows": mean.rows(), "cols": mean.cols(), "out": path}),
    )
}

fn cmd_gradcheck(
    config: Option<PathBuf>,
    preset_name: Option<String>,
    seed: Option<u64>,
    eps: f64,
    instances: u64,
    out: &mut dyn Write,
) -> Result<()> {
    let rc = load_run_config(config.as_deref())?;
    let configured = match (&preset_name, config.is_some()) {
        (Some(name), _) => Some(resolve_preset(name)?),
        (None, true) => Some(rc.train_config()?),
        (None, false) => None,
    };
    let seed = seed.or(configured.as_ref().map(|c| c.seed)).unwrap_or(0);
    let losses: Vec<LossConfig> = match &configured {
        Some(c) => vec![c.loss.clone()],
        None => vec![
            LossConfig::fixed(0.2),
            LossConfig::relevance_margin(),
            LossConfig::ranp(0.15, 0.2),
        ],
    };
    let weights = DirectionWeights::all();
    let shape = InstanceShape::default();
    let mut results = serde_json::Map::new();
    let mut pass = true;
    for loss in &losses {
        let mut worst = 0f64;
        for k in 0..instances {
            let (model, batch) = random_instance(seed.wrapping_add(k), &shape, loss, &weights)?;
            worst = worst.max(grad_check(&model, &batch, loss, &weights, eps)?);
        }
        pass &= worst <= GRADCHECK_TOLERANCE;
        results.insert(serde_json::to_value(loss.variant)?.as_str().unwrap_or("?").into(), json!(worst));
    }
    emit(
        out,
        &json!({"command": "gradcheck", "instances": instances, "eps": eps,
                "tolerance": GRADCHECK_TOLERANCE, "max_relative_error": results, "pass": pass}),
    )?;
    if pass {
        Ok(())
    } else {
        Err(Error::GradientCheck(format!(
            "max relative error exceeded {GRADCHECK_TOLERANCE}"
        )))
    }
}

fn cmd_presets(out: &mut dyn Write) -> Result<()> {
    let mut map = serde_json::Map::new();
    for name in PRESET_NAMES {
        map.insert(name.into(), serde_json::to_value(preset(name).expect("known preset"))?);
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&map)?)?;
    Ok(())
}
