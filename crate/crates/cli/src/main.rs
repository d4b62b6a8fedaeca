//! `yoho`: render, train, infer, eval, or run the whole pipeline on one image.

mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use yoho_core::annotation::{load_annotation, AnnotatedImage, AnnotationOptions};
use yoho_core::config::{Profile, RunConfig};
use yoho_core::io;
use yoho_core::metrics::{evaluate_run, MetricsConfig};
use yoho_core::phantom::phantom;
use yoho_core::pipeline::{infer_with_checkpoint, run_pipeline, write_segmentation, RunPaths, Stage};
use yoho_core::render::{generate_dataset, Dataset, DatasetManifest};
use yoho_core::train::train;

use crate::error::{CliError, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "yoho", version, about = "Segment a lesion from one sketched image")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic training set from an annotated image.
    Render {
        #[arg(long)]
        annotation: PathBuf,
        /// Dataset directory (default: <out>/<run_id>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a network on a rendered dataset.
    Train {
        /// Dataset directory (default: <out>/<run_id>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Segment an annotated image with a trained checkpoint.
    Infer {
        #[arg(long)]
        annotation: PathBuf,
        /// Checkpoint (default: <out>/<run_id>/model.safetensors).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score predicted masks against ground truth, pairing files by name.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report directory.
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Render, train and infer in one go.
    Run {
        #[arg(long)]
        annotation: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the synthetic phantom (image, annotation, ground truth) to a directory.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration overlay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile: full, smoke or phantom.
    #[arg(long)]
    profile: Option<Profile>,
    /// Render and training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; runs land in <out>/<run_id>/.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    /// Overwrite outputs that belong to different inputs.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path, self.profile)?,
            None => RunConfig::for_profile(self.profile.unwrap_or_default()),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.output_root = out.clone();
        }
        if let Some(id) = &self.run_id {
            cfg.run_id = id.clone();
        }
        cfg.check()?;
        Ok(cfg)
    }
}

fn check_device() -> Result<(), CliError> {
    match std::env::var("YOHO_DEVICE") {
        Err(_) => Ok(()),
        Ok(v) if v.eq_ignore_ascii_case("cpu") => Ok(()),
        Ok(v) => Err(CliError::validation(format!("YOHO_DEVICE={v} is not available; this build supports cpu"))),
    }
}

fn load(path: &Path) -> Result<AnnotatedImage, CliError> {
    Ok(load_annotation(path, &AnnotationOptions::default())?)
}

fn exists_error(path: &Path) -> CliError {
    CliError::new(
        EXIT_VALIDATION,
        "exists",
        format!("{} holds different outputs; pass --force to overwrite", path.display()),
    )
}

fn is_empty_dir(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(false)
}

fn clear_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::remove_dir_all(dir).map_err(|e| io::IoError::new("remove", dir, e))?;
    Ok(())
}

fn cmd_render(annotation: &Path, dataset: Option<PathBuf>, common: &Common) -> Result<Value, CliError> {
    let cfg = common.config()?;
    let a = load(annotation)?;
    let dir = dataset.unwrap_or_else(|| cfg.run_dir().join("dataset"));
    if dir.exists() {
        let same = DatasetManifest::load(&dir).ok().is_some_and(|m| {
            m.config == cfg.render
                && m.image_sha256 == io::sha256_hex(a.image.as_raw())
                && m.annotation == a.to_document(&format!("{}.png", a.image_id))
        });
        if same && !common.force {
            log::info!("dataset {} is up to date", dir.display());
            return Ok(json!({ "manifest": dir.join(yoho_core::render::MANIFEST_FILE), "reused": true }));
        }
        if !common.force && !is_empty_dir(&dir) {
            return Err(exists_error(&dir));
        }
        clear_dir(&dir)?;
    }
    let manifest = generate_dataset(&a, &cfg.render, &dir)?;
    log::info!("rendered K={} samples from M={} seeds", manifest.k(), manifest.m());
    Ok(json!({
        "manifest": dir.join(yoho_core::render::MANIFEST_FILE),
        "k": manifest.k(),
        "m": manifest.m(),
        "fingerprint": manifest.fingerprint(),
    }))
}

const TRAIN_RECORD: &str = "train.json";

fn cmd_train(dataset: Option<PathBuf>, common: &Common) -> Result<Value, CliError> {
    let cfg = common.config()?;
    let root = cfg.run_dir();
    let dir = dataset.unwrap_or_else(|| root.join("dataset"));
    let ds = Dataset::open(&dir)?;
    let paths = RunPaths::new(&root);
    let record_path = root.join(TRAIN_RECORD);
    let inputs = json!({
        "dataset": ds.manifest.fingerprint(),
        "net": cfg.net,
        "loss": cfg.loss,
        "train": cfg.train,
    });
    if paths.checkpoint.exists() {
        let prev: Option<Value> = std::fs::read(&record_path).ok().and_then(|b| serde_json::from_slice(&b).ok());
        let current_sha = io::read(&paths.checkpoint).map(|b| io::sha256_hex(&b)).ok();
        if let Some(prev) = prev.filter(|p| p["inputs"] == inputs && current_sha.is_some() && p["checkpoint_sha256"] == json!(current_sha)) {
            if !common.force {
                log::info!("checkpoint {} is up to date", paths.checkpoint.display());
                return Ok(json!({ "checkpoint": paths.checkpoint, "history": paths.history, "final_train_dice": prev["final_train_dice"], "reused": true }));
            }
        } else if !common.force {
            return Err(exists_error(&paths.checkpoint));
        }
    }
    io::create_dir_all(&root)?;
    let mut on_step = |info: &yoho_core::train::StepInfo| {
        if info.step % 10 == 0 || info.step == info.total_steps {
            log::info!("step {}/{} loss {:.4}", info.step, info.total_steps, info.breakdown.total);
        }
    };
    let (_, history) = train(&ds, &cfg.net, &cfg.loss, &cfg.train, Some(&paths.checkpoint), &mut on_step)?;
    io::write_atomic(&paths.history, history.to_csv().as_bytes())?;
    let sha = io::sha256_hex(&io::read(&paths.checkpoint)?);
    let record = json!({
        "inputs": inputs,
        "checkpoint_sha256": sha,
        "final_train_dice": history.final_train_dice,
    });
    io::write_atomic(&record_path, serde_json::to_string_pretty(&record).expect("json").as_bytes())?;
    Ok(json!({
        "checkpoint": paths.checkpoint,
        "history": paths.history,
        "checkpoint_sha256": sha,
        "final_train_dice": history.final_train_dice,
    }))
}

fn cmd_infer(annotation: &Path, checkpoint: Option<PathBuf>, common: &Common) -> Result<Value, CliError> {
    let cfg = common.config()?;
    let paths = RunPaths::new(&cfg.run_dir());
    let checkpoint = checkpoint.unwrap_or_else(|| paths.checkpoint.clone());
    let a = load(annotation)?;
    let result = infer_with_checkpoint(&a, &checkpoint, &cfg.infer)?;
    let mask_png = io::encode_png(&result.binary_mask.to_gray());
    if let Ok(prev) = std::fs::read(&paths.mask) {
        if prev != mask_png && !common.force {
            return Err(exists_error(&paths.mask));
        }
    }
    io::create_dir_all(&paths.root)?;
    let sha = write_segmentation(&result, &paths.mask, &paths.prob)?;
    Ok(json!({
        "mask": paths.mask,
        "prob": paths.prob,
        "mask_sha256": sha,
        "mask_pixels": result.binary_mask.count(),
        "gating": result.gating,
    }))
}

fn cmd_eval(pred: &Path, gt: &Path, out: &Path) -> Result<Value, CliError> {
    let report = evaluate_run(pred, gt, &MetricsConfig::default())?;
    let csv = report.write(out)?;
    eprint!("{}", report.summary());
    Ok(json!({
        "report": csv,
        "means": report.means,
        "missing": report.missing,
        "failed": report.failed,
    }))
}

fn cmd_run(annotation: &Path, common: &Common) -> Result<Value, CliError> {
    let cfg = common.config()?;
    let a = load(annotation)?;
    let mut last = None;
    let mut progress = |stage: &Stage| {
        let label = match stage {
            Stage::Rendering => "rendering",
            Stage::Training { .. } => "training",
            Stage::Inferring => "inferring",
        };
        if last != Some(label) {
            log::info!("{label}");
            last = Some(label);
        }
    };
    let summary = run_pipeline(&a, &cfg, common.force, &mut progress)?;
    Ok(serde_json::to_value(&summary).expect("summary serializes"))
}

fn cmd_phantom(out: &Path, seed: u64) -> Result<Value, CliError> {
    let p = phantom(seed);
    io::create_dir_all(out)?;
    let image = out.join("image.png");
    let annotation = out.join("annotation.json");
    let gt = out.join("gt.png");
    io::write_atomic(&image, &io::encode_png(&p.annotated.image))?;
    io::write_atomic(&annotation, p.annotated.to_document("image.png").to_json().as_bytes())?;
    io::write_atomic(&gt, &io::encode_png(&p.ground_truth.to_gray()))?;
    Ok(json!({ "image": image, "annotation": annotation, "ground_truth": gt }))
}

fn dispatch(cli: Cli) -> Result<Value, CliError> {
    check_device()?;
    match cli.command {
        Command::Render { annotation, dataset, common } => cmd_render(&annotation, dataset, &common),
        Command::Train { dataset, common } => cmd_train(dataset, &common),
        Command::Infer { annotation, checkpoint, common } => cmd_infer(&annotation, checkpoint, &common),
        Command::Eval { pred, gt, out } => cmd_eval(&pred, &gt, &out),
        Command::Run { annotation, common } => cmd_run(&annotation, &common),
        Command::Phantom { out, seed } => cmd_phantom(&out, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code)
        }
    }
}
