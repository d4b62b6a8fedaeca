//! End-to-end run: render a dataset from the annotated image, train a network on
//! it, and segment the image with that network. Everything lands under
//! `output_root/run_id/`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotatedImage, AnnotationError};
use crate::config::RunConfig;
use crate::infer::{infer, InferError, NetworkSegmenter, SegmentationResult};
use crate::io::{self, IoError};
use crate::model::{load_checkpoint, Model, ModelError};
use crate::render::{generate_dataset, Dataset, DatasetManifest, RenderError};
use crate::train::{train, StepInfo, TrainError, TrainHistory};

pub const RESULT_FILE: &str = "result.json";

/// Where a run keeps its artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPaths {
    pub root: PathBuf,
    pub image: PathBuf,
    pub annotation: PathBuf,
    pub config: PathBuf,
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub mask: PathBuf,
    pub prob: PathBuf,
    pub result: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            image: root.join("image.png"),
            annotation: root.join("annotation.json"),
            config: root.join("config.json"),
            dataset: root.join("dataset"),
            checkpoint: root.join("model.safetensors"),
            history: root.join("history.csv"),
            mask: root.join("mask.png"),
            prob: root.join("prob.png"),
            result: root.join(RESULT_FILE),
        }
    }
}

/// Progress of a run, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Stage {
    Rendering,
    Training { step: usize, total: usize },
    Inferring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    /// Fingerprint of the inputs (image, annotation, configuration).
    pub input_fingerprint: String,
    pub paths: RunPaths,
    pub k: usize,
    pub m: usize,
    pub final_train_dice: Option<f64>,
    pub mask_sha256: String,
    pub mask_pixels: usize,
    pub wall_time_secs: f64,
    pub render_secs: f64,
    pub train_secs: f64,
    pub infer_secs: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path} holds a different run; pass --force to overwrite")]
    Exists { path: PathBuf },
    #[error("{path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl From<ModelError> for PipelineError {
    fn from(e: ModelError) -> Self {
        PipelineError::Infer(InferError::Model(e))
    }
}

/// Hash identifying a run's inputs.
pub fn input_fingerprint(a: &AnnotatedImage, cfg: &RunConfig) -> String {
    let mut blob = Vec::new();
    blob.extend_from_slice(io::sha256_hex(a.image.as_raw()).as_bytes());
    blob.extend_from_slice(&(a.image.width() as u64).to_le_bytes());
    blob.extend_from_slice(a.to_document("image.png").to_json().as_bytes());
    blob.extend_from_slice(cfg.to_json().as_bytes());
    io::sha256_hex(&blob)
}

fn read_summary(path: &Path) -> Option<RunSummary> {
    let raw = std::fs::read(path).ok()?;
    serde_json::from_slice(&raw).ok()
}

/// Removes `dir` unless it already holds a finished run with the same inputs, in
/// which case that run's summary is returned.
fn prepare_dir(dir: &Path, fingerprint: &str, force: bool) -> Result<Option<RunSummary>, PipelineError> {
    if !dir.exists() {
        return Ok(None);
    }
    let paths = RunPaths::new(dir);
    if !force {
        if let Some(prev) = read_summary(&paths.result) {
            if prev.input_fingerprint == fingerprint && paths.mask.exists() && paths.checkpoint.exists() {
                return Ok(Some(prev));
            }
        }
        let is_empty = std::fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !is_empty {
            return Err(PipelineError::Exists { path: dir.to_path_buf() });
        }
    }
    std::fs::remove_dir_all(dir).map_err(|e| IoError::new("remove", dir, e))?;
    Ok(None)
}

/// Writes the binary mask and the probability map of a segmentation.
pub fn write_segmentation(result: &SegmentationResult, mask: &Path, prob: &Path) -> Result<String, IoError> {
    let mask_png = io::encode_png(&result.binary_mask.to_gray());
    io::write_atomic(mask, &mask_png)?;
    io::write_atomic(prob, &io::encode_png(&result.prob_map.to_gray()))?;
    Ok(io::sha256_hex(&mask_png))
}

/// Renders, trains and infers. Reruns with identical inputs return the stored
/// summary; a different run in the same directory needs `force`.
pub fn run_pipeline(
    a: &AnnotatedImage,
    cfg: &RunConfig,
    force: bool,
    progress: &mut dyn FnMut(&Stage),
) -> Result<RunSummary, PipelineError> {
    let start = Instant::now();
    let fingerprint = input_fingerprint(a, cfg);
    let root = cfg.run_dir();
    if let Some(prev) = prepare_dir(&root, &fingerprint, force)? {
        log::info!("run {} is up to date", cfg.run_id);
        return Ok(prev);
    }
    let paths = RunPaths::new(&root);
    io::create_dir_all(&root)?;
    io::write_atomic(&paths.image, &io::encode_png(&a.image))?;
    io::write_atomic(&paths.annotation, a.to_document("image.png").to_json().as_bytes())?;
    io::write_atomic(&paths.config, cfg.to_json().as_bytes())?;

    progress(&Stage::Rendering);
    let t = Instant::now();
    let manifest: DatasetManifest = generate_dataset(a, &cfg.render, &paths.dataset)?;
    let render_secs = t.elapsed().as_secs_f64();
    log::info!("rendered {} samples from {} seeds in {render_secs:.1}s", manifest.k(), manifest.m());

    let t = Instant::now();
    let ds = Dataset::open(&paths.dataset)?;
    let total = cfg.train.total_steps();
    progress(&Stage::Training { step: 0, total });
    let mut on_step = |info: &StepInfo| {
        if info.step % 10 == 0 || info.step == info.total_steps {
            log::info!(
                "step {}/{} phase {} loss {:.4} (seg {:.4} edge {:.4} consist {:.4})",
                info.step,
                info.total_steps,
                info.phase.number(),
                info.breakdown.total,
                info.breakdown.seg,
                info.breakdown.edge,
                info.breakdown.consist
            );
        }
        progress(&Stage::Training {
            step: info.step,
            total: info.total_steps,
        });
    };
    let (params, history): (_, TrainHistory) = train(&ds, &cfg.net, &cfg.loss, &cfg.train, Some(&paths.checkpoint), &mut on_step)?;
    io::write_atomic(&paths.history, history.to_csv().as_bytes())?;
    let train_secs = t.elapsed().as_secs_f64();

    progress(&Stage::Inferring);
    let t = Instant::now();
    let segmenter = NetworkSegmenter {
        model: Model::new(params)?,
        input_size: cfg.render.out_size,
    };
    let result = infer(a, &segmenter, &cfg.infer)?;
    let mask_sha256 = write_segmentation(&result, &paths.mask, &paths.prob)?;
    let infer_secs = t.elapsed().as_secs_f64();

    let summary = RunSummary {
        run_id: cfg.run_id.clone(),
        input_fingerprint: fingerprint,
        paths: paths.clone(),
        k: manifest.k(),
        m: manifest.m(),
        final_train_dice: history.final_train_dice,
        mask_sha256,
        mask_pixels: result.binary_mask.count(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        render_secs,
        train_secs,
        infer_secs,
    };
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    io::write_atomic(&paths.result, &json)?;
    Ok(summary)
}

/// Segments `a` with a saved checkpoint.
pub fn infer_with_checkpoint(
    a: &AnnotatedImage,
    checkpoint: &Path,
    opts: &crate::infer::InferOptions,
) -> Result<SegmentationResult, PipelineError> {
    let (params, input_size) = load_checkpoint(checkpoint, &candle_core::Device::Cpu)?;
    let segmenter = NetworkSegmenter {
        model: Model::new(params)?,
        input_size,
    };
    Ok(infer(a, &segmenter, opts)?)
}

/// Loads the summary of a finished run.
pub fn load_summary(root: &Path) -> Result<RunSummary, PipelineError> {
    let path = root.join(RESULT_FILE);
    let raw = io::read(&path)?;
    serde_json::from_slice(&raw).map_err(|e| PipelineError::Corrupt {
        path,
        reason: e.to_string(),
    })
}
