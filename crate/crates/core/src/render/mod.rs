//! Synthetic training-set rendering from one annotated image.
//!
//! Sample circles are cut into circle and triangle seeds, which are pasted back
//! onto the (resized) image at random non-overlapping positions. Every sample
//! comes with its exact mask and edge map, and the dataset directory records
//! enough to reconstruct both from the placement log.

mod edges;
mod manifest;
mod paste;
mod seeds;

use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use edges::{derive_edge_map, dilate, inner_boundary};
pub use manifest::{Dataset, DatasetManifest, FileRecord, SampleRecord, MANIFEST_FILE, MANIFEST_VERSION};
pub use paste::{mask_from_placements, paste_seeds, Placement, TrainingSample};
pub use seeds::{extract_seeds, LesionSeed, SeedDescriptor, SeedSet, SeedShape, MIN_SEED_PIXELS};

use crate::annotation::{rasterize_roi, AnnotatedImage, AnnotationError};
use crate::grid::Mask;
use crate::io::{self, IoError};

/// Stream index reserved for seed extraction; per-sample streams use the sample index.
const SEED_STREAM: u64 = u64::MAX;

/// Rendering hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Number of rendered samples.
    pub k: usize,
    pub seeds_per_sample: usize,
    /// Seed size as a fraction of the source radius (circle radius or triangle circumradius).
    pub seed_scale_range: (f64, f64),
    pub pastes_per_image_range: (usize, usize),
    pub edge_thickness: usize,
    /// `(height, width)` of rendered samples.
    pub out_size: (usize, usize),
    pub max_paste_attempts: usize,
    pub rng_seed: u64,
    /// Emit the sketched region as an ignore mask for the losses.
    pub ignore_roi: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            k: 1600,
            seeds_per_sample: 16,
            seed_scale_range: (0.4, 1.0),
            pastes_per_image_range: (2, 6),
            edge_thickness: 3,
            out_size: (256, 256),
            max_paste_attempts: 50,
            rng_seed: 0,
            ignore_roi: true,
        }
    }
}

impl RenderConfig {
    pub fn check(&self) -> Result<(), RenderError> {
        let (lo, hi) = self.seed_scale_range;
        let (plo, phi) = self.pastes_per_image_range;
        let problem = if self.k == 0 {
            "k must be positive"
        } else if self.seeds_per_sample == 0 {
            "seeds_per_sample must be positive"
        } else if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            "seed_scale_range must satisfy 0 < lo <= hi <= 1"
        } else if plo == 0 || plo > phi {
            "pastes_per_image_range must satisfy 1 <= lo <= hi"
        } else if self.edge_thickness == 0 {
            "edge_thickness must be positive"
        } else if self.out_size.0 == 0 || self.out_size.1 == 0 {
            "out_size must be positive"
        } else if self.max_paste_attempts == 0 {
            "max_paste_attempts must be positive"
        } else {
            return Ok(());
        };
        Err(RenderError::Config(problem.into()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("invalid render configuration: {0}")]
    Config(String),
    #[error("sample {sample} (radius {radius:.2} px at render scale) is too small to cut seeds from")]
    SourceTooSmall { sample: usize, radius: f64 },
    #[error("seed {seed} of sample {sample} stays below {MIN_SEED_PIXELS} px after repeated draws")]
    SeedTooSmall { sample: usize, seed: usize },
    #[error("no seed could be placed{}", .sample.map(|s| format!(" in sample {s}")).unwrap_or_default())]
    NoPlacementPossible { sample: Option<usize> },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("dataset {path}: {reason}")]
    Dataset { path: String, reason: String },
}

/// 64-bit finalizer from SplitMix64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for stream `index` of `master`; identical for any
/// evaluation order, which makes parallel rendering reproduce serial output.
pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    let seed = mix64(master ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    ChaCha8Rng::seed_from_u64(seed)
}

/// Resizes the input to the render resolution with the same filter used at inference.
pub fn resize_rgb(image: &RgbImage, width: usize, height: usize) -> RgbImage {
    if image.width() as usize == width && image.height() as usize == height {
        return image.clone();
    }
    image::imageops::resize(image, width as u32, height as u32, FilterType::Triangle)
}

/// The render-resolution view of an annotation: resized image, seeds cut from it,
/// and the sketched region for the ignore mask.
pub struct RenderContext {
    pub base: RgbImage,
    pub seeds: SeedSet,
    pub ignore: Mask,
}

impl RenderContext {
    pub fn new(a: &AnnotatedImage, cfg: &RenderConfig) -> Result<Self, RenderError> {
        cfg.check()?;
        let (out_h, out_w) = cfg.out_size;
        let base = resize_rgb(&a.image, out_w, out_h);
        let sx = out_w as f64 / a.width() as f64;
        let sy = out_h as f64 / a.height() as f64;
        let (_, samples) = a.scaled_geometry(sx, sy);
        let seeds = extract_seeds(&base, &samples, cfg, &mut stream_rng(cfg.rng_seed, SEED_STREAM))?;
        let n = a.samples.len();
        let m = seeds.len();
        if !(n < m && m < cfg.k) {
            return Err(RenderError::Config(format!(
                "need N < M < K, got N={n}, M={m}, K={}",
                cfg.k
            )));
        }
        let ignore = if cfg.ignore_roi {
            rasterize_roi(a, cfg.out_size)?
        } else {
            Mask::filled(out_w, out_h, false)
        };
        Ok(Self { base, seeds, ignore })
    }

    /// Renders sample `index` from its own random stream.
    pub fn render_sample(&self, cfg: &RenderConfig, index: usize) -> Result<TrainingSample, RenderError> {
        paste_seeds(&self.base, &self.seeds, cfg, &mut stream_rng(cfg.rng_seed, index as u64)).map_err(|e| match e {
            RenderError::NoPlacementPossible { .. } => RenderError::NoPlacementPossible { sample: Some(index) },
            other => other,
        })
    }
}

/// Renders `cfg.k` samples into `out_dir` (`images/`, `masks/`, `edges/`,
/// `ignore.png`, `manifest.json`) and returns the manifest.
pub fn generate_dataset(a: &AnnotatedImage, cfg: &RenderConfig, out_dir: &Path) -> Result<DatasetManifest, RenderError> {
    let ctx = RenderContext::new(a, cfg)?;
    for sub in ["images", "masks", "edges"] {
        io::create_dir_all(&out_dir.join(sub))?;
    }
    let records = (0..cfg.k)
        .into_par_iter()
        .map(|index| -> Result<SampleRecord, RenderError> {
            let sample = ctx.render_sample(cfg, index)?;
            let name = format!("{index:06}.png");
            let files = [
                (format!("images/{name}"), io::encode_png(&sample.image)),
                (format!("masks/{name}"), io::encode_png(&sample.mask.to_gray())),
                (format!("edges/{name}"), io::encode_png(&sample.edge.to_gray())),
            ];
            let mut records = Vec::with_capacity(3);
            for (rel, bytes) in &files {
                io::write_atomic(&out_dir.join(rel), bytes)?;
                records.push(FileRecord {
                    path: rel.clone(),
                    sha256: io::sha256_hex(bytes),
                });
            }
            let [image, mask, edge]: [FileRecord; 3] = records.try_into().expect("three files per sample");
            Ok(SampleRecord {
                index,
                image,
                mask,
                edge,
                foreground_pixels: sample.mask.count(),
                placements: sample.placements,
                skipped: sample.skipped,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let ignore_bytes = io::encode_png(&ctx.ignore.to_gray());
    io::write_atomic(&out_dir.join("ignore.png"), &ignore_bytes)?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        image_id: a.image_id.clone(),
        image_sha256: io::sha256_hex(a.image.as_raw()),
        annotation: a.to_document(&format!("{}.png", a.image_id)),
        config: cfg.clone(),
        n_samples: a.samples.len(),
        seeds: ctx.seeds.seeds.iter().map(LesionSeed::descriptor).collect(),
        ignore: FileRecord {
            path: "ignore.png".into(),
            sha256: io::sha256_hex(&ignore_bytes),
        },
        samples: records,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: Vec<u64> = (0..4).map(|i| stream_rng(7, i).random()).collect();
        let b: Vec<u64> = (0..4).map(|i| stream_rng(7, i).random()).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(stream_rng(7, 0).random::<u64>(), stream_rng(8, 0).random::<u64>());
    }

    #[test]
    fn config_checks() {
        assert!(RenderConfig::default().check().is_ok());
        let bad = RenderConfig {
            seed_scale_range: (0.8, 0.2),
            ..RenderConfig::default()
        };
        assert!(matches!(bad.check(), Err(RenderError::Config(_))));
    }
}
