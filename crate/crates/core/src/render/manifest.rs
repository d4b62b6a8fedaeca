use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::paste::Placement;
use super::seeds::SeedDescriptor;
use super::{RenderConfig, RenderError};
use crate::annotation::AnnotationDoc;
use crate::grid::Mask;
use crate::io::{self, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub image: FileRecord,
    pub mask: FileRecord,
    pub edge: FileRecord,
    pub foreground_pixels: usize,
    pub placements: Vec<Placement>,
    pub skipped: Vec<usize>,
}

/// Everything needed to audit or reproduce a rendered dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub image_id: String,
    /// SHA-256 of the raw RGB pixels of the source image.
    pub image_sha256: String,
    pub annotation: AnnotationDoc,
    pub config: RenderConfig,
    pub n_samples: usize,
    pub seeds: Vec<SeedDescriptor>,
    pub ignore: FileRecord,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn m(&self) -> usize {
        self.seeds.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        io::write_atomic(&dir.join(MANIFEST_FILE), self.to_json().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, RenderError> {
        let path = dir.join(MANIFEST_FILE);
        let raw = io::read(&path)?;
        serde_json::from_slice(&raw).map_err(|e| RenderError::Dataset {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// SHA-256 of the manifest JSON; a fingerprint of the whole dataset.
    pub fn fingerprint(&self) -> String {
        io::sha256_hex(self.to_json().as_bytes())
    }
}

/// A rendered dataset opened for reading.
pub struct Dataset {
    dir: PathBuf,
    pub manifest: DatasetManifest,
    pub ignore: Mask,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, RenderError> {
        let manifest = DatasetManifest::load(dir)?;
        let ignore = read_mask(&dir.join(&manifest.ignore.path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            ignore,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// `(image, mask, edge)` of sample `i`.
    pub fn load_sample(&self, i: usize) -> Result<(RgbImage, Mask, Mask), RenderError> {
        let rec = &self.manifest.samples[i];
        let path = self.dir.join(&rec.image.path);
        let image = image::open(&path).map_err(|e| dataset_err(&path, e))?.to_rgb8();
        let mask = read_mask(&self.dir.join(&rec.mask.path))?;
        let edge = read_mask(&self.dir.join(&rec.edge.path))?;
        Ok((image, mask, edge))
    }

    /// Pixels excluded from the losses for sample `i`: the sketched region minus pasted seeds.
    pub fn ignore_for(&self, mask: &Mask) -> Mask {
        self.ignore.zip_map(mask, |&ign, &fg| ign && !fg)
    }
}

fn dataset_err(path: &Path, e: impl std::fmt::Display) -> RenderError {
    RenderError::Dataset {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn read_mask(path: &Path) -> Result<Mask, RenderError> {
    crate::grid::read_mask_png(path).map_err(|e| dataset_err(path, e))
}
