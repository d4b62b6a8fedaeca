//! Clinician annotation: ROI polygons (or a reverse ROI over healthy tissue)
//! plus circular texture samples, and the single image they were drawn on.

mod geometry;
mod raster;

use std::fmt;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

pub use geometry::{union_contains, Polygon};
pub use raster::{fill_polygon, rasterize_polygons};

use crate::grid::Mask;

/// Sample counts outside this inclusive range draw a warning.
pub const SAMPLE_COUNT_RANGE: (usize, usize) = (2, 10);

/// Polygons smaller than this fraction of the image area draw a warning.
pub const SMALL_POLYGON_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCircle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl SampleCircle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }
}

/// The on-disk / on-wire annotation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationDoc {
    pub image: String,
    #[serde(default)]
    pub reverse: bool,
    pub rois: Vec<Polygon>,
    pub samples: Vec<SampleCircle>,
}

impl AnnotationDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation document serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationOptions {
    /// Smallest accepted sample radius in native pixels.
    pub r_min: f64,
}

impl Default for AnnotationOptions {
    fn default() -> Self {
        Self { r_min: 8.0 }
    }
}

/// The single input image plus its sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image: RgbImage,
    pub rois: Vec<Polygon>,
    pub reverse: bool,
    pub samples: Vec<SampleCircle>,
    pub image_id: String,
}

impl AnnotatedImage {
    pub fn width(&self) -> usize {
        self.image.width() as usize
    }

    pub fn height(&self) -> usize {
        self.image.height() as usize
    }

    /// Builds the document form, recording `image_path` as the image reference.
    pub fn to_document(&self, image_path: &str) -> AnnotationDoc {
        AnnotationDoc {
            image: image_path.to_string(),
            reverse: self.reverse,
            rois: self.rois.clone(),
            samples: self.samples.clone(),
        }
    }

    /// Validates the geometry against the image and assembles the annotation.
    pub fn from_document(
        doc: AnnotationDoc,
        image: RgbImage,
        image_id: impl Into<String>,
        opts: &AnnotationOptions,
    ) -> Result<Self, AnnotationError> {
        let a = AnnotatedImage {
            image,
            rois: doc.rois,
            reverse: doc.reverse,
            samples: doc.samples,
            image_id: image_id.into(),
        };
        let report = validate_with(&a, opts);
        match report.errors.into_iter().next() {
            Some(finding) => Err(AnnotationError::InvariantViolation(finding)),
            None => Ok(a),
        }
    }

    /// Copy of the annotation with all geometry scaled by `(sx, sy)`; the image is left untouched.
    /// Sample radii scale by `min(sx, sy)` so every scaled circle stays inside the scaled sample.
    pub fn scaled_geometry(&self, sx: f64, sy: f64) -> (Vec<Polygon>, Vec<SampleCircle>) {
        let rois = self.rois.iter().map(|p| p.scaled(sx, sy)).collect();
        let samples = self
            .samples
            .iter()
            .map(|c| SampleCircle::new(c.cx * sx, c.cy * sy, c.r * sx.min(sy)))
            .collect();
        (rois, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "index", rename_all = "snake_case")]
pub enum Entity {
    Document,
    Polygon(usize),
    Sample(usize),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Document => write!(f, "document"),
            Entity::Polygon(i) => write!(f, "rois[{i}]"),
            Entity::Sample(i) => write!(f, "samples[{i}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    NoPolygons,
    TooFewVertices,
    NonFiniteCoordinate,
    VertexOutOfBounds,
    SelfIntersecting,
    NoSamples,
    RadiusBelowMinimum,
    CircleOutOfBounds,
    CenterOutsideRoi,
    CenterInsideHealthyRegion,
    SampleCountOutsideRange,
    SmallPolygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub entity: Entity,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("cannot read annotation {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed annotation: {0}")]
    Malformed(String),
    #[error("image {path} is missing or cannot be decoded: {reason}")]
    MissingImage { path: PathBuf, reason: String },
    #[error("invariant violated at {0}")]
    InvariantViolation(Finding),
    #[error("polygon {index} covers no pixel at {width}x{height}")]
    DegeneratePolygon {
        index: usize,
        width: usize,
        height: usize,
    },
}

/// Parses an annotation document; the image path is resolved against `base_dir`.
pub fn parse_annotation(
    raw: &[u8],
    base_dir: &Path,
    opts: &AnnotationOptions,
) -> Result<AnnotatedImage, AnnotationError> {
    let doc = parse_document(raw)?;
    let path = base_dir.join(&doc.image);
    let image = image::open(&path)
        .map_err(|e| AnnotationError::MissingImage {
            path: path.clone(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    let image_id = Path::new(&doc.image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| doc.image.clone());
    AnnotatedImage::from_document(doc, image, image_id, opts)
}

pub fn parse_document(raw: &[u8]) -> Result<AnnotationDoc, AnnotationError> {
    let text = std::str::from_utf8(raw).map_err(|e| AnnotationError::Malformed(e.to_string()))?;
    serde_json::from_str(text).map_err(|e| AnnotationError::Malformed(e.to_string()))
}

/// Reads an annotation file; relative image paths resolve against the file's directory.
pub fn load_annotation(path: &Path, opts: &AnnotationOptions) -> Result<AnnotatedImage, AnnotationError> {
    let raw = std::fs::read(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_annotation(&raw, base, opts)
}

pub fn validate(a: &AnnotatedImage) -> ValidationReport {
    validate_with(a, &AnnotationOptions::default())
}

pub fn validate_with(a: &AnnotatedImage, opts: &AnnotationOptions) -> ValidationReport {
    validate_geometry(&a.rois, &a.samples, a.reverse, a.width(), a.height(), opts)
}

/// Checks every annotation invariant against an image of `width × height`.
pub fn validate_geometry(
    rois: &[Polygon],
    samples: &[SampleCircle],
    reverse: bool,
    width: usize,
    height: usize,
    opts: &AnnotationOptions,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (w, h) = (width as f64, height as f64);
    let mut error = |entity, rule, message: String| {
        report.errors.push(Finding {
            entity,
            rule,
            message,
        })
    };

    if rois.is_empty() {
        error(Entity::Document, Rule::NoPolygons, "at least one polygon is required".into());
    }
    let mut geometry_ok = true;
    for (i, p) in rois.iter().enumerate() {
        let e = Entity::Polygon(i);
        if p.vertices.len() < 3 {
            error(e, Rule::TooFewVertices, format!("{} vertices, need at least 3", p.vertices.len()));
            geometry_ok = false;
            continue;
        }
        if p.vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            error(e, Rule::NonFiniteCoordinate, "non-finite vertex coordinate".into());
            geometry_ok = false;
            continue;
        }
        if let Some((k, v)) = p
            .vertices
            .iter()
            .enumerate()
            .find(|(_, v)| !(v[0] >= 0.0 && v[0] < w && v[1] >= 0.0 && v[1] < h))
        {
            error(
                e,
                Rule::VertexOutOfBounds,
                format!("vertex {k} ({}, {}) outside [0,{width})x[0,{height})", v[0], v[1]),
            );
        }
        if !p.is_simple() {
            error(e, Rule::SelfIntersecting, "polygon edges intersect".into());
        }
    }

    if samples.is_empty() {
        error(Entity::Document, Rule::NoSamples, "at least one sample circle is required".into());
    }
    for (i, c) in samples.iter().enumerate() {
        let e = Entity::Sample(i);
        if ![c.cx, c.cy, c.r].iter().all(|v| v.is_finite()) {
            error(e, Rule::NonFiniteCoordinate, "non-finite circle parameter".into());
            continue;
        }
        if c.r < opts.r_min || c.r <= 0.0 {
            error(e, Rule::RadiusBelowMinimum, format!("radius {} below minimum {}", c.r, opts.r_min));
        }
        if c.cx - c.r < 0.0 || c.cx + c.r > w || c.cy - c.r < 0.0 || c.cy + c.r > h {
            error(
                e,
                Rule::CircleOutOfBounds,
                format!("circle ({}, {}, r={}) leaves the {width}x{height} image", c.cx, c.cy, c.r),
            );
        }
        if geometry_ok && !rois.is_empty() {
            let inside = union_contains(rois, c.cx, c.cy);
            if !reverse && !inside {
                error(e, Rule::CenterOutsideRoi, "center lies outside every ROI polygon".into());
            } else if reverse && inside {
                error(
                    e,
                    Rule::CenterInsideHealthyRegion,
                    "reverse mode: center lies inside the sketched healthy region".into(),
                );
            }
        }
    }

    let (lo, hi) = SAMPLE_COUNT_RANGE;
    let n = samples.len();
    if n >= 1 && (n < lo || n > hi) {
        let side = if n < lo { "below" } else { "above" };
        report.warnings.push(Finding {
            entity: Entity::Document,
            rule: Rule::SampleCountOutsideRange,
            message: format!("sample count {n} {side} recommended range {lo}-{hi}"),
        });
    }
    for (i, p) in rois.iter().enumerate() {
        if p.vertices.len() >= 3 && p.area() < SMALL_POLYGON_FRACTION * w * h {
            report.warnings.push(Finding {
                entity: Entity::Polygon(i),
                rule: Rule::SmallPolygon,
                message: format!("polygon area {:.1} px is below 0.1% of the image", p.area()),
            });
        }
    }
    report
}

/// Rasterizes the sketched region at `out_size = (height, width)`, carrying the
/// native-resolution polygons along by uniform scaling. In reverse mode this is
/// still the sketched (healthy) region.
pub fn rasterize_roi(a: &AnnotatedImage, out_size: (usize, usize)) -> Result<Mask, AnnotationError> {
    let (out_h, out_w) = out_size;
    let sx = out_w as f64 / a.width() as f64;
    let sy = out_h as f64 / a.height() as f64;
    let mut mask = Mask::filled(out_w, out_h, false);
    for (index, p) in a.rois.iter().enumerate() {
        let scaled = p.scaled(sx, sy);
        let single = rasterize_polygons(std::slice::from_ref(&scaled), out_w, out_h);
        if single.count() == 0 {
            return Err(AnnotationError::DegeneratePolygon {
                index,
                width: out_w,
                height: out_h,
            });
        }
        mask.union_with(&single);
    }
    Ok(mask)
}
