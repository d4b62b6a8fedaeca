//! Applying the trained network back to the annotated image.

use candle_core::DType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::annotation::{rasterize_roi, AnnotatedImage, AnnotationError};
use crate::grid::{Map, Mask};
use crate::model::{images_to_tensor, tensor_to_map, Model, ModelError};
use crate::render::resize_rgb;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferOptions {
    pub threshold: f64,
    /// Zero the map outside the sketched lesion region (inside it, in reverse mode).
    pub roi_gating: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            roi_gating: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

impl From<candle_core::Error> for InferError {
    fn from(e: candle_core::Error) -> Self {
        InferError::Model(ModelError::Candle(e))
    }
}

/// Produces a lesion-probability map for an RGB image, at any resolution.
pub trait Segmenter {
    fn segment(&self, image: &RgbImage) -> Result<Map, InferError>;
}

/// A trained network plus the input size it was trained at.
pub struct NetworkSegmenter {
    pub model: Model,
    /// `(height, width)`.
    pub input_size: (usize, usize),
}

impl Segmenter for NetworkSegmenter {
    fn segment(&self, image: &RgbImage) -> Result<Map, InferError> {
        let (h, w) = self.input_size;
        let resized = resize_rgb(image, w, h);
        let params = self.model.params();
        let x = images_to_tensor(&[&resized], params.device(), DType::F32)?;
        let out = self.model.forward(&x)?;
        Ok(tensor_to_map(&out.s_hat, 0)?)
    }
}

/// Outputs the same value everywhere.
pub struct ConstantSegmenter {
    pub value: f64,
    pub size: (usize, usize),
}

impl Segmenter for ConstantSegmenter {
    fn segment(&self, _: &RgbImage) -> Result<Map, InferError> {
        Ok(Map::filled(self.size.1, self.size.0, self.value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatingRecord {
    pub enabled: bool,
    pub reverse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Native-resolution lesion probability before gating (already inverted in reverse mode).
    pub raw_map: Map,
    /// `raw_map` after gating.
    pub prob_map: Map,
    pub binary_mask: Mask,
    pub threshold: f64,
    pub gating: GatingRecord,
}

/// The region the lesion may occupy: the sketched polygons, or their complement
/// in reverse mode.
pub fn lesion_region(a: &AnnotatedImage) -> Result<Mask, AnnotationError> {
    let roi = rasterize_roi(a, (a.height(), a.width()))?;
    Ok(if a.reverse { roi.map(|&v| !v) } else { roi })
}

/// Turns a network-resolution map into the native-resolution result: inversion in
/// reverse mode, bilinear upsampling, gating, thresholding.
pub fn postprocess(net_map: &Map, a: &AnnotatedImage, opts: &InferOptions) -> Result<SegmentationResult, AnnotationError> {
    let oriented = if a.reverse { net_map.map(|&v| 1.0 - v) } else { net_map.clone() };
    let raw_map = oriented.resize_bilinear(a.width(), a.height());
    let prob_map = if opts.roi_gating {
        let region = lesion_region(a)?;
        raw_map.zip_map(&region, |&v, &keep| if keep { v } else { 0.0 })
    } else {
        raw_map.clone()
    };
    let binary_mask = prob_map.threshold(opts.threshold);
    Ok(SegmentationResult {
        raw_map,
        prob_map,
        binary_mask,
        threshold: opts.threshold,
        gating: GatingRecord {
            enabled: opts.roi_gating,
            reverse: a.reverse,
        },
    })
}

pub fn infer(a: &AnnotatedImage, segmenter: &dyn Segmenter, opts: &InferOptions) -> Result<SegmentationResult, InferError> {
    let net_map = segmenter.segment(&a.image)?;
    Ok(postprocess(&net_map, a, opts)?)
}
