//! One-image-one-network lesion segmentation.
//!
//! From a single endoscopy image and a clinician sketch (ROI polygons plus a
//! few circular texture samples) the pipeline renders a synthetic training set
//! of pasted circle/triangle lesion seeds, trains an edge-enhanced UNet on it,
//! and applies the network back to the same image.

pub mod annotation;
pub mod config;
pub mod grid;
pub mod infer;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod pipeline;
pub mod render;
pub mod train;
