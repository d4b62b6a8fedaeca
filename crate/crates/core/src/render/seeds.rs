//! Cutting sample circles into circle and equilateral-triangle lesion seeds.

use std::f64::consts::{PI, TAU};

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RenderConfig, RenderError};
use crate::annotation::SampleCircle;
use crate::grid::Mask;

/// Seeds covering fewer pixels than this are redrawn.
pub const MIN_SEED_PIXELS: usize = 9;

/// Redraws allowed per seed before giving up with [`RenderError::SeedTooSmall`].
const MAX_SEED_DRAWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedShape {
    Circle { radius: f64 },
    /// `orientation` is the angle of the first vertex, in radians.
    EquilateralTriangle { side: f64, orientation: f64 },
}

impl SeedShape {
    /// Radius of the smallest centered circle containing the shape.
    pub fn circumradius(&self) -> f64 {
        match *self {
            SeedShape::Circle { radius } => radius,
            SeedShape::EquilateralTriangle { side, .. } => side / 3f64.sqrt(),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            SeedShape::Circle { radius } => PI * radius * radius,
            SeedShape::EquilateralTriangle { side, .. } => 3f64.sqrt() / 4.0 * side * side,
        }
    }

    /// Pixel-center inclusion test for a shape centered at `(cx, cy)`.
    pub fn contains(&self, cx: f64, cy: f64, x: f64, y: f64) -> bool {
        match *self {
            SeedShape::Circle { radius } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= radius * radius
            }
            SeedShape::EquilateralTriangle { orientation, .. } => {
                let r = self.circumradius();
                let v: [[f64; 2]; 3] = std::array::from_fn(|k| {
                    let a = orientation + TAU * k as f64 / 3.0;
                    [cx + r * a.cos(), cy + r * a.sin()]
                });
                let side = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                let d0 = side(v[0], v[1]);
                let d1 = side(v[1], v[2]);
                let d2 = side(v[2], v[0]);
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
        }
    }

    /// Footprint of the shape centered at `(cx, cy)` on an image grid, clipped to
    /// `width × height` and cropped to its tight bounding box. Returns the mask and
    /// the box origin, or `None` when no pixel center is covered.
    pub fn footprint(&self, cx: f64, cy: f64, width: usize, height: usize) -> Option<(Mask, (usize, usize))> {
        let r = self.circumradius();
        let x0 = ((cx - r - 0.5).floor().max(0.0)) as usize;
        let y0 = ((cy - r - 0.5).floor().max(0.0)) as usize;
        let x1 = ((cx + r + 0.5).ceil().max(0.0) as usize).min(width);
        let y1 = ((cy + r + 0.5).ceil().max(0.0) as usize).min(height);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        let full = Mask::from_fn(x1 - x0, y1 - y0, |x, y| {
            self.contains(cx, cy, (x0 + x) as f64 + 0.5, (y0 + y) as f64 + 0.5)
        });
        let (mut bx0, mut by0, mut bx1, mut by1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..full.height() {
            for x in 0..full.width() {
                if *full.get(x, y) {
                    bx0 = bx0.min(x);
                    by0 = by0.min(y);
                    bx1 = bx1.max(x + 1);
                    by1 = by1.max(y + 1);
                }
            }
        }
        if bx0 == usize::MAX {
            return None;
        }
        let cropped = Mask::from_fn(bx1 - bx0, by1 - by0, |x, y| *full.get(bx0 + x, by0 + y));
        Some((cropped, (x0 + bx0, y0 + by0)))
    }
}

/// One paste unit: a textured shape cut from a sample circle.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSeed {
    pub shape: SeedShape,
    /// Texture pixels; only those under `mask` are meaningful.
    pub texture: RgbImage,
    pub mask: Mask,
    pub source_index: usize,
    /// Shape center in source-image coordinates.
    pub center: [f64; 2],
    /// Top-left of the patch in the source image.
    pub origin: (usize, usize),
}

impl LesionSeed {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.count()
    }

    pub fn descriptor(&self) -> SeedDescriptor {
        SeedDescriptor {
            shape: self.shape,
            source_index: self.source_index,
            center: self.center,
            origin: [self.origin.0, self.origin.1],
            size: [self.width(), self.height()],
            pixels: self.pixel_count(),
        }
    }
}

/// Serializable geometry of a seed, enough to re-rasterize its mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDescriptor {
    pub shape: SeedShape,
    pub source_index: usize,
    pub center: [f64; 2],
    pub origin: [usize; 2],
    pub size: [usize; 2],
    pub pixels: usize,
}

impl SeedDescriptor {
    /// Re-rasterizes the seed mask from its recorded geometry.
    pub fn mask(&self) -> Mask {
        let [ox, oy] = self.origin;
        Mask::from_fn(self.size[0], self.size[1], |x, y| {
            self.shape.contains(
                self.center[0],
                self.center[1],
                (ox + x) as f64 + 0.5,
                (oy + y) as f64 + 0.5,
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedSet {
    pub seeds: Vec<LesionSeed>,
}

impl SeedSet {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn circles(&self) -> usize {
        self.seeds
            .iter()
            .filter(|s| matches!(s.shape, SeedShape::Circle { .. }))
            .count()
    }

    pub fn triangles(&self) -> usize {
        self.len() - self.circles()
    }
}

fn draw_scale<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Cuts `samples.len() × seeds_per_sample` seeds out of `image`. Even global
/// indices are circles, odd ones triangles, so circles get the extra one when the
/// total is odd. Sizes are drawn uniformly from `seed_scale_range` times the source
/// radius (triangles by circumradius) and centers uniformly over the positions
/// that keep the shape inside its source circle.
pub fn extract_seeds<R: Rng + ?Sized>(
    image: &RgbImage,
    samples: &[SampleCircle],
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<SeedSet, RenderError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut seeds = Vec::with_capacity(samples.len() * cfg.seeds_per_sample);
    for (si, src) in samples.iter().enumerate() {
        if PI * src.r * src.r < MIN_SEED_PIXELS as f64 {
            return Err(RenderError::SourceTooSmall {
                sample: si,
                radius: src.r,
            });
        }
        for j in 0..cfg.seeds_per_sample {
            let global = si * cfg.seeds_per_sample + j;
            let mut draws = 0;
            let seed = loop {
                draws += 1;
                let extent = draw_scale(rng, cfg.seed_scale_range) * src.r;
                let shape = if global % 2 == 0 {
                    SeedShape::Circle { radius: extent }
                } else {
                    SeedShape::EquilateralTriangle {
                        side: extent * 3f64.sqrt(),
                        orientation: rng.random_range(0.0..TAU),
                    }
                };
                let max_offset = (src.r - extent).max(0.0);
                let (dist, phi) = if max_offset > 0.0 {
                    (max_offset * rng.random::<f64>().sqrt(), rng.random_range(0.0..TAU))
                } else {
                    (0.0, 0.0)
                };
                let center = [src.cx + dist * phi.cos(), src.cy + dist * phi.sin()];
                if let Some((mask, origin)) = shape.footprint(center[0], center[1], w, h) {
                    if mask.count() >= MIN_SEED_PIXELS {
                        let texture = RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
                            *image.get_pixel(origin.0 as u32 + x, origin.1 as u32 + y)
                        });
                        break LesionSeed {
                            shape,
                            texture,
                            mask,
                            source_index: si,
                            center,
                            origin,
                        };
                    }
                }
                if draws >= MAX_SEED_DRAWS {
                    return Err(RenderError::SeedTooSmall { sample: si, seed: j });
                }
            };
            seeds.push(seed);
        }
    }
    Ok(SeedSet { seeds })
}
