//! Synthetic test image: a textured, irregular lesion on a distinct noisy
//! background, with a matching sketch (one loose polygon, four sample circles)
//! and the exact lesion mask.

use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::annotation::{AnnotatedImage, Polygon, SampleCircle};
use crate::grid::Mask;
use crate::render::stream_rng;

pub const PHANTOM_SIZE: usize = 256;

pub struct Phantom {
    pub annotated: AnnotatedImage,
    pub ground_truth: Mask,
}

/// Lesion radius at angle `theta` for base radius `r0`.
fn lesion_radius(r0: f64, theta: f64) -> f64 {
    r0 * (1.0 + 0.2 * (3.0 * theta).sin() + 0.1 * (5.0 * theta).cos())
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Builds the phantom deterministically from `seed`.
pub fn phantom(seed: u64) -> Phantom {
    let mut rng = stream_rng(seed, 0x7068_616e_746f_6d);
    let size = PHANTOM_SIZE as f64;
    let (cx, cy) = (size / 2.0 + rng.random_range(-8.0..8.0), size / 2.0 + rng.random_range(-8.0..8.0));
    let r0 = 58.0;
    let phase = rng.random_range(0.0..2.0 * PI);
    let inside = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (dx * dx + dy * dy).sqrt() <= lesion_radius(r0, dy.atan2(dx) + phase)
    };

    let ground_truth = Mask::from_fn(PHANTOM_SIZE, PHANTOM_SIZE, |x, y| inside(x as f64 + 0.5, y as f64 + 0.5));
    let mut image = RgbImage::new(PHANTOM_SIZE as u32, PHANTOM_SIZE as u32);
    for (x, y, px) in image.enumerate_pixels_mut() {
        let (fx, fy) = (x as f64, y as f64);
        let n: f64 = rng.random_range(-1.0..1.0);
        *px = if *ground_truth.get(x as usize, y as usize) {
            // Purple mottled texture.
            let t = 0.5 + 0.5 * (fx * 0.45).sin() * (fy * 0.38).cos();
            Rgb([
                clamp_u8(140.0 + 30.0 * t + 12.0 * n),
                clamp_u8(60.0 + 20.0 * t + 10.0 * n),
                clamp_u8(150.0 + 25.0 * t + 12.0 * n),
            ])
        } else {
            // Pink mucosa with slow shading.
            let shade = 10.0 * ((fx + fy) * 0.03).sin();
            Rgb([
                clamp_u8(228.0 + shade + 12.0 * n),
                clamp_u8(168.0 + shade + 12.0 * n),
                clamp_u8(160.0 + shade + 12.0 * n),
            ])
        };
    }

    // A rough polygon a little outside the lesion boundary.
    let vertices = (0..12)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / 12.0;
            let r = lesion_radius(r0, theta + phase) * 1.18 + 8.0 + rng.random_range(0.0..4.0);
            [cx + r * theta.cos(), cy + r * theta.sin()]
        })
        .collect();
    let samples = (0..4)
        .map(|i| {
            let theta = PI / 4.0 + PI / 2.0 * i as f64;
            SampleCircle::new(cx + 20.0 * theta.cos(), cy + 20.0 * theta.sin(), 16.0 + (i % 3) as f64)
        })
        .collect();
    Phantom {
        annotated: AnnotatedImage {
            image,
            rois: vec![Polygon { vertices }],
            reverse: false,
            samples,
            image_id: "phantom".into(),
        },
        ground_truth,
    }
}
