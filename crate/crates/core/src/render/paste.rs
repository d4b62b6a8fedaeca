use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::edges::derive_edge_map;
use super::seeds::{LesionSeed, SeedSet};
use super::{RenderConfig, RenderError};
use crate::grid::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub seed_index: usize,
    /// Top-left corner of the seed patch in the rendered image.
    pub x: usize,
    pub y: usize,
}

/// One rendered training triple plus its placement log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub image: RgbImage,
    pub mask: Mask,
    pub edge: Mask,
    pub placements: Vec<Placement>,
    /// Seed indices drawn but dropped after `max_paste_attempts` overlapping positions.
    pub skipped: Vec<usize>,
}

fn overlaps(occupied: &Mask, seed: &LesionSeed, tx: usize, ty: usize) -> bool {
    for y in 0..seed.height() {
        for x in 0..seed.width() {
            if *seed.mask.get(x, y) && *occupied.get(tx + x, ty + y) {
                return true;
            }
        }
    }
    false
}

/// Hard-pastes a random number of seeds at random non-overlapping positions.
pub fn paste_seeds<R: Rng + ?Sized>(
    base: &RgbImage,
    seeds: &SeedSet,
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<TrainingSample, RenderError> {
    if seeds.is_empty() {
        return Err(RenderError::Config("seed set is empty".into()));
    }
    let (w, h) = (base.width() as usize, base.height() as usize);
    let mut image = base.clone();
    let mut occupied = Mask::filled(w, h, false);
    let mut placements = Vec::new();
    let mut skipped = Vec::new();

    let (lo, hi) = cfg.pastes_per_image_range;
    let count = rng.random_range(lo..=hi);
    for _ in 0..count {
        let seed_index = rng.random_range(0..seeds.len());
        let seed = &seeds.seeds[seed_index];
        if seed.width() > w || seed.height() > h {
            skipped.push(seed_index);
            continue;
        }
        let mut placed = None;
        for _ in 0..cfg.max_paste_attempts {
            let tx = rng.random_range(0..=w - seed.width());
            let ty = rng.random_range(0..=h - seed.height());
            if !overlaps(&occupied, seed, tx, ty) {
                placed = Some((tx, ty));
                break;
            }
        }
        let Some((tx, ty)) = placed else {
            skipped.push(seed_index);
            continue;
        };
        for y in 0..seed.height() {
            for x in 0..seed.width() {
                if *seed.mask.get(x, y) {
                    occupied.set(tx + x, ty + y, true);
                    image.put_pixel((tx + x) as u32, (ty + y) as u32, *seed.texture.get_pixel(x as u32, y as u32));
                }
            }
        }
        placements.push(Placement {
            seed_index,
            x: tx,
            y: ty,
        });
    }
    if placements.is_empty() {
        return Err(RenderError::NoPlacementPossible { sample: None });
    }
    let edge = derive_edge_map(&occupied, cfg.edge_thickness);
    Ok(TrainingSample {
        image,
        mask: occupied,
        edge,
        placements,
        skipped,
    })
}

/// Rebuilds the union of placed seed masks from a placement log.
pub fn mask_from_placements(seed_masks: &[Mask], placements: &[Placement], width: usize, height: usize) -> Mask {
    let mut out = Mask::filled(width, height, false);
    for p in placements {
        let m = &seed_masks[p.seed_index];
        for y in 0..m.height() {
            for x in 0..m.width() {
                if *m.get(x, y) {
                    out.set(p.x + x, p.y + y, true);
                }
            }
        }
    }
    out
}
