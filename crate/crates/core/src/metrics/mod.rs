//! Evaluation measures for binary segmentation and soft saliency maps.
//!
//! Degenerate ground truth conventions (the ones used by the measures' original
//! releases):
//!
//! | measure        | G empty                    | G full        |
//! |----------------|----------------------------|---------------|
//! | region metrics | see [`region_metrics`]     | regular       |
//! | F^w            | error (`EmptyGroundTruth`) | regular       |
//! | S_alpha        | `1 - mean(S)`              | `mean(S)`     |
//! | E_phi          | `1 - mean(FM)`             | `mean(FM)`    |

mod edt;
mod report;

use serde::{Deserialize, Serialize};

pub use edt::{nearest_foreground, squared_distance};
pub use report::{evaluate_run, MetricsReport, MetricsRow, PairIssue};

use crate::grid::{Map, Mask};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error("ground truth has no foreground")]
    EmptyGroundTruth,
}

/// Parameters echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Object/region balance of the structure measure.
    pub alpha: f64,
    pub beta2: f64,
    /// Binarization threshold for the region metrics.
    pub threshold: f64,
    /// Number of thresholds `k / (levels - 1)` scanned by the E-measure.
    pub e_levels: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta2: 1.0,
            threshold: 0.5,
            e_levels: 256,
        }
    }
}

fn check_dims<A, B>(a: &crate::grid::Grid<A>, b: &crate::grid::Grid<B>) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::Shape(a.dims(), b.dims()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub dice: f64,
    pub iou: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Dice, IoU, recall and precision of `p` against `g`.
///
/// Empty `g`: all four are 1 when `p` is empty too; otherwise dice, IoU and
/// precision are 0 and recall is 1.
pub fn region_metrics(p: &Mask, g: &Mask) -> Result<RegionMetrics, MetricError> {
    check_dims(p, g)?;
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
        tp += (a && b) as usize;
        np += a as usize;
        ng += b as usize;
    }
    if ng == 0 {
        if np == 0 {
            return Ok(RegionMetrics {
                dice: 1.0,
                iou: 1.0,
                recall: 1.0,
                precision: 1.0,
            });
        }
        log::warn!("empty ground truth with nonempty prediction; recall reported as 1");
        return Ok(RegionMetrics {
            dice: 0.0,
            iou: 0.0,
            recall: 1.0,
            precision: 0.0,
        });
    }
    let (tp, np, ng) = (tp as f64, np as f64, ng as f64);
    let iou = tp / (np + ng - tp);
    Ok(RegionMetrics {
        // Same value as 2tp / (np + ng).
        dice: 2.0 * iou / (1.0 + iou),
        iou,
        recall: tp / ng,
        precision: if np == 0.0 { 0.0 } else { tp / np },
    })
}

pub fn mae(s: &Map, g: &Mask) -> Result<f64, MetricError> {
    check_dims(s, g)?;
    if s.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = s
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(&v, &b)| (v - if b { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(sum / s.len() as f64)
}

/// Normalized 1-D Gaussian taps; the 2-D 7×7 σ=5 kernel is their outer product.
fn gaussian_taps() -> [f64; 7] {
    let mut k = [0.0; 7];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 3.0;
        *v = (-(d * d) / 50.0).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Same-size correlation with the 7×7 Gaussian, zero padding, done separably.
fn gaussian_filter(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = gaussian_taps();
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let xx = x as i64 + t as i64 - 3;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * data[y * w + xx as usize];
                }
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let yy = y as i64 + t as i64 - 3;
                if yy >= 0 && (yy as usize) < h {
                    acc += kv * rows[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Weighted F-measure: errors outside G are replaced by the error of the nearest
/// G pixel, smoothed inside G with a Gaussian dependency kernel, and weighted by
/// distance to G before forming weighted precision and recall.
pub fn weighted_fmeasure(s: &Map, g: &Mask, beta2: f64) -> Result<f64, MetricError> {
    check_dims(s, g)?;
    let (w, h) = g.dims();
    let (dist, nearest) = nearest_foreground(g).ok_or(MetricError::EmptyGroundTruth)?;
    let eps = f64::EPSILON;
    let gs = g.as_slice();
    let e: Vec<f64> = s
        .as_slice()
        .iter()
        .zip(gs)
        .map(|(&v, &b)| (v - if b { 1.0 } else { 0.0 }).abs())
        .collect();
    let et: Vec<f64> = (0..w * h).map(|i| if gs[i] { e[i] } else { e[nearest[i]] }).collect();
    let ea = gaussian_filter(&et, w, h);
    let decay = 0.5f64.ln() / 5.0;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut ew_g = 0.0;
    let mut n_g = 0.0;
    for i in 0..w * h {
        if gs[i] {
            let m = if ea[i] < e[i] { ea[i] } else { e[i] };
            ew_g += m;
            tp += 1.0;
            n_g += 1.0;
        } else {
            fp += e[i] * (2.0 - (decay * dist[i]).exp());
        }
    }
    tp -= ew_g;
    let r = 1.0 - ew_g / n_g;
    let p = tp / (eps + tp + fp);
    Ok((1.0 + beta2) * (r * p) / (eps + r + beta2 * p))
}

struct Stats {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Stats {
    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    /// Sample standard deviation; 0 for fewer than two values.
    fn std(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n * m * m) / (self.n - 1.0)).max(0.0).sqrt()
    }
}

fn s_object_score(stats: &Stats) -> f64 {
    let x = stats.mean();
    2.0 * x / (x * x + 1.0 + stats.std() + f64::EPSILON)
}

/// SSIM of one quadrant, with `(1, 0)` conventions for empty/constant blocks.
fn block_ssim(s: &Map, g: &Mask, x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            sx += s.get(x, y);
            sy += if *g.get(x, y) { 1.0 } else { 0.0 };
        }
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    if n > 1.0 {
        for y in y0..y1 {
            for x in x0..x1 {
                let a = s.get(x, y) - mx;
                let b = if *g.get(x, y) { 1.0 } else { 0.0 } - my;
                vx += a * a;
                vy += b * b;
                cxy += a * b;
            }
        }
        vx /= n - 1.0;
        vy /= n - 1.0;
        cxy /= n - 1.0;
    }
    let alpha = 4.0 * mx * my * cxy;
    let beta = (mx * mx + my * my) * (vx + vy);
    if alpha != 0.0 {
        alpha / (beta + f64::EPSILON)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Structure measure `alpha * S_object + (1 - alpha) * S_region`, clamped at 0.
pub fn s_measure(s: &Map, g: &Mask, alpha: f64) -> Result<f64, MetricError> {
    check_dims(s, g)?;
    let (w, h) = g.dims();
    let n = (w * h) as f64;
    let fg = g.count() as f64;
    if fg == 0.0 {
        return Ok(1.0 - s.mean());
    }
    if fg == n {
        return Ok(s.mean());
    }
    // Object term: statistics of S over G, and of 1 - S over the background.
    let mut obj_fg = Stats { n: 0.0, sum: 0.0, sum_sq: 0.0 };
    let mut obj_bg = Stats { n: 0.0, sum: 0.0, sum_sq: 0.0 };
    let (mut cx, mut cy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = *s.get(x, y);
            if *g.get(x, y) {
                obj_fg.n += 1.0;
                obj_fg.sum += v;
                obj_fg.sum_sq += v * v;
                cx += (x + 1) as f64;
                cy += (y + 1) as f64;
            } else {
                let b = 1.0 - v;
                obj_bg.n += 1.0;
                obj_bg.sum += b;
                obj_bg.sum_sq += b * b;
            }
        }
    }
    let u = fg / n;
    let object = u * s_object_score(&obj_fg) + (1.0 - u) * s_object_score(&obj_bg);

    // Region term: split at the (1-based, rounded) centroid of G.
    let cx = (cx / fg).round() as usize;
    let cy = (cy / fg).round() as usize;
    let w1 = (cx * cy) as f64 / n;
    let w2 = ((w - cx) * cy) as f64 / n;
    let w3 = (cx * (h - cy)) as f64 / n;
    let w4 = 1.0 - w1 - w2 - w3;
    let region = w1 * block_ssim(s, g, 0, cx, 0, cy)
        + w2 * block_ssim(s, g, cx, w, 0, cy)
        + w3 * block_ssim(s, g, 0, cx, cy, h)
        + w4 * block_ssim(s, g, cx, w, cy, h);
    Ok((alpha * object + (1.0 - alpha) * region).max(0.0))
}

/// Largest `k` in `0..levels` with `v >= k / (levels - 1)`, or `None` when `v < 0`.
fn top_level(v: f64, levels: usize) -> Option<usize> {
    let last = (levels - 1) as f64;
    let mut k = (v * last).floor().clamp(-1.0, last) as i64;
    while k + 1 <= last as i64 && v >= (k + 1) as f64 / last {
        k += 1;
    }
    while k >= 0 && v < k as f64 / last {
        k -= 1;
    }
    (k >= 0).then_some(k as usize)
}

/// Enhanced-alignment score at each threshold `k / (levels - 1)`, binarizing with `S >= t`.
pub fn e_measure_curve(s: &Map, g: &Mask, levels: usize) -> Result<Vec<f64>, MetricError> {
    check_dims(s, g)?;
    assert!(levels >= 2, "at least two threshold levels");
    let n = s.len() as f64;
    // Per threshold, the pixels at or above it split by G.
    let mut hist_fg = vec![0usize; levels];
    let mut hist_bg = vec![0usize; levels];
    for (&v, &b) in s.as_slice().iter().zip(g.as_slice()) {
        if let Some(k) = top_level(v, levels) {
            if b {
                hist_fg[k] += 1;
            } else {
                hist_bg[k] += 1;
            }
        }
    }
    let n_g = g.count() as f64;
    let mut out = vec![0.0; levels];
    let (mut tp, mut fp) = (0.0, 0.0);
    for k in (0..levels).rev() {
        tp += hist_fg[k] as f64;
        fp += hist_bg[k] as f64;
        let n_fm = tp + fp;
        out[k] = if n_g == 0.0 {
            1.0 - n_fm / n
        } else if n_g == n {
            n_fm / n
        } else {
            let mu_fm = n_fm / n;
            let mu_g = n_g / n;
            let enhanced = |fm: f64, gt: f64| {
                let a = fm - mu_fm;
                let b = gt - mu_g;
                let align = 2.0 * (b * a) / (b * b + a * a + f64::EPSILON);
                (align + 1.0) * (align + 1.0) / 4.0
            };
            let fn_ = n_g - tp;
            let tn = n - n_g - fp;
            (tp * enhanced(1.0, 1.0) + fp * enhanced(1.0, 0.0) + fn_ * enhanced(0.0, 1.0) + tn * enhanced(0.0, 0.0)) / n
        };
    }
    Ok(out)
}

/// Maximum of [`e_measure_curve`] over the 256-level threshold grid.
pub fn e_measure_max(s: &Map, g: &Mask) -> Result<f64, MetricError> {
    Ok(e_measure_curve(s, g, 256)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}
