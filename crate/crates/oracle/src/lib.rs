//! Slow, literal reference implementations used as test oracles.
//!
//! Everything here works on plain row-major slices and is written
//! independently of the production kernels in `yoho-core`: per-pixel loops,
//! brute-force searches, no shared helpers.

pub mod geometry {
    /// PNPOLY ray casting with pixel-center sampling over a `w × h` raster.
    pub fn raster_union(polygons: &[Vec<[f64; 2]>], w: usize, h: usize) -> Vec<bool> {
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                out[y * w + x] = polygons.iter().any(|p| point_in_polygon(p, px, py));
            }
        }
        out
    }

    pub fn point_in_polygon(poly: &[[f64; 2]], px: f64, py: f64) -> bool {
        let n = poly.len();
        let mut c = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (poly[i][0], poly[i][1]);
            let (xj, yj) = (poly[j][0], poly[j][1]);
            if ((yi > py) != (yj > py)) && (px < (xj - xi) * (py - yi) / (yj - yi) + xi) {
                c = !c;
            }
            j = i;
        }
        c
    }
}

pub mod morphology {
    /// Edge pixels by direct neighborhood scan: a pixel is on the edge when some
    /// pixel within Chebyshev distance `(t-1)/2` is foreground with a background
    /// (or out-of-frame) 4-neighbor.
    pub fn edge_map(mask: &[bool], w: usize, h: usize, thickness: usize) -> Vec<bool> {
        let r = (thickness.max(1) - 1) / 2;
        let fg = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask[y as usize * w + x as usize];
        let boundary = |x: i64, y: i64| {
            fg(x, y) && (!fg(x - 1, y) || !fg(x + 1, y) || !fg(x, y - 1) || !fg(x, y + 1))
        };
        let mut out = vec![false; w * h];
        let r = r as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                'scan: for dy in -r..=r {
                    for dx in -r..=r {
                        if boundary(x + dx, y + dy) {
                            out[y as usize * w + x as usize] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        out
    }

    /// Max minus min over the in-frame 3×3 neighborhood.
    pub fn morphological_gradient(map: &[f64], w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        lo = lo.min(map[yy * w + xx]);
                        hi = hi.max(map[yy * w + xx]);
                    }
                }
                out[y * w + x] = hi - lo;
            }
        }
        out
    }
}

pub mod losses {
    const EPS: f64 = 1e-7;

    fn clamp(p: f64) -> f64 {
        p.clamp(EPS, 1.0 - EPS)
    }

    /// μ1·BCE + μ2·Dice over pixels where `valid` is set.
    pub fn seg_loss(pred: &[f64], target: &[f64], valid: &[bool], mu1: f64, mu2: f64) -> f64 {
        let mut bce = 0.0;
        let mut n = 0.0;
        let mut inter = 0.0;
        let mut sp = 0.0;
        let mut st = 0.0;
        for i in 0..pred.len() {
            if !valid[i] {
                continue;
            }
            let p = clamp(pred[i]);
            let t = target[i];
            bce += -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            n += 1.0;
            inter += p * t;
            sp += p;
            st += t;
        }
        mu1 * bce / n + mu2 * (1.0 - 2.0 * inter / (sp + st + EPS))
    }

    /// Class-balanced cross entropy for one image; falls back to plain BCE when the
    /// valid target is single-class.
    pub fn wce(pred: &[f64], target: &[f64], valid: &[bool]) -> f64 {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for i in 0..pred.len() {
            if valid[i] {
                if target[i] > 0.5 {
                    pos += 1.0;
                } else {
                    neg += 1.0;
                }
            }
        }
        let total = pos + neg;
        let (wp, wn) = if pos == 0.0 || neg == 0.0 { (1.0, 1.0) } else { (neg / total, pos / total) };
        let mut sum = 0.0;
        for i in 0..pred.len() {
            if !valid[i] {
                continue;
            }
            let p = clamp(pred[i]);
            let t = target[i];
            sum += -(wp * t * p.ln() + wn * (1.0 - t) * (1.0 - p).ln());
        }
        sum / total
    }

    pub fn consistency(e_prime: &[f64], e_hat: &[f64], tau: f64, valid: &[bool]) -> f64 {
        let target: Vec<f64> = e_hat.iter().map(|&v| if v >= tau { 1.0 } else { 0.0 }).collect();
        wce(e_prime, &target, valid)
    }
}

pub mod metrics {
    /// `(dice, iou, recall, precision)` by counting.
    pub fn region(p: &[bool], g: &[bool]) -> (f64, f64, f64, f64) {
        let mut tp = 0.0;
        let mut np = 0.0;
        let mut ng = 0.0;
        let mut union = 0.0;
        for i in 0..p.len() {
            if p[i] && g[i] {
                tp += 1.0;
            }
            if p[i] {
                np += 1.0;
            }
            if g[i] {
                ng += 1.0;
            }
            if p[i] || g[i] {
                union += 1.0;
            }
        }
        let dice = 2.0 * tp / (np + ng);
        let iou = tp / union;
        let recall = tp / ng;
        let precision = if np == 0.0 { 0.0 } else { tp / np };
        (dice, iou, recall, precision)
    }

    pub fn mae(s: &[f64], g: &[bool]) -> f64 {
        let mut sum = 0.0;
        for i in 0..s.len() {
            sum += (s[i] - if g[i] { 1.0 } else { 0.0 }).abs();
        }
        sum / s.len() as f64
    }

    /// Weighted F-measure, transcribed step by step from the reference MATLAB
    /// routine: nearest-foreground error propagation (ties go to the smallest
    /// row-major index), 7×7 σ=5 Gaussian with zero padding, distance-based
    /// importance `2 - exp(ln(0.5)/5 · d)`.
    pub fn weighted_fmeasure(s: &[f64], g: &[bool], w: usize, h: usize, beta2: f64) -> f64 {
        let n = w * h;
        let eps = f64::EPSILON;
        let gd: Vec<f64> = g.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let e: Vec<f64> = (0..n).map(|i| (s[i] - gd[i]).abs()).collect();

        // bwdist with nearest index, brute force.
        let fg: Vec<usize> = (0..n).filter(|&i| g[i]).collect();
        let mut dst = vec![0.0; n];
        let mut idx = vec![0usize; n];
        for i in 0..n {
            if g[i] {
                dst[i] = 0.0;
                idx[i] = i;
                continue;
            }
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            let mut best = i64::MAX;
            let mut best_j = 0;
            for &j in &fg {
                let (jx, jy) = ((j % w) as i64, (j / w) as i64);
                let d2 = (jx - x) * (jx - x) + (jy - y) * (jy - y);
                if d2 < best {
                    best = d2;
                    best_j = j;
                }
            }
            dst[i] = (best as f64).sqrt();
            idx[i] = best_j;
        }

        let mut et = e.clone();
        for i in 0..n {
            if !g[i] {
                et[i] = e[idx[i]];
            }
        }

        // fspecial('gaussian', 7, 5)
        let mut k = [[0.0f64; 7]; 7];
        let mut ksum = 0.0;
        for (a, row) in k.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                let (dy, dx) = (a as f64 - 3.0, b as f64 - 3.0);
                *v = (-(dx * dx + dy * dy) / (2.0 * 25.0)).exp();
                ksum += *v;
            }
        }
        // imfilter: correlation, zero padding, same size.
        let mut ea = vec![0.0; n];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for a in 0..7i64 {
                    for b in 0..7i64 {
                        let (yy, xx) = (y + a - 3, x + b - 3);
                        if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                            acc += k[a as usize][b as usize] / ksum * et[yy as usize * w + xx as usize];
                        }
                    }
                }
                ea[y as usize * w + x as usize] = acc;
            }
        }

        let mut min_e_ea = e.clone();
        for i in 0..n {
            if g[i] && ea[i] < e[i] {
                min_e_ea[i] = ea[i];
            }
        }
        let mut b = vec![1.0; n];
        for i in 0..n {
            if !g[i] {
                b[i] = 2.0 - ((0.5f64).ln() / 5.0 * dst[i]).exp();
            }
        }
        let ew: Vec<f64> = (0..n).map(|i| min_e_ea[i] * b[i]).collect();

        let mut tpw = 0.0;
        let mut fpw = 0.0;
        let mut sum_ew_g = 0.0;
        let mut count_g = 0.0;
        for i in 0..n {
            if g[i] {
                tpw += gd[i];
                sum_ew_g += ew[i];
                count_g += 1.0;
            } else {
                fpw += ew[i];
            }
        }
        tpw -= sum_ew_g;
        let r = 1.0 - sum_ew_g / count_g;
        let p = tpw / (eps + tpw + fpw);
        (1.0 + beta2) * (r * p) / (eps + r + beta2 * p)
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Sample standard deviation (N-1), zero for fewer than two values.
    fn std1(v: &[f64]) -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
    }

    fn s_object(pred: &[f64], gt: &[bool]) -> f64 {
        let vals: Vec<f64> = pred.iter().zip(gt).filter(|(_, &g)| g).map(|(&p, _)| p).collect();
        let x = mean(&vals);
        let sigma = std1(&vals);
        2.0 * x / (x * x + 1.0 + sigma + f64::EPSILON)
    }

    fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
        let n = pred.len() as f64;
        if pred.is_empty() {
            return 0.0;
        }
        let x = mean(pred);
        let y = mean(gt);
        let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
        if pred.len() > 1 {
            for i in 0..pred.len() {
                sx += (pred[i] - x) * (pred[i] - x);
                sy += (gt[i] - y) * (gt[i] - y);
                sxy += (pred[i] - x) * (gt[i] - y);
            }
            sx /= n - 1.0;
            sy /= n - 1.0;
            sxy /= n - 1.0;
        }
        let alpha = 4.0 * x * y * sxy;
        let beta = (x * x + y * y) * (sx + sy);
        if alpha != 0.0 {
            alpha / (beta + f64::EPSILON)
        } else if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn matlab_round(v: f64) -> f64 {
        v.round()
    }

    /// Structure measure with MATLAB-style 1-based centroid rounding.
    pub fn s_measure(s: &[f64], g: &[bool], w: usize, h: usize, alpha: f64) -> f64 {
        let n = (w * h) as f64;
        let fg_count = g.iter().filter(|&&v| v).count() as f64;
        let y_mean = fg_count / n;
        if y_mean == 0.0 {
            return 1.0 - mean(s);
        }
        if y_mean == 1.0 {
            return mean(s);
        }
        // Object term.
        let fg_pred: Vec<f64> = (0..w * h).map(|i| if g[i] { s[i] } else { 0.0 }).collect();
        let bg_pred: Vec<f64> = (0..w * h).map(|i| if g[i] { 0.0 } else { 1.0 - s[i] }).collect();
        let not_g: Vec<bool> = g.iter().map(|&v| !v).collect();
        let o_fg = s_object(&fg_pred, g);
        let o_bg = s_object(&bg_pred, &not_g);
        let object = y_mean * o_fg + (1.0 - y_mean) * o_bg;

        // Region term: centroid in 1-based coordinates.
        let mut sum_x = 0.0;
        let mut sum_y = 0.0;
        for yy in 0..h {
            for xx in 0..w {
                if g[yy * w + xx] {
                    sum_x += (xx + 1) as f64;
                    sum_y += (yy + 1) as f64;
                }
            }
        }
        let cx = matlab_round(sum_x / fg_count) as usize;
        let cy = matlab_round(sum_y / fg_count) as usize;
        let quad = |x0: usize, x1: usize, y0: usize, y1: usize| {
            let mut p = Vec::new();
            let mut q = Vec::new();
            for yy in y0..y1 {
                for xx in x0..x1 {
                    p.push(s[yy * w + xx]);
                    q.push(if g[yy * w + xx] { 1.0 } else { 0.0 });
                }
            }
            (p, q)
        };
        let area = n;
        let w1 = (cx * cy) as f64 / area;
        let w2 = ((w - cx) * cy) as f64 / area;
        let w3 = (cx * (h - cy)) as f64 / area;
        let w4 = 1.0 - w1 - w2 - w3;
        let (p1, g1) = quad(0, cx, 0, cy);
        let (p2, g2) = quad(cx, w, 0, cy);
        let (p3, g3) = quad(0, cx, cy, h);
        let (p4, g4) = quad(cx, w, cy, h);
        let region = w1 * ssim(&p1, &g1) + w2 * ssim(&p2, &g2) + w3 * ssim(&p3, &g3) + w4 * ssim(&p4, &g4);
        let q = alpha * object + (1.0 - alpha) * region;
        q.max(0.0)
    }

    /// Enhanced-alignment score of one binary map against `g`.
    pub fn e_measure_binary(fm: &[bool], g: &[bool]) -> f64 {
        let n = fm.len();
        let dfm: Vec<f64> = fm.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let dgt: Vec<f64> = g.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let sum_gt: f64 = dgt.iter().sum();
        let enhanced: Vec<f64> = if sum_gt == 0.0 {
            dfm.iter().map(|v| 1.0 - v).collect()
        } else if sum_gt == n as f64 {
            dfm.clone()
        } else {
            let mu_fm = mean(&dfm);
            let mu_gt = mean(&dgt);
            (0..n)
                .map(|i| {
                    let a = dfm[i] - mu_fm;
                    let b = dgt[i] - mu_gt;
                    let align = 2.0 * (b * a) / (b * b + a * a + f64::EPSILON);
                    (align + 1.0) * (align + 1.0) / 4.0
                })
                .collect()
        };
        enhanced.iter().sum::<f64>() / n as f64
    }

    /// Per-threshold scores for t = k/255, binarizing with `s >= t`.
    pub fn e_measure_curve(s: &[f64], g: &[bool]) -> Vec<f64> {
        (0..=255)
            .map(|k| {
                let t = k as f64 / 255.0;
                let fm: Vec<bool> = s.iter().map(|&v| v >= t).collect();
                e_measure_binary(&fm, g)
            })
            .collect()
    }

    pub fn e_measure_max(s: &[f64], g: &[bool]) -> f64 {
        e_measure_curve(s, g).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Deterministic fixture generator (SplitMix64) so oracle fixtures need no RNG crate.
pub struct Fixture(u64);

impl Fixture {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// A blobby ground truth (union of random discs) and a noisy soft prediction of it.
    pub fn saliency_pair(&mut self, w: usize, h: usize) -> (Vec<f64>, Vec<bool>) {
        let discs = 1 + (self.next_u64() % 3) as usize;
        let mut g = vec![false; w * h];
        for _ in 0..discs {
            let cx = self.unit() * w as f64;
            let cy = self.unit() * h as f64;
            let r = 2.0 + self.unit() * (w.min(h) as f64 / 3.0);
            for y in 0..h {
                for x in 0..w {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        g[y * w + x] = true;
                    }
                }
            }
        }
        let noise = self.unit() * 0.6;
        let s = g
            .iter()
            .map(|&v| {
                let base = if v { 0.8 } else { 0.15 };
                (base + noise * (self.unit() - 0.5) * 2.0).clamp(0.0, 1.0)
            })
            .collect();
        (s, g)
    }
}
