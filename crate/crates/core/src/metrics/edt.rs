use crate::grid::Mask;

const INF: i64 = i64::MAX / 4;

/// 1-D squared distance transform (lower envelope of parabolas); sites with
/// infinite cost are skipped.
fn dt_1d(f: &[i64], out: &mut [i64], v: &mut [usize], z: &mut [f64]) {
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64 / (2.0 * (q as f64 - p as f64))
    };
    let mut sites = f.iter().enumerate().filter(|(_, &c)| c < INF).map(|(q, _)| q);
    let Some(first) = sites.next() else {
        out.fill(INF);
        return;
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in sites {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as i64 - p as i64;
        *o = d * d + f[p];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest foreground pixel.
pub fn squared_distance(mask: &Mask) -> Vec<i64> {
    let (w, h) = mask.dims();
    let n = w.max(h);
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut cols = vec![INF; w * h];
    let mut f = vec![0i64; h];
    let mut out = vec![0i64; h];
    for x in 0..w {
        for y in 0..h {
            f[y] = if *mask.get(x, y) { 0 } else { INF };
        }
        dt_1d(&f, &mut out, &mut v, &mut z);
        for y in 0..h {
            cols[y * w + x] = out[y];
        }
    }
    let mut result = vec![INF; w * h];
    let mut out = vec![0i64; w];
    for y in 0..h {
        let row = &cols[y * w..(y + 1) * w];
        dt_1d(row, &mut out, &mut v, &mut z);
        result[y * w..(y + 1) * w].copy_from_slice(&out);
    }
    result
}

fn isqrt(n: i64) -> i64 {
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Distance to, and row-major index of, the nearest foreground pixel. Among
/// equidistant candidates the smallest index wins. `None` for an empty mask.
pub fn nearest_foreground(mask: &Mask) -> Option<(Vec<f64>, Vec<usize>)> {
    if mask.count() == 0 {
        return None;
    }
    let (w, h) = mask.dims();
    let d2 = squared_distance(mask);
    let mut dist = vec![0.0; w * h];
    let mut index = vec![0usize; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = d2[i];
            dist[i] = (d as f64).sqrt();
            if d == 0 {
                index[i] = i;
                continue;
            }
            // Candidates lie on the lattice circle of radius sqrt(d); scan them in
            // row-major order and take the first foreground one.
            let r = isqrt(d);
            let mut found = None;
            'rows: for dy in -r..=r {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                let rem = d - dy * dy;
                let dx = isqrt(rem);
                if dx * dx != rem {
                    continue;
                }
                for xx in [x as i64 - dx, x as i64 + dx] {
                    if xx >= 0 && xx < w as i64 && *mask.get(xx as usize, yy as usize) {
                        found = Some(yy as usize * w + xx as usize);
                        break 'rows;
                    }
                }
            }
            index[i] = found.expect("a foreground pixel at the transform distance");
        }
    }
    Some((dist, index))
}
