//! Scanline polygon fill.
//!
//! A pixel `(x, y)` is filled iff its center `(x + 0.5, y + 0.5)` is inside
//! the polygon under the even-odd rule. Intersections are computed with the
//! same expression as [`Polygon::contains`], so the fill and the point test
//! agree on every pixel.

use super::geometry::{crossing_x, Polygon};
use crate::grid::Mask;

/// ORs the even-odd fill of `polygon` into `mask`.
pub fn fill_polygon(mask: &mut Mask, polygon: &Polygon) {
    let (width, height) = mask.dims();
    if polygon.vertices.len() < 3 || width == 0 {
        return;
    }
    let (min_y, max_y) = polygon
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v[1]), hi.max(v[1]))
        });
    let row_lo = (min_y - 0.5).floor().max(0.0) as usize;
    let row_hi = ((max_y - 0.5).ceil().max(-1.0) + 1.0).min(height as f64) as usize;
    let mut xs: Vec<f64> = Vec::with_capacity(polygon.vertices.len());
    for y in row_lo..row_hi {
        let yc = y as f64 + 0.5;
        xs.clear();
        for (a, b) in polygon.edges() {
            if (a[1] > yc) != (b[1] > yc) {
                xs.push(crossing_x(a, b, yc));
            }
        }
        xs.sort_by(|a, b| a.total_cmp(b));
        // Center xc is inside iff an odd number of crossings lie strictly right of it,
        // i.e. xs[2k] <= xc < xs[2k+1].
        for span in xs.chunks_exact(2) {
            let (lo, hi) = (span[0], span[1]);
            let start = (lo - 0.5).floor().max(0.0) as usize;
            let mut x = start;
            while x < width {
                let xc = x as f64 + 0.5;
                if xc >= hi {
                    break;
                }
                if xc >= lo {
                    mask.set(x, y, true);
                }
                x += 1;
            }
        }
    }
}

/// Union of the even-odd fills of all polygons.
pub fn rasterize_polygons(polygons: &[Polygon], width: usize, height: usize) -> Mask {
    let mut mask = Mask::filled(width, height, false);
    for p in polygons {
        fill_polygon(&mut mask, p);
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_rectangle() {
        let rect = Polygon::new(vec![[10.0, 5.0], [20.0, 5.0], [20.0, 15.0], [10.0, 15.0]]);
        let m = rasterize_polygons(&[rect], 32, 32);
        assert_eq!(m.count(), 100);
        assert!(*m.get(10, 5));
        assert!(*m.get(19, 14));
        assert!(!m.get(20, 5));
        assert!(!m.get(10, 15));
    }

    #[test]
    fn whole_frame() {
        let frame = Polygon::new(vec![[0.0, 0.0], [16.0, 0.0], [16.0, 12.0], [0.0, 12.0]]);
        assert_eq!(rasterize_polygons(&[frame], 16, 12).count(), 16 * 12);
    }

    #[test]
    fn polygon_partly_outside_is_clipped() {
        let p = Polygon::new(vec![[-5.0, -5.0], [5.0, -5.0], [5.0, 5.0], [-5.0, 5.0]]);
        assert_eq!(rasterize_polygons(&[p], 8, 8).count(), 25);
    }
}
