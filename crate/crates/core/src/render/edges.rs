use crate::grid::Mask;

/// Foreground pixels with at least one 4-neighbor that is background or outside the frame.
pub fn inner_boundary(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    Mask::from_fn(w, h, |x, y| {
        if !*mask.get(x, y) {
            return false;
        }
        x == 0 || y == 0 || x + 1 == w || y + 1 == h
            || !*mask.get(x - 1, y)
            || !*mask.get(x + 1, y)
            || !*mask.get(x, y - 1)
            || !*mask.get(x, y + 1)
    })
}

/// Square (Chebyshev) dilation by `radius`, separable.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let rows = Mask::from_fn(w, h, |x, y| {
        let lo = x.saturating_sub(radius);
        let hi = (x + radius).min(w - 1);
        (lo..=hi).any(|xx| *mask.get(xx, y))
    });
    Mask::from_fn(w, h, |x, y| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        (lo..=hi).any(|yy| *rows.get(x, yy))
    })
}

/// Edge map of a binary mask: the inner boundary dilated to `thickness` pixels,
/// i.e. every pixel within Chebyshev distance `(thickness - 1) / 2` of a boundary pixel.
pub fn derive_edge_map(mask: &Mask, thickness: usize) -> Mask {
    dilate(&inner_boundary(mask), thickness.saturating_sub(1) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_edges() {
        assert_eq!(derive_edge_map(&Mask::filled(12, 9, false), 3).count(), 0);
    }

    #[test]
    fn square_ring() {
        let m = Mask::from_fn(32, 32, |x, y| (11..21).contains(&x) && (11..21).contains(&y));
        assert_eq!(derive_edge_map(&m, 1).count(), 36);
        // thickness 3: the 12x12 dilated box minus the 6x6 core two pixels in.
        assert_eq!(derive_edge_map(&m, 3).count(), 144 - 36);
    }

    #[test]
    fn full_frame_border_ring() {
        let e = derive_edge_map(&Mask::filled(10, 8, true), 1);
        assert_eq!(e.count(), 2 * 10 + 2 * 6);
        assert!(!e.get(5, 4));
    }
}
