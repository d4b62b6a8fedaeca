use serde::{Deserialize, Serialize};

/// A polygon in pixel coordinates, implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    /// Closed edges `(v[i], v[i+1 mod n])`.
    pub fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let twice: f64 = self
            .edges()
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum();
        twice.abs() / 2.0
    }

    /// Even-odd test for a single polygon.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > y) != (b[1] > y) && x < crossing_x(a, b, y) {
                inside = !inside;
            }
        }
        inside
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> Polygon {
        Polygon::new(self.vertices.iter().map(|v| [v[0] * sx, v[1] * sy]).collect())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon::new(self.vertices.iter().map(|v| [v[0] + dx, v[1] + dy]).collect())
    }

    /// `false` when any two non-adjacent edges touch, adjacent edges fold back
    /// on each other, or an edge has zero length.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        if edges.iter().any(|(a, b)| a == b) {
            return false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (p1, p2) = edges[i];
                let (q1, q2) = edges[j];
                if adjacent {
                    // Adjacent edges share one endpoint; they only conflict when collinear and overlapping.
                    let shared = if j == i + 1 { p2 } else { p1 };
                    let (a, b) = if j == i + 1 { (p1, q2) } else { (p2, q1) };
                    if orientation(a, shared, b) == 0.0 && on_same_ray(shared, a, b) {
                        return false;
                    }
                } else if segments_touch(p1, p2, q1, q2) {
                    return false;
                }
            }
        }
        true
    }
}

/// x coordinate where segment `a-b` crosses the horizontal line at `y`.
/// Shared by every even-odd test so that scanline fill and the per-point test agree bit-for-bit.
#[inline]
pub(crate) fn crossing_x(a: [f64; 2], b: [f64; 2], y: f64) -> f64 {
    (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1]) + a[0]
}

/// Even-odd containment per polygon, union across polygons.
pub fn union_contains(polygons: &[Polygon], x: f64, y: f64) -> bool {
    polygons.iter().any(|p| p.contains(x, y))
}

fn orientation(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Both `a` and `b` lie on the same side of `origin` along their common line.
fn on_same_ray(origin: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let da = [a[0] - origin[0], a[1] - origin[1]];
    let db = [b[0] - origin[0], b[1] - origin[1]];
    da[0] * db[0] + da[1] * db[1] > 0.0
}

fn segments_touch(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        Polygon::new(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
    }

    #[test]
    fn area_and_containment() {
        let sq = square();
        assert_eq!(sq.area(), 100.0);
        assert!(sq.contains(5.0, 5.0));
        assert!(!sq.contains(15.0, 5.0));
    }

    #[test]
    fn simplicity() {
        assert!(square().is_simple());
        let bowtie = Polygon::new(vec![[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]]);
        assert!(!bowtie.is_simple());
        let spike = Polygon::new(vec![[0.0, 0.0], [10.0, 0.0], [5.0, 0.0], [5.0, 5.0]]);
        assert!(!spike.is_simple());
        let dup = Polygon::new(vec![[0.0, 0.0], [0.0, 0.0], [5.0, 0.0], [5.0, 5.0]]);
        assert!(!dup.is_simple());
        let tri = Polygon::new(vec![[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]]);
        assert!(tri.is_simple());
    }
}
