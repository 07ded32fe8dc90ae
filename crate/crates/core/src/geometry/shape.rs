use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Element of the symmetry group of the square (d = 2): the identity, the three
/// quarter-turn rotations, and the four reflections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryOp {
    Identity,
    /// Counterclockwise rotation by π/2.
    Rot90,
    Rot180,
    Rot270,
    /// Reflection across `{x₁ = 0}`.
    ReflectX1,
    /// Reflection across `{x₂ = 0}`.
    ReflectX2,
    /// Reflection across the diagonal `x₁ = x₂`.
    ReflectDiag,
    /// Reflection across the anti-diagonal `x₁ = -x₂`.
    ReflectAntiDiag,
}

impl SymmetryOp {
    pub const ALL: [SymmetryOp; 8] = [
        SymmetryOp::Identity,
        SymmetryOp::Rot90,
        SymmetryOp::Rot180,
        SymmetryOp::Rot270,
        SymmetryOp::ReflectX1,
        SymmetryOp::ReflectX2,
        SymmetryOp::ReflectDiag,
        SymmetryOp::ReflectAntiDiag,
    ];

    /// Row-major integer matrix of the isometry.
    pub fn matrix(self) -> [[f64; 2]; 2] {
        use SymmetryOp::*;
        match self {
            Identity => [[1.0, 0.0], [0.0, 1.0]],
            Rot90 => [[0.0, -1.0], [1.0, 0.0]],
            Rot180 => [[-1.0, 0.0], [0.0, -1.0]],
            Rot270 => [[0.0, 1.0], [-1.0, 0.0]],
            ReflectX1 => [[-1.0, 0.0], [0.0, 1.0]],
            ReflectX2 => [[1.0, 0.0], [0.0, -1.0]],
            ReflectDiag => [[0.0, 1.0], [1.0, 0.0]],
            ReflectAntiDiag => [[0.0, -1.0], [-1.0, 0.0]],
        }
    }

    pub fn nalgebra(self) -> nalgebra::DMatrix<f64> {
        let m = self.matrix();
        nalgebra::DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
    }

    pub fn apply(self, p: Point) -> Point {
        let m = self.matrix();
        [m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]]
    }

    pub fn apply_inverse(self, p: Point) -> Point {
        self.inverse().apply(p)
    }

    pub fn is_reflection(self) -> bool {
        let m = self.matrix();
        m[0][0] * m[1][1] - m[0][1] * m[1][0] < 0.0
    }

    pub fn compose(self, then: SymmetryOp) -> SymmetryOp {
        // then ∘ self
        let a = self.matrix();
        let b = then.matrix();
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = b[i][0] * a[0][j] + b[i][1] * a[1][j];
            }
        }
        *SymmetryOp::ALL.iter().find(|op| op.matrix() == c).expect("D4 is closed")
    }

    pub fn inverse(self) -> SymmetryOp {
        *SymmetryOp::ALL
            .iter()
            .find(|op| self.compose(**op) == SymmetryOp::Identity)
            .expect("D4 has inverses")
    }
}

/// A simple, positively oriented polygon in reference coordinates, centered at
/// the center of its bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionShape {
    pub id: String,
    pub vertices: Vec<Point>,
}

impl InclusionShape {
    /// Validates and normalizes: checks simplicity, orients counterclockwise and
    /// recenters the bounding box at the origin.
    pub fn new(id: impl Into<String>, vertices: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!("shape {id:?} needs at least 3 vertices")));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Geometry(format!("shape {id:?} has non-finite coordinates")));
        }
        let mut v = vertices;
        let a = signed_area(&v);
        if a.abs() < 1e-14 {
            return Err(Error::Geometry(format!("shape {id:?} is degenerate (zero area)")));
        }
        if a < 0.0 {
            v.reverse();
        }
        if let Some((i, j)) = self_intersection(&v) {
            return Err(Error::Geometry(format!("shape {id:?} is not simple: edges {i} and {j} intersect")));
        }
        Ok(Self { id, vertices: recenter(v) })
    }

    pub fn rectangle(id: impl Into<String>, l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0) {
            return Err(Error::Geometry("rectangle sides must be positive".into()));
        }
        let (a, b) = (l1 / 2.0, l2 / 2.0);
        Self::new(id, vec![[-a, -b], [a, -b], [a, b], [-a, b]])
    }

    pub fn square(id: impl Into<String>, side: f64) -> Result<Self> {
        Self::rectangle(id, side, side)
    }

    /// Regular `n`-gon inscribed in the circle of the given radius.
    pub fn disk(id: impl Into<String>, radius: f64, n: usize) -> Result<Self> {
        if !(radius > 0.0) || n < 3 {
            return Err(Error::Geometry("disk needs positive radius and n >= 3".into()));
        }
        let v = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        Self::new(id, v)
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d2: f64 = 0.0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                d2 = d2.max(dist2(v[i], v[j]));
            }
        }
        d2.sqrt()
    }

    /// Per-coordinate extent `(sup − inf)` of the polygon.
    pub fn extent(&self) -> Point {
        let (lo, hi) = bbox(&self.vertices);
        [hi[0] - lo[0], hi[1] - lo[1]]
    }

    /// The shift vector moving the per-coordinate infimum to the origin.
    pub fn shift_vector(&self) -> Point {
        let (lo, _) = bbox(&self.vertices);
        [-lo[0], -lo[1]]
    }

    /// Vertex-wise image under the isometry, re-oriented and re-centered.
    pub fn apply_symmetry(&self, op: SymmetryOp) -> InclusionShape {
        let mut v: Vec<Point> = self.vertices.iter().map(|&p| op.apply(p)).collect();
        if op.is_reflection() {
            v.reverse();
        }
        InclusionShape { id: self.id.clone(), vertices: recenter(v) }
    }

    pub fn scaled(&self, r: f64) -> InclusionShape {
        InclusionShape {
            id: self.id.clone(),
            vertices: self.vertices.iter().map(|p| [p[0] * r, p[1] * r]).collect(),
        }
    }

    /// Image under `x ↦ offset + scale·op(x)`.
    pub fn placed(&self, op: SymmetryOp, scale: f64, offset: Point) -> Vec<Point> {
        let s = self.apply_symmetry(op);
        s.vertices.iter().map(|p| [offset[0] + scale * p[0], offset[1] + scale * p[1]]).collect()
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(&self.vertices, p)
    }
}

pub(crate) fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

pub fn bbox(v: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in v {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn recenter(v: Vec<Point>) -> Vec<Point> {
    let (lo, hi) = bbox(&v);
    let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    v.into_iter().map(|p| [p[0] - c[0], p[1] - c[1]]).collect()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

fn self_intersection(v: &[Point]) -> Option<(usize, usize)> {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = (v[i], v[(i + 1) % n]);
            let (c, d) = (v[j], v[(j + 1) % n]);
            if adjacent {
                // adjacent edges may only share their common vertex
                let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(p, shared, q) == 0.0 && dot_from(shared, p, q) > 0.0 {
                    return Some((i, j));
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

// (p - o)·(q - o)
fn dot_from(o: Point, p: Point, q: Point) -> f64 {
    (p[0] - o[0]) * (q[0] - o[0]) + (p[1] - o[1]) * (q[1] - o[1])
}

/// Even-odd point-in-polygon test (boundary points may go either way).
pub fn point_in_polygon(v: &[Point], p: Point) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1]]).sqrt()
}

/// Distance between two polygons; zero if they intersect or one contains the other.
pub fn polygon_distance(p: &[Point], q: &[Point]) -> f64 {
    let (np, nq) = (p.len(), q.len());
    for i in 0..np {
        for j in 0..nq {
            if segments_intersect(p[i], p[(i + 1) % np], q[j], q[(j + 1) % nq]) {
                return 0.0;
            }
        }
    }
    if point_in_polygon(q, p[0]) || point_in_polygon(p, q[0]) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for i in 0..np {
        for j in 0..nq {
            d = d.min(point_segment_distance(p[i], q[j], q[(j + 1) % nq]));
            d = d.min(point_segment_distance(q[j], p[i], p[(i + 1) % np]));
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn same_vertex_set(a: &[Point], b: &[Point]) -> bool {
        a.len() == b.len()
            && a.iter().all(|p| b.iter().any(|q| dist2(*p, *q) < 1e-24))
    }

    #[test]
    fn rotation_swaps_rectangle_sides() {
        let r = InclusionShape::rectangle("q", 0.2, 0.4).unwrap();
        let e = r.apply_symmetry(SymmetryOp::Rot90).extent();
        assert!((e[0] - 0.4).abs() < 1e-15 && (e[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn reflection_of_symmetric_shape_is_congruent() {
        let r = InclusionShape::rectangle("q", 0.2, 0.4).unwrap();
        let s = r.apply_symmetry(SymmetryOp::ReflectX1);
        assert!(same_vertex_set(&r.vertices, &s.vertices));
        assert!(s.area() > 0.0);
    }

    #[test]
    fn group_relations() {
        let mut op = SymmetryOp::Identity;
        for _ in 0..4 {
            op = op.compose(SymmetryOp::Rot90);
        }
        assert_eq!(op, SymmetryOp::Identity);
        assert_eq!(SymmetryOp::ReflectX1.compose(SymmetryOp::ReflectX2), SymmetryOp::Rot180);
        for op in SymmetryOp::ALL {
            assert_eq!(op.compose(op.inverse()), SymmetryOp::Identity);
        }
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(InclusionShape::new("bow", vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(InclusionShape::new("line", vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
        assert!(InclusionShape::new("two", vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
        // clockwise input gets reoriented
        let cw = InclusionShape::new("cw", vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(cw.area() > 0.0);
    }

    #[test]
    fn disk_and_distances() {
        let d = InclusionShape::disk("d", 0.2, 64).unwrap();
        assert!((d.diameter() - 0.4).abs() < 1e-12);
        let a = InclusionShape::square("a", 1.0).unwrap().vertices;
        let b: Vec<Point> = a.iter().map(|p| [p[0] + 3.0, p[1]]).collect();
        assert!((polygon_distance(&a, &b) - 2.0).abs() < 1e-14);
        let c: Vec<Point> = a.iter().map(|p| [p[0] + 0.5, p[1]]).collect();
        assert_eq!(polygon_distance(&a, &c), 0.0);
    }

    fn arb_star() -> impl Strategy<Value = InclusionShape> {
        prop::collection::vec(0.05f64..0.2, 5..12).prop_map(|radii| {
            let n = radii.len();
            let v = radii
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    [r * t.cos(), r * t.sin()]
                })
                .collect();
            InclusionShape::new("star", v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn symmetry_preserves_area_and_diameter(s in arb_star(), k in 0usize..8) {
            let op = SymmetryOp::ALL[k];
            let t = s.apply_symmetry(op);
            prop_assert!((t.area() - s.area()).abs() <= 1e-12 * s.area());
            prop_assert!((t.diameter() - s.diameter()).abs() <= 1e-12 * s.diameter());
        }

        #[test]
        fn four_quarter_turns_restore_vertices(s in arb_star()) {
            let mut t = s.clone();
            for _ in 0..4 { t = t.apply_symmetry(SymmetryOp::Rot90); }
            prop_assert!(same_vertex_set(&s.vertices, &t.vertices));
        }
    }
}
