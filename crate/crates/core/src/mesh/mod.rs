//! Triangulation of the study domain and point-to-vertex projection.
//!
//! The mesh has a fine inner region (the domain polygon) and a coarser outer
//! extension out to the domain's bounding box dilated by `offset`. Delaunay
//! insertion is delegated to `spade`; refinement repeatedly splits the longest
//! edge that exceeds the bound of its region until every edge complies.

mod project;

pub use project::{Locator, Projector};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use spade::handles::FixedVertexHandle;
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Simple polygon given by its vertices in order (either orientation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    pub fn rectangle(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self(vec![[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.0
    }

    pub fn area(&self) -> f64 {
        let v = &self.0;
        let n = v.len();
        let mut s = 0.0;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            s += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * libm::fabs(s)
    }

    /// Even-odd ray casting; boundary points may go either way.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.0;
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

    pub fn bounding_box(&self) -> [f64; 4] {
        bounding_box(&self.0)
    }
}

/// `[xmin, ymin, xmax, ymax]`.
pub fn bounding_box(points: &[Point]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    b
}

fn dist(a: Point, b: Point) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Mesh construction settings (lengths in km).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub max_edge_inner: f64,
    pub max_edge_outer: f64,
    pub offset: f64,
    pub max_vertices: usize,
}

impl MeshParams {
    pub const DEFAULT_MAX_VERTICES: usize = 20_000;

    pub fn new(max_edge_inner: f64, max_edge_outer: f64, offset: f64) -> Self {
        Self { max_edge_inner, max_edge_outer, offset, max_vertices: Self::DEFAULT_MAX_VERTICES }
    }
}

/// Triangulation with region metadata and a point locator.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    inner_boundary: Polygon,
    outer_boundary: Polygon,
    locator: Locator,
}

impl Mesh {
    /// Assembles a mesh from raw parts; triangles are reoriented
    /// counter-clockwise and degenerate ones rejected.
    pub fn from_parts(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        inner_boundary: Polygon,
        outer_boundary: Polygon,
    ) -> Result<Self> {
        let mut used = vec![false; vertices.len()];
        for t in &mut triangles {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::DegenerateInput("triangle references a missing vertex".into()));
            }
            let a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if libm::fabs(a) <= 1e-12 {
                return Err(Error::DegenerateInput("degenerate triangle".into()));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
            t.iter().for_each(|&v| used[v] = true);
        }
        if triangles.is_empty() || used.iter().any(|u| !u) {
            return Err(Error::DegenerateInput("every vertex must belong to a triangle".into()));
        }
        let locator = Locator::new(&vertices, &triangles);
        Ok(Self { vertices, triangles, inner_boundary, outer_boundary, locator })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn inner_boundary(&self) -> &Polygon {
        &self.inner_boundary
    }

    pub fn outer_boundary(&self) -> &Polygon {
        &self.outer_boundary
    }

    pub fn locator(&self) -> &Locator {
        &self.locator
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Whether triangle `t` belongs to the fine inner region.
    pub fn is_inner_triangle(&self, t: usize) -> bool {
        let [a, b, c] = self.triangle_points(t);
        let g = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        self.inner_boundary.contains(g)
    }

    /// Unique undirected edges `(lo, hi)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| {
                [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].map(|(a, b)| (a.min(b), a.max(b)))
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn edge_length(&self, e: (usize, usize)) -> f64 {
        dist(self.vertices[e.0], self.vertices[e.1])
    }

    /// Diagonal of the inner region's bounding box.
    pub fn domain_diameter(&self) -> f64 {
        let b = self.inner_boundary.bounding_box();
        libm::hypot(b[2] - b[0], b[3] - b[1])
    }

    /// Number of connected components of the vertex graph.
    pub fn connected_components(&self) -> usize {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for (a, b) in self.edges() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

fn subdivide(a: Point, b: Point, max_len: f64) -> Vec<Point> {
    let k = libm::ceil(dist(a, b) / max_len).max(1.0) as usize;
    (0..k)
        .map(|i| {
            let t = i as f64 / k as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

fn subdivide_ring(ring: &[Point], max_len: f64) -> Vec<Point> {
    let n = ring.len();
    (0..n).flat_map(|i| subdivide(ring[i], ring[(i + 1) % n], max_len)).collect()
}

/// Builds a refined triangulation covering `domain` and every seed point.
///
/// The outer boundary is the bounding box of the domain and seeds, dilated by
/// `params.offset`. Inner-region triangles (centroid inside `domain`) keep all
/// edges at or below `max_edge_inner`; the rest at or below `max_edge_outer`.
pub fn build_mesh(points: &[Point], domain: &Polygon, params: &MeshParams) -> Result<Mesh> {
    let MeshParams { max_edge_inner, max_edge_outer, offset, max_vertices } = *params;
    if !(max_edge_inner > 0.0 && max_edge_inner <= max_edge_outer && offset > 0.0) {
        return Err(Error::InvalidParameter(
            "mesh requires 0 < max_edge_inner <= max_edge_outer and offset > 0".into(),
        ));
    }
    if points.iter().chain(domain.vertices()).any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::DegenerateInput("non-finite coordinate".into()));
    }
    if points.len() < 3 {
        return Err(Error::DegenerateInput("at least 3 points are required".into()));
    }
    let scale = {
        let b = bounding_box(points);
        (b[2] - b[0]).max(b[3] - b[1])
    };
    let far = points.iter().copied().max_by(|a, b| dist(points[0], *a).total_cmp(&dist(points[0], *b)));
    let non_collinear = far.is_some_and(|f| {
        points.iter().any(|&c| libm::fabs(signed_area(points[0], f, c)) > 1e-12 * scale * scale)
    });
    if !non_collinear || domain.vertices().len() < 3 || domain.area() <= 0.0 {
        return Err(Error::DegenerateInput("points are collinear or the domain has no area".into()));
    }

    let all: Vec<Point> = points.iter().chain(domain.vertices()).copied().collect();
    let b = bounding_box(&all);
    let outer = Polygon::rectangle(b[0] - offset, b[1] - offset, b[2] + offset, b[3] + offset);

    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let insert = |tri: &mut DelaunayTriangulation<Point2<f64>>, p: Point| -> Result<FixedVertexHandle> {
        tri.insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::DegenerateInput(alloc::format!("cannot insert vertex: {e:?}")))
    };
    for p in subdivide_ring(outer.vertices(), max_edge_outer) {
        insert(&mut tri, p)?;
    }
    for p in subdivide_ring(domain.vertices(), max_edge_inner) {
        insert(&mut tri, p)?;
    }
    for &p in points {
        insert(&mut tri, p)?;
    }

    let face_bound = |pts: [Point; 3]| -> Option<f64> {
        let longest = dist(pts[0], pts[1]).max(dist(pts[1], pts[2])).max(dist(pts[2], pts[0]));
        if libm::fabs(signed_area(pts[0], pts[1], pts[2])) <= 1e-10 * longest * longest {
            return None;
        }
        let g = [
            (pts[0][0] + pts[1][0] + pts[2][0]) / 3.0,
            (pts[0][1] + pts[1][1] + pts[2][1]) / 3.0,
        ];
        Some(if domain.contains(g) { max_edge_inner } else { max_edge_outer })
    };

    loop {
        if tri.num_vertices() > max_vertices {
            return Err(Error::RefinementLimit { max_vertices });
        }
        let mut violating: Vec<(f64, usize, usize, Point)> = Vec::new();
        for edge in tri.undirected_edges() {
            let [va, vb] = edge.vertices();
            let (pa, pb) = (va.position(), vb.position());
            let (a, b) = ([pa.x, pa.y], [pb.x, pb.y]);
            let len = dist(a, b);
            let mut bound = f64::INFINITY;
            let de = edge.as_directed();
            for d in [de, de.rev()] {
                if let Some(face) = d.face().as_inner() {
                    let p = face.positions().map(|q| [q.x, q.y]);
                    if let Some(fb) = face_bound(p) {
                        bound = bound.min(fb);
                    }
                }
            }
            if len > bound * (1.0 + 1e-12) {
                let (ia, ib) = (va.fix().index(), vb.fix().index());
                let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                violating.push((len, ia.min(ib), ia.max(ib), mid));
            }
        }
        if violating.is_empty() {
            break;
        }
        violating.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        for (_, a, b, mid) in violating {
            let (ha, hb) = (FixedVertexHandle::from_index(a), FixedVertexHandle::from_index(b));
            if tri.get_edge_from_neighbors(ha, hb).is_some() {
                insert(&mut tri, mid)?;
                if tri.num_vertices() > max_vertices {
                    return Err(Error::RefinementLimit { max_vertices });
                }
            }
        }
    }

    let vertices: Vec<Point> = tri.vertices().map(|v| [v.position().x, v.position().y]).collect();
    let mut triangles = Vec::with_capacity(tri.num_inner_faces());
    for face in tri.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        let longest = dist(pa, pb).max(dist(pb, pc)).max(dist(pc, pa));
        // Slivers on a straight hull edge carry no area; drop them.
        if libm::fabs(signed_area(pa, pb, pc)) > 1e-10 * longest * longest {
            triangles.push([a, b, c]);
        }
    }
    // Orphaned vertices (only in dropped slivers) would make C singular.
    let mut used = vec![false; vertices.len()];
    triangles.iter().flatten().for_each(|&v| used[v] = true);
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.into_iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(v);
        }
    }
    for t in &mut triangles {
        for v in t.iter_mut() {
            *v = remap[*v];
        }
    }
    Mesh::from_parts(kept, triangles, domain.clone(), outer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_area_and_containment() {
        let sq = Polygon::rectangle(0.0, 0.0, 2.0, 1.0);
        assert_eq!(sq.area(), 2.0);
        assert!(sq.contains([1.0, 0.5]));
        assert!(!sq.contains([2.5, 0.5]));
        let l = Polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]);
        assert_eq!(l.area(), 3.0);
        assert!(!l.contains([1.5, 1.5]));
        assert!(l.contains([0.5, 1.5]));
    }

    #[test]
    fn unit_square_corners() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let dom = Polygon::rectangle(0.0, 0.0, 1.0, 1.0);
        let m = build_mesh(&pts, &dom, &MeshParams::new(10.0, 10.0, 0.5)).unwrap();
        assert!(m.triangles().len() >= 2);
        // Hull plus extension: [-0.5, 1.5]^2.
        assert!((m.total_area() - 4.0).abs() < 1e-12);
        for p in pts {
            assert!(m.locator().locate(m.vertices(), m.triangles(), p).is_some());
        }
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let dom = Polygon::rectangle(0.0, 0.0, 2.0, 2.0);
        assert!(matches!(
            build_mesh(&pts, &dom, &MeshParams::new(1.0, 1.0, 1.0)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn refinement_limit() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let dom = Polygon::rectangle(0.0, 0.0, 10.0, 10.0);
        let mut p = MeshParams::new(0.1, 1.0, 1.0);
        p.max_vertices = 500;
        assert_eq!(build_mesh(&pts, &dom, &p).unwrap_err(), Error::RefinementLimit { max_vertices: 500 });
    }

    #[test]
    fn bad_parameters() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let dom = Polygon::rectangle(0.0, 0.0, 10.0, 10.0);
        assert!(build_mesh(&pts, &dom, &MeshParams::new(5.0, 2.0, 1.0)).is_err());
        assert!(build_mesh(&pts, &dom, &MeshParams::new(1.0, 2.0, 0.0)).is_err());
    }
}
