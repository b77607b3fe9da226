use alloc::vec;
use alloc::vec::Vec;

use super::{bounding_box, Mesh, Point};
use crate::error::{Error, Result};
use crate::sparse::SparseRows;

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone)]
pub struct Locator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

fn barycentric(p: Point, [a, b, c]: [Point; 3]) -> [f64; 3] {
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    [l0, l1, 1.0 - l0 - l1]
}

impl Locator {
    pub fn new(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let b = bounding_box(vertices);
        let (w, h) = ((b[2] - b[0]).max(1e-300), (b[3] - b[1]).max(1e-300));
        let target = (triangles.len() as f64).max(1.0);
        let cell = libm::sqrt(w * h / target).max(w.max(h) / 4096.0);
        let nx = (libm::ceil(w / cell) as usize).max(1);
        let ny = (libm::ceil(h / cell) as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let origin = [b[0], b[1]];
        let clampx = |v: f64| (((v - origin[0]) / cell) as isize).clamp(0, nx as isize - 1) as usize;
        let clampy = |v: f64| (((v - origin[1]) / cell) as isize).clamp(0, ny as isize - 1) as usize;
        for (t, tri) in triangles.iter().enumerate() {
            let tb = bounding_box(&tri.map(|v| vertices[v]));
            for iy in clampy(tb[1])..=clampy(tb[3]) {
                for ix in clampx(tb[0])..=clampx(tb[2]) {
                    buckets[iy * nx + ix].push(t as u32);
                }
            }
        }
        Self { origin, cell, nx, ny, buckets }
    }

    /// Triangle containing `p` with its barycentric coordinates.
    ///
    /// Points within a relative tolerance of an edge are accepted and their
    /// coordinates clipped to the triangle.
    pub fn locate(&self, vertices: &[Point], triangles: &[[usize; 3]], p: Point) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-9;
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        if !(fx > -TOL && fy > -TOL && fx < self.nx as f64 + TOL && fy < self.ny as f64 + TOL) {
            return None;
        }
        let ix = (fx as usize).min(self.nx - 1);
        let iy = (fy as usize).min(self.ny - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[iy * self.nx + ix] {
            let t = t as usize;
            let lam = barycentric(p, triangles[t].map(|v| vertices[v]));
            let worst = lam[0].min(lam[1]).min(lam[2]);
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, lam, worst));
            }
        }
        let (t, mut lam, worst) = best?;
        if worst < -TOL {
            return None;
        }
        if worst < 0.0 {
            lam.iter_mut().for_each(|l| *l = l.max(0.0));
            let s: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= s);
        }
        Some((t, lam))
    }
}

impl Mesh {
    /// Interpolation weights `(vertex, weight)` for `p`, or `None` outside.
    ///
    /// A point on a vertex gets the single weight 1.
    pub fn project_point(&self, p: Point) -> Option<Vec<(usize, f64)>> {
        let (t, lam) = self.locator.locate(&self.vertices, &self.triangles, p)?;
        let tri = self.triangles[t];
        if let Some(k) = lam.iter().position(|&l| l >= 1.0 - 1e-12) {
            return Some(vec![(tri[k], 1.0)]);
        }
        Some(tri.iter().zip(lam).filter(|(_, l)| *l > 0.0).map(|(&v, l)| (v, l)).collect())
    }
}

/// Sparse observation matrix mapping mesh vertices to points.
#[derive(Debug, Clone)]
pub struct Projector {
    rows: SparseRows,
}

impl Projector {
    /// Fails with `PointOutsideMesh` on the first point not covered.
    pub fn new(mesh: &Mesh, points: &[Point]) -> Result<Self> {
        let mut rows = SparseRows::new(mesh.n_vertices());
        for (index, &p) in points.iter().enumerate() {
            let w = mesh
                .project_point(p)
                .ok_or(Error::PointOutsideMesh { index, x: p[0], y: p[1] })?;
            rows.push_row(&w)?;
        }
        Ok(Self { rows })
    }

    pub fn matrix(&self) -> &SparseRows {
        &self.rows
    }

    pub fn into_matrix(self) -> SparseRows {
        self.rows
    }

    pub fn weights(&self, i: usize) -> (&[usize], &[f64]) {
        self.rows.row(i)
    }

    /// Interpolates per-vertex values at the projected points.
    pub fn interpolate(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.rows.mul_vec(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshParams, Polygon};

    fn square_mesh() -> Mesh {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.3, 0.6]];
        build_mesh(&pts, &Polygon::rectangle(0.0, 0.0, 1.0, 1.0), &MeshParams::new(0.2, 0.5, 0.4)).unwrap()
    }

    #[test]
    fn centroid_weights_are_thirds() {
        let m = square_mesh();
        for t in [0, m.triangles().len() / 2] {
            let [a, b, c] = m.triangle_points(t);
            let g = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
            let w = m.project_point(g).unwrap();
            assert_eq!(w.len(), 3);
            for (_, l) in w {
                assert!((l - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vertex_snaps_to_single_weight() {
        let m = square_mesh();
        for (i, &v) in m.vertices().iter().enumerate().step_by(7) {
            assert_eq!(m.project_point(v).unwrap(), vec![(i, 1.0)]);
        }
    }

    #[test]
    fn linear_functions_are_reproduced() {
        let m = square_mesh();
        let f = |p: Point| 2.0 - 3.0 * p[0] + 0.5 * p[1];
        let vals: Vec<f64> = m.vertices().iter().map(|&v| f(v)).collect();
        let pts: Vec<Point> = (0..200).map(|i| [(i as f64 * 0.618).fract(), (i as f64 * 0.377).fract()]).collect();
        let proj = Projector::new(&m, &pts).unwrap();
        for (p, got) in pts.iter().zip(proj.interpolate(&vals).unwrap()) {
            assert!((got - f(*p)).abs() < 1e-10);
        }
        for i in 0..pts.len() {
            let s: f64 = proj.weights(i).1.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_point_is_reported() {
        let m = square_mesh();
        assert!(m.project_point([5.0, 5.0]).is_none());
        let err = Projector::new(&m, &[[0.5, 0.5], [-3.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::PointOutsideMesh { index: 1, .. }));
    }
}
