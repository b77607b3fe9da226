//! Structural checks on refined meshes.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stfusion_core::mesh::{build_mesh, Mesh, MeshParams, Polygon};

fn check_mesh(m: &Mesh, seeds: &[[f64; 2]], p: &MeshParams) {
    for t in 0..m.triangles().len() {
        assert!(m.triangle_area(t) > 1e-12, "triangle {t} is degenerate");
    }
    // Every edge meets the bound of every region it borders.
    let mut bound = std::collections::HashMap::new();
    for (t, tri) in m.triangles().iter().enumerate() {
        let b = if m.is_inner_triangle(t) { p.max_edge_inner } else { p.max_edge_outer };
        for (a, c) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            let e = (a.min(c), a.max(c));
            let cur: &mut f64 = bound.entry(e).or_insert(f64::INFINITY);
            *cur = cur.min(b);
        }
    }
    for (e, b) in bound {
        assert!(m.edge_length(e) <= b * (1.0 + 1e-9), "edge {e:?} of length {} > {b}", m.edge_length(e));
    }
    for &s in seeds {
        assert!(m.project_point(s).is_some(), "seed {s:?} not covered");
    }
    assert_eq!(m.connected_components(), 1);
    // Euler characteristic of a disc.
    let (v, e, f) = (m.n_vertices() as i64, m.edges().len() as i64, m.triangles().len() as i64);
    assert_eq!(v - e + f, 1);
    let outer = m.outer_boundary().area();
    assert!((m.total_area() - outer).abs() < 1e-9 * outer);
}

#[test]
fn random_points_in_a_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let seeds: Vec<[f64; 2]> = (0..30).map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
    let dom = Polygon::rectangle(0.0, 0.0, 100.0, 100.0);
    let p = MeshParams::new(8.0, 25.0, 20.0);
    let m = build_mesh(&seeds, &dom, &p).unwrap();
    check_mesh(&m, &seeds, &p);
    assert!(m.triangles().iter().enumerate().any(|(t, _)| m.is_inner_triangle(t)));
}

#[test]
fn non_convex_domain() {
    let dom = Polygon(vec![[0.0, 0.0], [60.0, 0.0], [60.0, 30.0], [30.0, 30.0], [30.0, 60.0], [0.0, 60.0]]);
    let seeds = [[5.0, 5.0], [50.0, 10.0], [10.0, 50.0], [20.0, 20.0]];
    let p = MeshParams::new(5.0, 15.0, 10.0);
    let m = build_mesh(&seeds, &dom, &p).unwrap();
    check_mesh(&m, &seeds, &p);
}

#[test]
fn construction_is_deterministic() {
    let seeds = [[1.0, 2.0], [7.5, 3.3], [4.0, 9.1], [8.8, 8.8], [2.2, 6.6]];
    let dom = Polygon::rectangle(0.0, 0.0, 10.0, 10.0);
    let p = MeshParams::new(1.0, 3.0, 3.0);
    let a = build_mesh(&seeds, &dom, &p).unwrap();
    let b = build_mesh(&seeds, &dom, &p).unwrap();
    assert_eq!(a.vertices(), b.vertices());
    assert_eq!(a.triangles(), b.triangles());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn arbitrary_seed_sets(seeds in proptest::collection::vec((0.0f64..50.0, 0.0f64..30.0), 3..25)) {
        let seeds: Vec<[f64; 2]> = seeds.into_iter().map(|(x, y)| [x, y]).collect();
        let dom = Polygon::rectangle(0.0, 0.0, 50.0, 30.0);
        let p = MeshParams::new(6.0, 15.0, 12.0);
        match build_mesh(&seeds, &dom, &p) {
            Ok(m) => check_mesh(&m, &seeds, &p),
            Err(stfusion_core::Error::DegenerateInput(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
}
