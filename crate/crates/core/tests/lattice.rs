use std::collections::{HashSet, VecDeque};

use grac::lattice::*;
use proptest::prelude::*;

fn affine(config: &ReferenceConfig, f: &Mat2) -> Vec<Vec2> {
    (0..config.len()).map(|s| f * config.position(s)).collect()
}

#[test]
fn voronoi_volume_of_bases() {
    let tri = LatticeBasis::triangular();
    assert!((tri.voronoi_volume() - 3f64.sqrt() / 2.0).abs() < 1e-15);
    assert_eq!(LatticeBasis::new(Mat2::identity()).unwrap().voronoi_volume(), 1.0);
    let doubled = LatticeBasis::new(tri.matrix() * 2.0).unwrap();
    assert!((doubled.voronoi_volume() - 4.0 * tri.voronoi_volume()).abs() < 1e-14);
    assert!(LatticeBasis::new(Mat2::new(1.0, 2.0, 2.0, 4.0)).is_err());
    assert!(LatticeBasis::new(Mat2::new(0.0, 1.0, 1.0, 0.0)).is_err());
}

#[test]
fn triangular_basis_is_exact() {
    let a = LatticeBasis::triangular();
    let m = a.matrix();
    assert_eq!(m[(0, 0)], 1.0);
    assert_eq!(m[(0, 1)], std::f64::consts::FRAC_PI_3.cos());
    assert_eq!(m[(1, 0)], 0.0);
    assert_eq!(m[(1, 1)], std::f64::consts::FRAC_PI_3.sin());
}

#[test]
fn single_layer_hexagon() {
    let c = ReferenceConfig::build(0, 1).unwrap();
    assert_eq!(c.len(), 7);
    assert!(c.defect_sites().is_empty());
    let mut sites = c.sites().to_vec();
    sites.sort_unstable();
    let mut expect: Vec<Coord> = NN.to_vec();
    expect.push([0, 0]);
    expect.sort_unstable();
    assert_eq!(sites, expect);
}

#[test]
fn divacancy_removes_two_neighbours() {
    assert_eq!(defect_row(2), Some((0, 1)));
    let c = ReferenceConfig::build(2, 4).unwrap();
    assert_eq!(c.defect_sites(), &[[0, 0], [1, 0]]);
    assert_eq!(c.defect_size(), 2);
}

#[test]
fn microcrack_row() {
    assert_eq!(defect_row(11), Some((-5, 5)));
    let c = ReferenceConfig::build(11, 3).unwrap();
    let expect: Vec<Coord> = (-5..=5).map(|i| [i, 0]).collect();
    assert_eq!(c.defect_sites(), expect.as_slice());
    for k in 1..20usize {
        let (lo, hi) = defect_row(k).unwrap();
        assert_eq!((hi - lo + 1) as usize, k, "k = {k}");
    }
    assert_eq!(defect_row(0), None);
}

/// Hop distance to the row by breadth-first search on the lattice graph.
fn bfs_distances(row: (i32, i32), radius: u32) -> Vec<(Coord, u32)> {
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    for i in row.0..=row.1 {
        seen.insert([i, 0]);
        queue.push_back(([i, 0], 0u32));
    }
    let mut out = Vec::new();
    while let Some((c, d)) = queue.pop_front() {
        out.push((c, d));
        if d == radius {
            continue;
        }
        for n in NN {
            let t = add(c, n);
            if seen.insert(t) {
                queue.push_back((t, d + 1));
            }
        }
    }
    out
}

#[test]
fn sites_are_the_lattice_points_near_the_row() {
    for (k, n) in [(0, 3), (2, 4), (5, 3), (11, 2)] {
        let c = ReferenceConfig::build(k, n).unwrap();
        let row = if k == 0 { (0, 0) } else { defect_row(k).unwrap() };
        let mut expect: Vec<Coord> = bfs_distances(row, n)
            .into_iter()
            .map(|(c, _)| c)
            .filter(|x| k == 0 || x[1] != 0 || x[0] < row.0 || x[0] > row.1)
            .collect();
        expect.sort_unstable();
        let mut got = c.sites().to_vec();
        got.sort_unstable();
        assert_eq!(got, expect, "k = {k}");
        let defects: HashSet<Coord> = c.defect_sites().iter().copied().collect();
        assert!(c.sites().iter().all(|s| !defects.contains(s)));
        for (s, &x) in c.sites().iter().enumerate() {
            assert_eq!(c.index_of(x), Some(s));
        }
    }
}

#[test]
fn twin_fills_the_vacancies() {
    let c = ReferenceConfig::build(2, 3).unwrap();
    let t = c.defect_free_twin();
    assert_eq!(t.len(), c.len() + 2);
    assert!(t.defect_sites().is_empty());
    assert_eq!(t.row(), c.row());
    assert_eq!(c.resized(5).defect_sites(), c.defect_sites());
}

#[test]
fn nearest_neighbour_stencil() {
    let s = Stencil::new(1).unwrap();
    assert_eq!(s.len(), 6);
    assert_eq!(s.directions(), &NN);
    assert_eq!(s.half(), &[0, 1, 2]);
    for j in 0..6 {
        assert_eq!(s.directions()[s.opposite(j)], neg(s.directions()[j]));
    }
    assert!(Stencil::new(0).is_err());
    assert!(Stencil::new(3).is_err());
}

#[test]
fn second_neighbour_stencil_ordering() {
    let s = Stencil::new(2).unwrap();
    let d = s.directions();
    assert_eq!(d.len(), 18);
    assert_eq!(d[6], [2, 0]);
    for j in 0..6 {
        assert_eq!(d[6 + 2 * j], add(NN[j], NN[j]));
        assert_eq!(d[7 + 2 * j], add(NN[j], NN[(j + 1) % 6]));
    }
    // Nearest neighbours are successive 60° rotations of a₁.
    let basis = LatticeBasis::triangular();
    let phys = s.physical(&basis);
    let (c, sn) = (0.5, 3f64.sqrt() / 2.0);
    for j in 0..5 {
        let r = Vec2::new(c * phys[j].x - sn * phys[j].y, sn * phys[j].x + c * phys[j].y);
        assert!((r - phys[j + 1]).norm() < 1e-15);
    }
    // R = R⁺ ∪ (-R⁺), disjoint.
    let plus: HashSet<Coord> = s.half().iter().map(|&j| d[j]).collect();
    let minus: HashSet<Coord> = plus.iter().map(|&x| neg(x)).collect();
    assert_eq!(plus.len(), 9);
    assert!(plus.is_disjoint(&minus));
    let all: HashSet<Coord> = d.iter().copied().collect();
    assert_eq!(all, plus.union(&minus).copied().collect());
    for (j, &x) in d.iter().enumerate() {
        assert_eq!(s.index_of(x), Some(j));
        assert!(hop_length(x) <= 2);
    }
}

#[test]
fn finite_differences() {
    let config = ReferenceConfig::build(0, 4).unwrap();
    let stencil = Stencil::new(2).unwrap();
    let centre = config.index_of([0, 0]).unwrap();
    let konst = vec![Vec2::new(0.3, -1.2); config.len()];
    for (_, d) in finite_difference_stencil(&config, &stencil, &konst, centre).unwrap() {
        assert_eq!(d, Vec2::zeros());
    }
    let f = Mat2::new(1.1, 0.2, -0.3, 0.9);
    let y = affine(&config, &f);
    let phys = stencil.physical(config.basis());
    let diffs = finite_difference_stencil(&config, &stencil, &y, centre).unwrap();
    assert_eq!(diffs.len(), 18);
    for (j, d) in diffs {
        assert!((d - f * phys[j]).norm() < 1e-14);
    }
    let edge = config.index_of([4, 0]).unwrap();
    assert!(finite_difference_stencil(&config, &stencil, &y, edge).is_err());
}

#[test]
fn finite_differences_skip_vacancies() {
    let config = ReferenceConfig::build(2, 4).unwrap();
    let stencil = Stencil::new(1).unwrap();
    let s = config.index_of([-1, 0]).unwrap();
    let v = affine(&config, &Mat2::identity());
    let dirs: Vec<usize> = finite_difference_stencil(&config, &stencil, &v, s).unwrap().iter().map(|p| p.0).collect();
    assert_eq!(dirs, vec![1, 2, 3, 4, 5]);
}

#[test]
fn second_differences() {
    let config = ReferenceConfig::build(0, 3).unwrap();
    let centre = config.index_of([0, 0]).unwrap();
    let y = affine(&config, &Mat2::new(1.3, 0.4, 0.1, 0.8));
    assert!(d2nn_sq(&config, &y, centre).unwrap() < 1e-28);
    // v = (|x|², 0): each second difference is 2|b|² = 2.
    let quad: Vec<Vec2> = (0..config.len()).map(|s| Vec2::new(config.position(s).norm_squared(), 0.0)).collect();
    assert!((d2nn_sq(&config, &quad, centre).unwrap() - 12.0).abs() < 1e-12);
    let mut bump = vec![Vec2::zeros(); config.len()];
    let e = Vec2::new(0.5, -0.25);
    bump[centre] = e;
    assert!((d2nn_sq(&config, &bump, centre).unwrap() - 12.0 * e.norm_squared()).abs() < 1e-15);
    let nb = config.index_of([1, 0]).unwrap();
    assert!((d2nn_sq(&config, &bump, nb).unwrap() - e.norm_squared()).abs() < 1e-15);
}

#[test]
fn discrete_h1() {
    let config = ReferenceConfig::build(0, 2).unwrap();
    let stencil = Stencil::new(1).unwrap();
    assert_eq!(discrete_h1_norm(&config, &stencil, &vec![Vec2::zeros(); config.len()]), 0.0);

    let f = Mat2::new(1.0, 0.5, 0.0, 2.0);
    let y = affine(&config, &f);
    let phys = stencil.physical(config.basis());
    let mut sum = 0.0;
    for &c in config.sites() {
        for (j, &d) in stencil.directions().iter().enumerate() {
            if config.index_of(add(c, d)).is_some() {
                sum += (f * phys[j]).norm_squared() / phys[j].norm_squared();
            }
        }
    }
    assert!((discrete_h1_norm(&config, &stencil, &y) - sum.sqrt()).abs() < 1e-12);

    // A bump at the centre touches 6 bonds, each counted in both directions.
    let mut bump = vec![Vec2::zeros(); config.len()];
    bump[config.index_of([0, 0]).unwrap()] = Vec2::new(1.0, 0.0);
    assert!((discrete_h1_norm(&config, &stencil, &bump) - 12f64.sqrt()).abs() < 1e-14);
}

proptest! {
    #[test]
    fn row_distance_is_graph_distance(k in 0usize..14, n in 1u32..6) {
        let config = ReferenceConfig::build(k, n).unwrap();
        let row = if k == 0 { (0, 0) } else { defect_row(k).unwrap() };
        for (c, d) in bfs_distances(row, n + 2) {
            prop_assert_eq!(config.row_distance(c), d, "at {:?}", c);
        }
    }

    #[test]
    fn hop_length_is_symmetric_and_subadditive(a in -20i32..20, b in -20i32..20, c in -20i32..20, d in -20i32..20) {
        let (x, y) = ([a, b], [c, d]);
        prop_assert_eq!(hop_length(x), hop_length(neg(x)));
        prop_assert!(hop_length(add(x, y)) <= hop_length(x) + hop_length(y));
    }
}
