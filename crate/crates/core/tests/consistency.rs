use std::collections::HashSet;

use grac::bench::patch_strains;
use grac::consistency::*;
use grac::geometry::{effective_volumes, AcGeometry, CouplingMethod};
use grac::lattice::*;
use grac::potential::{find_f0, EamParams};

const THIRD: f64 = 1.0 / 3.0;

fn divacancy(k_atom: u32) -> AcGeometry {
    let config = ReferenceConfig::build(2, k_atom * k_atom).unwrap();
    AcGeometry::build(config, k_atom, Stencil::new(2).unwrap()).unwrap()
}

fn f0() -> Mat2 {
    find_f0(&Stencil::new(2).unwrap(), &LatticeBasis::triangular(), &EamParams::default()).unwrap()
}

#[test]
fn nearest_neighbour_circulant() {
    let c = continuum_reconstruction_nnn(&Stencil::new(1).unwrap()).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            let expect = match (j + 6 - i) % 6 {
                0 => 2.0 * THIRD,
                1 | 5 => THIRD,
                _ => 0.0,
            };
            assert_eq!(c[i * 6 + j], expect, "({i}, {j})");
        }
    }
}

#[test]
fn next_nearest_neighbour_rows() {
    let s = Stencil::new(2).unwrap();
    let c = continuum_reconstruction_nnn(&s).unwrap();
    let nn = continuum_reconstruction_nnn(&Stencil::new(1).unwrap()).unwrap();
    for i in 0..6 {
        for j in 0..18 {
            let expect = if j < 6 { nn[i * 6 + j] } else { 0.0 };
            assert_eq!(c[i * 18 + j], expect);
        }
    }
    for j in 0..6 {
        let (next, prev) = ((j + 1) % 6, (j + 5) % 6);
        let twice = &c[(6 + 2 * j) * 18..(7 + 2 * j) * 18];
        let diag = &c[(7 + 2 * j) * 18..(8 + 2 * j) * 18];
        assert_eq!(s.directions()[6 + 2 * j], add(NN[j], NN[j]));
        assert_eq!(s.directions()[7 + 2 * j], add(NN[j], NN[next]));
        for k in 0..18 {
            let t = match k {
                _ if k == j => 4.0 * THIRD,
                _ if k == next || k == prev => 2.0 * THIRD,
                _ => 0.0,
            };
            let d = if k == j || k == next { 1.0 } else { 0.0 };
            assert_eq!(twice[k], t, "row 2a_{j}, column {k}");
            assert_eq!(diag[k], d, "row a_{j}+a_{next}, column {k}");
        }
    }
}

#[test]
fn continuum_rows_reproduce_directions() {
    let s = Stencil::new(2).unwrap();
    let c = continuum_reconstruction_nnn(&s).unwrap();
    for (i, rho) in s.directions().iter().enumerate() {
        let mut sum = [0.0, 0.0];
        for (j, sigma) in s.directions().iter().enumerate() {
            sum[0] += c[i * 18 + j] * f64::from(sigma[0]);
            sum[1] += c[i * 18 + j] * f64::from(sigma[1]);
        }
        assert!((sum[0] - f64::from(rho[0])).abs() < 1e-15 && (sum[1] - f64::from(rho[1])).abs() < 1e-15);
    }
}

#[test]
fn atomistic_coefficient_examples() {
    let core = |c: Coord| c[1] < 0;
    assert_eq!(atomistic_coeff(&core, [0, 0], [0, 1]), 1.0);
    assert_eq!(atomistic_coeff(&core, [0, -1], [0, 1]), 1.0);
    assert_eq!(atomistic_coeff(&core, [0, -3], [0, 1]), 0.0);
    assert_eq!(atomistic_coeff(&core, [0, -1], [1, 0]), 0.0);
    assert_eq!(atomistic_coeff(&core, [0, -1], [1, -1]), -1.0);
    assert_eq!(atomistic_coeff(&core, [3, 5], [1, 0]), 0.0);
}

/// Canonical triangle `[i, j]` (up when `up`) as an element part with the
/// given weight.
fn canonical(i: i32, j: i32, up: bool, basis: &LatticeBasis, omega: impl Fn(&[Coord; 3], f64) -> f64) -> ElementPart {
    let nodes = if up { [[i, j], [i + 1, j], [i, j + 1]] } else { [[i + 1, j], [i + 1, j + 1], [i, j + 1]] };
    let p = nodes.map(|c| basis.position(c));
    let area = 0.5 * ((p[1] - p[0]).perp(&(p[2] - p[0])));
    let grads = [0, 1, 2].map(|a| {
        let e = p[(a + 2) % 3] - p[(a + 1) % 3];
        Vec2::new(-e.y, e.x) / (2.0 * area)
    });
    ElementPart { nodes, grads, omega: omega(&nodes, area) }
}

/// Flat interface on row `j = 0` between atoms below and canonical
/// elements above, nearest-neighbour stencil, full Voronoi cells.
#[test]
fn flat_interface_nearest_neighbour_coefficients() {
    let stencil = Stencil::new(1).unwrap();
    let basis = LatticeBasis::triangular();
    let width = 12;
    let core = |c: Coord| c[1] < 0;
    let all = |_: Coord| true;
    let mut elements = Vec::new();
    for j in 0..4 {
        for i in -width..width {
            for up in [true, false] {
                // each vertex in Λ^a ∪ Λ^i owns a third of the triangle
                elements.push(canonical(i, j, up, &basis, |n, a| {
                    a * (1.0 - n.iter().filter(|c| c[1] <= 0).count() as f64 / 3.0)
                }));
            }
        }
    }
    let interface: Vec<(Coord, usize, f64)> = (-width..=width).enumerate().map(|(q, i)| ([i, 0], q, 1.0)).collect();
    let row_nodes: Vec<Coord> = (-3..=3).flat_map(|i| (-2..=2).map(move |j| [i, j])).collect();
    let parts = SystemParts {
        stencil: stencil.clone(),
        basis: basis.clone(),
        interface: interface.clone(),
        core: &core,
        allowed: &all,
        elements,
        row_nodes,
    };
    let sys = assemble_parts(&parts).unwrap();
    assert_eq!(sys.n_cols(), interface.len() * 36);
    assert_eq!(sys.n_rows(), interface.len() * 12 + 35 * 3);

    // bonds into Λ^a ∪ Λ^i stay atomistic, bonds into the continuum use C^c
    let cc = continuum_reconstruction_nnn(&stencil).unwrap();
    let coeffs: Vec<ReconstructionMatrix> = interface
        .iter()
        .map(|&(c, q, _)| {
            let mut m = ReconstructionMatrix::identity(q, 6);
            for (rho, &d) in NN.iter().enumerate() {
                if add(c, d)[1] > 0 {
                    m.entries[rho * 6..rho * 6 + 6].copy_from_slice(&cc[rho * 6..rho * 6 + 6]);
                }
            }
            m
        })
        .collect();
    let (_, res) = sys.max_residual(&sys.pack(&coeffs));
    assert!(res <= 1e-12, "residual {res}");

    // nearest-neighbour QCE is also consistent on a flat interface
    let ident: Vec<ReconstructionMatrix> =
        interface.iter().map(|&(_, q, _)| ReconstructionMatrix::identity(q, 6)).collect();
    assert!(sys.max_residual(&sys.pack(&ident)).1 <= 1e-12);
    // a perturbation of one site along `a_1 + a_4 = 0` keeps the energy
    // rows but breaks force balance
    let mut bent = coeffs.clone();
    bent[width as usize].entries[0] += 0.5;
    bent[width as usize].entries[3] += 0.5;
    let (row, res) = sys.max_residual(&sys.pack(&bent));
    assert!((res - 1.0).abs() < 1e-12, "residual {res}");
    assert!(matches!(sys.kinds[row], RowKind::Force { .. }));
}

#[test]
fn system_dimensions() {
    let geom = divacancy(3);
    let n_i = geom.decomp.interface_sites().len();
    let v1 = effective_volumes(&geom, CouplingMethod::M1).unwrap();
    let sys = assemble_system(&geom, &v1).unwrap();
    assert_eq!(sys.n_cols(), n_i * 18 * 18);
    let energy = sys.kinds.iter().filter(|k| matches!(k, RowKind::Energy { .. })).count();
    let force = sys.kinds.iter().filter(|k| matches!(k, RowKind::Force { .. })).count();
    assert_eq!(energy, 2 * 18 * n_i);
    assert_eq!(force, 9 * grac::energy::interface_reach(&geom).len());
    assert!(sys.n_cols() > sys.n_rows());

    // METHOD 2 only reconstructs from the atomistic closure
    let v2 = effective_volumes(&geom, CouplingMethod::M2).unwrap();
    let sys2 = assemble_system(&geom, &v2).unwrap();
    assert!(sys2.n_cols() < sys.n_cols());
    assert!(sys2.n_rows() < sys.n_rows());
}

#[test]
fn identity_satisfies_energy_rows_only() {
    let geom = divacancy(3);
    let v = effective_volumes(&geom, CouplingMethod::M1).unwrap();
    let sys = assemble_system(&geom, &v).unwrap();
    let r = sys.residual(&sys.pack(&identity_reconstruction(&geom)));
    let mut force_max: f64 = 0.0;
    for (k, r) in sys.kinds.iter().zip(&r) {
        match k {
            RowKind::Energy { .. } => assert_eq!(*r, 0.0),
            RowKind::Force { .. } => force_max = force_max.max(r.abs()),
        }
    }
    assert!(force_max > 0.1);
}

fn near_zero(c: &[ReconstructionMatrix]) -> usize {
    c.iter().flat_map(|m| &m.entries).filter(|v| v.abs() < 1e-10).count()
}

fn norms(c: &[ReconstructionMatrix]) -> (f64, f64) {
    let e = c.iter().flat_map(|m| &m.entries);
    (e.clone().map(|v| v.abs()).sum(), e.map(|v| v * v).sum::<f64>().sqrt())
}

#[test]
fn min_norm_and_l1_solutions() {
    let geom = divacancy(3);
    for m in [CouplingMethod::M1, CouplingMethod::M2] {
        let v = effective_volumes(&geom, m).unwrap();
        let sys = assemble_system(&geom, &v).unwrap();
        let l2 = solve_min_norm(&sys).unwrap();
        let (l1, report) = solve_l1(&sys).unwrap();
        assert!(sys.max_residual(&sys.pack(&l2)).1 <= FEASIBILITY_TOL);
        assert!(sys.max_residual(&sys.pack(&l1)).1 <= FEASIBILITY_TOL);
        let (l1_of_l2, l2_of_l2) = norms(&l2);
        let (l1_of_l1, l2_of_l1) = norms(&l1);
        assert!(l2_of_l2 <= l2_of_l1 * (1.0 + 1e-9), "{m:?}");
        assert!(l1_of_l1 <= l1_of_l2 * (1.0 + 1e-9), "{m:?}");
        assert!((report.objective - l1_of_l1).abs() <= 1e-8 * l1_of_l1);
        assert!(report.duality_gap <= 1e-8 * l1_of_l1.max(1.0));
        assert!(near_zero(&l1) > near_zero(&l2), "{m:?}");
    }
}

#[test]
fn solutions_pass_patch_tests() {
    let params = EamParams::default();
    let strains = patch_strains(&f0(), 7);
    let geom = divacancy(3);
    for m in [CouplingMethod::M1, CouplingMethod::M2] {
        let v = effective_volumes(&geom, m).unwrap();
        let sys = assemble_system(&geom, &v).unwrap();
        for c in [solve_min_norm(&sys).unwrap(), solve_l1(&sys).unwrap().0] {
            for kappa in [0.0, 1.0] {
                let rep = verify_patch_tests(&c, &geom, &v, params, kappa, &strains).unwrap();
                assert!(rep.pass, "{m:?} κ={kappa}: {:?}", rep.samples);
            }
        }
    }
}

#[test]
fn qce_ghost_forces_sit_at_the_interface() {
    let params = EamParams::default();
    let geom = divacancy(4);
    let twin = geom.defect_free().unwrap();
    let v = effective_volumes(&geom, CouplingMethod::M1).unwrap();
    let rep = verify_patch_tests(&identity_reconstruction(&geom), &geom, &v, params, 0.0, &[f0()]).unwrap();
    assert!(!rep.pass);
    let s = &rep.samples[0];
    assert!(s.ghost_force > 1e-3 * s.force_scale);
    assert!(s.energy_mismatch < 1e-12);

    let model = grac::energy::AcFunctional::coupled(&twin, &v, &identity_reconstruction(&twin), 0.0, params).unwrap();
    let gf = model.ghost_force(&f0()).unwrap();
    let reach: HashSet<Coord> = grac::energy::interface_reach(&twin).into_iter().collect();
    for (d, f) in gf.field.iter().enumerate() {
        if f.norm() > 1e-10 * s.force_scale {
            assert!(reach.contains(&twin.dofs.coords()[d]), "force off the interface at {:?}", twin.dofs.coords()[d]);
        }
    }
}

#[test]
fn retarget_keeps_entries() {
    let geom = divacancy(3);
    let twin = geom.defect_free().unwrap();
    let c = identity_reconstruction(&geom);
    let t = retarget(&c, &twin);
    assert_eq!(t.len(), c.len());
    for (a, b) in c.iter().zip(&t) {
        assert_eq!(a.entries, b.entries);
    }
    assert_eq!(t.iter().map(|m| m.site).collect::<Vec<_>>(), twin.decomp.interface_sites());
}

#[test]
fn coefficient_dump() {
    let geom = divacancy(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    write_coefficients(&identity_reconstruction(&geom), &path).unwrap();
    assert!(!std::fs::read_to_string(&path).unwrap().is_empty());
}
