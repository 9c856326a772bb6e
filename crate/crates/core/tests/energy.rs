use grac::bench::{solve_coefficients, Fit};
use grac::energy::{AcFunctional, HybridState, StateKind};
use grac::geometry::{AcGeometry, CouplingMethod};
use grac::lattice::*;
use grac::potential::{find_f0, EamParams};
use grac::sparse::LinearOperator;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f0() -> Mat2 {
    find_f0(&Stencil::new(2).unwrap(), &LatticeBasis::triangular(), &EamParams::default()).unwrap()
}

fn geometry(k: usize, k_atom: u32) -> AcGeometry {
    let config = ReferenceConfig::build(k, k_atom * k_atom).unwrap();
    AcGeometry::build(config, k_atom, Stencil::new(2).unwrap()).unwrap()
}

fn coupled(geom: &AcGeometry, coupling: CouplingMethod, kappa: f64) -> AcFunctional {
    let c = solve_coefficients(geom, coupling, Fit::L2).unwrap();
    AcFunctional::coupled(geom, &c.volumes, &c.coeffs, kappa, EamParams::default()).unwrap()
}

fn atomistic() -> AcFunctional {
    let config = ReferenceConfig::build(2, 9).unwrap();
    AcFunctional::atomistic(&config, &Stencil::new(2).unwrap(), EamParams::default(), 5).unwrap()
}

/// `F₀ x` plus a seeded perturbation of size `amp` on the free DOFs.
fn random_state(model: &AcFunctional, rng: &mut ChaCha8Rng, amp: f64) -> HybridState {
    let mut y = model.affine_state(&f0());
    for &d in model.free_dofs() {
        y.values[d] += Vec2::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * (2.0 * amp);
    }
    y
}

fn shifted(y: &HybridState, d: usize, comp: usize, h: f64) -> HybridState {
    let mut z = y.clone();
    z.values[d][comp] += h;
    z
}

fn models() -> Vec<(&'static str, AcFunctional)> {
    let geom = geometry(2, 3);
    let mut out = vec![("ATM", atomistic())];
    for kappa in [0.0, 1.0] {
        out.push(("M1", coupled(&geom, CouplingMethod::M1, kappa)));
        out.push(("M2", coupled(&geom, CouplingMethod::M2, kappa)));
    }
    out
}

#[test]
fn energy_difference_basics() {
    for (name, m) in models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_state(&m, &mut rng, 0.02);
        let z = m.affine_state(&f0());
        assert_eq!(m.energy(&y, &y).unwrap(), 0.0, "{name}");
        let e = m.energy(&y, &z).unwrap();
        let direct = m.total_energy(&y.values).unwrap() - m.total_energy(&z.values).unwrap();
        assert!((e - direct).abs() < 1e-9 * direct.abs().max(1.0), "{name}");
        let mut moved = y.clone();
        moved.values.iter_mut().for_each(|v| *v += Vec2::new(0.37, -1.2));
        let t = m.total_energy(&moved.values).unwrap() - m.total_energy(&y.values).unwrap();
        assert!(t.abs() < 1e-10 * m.total_energy(&y.values).unwrap().abs(), "{name}");
        assert!(m
            .energy(&HybridState { values: vec![], kind: StateKind::Deformation, applied_strain: f0() }, &z)
            .is_err());
    }
}

#[test]
fn displacement_states_are_relative_to_the_far_field() {
    let m = atomistic();
    let b = f0() * 1.01;
    let u = HybridState { values: vec![Vec2::zeros(); m.n_dofs()], kind: StateKind::Displacement, applied_strain: b };
    assert!(m.energy(&u, &m.affine_state(&b)).unwrap().abs() < 1e-12);
    assert!(m
        .gradient(&u)
        .unwrap()
        .iter()
        .zip(m.gradient(&m.affine_state(&b)).unwrap())
        .all(|(a, b)| (a - b).norm() < 1e-12));
}

#[test]
fn gradient_matches_finite_differences() {
    let h = 1e-6;
    for (name, m) in models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let y = random_state(&m, &mut rng, 0.02);
            let g = m.gradient(&y).unwrap();
            let scale = g.iter().map(|v| v.amax()).fold(1.0, f64::max);
            let mut worst: f64 = 0.0;
            for &d in m.free_dofs() {
                for (comp, &gc) in g[d].iter().enumerate() {
                    let ep = m.total_energy(&shifted(&y, d, comp, h).values).unwrap();
                    let em = m.total_energy(&shifted(&y, d, comp, -h).values).unwrap();
                    worst = worst.max(((ep - em) / (2.0 * h) - gc).abs());
                }
            }
            assert!(worst <= 1e-6 * scale, "{name}: {worst:e}");
            for (d, &fixed) in m.fixed().iter().enumerate() {
                if fixed {
                    assert_eq!(g[d], Vec2::zeros());
                }
            }
        }
    }
}

#[test]
fn hessian_matches_finite_differences() {
    let h = 1e-5;
    for (name, m) in models() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y = random_state(&m, &mut rng, 0.02);
            let hess = m.hessian(&y).unwrap();
            let n = hess.dim();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut hv = vec![0.0; n];
            hess.apply(&v, &mut hv);
            let w = hess.expand(&v);
            let step = |s: f64| HybridState {
                values: y.values.iter().zip(&w).map(|(a, b)| a + b * s).collect(),
                kind: StateKind::Deformation,
                applied_strain: y.applied_strain,
            };
            let (gp, gm) = (m.gradient(&step(h)).unwrap(), m.gradient(&step(-h)).unwrap());
            let mut fd = vec![0.0; n];
            let diff: Vec<Vec2> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            hess.restrict(&diff, &mut fd);
            let scale = hv.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let err = fd.iter().zip(&hv).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err <= 1e-5 * scale, "{name}: {err:e}");
        }
    }
}

#[test]
fn assembled_hessian_is_symmetric_and_consistent() {
    for (name, m) in models() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_state(&m, &mut rng, 0.02);
        let hess = m.hessian(&y).unwrap();
        let a = hess.assemble();
        let n = hess.dim();
        assert_eq!((a.rows(), a.cols()), (n, n));
        let norm = a.diagonal().iter().fold(0.0f64, |x, v| x.max(v.abs()));
        assert!(a.asymmetry() <= 1e-12 * norm, "{name}");
        let diag = hess.diagonal();
        assert!(diag.iter().zip(a.diagonal()).all(|(x, y)| (x - y).abs() <= 1e-12 * norm), "{name}");
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let (mut x, mut z) = (vec![0.0; n], vec![0.0; n]);
        a.mul_vec(&v, &mut x);
        hess.apply(&v, &mut z);
        assert!(x.iter().zip(&z).all(|(p, q)| (p - q).abs() <= 1e-11 * norm), "{name}");
    }
}

#[test]
fn stabilisation_is_linear_in_kappa() {
    let geom = geometry(2, 3);
    let m0 = coupled(&geom, CouplingMethod::M1, 0.0);
    let m1 = m0.with_kappa(1.0);
    let m25 = m0.with_kappa(2.5);
    assert_eq!(m25.kappa(), 2.5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = random_state(&m0, &mut rng, 0.05);
    let e0 = m0.total_energy(&y.values).unwrap();
    let e1 = m1.total_energy(&y.values).unwrap();
    let e25 = m25.total_energy(&y.values).unwrap();
    assert!(e1 > e0);
    assert!((e25 - (e0 + 2.5 * (e1 - e0))).abs() < 1e-10 * e0.abs());
}

#[test]
fn stabilisation_does_not_change_ghost_forces() {
    let geom = geometry(2, 3);
    let twin = geom.defect_free().unwrap();
    for coupling in [CouplingMethod::M1, CouplingMethod::M2] {
        for fit in [Fit::L2, Fit::Qce] {
            let c = solve_coefficients(&geom, coupling, fit).unwrap();
            let coeffs = grac::consistency::retarget(&c.coeffs, &twin);
            let p = EamParams::default();
            let g0 = AcFunctional::coupled(&twin, &c.volumes, &coeffs, 0.0, p).unwrap().ghost_force(&f0()).unwrap();
            let g1 = AcFunctional::coupled(&twin, &c.volumes, &coeffs, 1.0, p).unwrap().ghost_force(&f0()).unwrap();
            for (a, b) in g0.field.iter().zip(&g1.field) {
                assert!((a - b).amax() <= 1e-12);
            }
        }
    }
}

#[test]
fn ghost_forces_of_fitted_and_identity_coefficients() {
    let geom = geometry(2, 3);
    let twin = geom.defect_free().unwrap();
    let p = EamParams::default();
    let scale = grac::potential::CauchyBorn::new(&Stencil::new(2).unwrap(), &LatticeBasis::triangular(), p)
        .force_scale(&f0())
        .unwrap();
    let fitted = solve_coefficients(&geom, CouplingMethod::M1, Fit::L2).unwrap();
    let m = AcFunctional::coupled(&twin, &fitted.volumes, &grac::consistency::retarget(&fitted.coeffs, &twin), 0.0, p)
        .unwrap();
    assert!(m.ghost_force(&f0()).unwrap().max <= 1e-9 * scale);
    let qce = solve_coefficients(&geom, CouplingMethod::M1, Fit::Qce).unwrap();
    let m =
        AcFunctional::coupled(&twin, &qce.volumes, &grac::consistency::retarget(&qce.coeffs, &twin), 0.0, p).unwrap();
    assert!(m.ghost_force(&f0()).unwrap().max > 1e-3 * scale);
}

#[test]
fn dof_bookkeeping() {
    let geom = geometry(2, 3);
    let m = coupled(&geom, CouplingMethod::M1, 0.0);
    assert_eq!(m.n_dofs(), geom.dofs.len());
    assert_eq!(m.free_dofs().len(), geom.dofs.fixed().iter().filter(|f| !**f).count());
    assert_eq!(m.interface_dofs().len(), geom.decomp.interface_sites().len());
    assert_eq!(m.method(), Some(CouplingMethod::M1));
    assert_eq!(atomistic().method(), None);
}
