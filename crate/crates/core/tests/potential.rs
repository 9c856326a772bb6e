use grac::lattice::{LatticeBasis, Mat2, Stencil, Vec2};
use grac::potential::*;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (Stencil, LatticeBasis, EamParams, Mat2) {
    let stencil = Stencil::new(2).unwrap();
    let basis = LatticeBasis::triangular();
    let params = EamParams::default();
    let f0 = find_f0(&stencil, &basis, &params).unwrap();
    (stencil, basis, params, f0)
}

fn ground_state_stencil() -> (Vec<Vec2>, EamParams) {
    let (stencil, basis, params, f0) = setup();
    (stencil.physical(&basis).iter().map(|r| f0 * r).collect(), params)
}

/// `g` near the ground state with every entry perturbed by up to `amp`.
fn perturbed(rng: &mut ChaCha8Rng, amp: f64) -> Vec<Vec2> {
    let (g, _) = ground_state_stencil();
    g.iter().map(|v| v + Vec2::new(amp * (rng.random::<f64>() - 0.5), amp * (rng.random::<f64>() - 0.5))).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn default_parameters() {
    let p = EamParams::default();
    assert_eq!((p.a, p.b, p.c), (4.4, 3.0, 5.0));
    assert_eq!(p.rho0, 6.0 * (-3f64).exp());
    assert_eq!(p.embedding(p.rho0).0, 0.0);
}

#[test]
fn single_bond_at_unit_length() {
    let p = EamParams { rho0: (-3f64).exp(), ..EamParams::default() };
    let v = eval_v(&[Vec2::new(0.6, 0.8)], &p).unwrap();
    assert!((v + 1.0).abs() < 1e-15, "{v}");
}

#[test]
fn zero_bond_is_singular() {
    let p = EamParams::default();
    assert!(eval_v(&[Vec2::new(1.0, 0.0), Vec2::zeros()], &p).is_err());
    assert!(grad_v(&[Vec2::new(f64::NAN, 0.0)], &p).is_err());
}

#[test]
fn ground_state_energy_matches_the_formula() {
    let (g, p) = ground_state_stencil();
    let phi = |r: f64| (-2.0 * p.a * (r - 1.0)).exp() - 2.0 * (-p.a * (r - 1.0)).exp();
    let psi = |r: f64| (-p.b * r).exp();
    let emb = |t: f64| p.c * ((t - p.rho0).powi(2) + (t - p.rho0).powi(4));
    let t: f64 = g.iter().map(|v| psi(v.norm())).sum();
    let direct = g.iter().map(|v| phi(v.norm())).sum::<f64>() + emb(t);
    assert!(rel(eval_v(&g, &p).unwrap(), direct) < 1e-14);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for _ in 0..20 {
        let g = perturbed(&mut rng, 0.1);
        let p = EamParams::default();
        let grad = grad_v(&g, &p).unwrap();
        let mut fd = vec![Vec2::zeros(); g.len()];
        for k in 0..g.len() {
            for c in 0..2 {
                let (mut gp, mut gm) = (g.clone(), g.clone());
                gp[k][c] += h;
                gm[k][c] -= h;
                fd[k][c] = (eval_v(&gp, &p).unwrap() - eval_v(&gm, &p).unwrap()) / (2.0 * h);
            }
        }
        let err: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
        let norm: f64 = grad.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
        assert!(err / norm <= 1e-6, "relative error {}", err / norm);
    }
}

#[test]
fn hessian_matches_finite_differences_of_the_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-5;
    let p = EamParams::default();
    for _ in 0..20 {
        let g = perturbed(&mut rng, 0.1);
        let n = g.len();
        let hess = hess_v(&g, &p).unwrap();
        let (mut err, mut norm) = (0.0f64, 0.0f64);
        for s in 0..n {
            for c in 0..2 {
                let (mut gp, mut gm) = (g.clone(), g.clone());
                gp[s][c] += h;
                gm[s][c] -= h;
                let (dp, dm) = (grad_v(&gp, &p).unwrap(), grad_v(&gm, &p).unwrap());
                for r in 0..n {
                    let fd = (dp[r] - dm[r]) / (2.0 * h);
                    let exact = hess[r * n + s].column(c).into_owned();
                    err += (fd - exact).norm_squared();
                    norm += exact.norm_squared();
                }
            }
        }
        assert!((err / norm).sqrt() <= 1e-5, "relative error {}", (err / norm).sqrt());
    }
}

#[test]
fn hessian_is_symmetric_and_matches_curvature_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = EamParams::default();
    let g = perturbed(&mut rng, 0.2);
    let n = g.len();
    let hess = hess_v(&g, &p).unwrap();
    for r in 0..n {
        for s in 0..n {
            assert!((hess[r * n + s] - hess[s * n + r].transpose()).abs().max() <= 1e-12);
        }
    }
    let w: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.random::<f64>(), rng.random::<f64>())).collect();
    let mut bonds = vec![BondCurvature::default(); n];
    let fpp = curvature(&g, &p, &mut bonds).unwrap();
    let mut out = vec![Vec2::zeros(); n];
    apply_curvature(&bonds, fpp, &w, &mut out);
    for r in 0..n {
        let direct: Vec2 = (0..n).map(|s| hess[r * n + s] * w[s]).sum();
        assert!((direct - out[r]).norm() < 1e-12);
    }
}

#[test]
fn pair_only_hessian_is_block_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = EamParams { c: 0.0, ..EamParams::default() };
    let g = perturbed(&mut rng, 0.2);
    let n = g.len();
    let hess = hess_v(&g, &p).unwrap();
    for r in 0..n {
        for s in (0..n).filter(|&s| s != r) {
            assert_eq!(hess[r * n + s], Mat2::zeros());
        }
    }
}

#[test]
fn point_symmetric_arguments_give_antisymmetric_gradients() {
    let (stencil, _, p, _) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut g = perturbed(&mut rng, 0.2);
    for &j in stencil.half() {
        g[stencil.opposite(j)] = -g[j];
    }
    let grad = grad_v(&g, &p).unwrap();
    for &j in stencil.half() {
        assert!((grad[j] + grad[stencil.opposite(j)]).norm() < 1e-14);
    }
}

#[test]
fn ground_state_stress_is_symmetric() {
    let (stencil, basis, p, f0) = setup();
    let cb = CauchyBorn::new(&stencil, &basis, p);
    let s = cb.stress(&f0).unwrap();
    assert!((s[(0, 1)] - s[(1, 0)]).abs() < 1e-13);
    // and vanishes at the minimiser of the dilation path
    assert!(s.abs().max() < 1e-9, "{s}");
}

#[test]
fn ground_state_is_a_dilation_minimum() {
    let (stencil, basis, p, f0) = setup();
    assert_eq!(f0[(0, 1)], 0.0);
    assert_eq!(f0[(1, 0)], 0.0);
    assert_eq!(f0[(0, 0)], f0[(1, 1)]);
    let alpha = f0[(0, 0)];
    let cb = CauchyBorn::new(&stencil, &basis, p);
    let w = |a: f64| cb.energy(&(Mat2::identity() * a)).unwrap();
    for i in -50..=50 {
        let a = alpha * (1.0 + 0.004 * f64::from(i));
        assert!(w(alpha) <= w(a) + 1e-15);
    }
    // Richardson-extrapolated central difference of W(αI).
    let d = |h: f64| (w(alpha + h) - w(alpha - h)) / (2.0 * h);
    let slope = (4.0 * d(5e-5) - d(1e-4)) / 3.0;
    assert!(slope.abs() < 1e-10, "W'(α*) = {slope:e}");
    let again = find_f0(&stencil, &basis, &p).unwrap();
    assert_eq!(again[(0, 0)].to_bits(), alpha.to_bits());
}

#[test]
fn cauchy_born_stress_matches_finite_differences() {
    let (stencil, basis, p, f0) = setup();
    let cb = CauchyBorn::new(&stencil, &basis, p);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let h = 1e-5;
    for _ in 0..20 {
        let f = f0 + Mat2::from_fn(|_, _| 0.1 * (rng.random::<f64>() - 0.5));
        let s = cb.stress(&f).unwrap();
        let mut fd = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let (mut fp, mut fm) = (f, f);
                fp[(i, j)] += h;
                fm[(i, j)] -= h;
                fd[(i, j)] = (cb.energy(&fp).unwrap() - cb.energy(&fm).unwrap()) / (2.0 * h);
            }
        }
        assert!((s - fd).norm() / s.norm() <= 1e-6);
    }
}

#[test]
fn force_scale_is_the_largest_bond_force() {
    let (stencil, basis, p, f0) = setup();
    let cb = CauchyBorn::new(&stencil, &basis, p);
    let f = f0 * 1.03;
    let dv = grad_v(&cb.deformed(&f), &p).unwrap();
    let max = dv.iter().map(|d| d.norm()).fold(0.0, f64::max);
    assert_eq!(cb.force_scale(&f).unwrap(), max);
    assert!(max > 0.0);
}

proptest! {
    #[test]
    fn site_energy_is_rotation_invariant(theta in 0.0f64..std::f64::consts::TAU, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = perturbed(&mut rng, 0.2);
        let p = EamParams::default();
        let q = Mat2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
        let rotated: Vec<Vec2> = g.iter().map(|v| q * v).collect();
        prop_assert!(rel(eval_v(&rotated, &p).unwrap(), eval_v(&g, &p).unwrap()) < 1e-13);
    }

    #[test]
    fn site_energy_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..18) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = perturbed(&mut rng, 0.2);
        let p = EamParams::default();
        let mut perm = g.clone();
        perm.rotate_left(shift);
        perm.swap(0, 5);
        prop_assert!(rel(eval_v(&perm, &p).unwrap(), eval_v(&g, &p).unwrap()) < 1e-13);
    }

    #[test]
    fn energy_density_is_frame_indifferent(theta in 0.0f64..std::f64::consts::TAU, seed in 0u64..1000) {
        let (stencil, basis, p, f0) = setup();
        let cb = CauchyBorn::new(&stencil, &basis, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = f0 + Mat2::from_fn(|_, _| 0.1 * (rng.random::<f64>() - 0.5));
        let q = Mat2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos());
        prop_assert!(rel(cb.energy(&(q * f)).unwrap(), cb.energy(&f).unwrap()) < 1e-13);
    }
}
