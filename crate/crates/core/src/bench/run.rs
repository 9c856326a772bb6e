use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExperimentSpec, Fit, Method, ResultRow, ResultTable};
use crate::consistency::{
    assemble_system, identity_reconstruction, retarget, solve_l1, solve_min_norm, LpReport, ReconstructionMatrix,
};
use crate::energy::AcFunctional;
use crate::error::{Error, Result};
use crate::geometry::{effective_volumes, AcGeometry, CouplingMethod, EffectiveVolumes};
use crate::lattice::{LatticeBasis, Mat2, ReferenceConfig, Stencil};
use crate::potential::{find_f0, EamParams};
use crate::solve::{error_norms, min_eigenvalue, minimize, Approximation, ReferenceSolution, SolverConfig};

/// Environment variable holding the number of worker threads.
pub const THREADS_VAR: &str = "GRAC_NUM_THREADS";

/// Quantities shared by every job of an experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub stencil: Stencil,
    pub params: EamParams,
    /// Ground state `α* I`.
    pub f0: Mat2,
    /// Far-field deformation.
    pub b: Mat2,
    pub solver: SolverConfig,
}

impl Setup {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let stencil = Stencil::new(spec.hop_radius)?;
        let f0 = find_f0(&stencil, &LatticeBasis::triangular(), &spec.params)?;
        let b = spec.problem.loading(&f0, &spec.loading);
        let solver = SolverConfig { grad_tol: spec.grad_tol, ..SolverConfig::default() };
        Ok(Self { stencil, params: spec.params, f0, b, solver })
    }
}

/// `F₀`, `1.03 F₀` and two seeded random deformations `(I + E) F₀` with
/// entries of `E` in `[-0.025, 0.025]`, so `‖F - F₀‖ ≤ 0.05 ‖F₀‖`.
pub fn patch_strains(f0: &Mat2, seed: u64) -> Vec<Mat2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![*f0, f0 * 1.03];
    for _ in 0..2 {
        let e = Mat2::from_fn(|_, _| 0.05 * (rng.random::<f64>() - 0.5));
        out.push((Mat2::identity() + e) * f0);
    }
    out
}

/// Interface coefficients with the volumes they were fitted for.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub volumes: EffectiveVolumes,
    pub coeffs: Vec<ReconstructionMatrix>,
    pub lp: Option<LpReport>,
    /// Seconds spent assembling and solving.
    pub seconds: f64,
}

/// Fits the interface coefficients of `geom`; `Fit::Qce` gives the
/// identity on full Voronoi cells.
pub fn solve_coefficients(geom: &AcGeometry, coupling: CouplingMethod, fit: Fit) -> Result<Coefficients> {
    let start = Instant::now();
    let coupling = if fit == Fit::Qce { CouplingMethod::M1 } else { coupling };
    let volumes = effective_volumes(geom, coupling)?;
    let (coeffs, lp) = match fit {
        Fit::Qce => (identity_reconstruction(geom), None),
        Fit::L2 => (solve_min_norm(&assemble_system(geom, &volumes)?)?, None),
        Fit::L1 => {
            let (c, report) = solve_l1(&assemble_system(geom, &volumes)?)?;
            (c, Some(report))
        }
    };
    Ok(Coefficients { volumes, coeffs, lp, seconds: start.elapsed().as_secs_f64() })
}

/// Atomistic solution on `layers` free layers around the defect, clamped to
/// `B` beyond; the domain carries `2r` extra clamped layers.
fn atomistic_solve(
    spec: &ExperimentSpec,
    setup: &Setup,
    layers: u32,
    solver: &SolverConfig,
) -> Result<(ReferenceConfig, AcFunctional, crate::energy::HybridState, f64)> {
    let config = ReferenceConfig::build(spec.problem.defect_size(), layers + 2 * spec.hop_radius)?;
    let model = AcFunctional::atomistic(&config, &setup.stencil, setup.params, layers)?;
    let x0 = model.affine_state(&setup.b);
    let (y, _) = minimize(&model, &x0, solver)?;
    let energy = model.energy(&y, &x0)?;
    Ok((config, model, y, energy))
}

/// Atomistic solution on `n_ref_factor · max(K)²` layers, solved to
/// `ref_grad_tol`.
pub fn reference_solution(spec: &ExperimentSpec, setup: &Setup) -> Result<ReferenceSolution> {
    let layers = spec.reference_layers();
    let solver = SolverConfig { grad_tol: spec.ref_grad_tol, ..setup.solver };
    let (config, _, y, energy) = atomistic_solve(spec, setup, layers, &solver)?;
    Ok(ReferenceSolution { config, y: y.values, free_layers: layers, energy })
}

fn fail(row: &mut ResultRow, e: &Error) {
    row.status = format!("error:{}", e.kind());
}

fn atomistic_row(
    spec: &ExperimentSpec,
    setup: &Setup,
    reference: &ReferenceSolution,
    row: &mut ResultRow,
) -> Result<()> {
    let n = row.k * row.k;
    let (config, model, y, energy) = atomistic_solve(spec, setup, n, &setup.solver)?;
    let approx = Approximation::Atomistic { config: &config, y: &y.values, free_layers: n, energy };
    row.dof = Some(approx.dof());
    let twin = AcFunctional::atomistic(&config.defect_free_twin(), &setup.stencil, setup.params, n)?;
    row.ghost_force_max = twin.ghost_force(&setup.b)?.max;
    let err = error_norms(&approx, reference, &setup.b)?;
    (row.h1, row.w1inf, row.eerr) = (err.h1_seminorm, err.w1inf_seminorm, err.energy_error);
    row.min_eig = min_eigenvalue(&model.hessian(&y)?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn coupled_row(
    setup: &Setup,
    reference: &ReferenceSolution,
    geom: &AcGeometry,
    twin: &AcGeometry,
    c: &Coefficients,
    kappa: f64,
    row: &mut ResultRow,
) -> Result<()> {
    row.dof = Some(geom.dofs.len());
    let ghost = AcFunctional::coupled(twin, &c.volumes, &retarget(&c.coeffs, twin), kappa, setup.params)?;
    row.ghost_force_max = ghost.ghost_force(&setup.b)?.max;
    let model = AcFunctional::coupled(geom, &c.volumes, &c.coeffs, kappa, setup.params)?;
    let x0 = model.affine_state(&setup.b);
    let (y, _) = minimize(&model, &x0, &setup.solver)?;
    let energy = model.energy(&y, &x0)?;
    let err = error_norms(&Approximation::Coupled { geom, y: &y.values, energy }, reference, &setup.b)?;
    (row.h1, row.w1inf, row.eerr) = (err.h1_seminorm, err.w1inf_seminorm, err.energy_error);
    row.min_eig = min_eigenvalue(&model.hessian(&y)?)?;
    Ok(())
}

/// Every method of `spec` at size `k`, in the order of `spec.methods`.
/// Failures are recorded in the rows.
pub fn run_k(spec: &ExperimentSpec, setup: &Setup, reference: &ReferenceSolution, k: u32) -> Vec<ResultRow> {
    let mut rows: Vec<ResultRow> = spec.methods.iter().map(|&m| ResultRow::new(spec.problem, m, k)).collect();
    let needs_geometry = spec.methods.iter().any(|&m| m != Method::Atm);
    let geometry = if needs_geometry {
        ReferenceConfig::build(spec.problem.defect_size(), k * k).and_then(|config| {
            let geom = AcGeometry::build(config, k, setup.stencil.clone())?;
            let twin = geom.defect_free()?;
            Ok((geom, twin))
        })
    } else {
        Err(Error::Internal("unused".into()))
    };
    let mut cache: HashMap<(CouplingMethod, Fit), std::result::Result<Coefficients, Error>> = HashMap::new();
    for row in &mut rows {
        let mut start = Instant::now();
        let mut extra = 0.0;
        let outcome = match row.method {
            Method::Atm => atomistic_row(spec, setup, reference, row),
            Method::Coupled { coupling, fit, stabilised } => match &geometry {
                Err(e) => {
                    fail(row, e);
                    Ok(())
                }
                Ok((geom, twin)) => {
                    let key = (if fit == Fit::Qce { CouplingMethod::M1 } else { coupling }, fit);
                    let entry = cache.entry(key).or_insert_with(|| solve_coefficients(geom, key.0, fit));
                    match entry {
                        Ok(c) => {
                            // charge the coefficient solve once per row, not twice
                            start = Instant::now();
                            extra = c.seconds;
                            let kappa = if stabilised { spec.kappa } else { 0.0 };
                            coupled_row(setup, reference, geom, twin, c, kappa, row)
                        }
                        Err(e) => {
                            fail(row, e);
                            Ok(())
                        }
                    }
                }
            },
        };
        if let Err(e) = outcome {
            fail(row, &e);
        }
        if spec.timing {
            row.wall_time = Some(start.elapsed().as_secs_f64() + extra);
        }
    }
    rows
}

fn thread_count() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

/// Runs the sweep: one shared reference solution, then every method at
/// every size. Sizes run concurrently on `GRAC_NUM_THREADS` workers; the
/// rows come out method-major in the order of `spec.methods` and do not depend
/// on the thread count. Only a failure of the reference is an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    let setup = Setup::new(spec)?;
    let reference = reference_solution(spec, &setup)?;
    let jobs = spec.k_list.len();
    let results: Mutex<Vec<Option<Vec<ResultRow>>>> = Mutex::new(vec![None; jobs]);
    let next = AtomicUsize::new(0);
    // Largest sizes first so the slowest job does not start last.
    let mut order: Vec<usize> = (0..jobs).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(spec.k_list[i]));
    std::thread::scope(|s| {
        for _ in 0..thread_count().min(jobs) {
            s.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = order.get(slot) else { break };
                let rows = run_k(spec, &setup, &reference, spec.k_list[i]);
                results.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(rows);
            });
        }
    });
    let per_k: Vec<Vec<ResultRow>> = results
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|r| r.ok_or_else(|| Error::Internal("worker exited without a result".into())))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(jobs * spec.methods.len());
    for j in 0..spec.methods.len() {
        rows.extend(per_k.iter().map(|r| r[j].clone()));
    }
    Ok(ResultTable { rows })
}
