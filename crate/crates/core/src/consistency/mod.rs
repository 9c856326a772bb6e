//! Geometric consistency equations for the interface reconstruction
//! parameters `C_{ℓ;ρ,ς}`, their minimum-norm and ℓ¹ solutions, and the
//! analytic continuum coefficients.
//!
//! The unknowns must satisfy, for every interface site `ℓ` and direction `ρ`,
//! the energy rows `Σ_ς C_{ℓ;ρ,ς} ς = ρ`, and for every node `ℓ ∈ Λ^i + R` and
//! `ρ ∈ R⁺` the force row `c^a_ρ(ℓ) + c^i_ρ(ℓ) + c^c_ρ(ℓ) = 0`.

mod lp;
mod minnorm;

pub use lp::{solve_lp, LpReport};
pub use minnorm::min_norm_solve;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::energy::{interface_reach, AcFunctional};
use crate::error::{Error, Result};
use crate::geometry::{AcGeometry, CouplingMethod, EffectiveVolumes};
use crate::lattice::{add, sub, Coord, LatticeBasis, Mat2, Stencil, Vec2};
use crate::potential::EamParams;
use crate::sparse::CsrMatrix;

/// `C_ℓ` for one interface site, row-major over `(ρ, ς)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionMatrix {
    /// Site index in the reference configuration.
    pub site: usize,
    pub entries: Vec<f64>,
}

impl ReconstructionMatrix {
    pub fn identity(site: usize, n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { site, entries }
    }

    pub fn get(&self, rho: usize, sigma: usize) -> f64 {
        let n = (self.entries.len() as f64).sqrt() as usize;
        self.entries[rho * n + sigma]
    }
}

/// Identity reconstruction on every interface site of `geom` (the QCE choice).
pub fn identity_reconstruction(geom: &AcGeometry) -> Vec<ReconstructionMatrix> {
    let n = geom.decomp.stencil().len();
    geom.decomp.interface_sites().iter().map(|&s| ReconstructionMatrix::identity(s, n)).collect()
}

/// The matrix `C^c` for which `V(C^c·Dy)` reproduces Cauchy–Born forces under
/// uniform deformation, row-major over the stencil.
pub fn continuum_reconstruction_nnn(stencil: &Stencil) -> Result<Vec<f64>> {
    let n = stencil.len();
    if !matches!(stencil.hop_radius(), 1 | 2) {
        return Err(Error::Config(format!("unsupported hop radius {}", stencil.hop_radius())));
    }
    let mut c = vec![0.0; n * n];
    let (prev, next) = (|j: usize| (j + 5) % 6, |j: usize| (j + 1) % 6);
    for j in 0..6 {
        c[j * n + j] = 2.0 / 3.0;
        c[j * n + next(j)] = 1.0 / 3.0;
        c[j * n + prev(j)] = 1.0 / 3.0;
    }
    if n == 18 {
        for j in 0..6 {
            let twice = 6 + 2 * j;
            c[twice * n + j] = 4.0 / 3.0;
            c[twice * n + next(j)] = 2.0 / 3.0;
            c[twice * n + prev(j)] = 2.0 / 3.0;
            let diag = 7 + 2 * j;
            c[diag * n + j] = 1.0;
            c[diag * n + next(j)] = 1.0;
        }
    }
    Ok(c)
}

/// One finite element as seen by the force rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPart {
    pub nodes: [Coord; 3],
    pub grads: [Vec2; 3],
    pub omega: f64,
}

/// Geometry-independent description of a consistency problem.
pub struct SystemParts<'a> {
    pub stencil: Stencil,
    pub basis: LatticeBasis,
    /// Interface positions with their site ids and `ω^i`.
    pub interface: Vec<(Coord, usize, f64)>,
    /// Membership in `Λ^a`, by position.
    pub core: &'a dyn Fn(Coord) -> bool,
    /// Whether `C_{ℓ;ρ,ς}` may be nonzero, given the target `ℓ + ς`.
    pub allowed: &'a dyn Fn(Coord) -> bool,
    pub elements: Vec<ElementPart>,
    /// Nodes carrying force rows.
    pub row_nodes: Vec<Coord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Unknown {
    /// Index into the interface list.
    pub site: usize,
    pub rho: usize,
    pub sigma: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Component `comp` of `Σ_ς C_{ℓ;ρ,ς} ς = ρ` for interface entry `site`.
    Energy { site: usize, rho: usize, comp: usize },
    /// Force balance at `node` for `ρ ∈ R⁺`.
    Force { node: Coord, rho: usize },
}

/// Sparse equality system `A c = b` over the reconstruction parameters.
#[derive(Debug, Clone)]
pub struct ConsistencySystem {
    pub unknowns: Vec<Unknown>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub kinds: Vec<RowKind>,
    pub interface_sites: Vec<usize>,
    pub stencil_len: usize,
    column_of: HashMap<Unknown, usize>,
}

impl ConsistencySystem {
    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn n_cols(&self) -> usize {
        self.unknowns.len()
    }

    pub fn column(&self, u: Unknown) -> Option<usize> {
        self.column_of.get(&u).copied()
    }

    /// `b - A x`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; self.n_rows()];
        self.matrix.mul_vec(x, &mut ax);
        self.rhs.iter().zip(ax).map(|(b, a)| b - a).collect()
    }

    /// Row with the largest absolute residual and its value.
    pub fn max_residual(&self, x: &[f64]) -> (usize, f64) {
        self.residual(x)
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, r)| if r.abs() > bv { (i, r.abs()) } else { (bi, bv) })
    }

    /// Coefficient vector of a set of reconstruction matrices.
    pub fn pack(&self, coeffs: &[ReconstructionMatrix]) -> Vec<f64> {
        let n = self.stencil_len;
        self.unknowns.iter().map(|u| coeffs[u.site].entries[u.rho * n + u.sigma]).collect()
    }

    pub fn unpack(&self, x: &[f64]) -> Vec<ReconstructionMatrix> {
        let n = self.stencil_len;
        let mut out: Vec<ReconstructionMatrix> =
            self.interface_sites.iter().map(|&site| ReconstructionMatrix { site, entries: vec![0.0; n * n] }).collect();
        for (u, &v) in self.unknowns.iter().zip(x) {
            out[u.site].entries[u.rho * n + u.sigma] = v;
        }
        out
    }

    /// Independent sub-systems: connected components of the row/column
    /// incidence graph, each as `(rows, columns)` in increasing order.
    pub fn blocks(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let (m, n) = (self.n_rows(), self.n_cols());
        let mut parent: Vec<usize> = (0..m + n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for r in 0..m {
            for (c, _) in self.matrix.row(r) {
                let (a, b) = (find(&mut parent, r), find(&mut parent, m + c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for i in 0..m + n {
            let root = find(&mut parent, i);
            let g = *slot.entry(root).or_insert_with(|| {
                groups.push((Vec::new(), Vec::new()));
                groups.len() - 1
            });
            if i < m {
                groups[g].0.push(i);
            } else {
                groups[g].1.push(i - m);
            }
        }
        groups
    }

    /// Plain-text dump: `row col value` lines, then `rhs row value` lines.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# rows {} cols {}\n", self.n_rows(), self.n_cols()));
        for r in 0..self.n_rows() {
            for (c, v) in self.matrix.row(r) {
                out.push_str(&format!("{r} {c} {v:e}\n"));
            }
        }
        for (r, b) in self.rhs.iter().enumerate() {
            out.push_str(&format!("rhs {r} {b:e}\n"));
        }
        write_file(path, &out)
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::File::create(path).and_then(|mut f| f.write_all(text.as_bytes())).map_err(|e| Error::io(path, e))
}

/// `site rho_idx sigma_idx value` lines for every nonzero coefficient.
pub fn write_coefficients(coeffs: &[ReconstructionMatrix], path: &Path) -> Result<()> {
    let mut out = String::new();
    for cm in coeffs {
        let n = (cm.entries.len() as f64).sqrt() as usize;
        for (k, &v) in cm.entries.iter().enumerate() {
            if v != 0.0 {
                out.push_str(&format!("{} {} {} {v:e}\n", cm.site, k / n, k % n));
            }
        }
    }
    write_file(path, &out)
}

/// `c^a_ρ(ℓ) = [ℓ-ρ ∈ Λ^a] - [ℓ+ρ ∈ Λ^a]`.
pub fn atomistic_coeff(core: &dyn Fn(Coord) -> bool, node: Coord, rho: Coord) -> f64 {
    f64::from(u8::from(core(sub(node, rho)))) - f64::from(u8::from(core(add(node, rho))))
}

/// `c^c_ρ(i) = Σ_{T∋i} 2 (ω_T/|vor|) ∇φ_i^T·ρ` for every node and `ρ ∈ R⁺`
/// (indexed like `stencil.half()`).
pub fn continuum_coeffs(parts: &SystemParts) -> HashMap<Coord, Vec<f64>> {
    let half = parts.stencil.half();
    let dirs = parts.stencil.physical(&parts.basis);
    let vor = parts.basis.voronoi_volume();
    let mut out: HashMap<Coord, Vec<f64>> = HashMap::new();
    for e in &parts.elements {
        for (node, grad) in e.nodes.iter().zip(&e.grads) {
            let entry = out.entry(*node).or_insert_with(|| vec![0.0; half.len()]);
            for (h, &j) in half.iter().enumerate() {
                entry[h] += 2.0 * e.omega / vor * grad.dot(&dirs[j]);
            }
        }
    }
    out
}

/// Assembles the energy and force rows described by `parts`.
pub fn assemble_parts(parts: &SystemParts) -> Result<ConsistencySystem> {
    let stencil = &parts.stencil;
    let n = stencil.len();
    let dirs = stencil.directions();

    let mut unknowns = Vec::new();
    let mut column_of = HashMap::new();
    for (q, &(c, _, _)) in parts.interface.iter().enumerate() {
        for rho in 0..n {
            for (sigma, &s) in dirs.iter().enumerate() {
                if (parts.allowed)(add(c, s)) {
                    let u = Unknown { site: q, rho, sigma };
                    column_of.insert(u, unknowns.len());
                    unknowns.push(u);
                }
            }
        }
    }

    let mut trip = Vec::new();
    let mut rhs = Vec::new();
    let mut kinds = Vec::new();
    for (q, &(_, site, _)) in parts.interface.iter().enumerate() {
        for rho in 0..n {
            for comp in 0..2 {
                let row = rhs.len();
                for (sigma, s) in dirs.iter().enumerate() {
                    if let Some(&col) = column_of.get(&Unknown { site: q, rho, sigma }) {
                        if s[comp] != 0 {
                            trip.push((row, col, s[comp] as f64));
                        }
                    }
                }
                rhs.push(dirs[rho][comp] as f64);
                kinds.push(RowKind::Energy { site: q, rho, comp });
            }
        }
        let _ = site;
    }

    let cc = continuum_coeffs(parts);
    let index_of: HashMap<Coord, usize> = parts.interface.iter().enumerate().map(|(q, &(c, _, _))| (c, q)).collect();
    for &node in &parts.row_nodes {
        for (h, &rho) in stencil.half().iter().enumerate() {
            let neg = stencil.opposite(rho);
            let row = rhs.len();
            // Sites ℓ - ς in the interface see `node` through direction ς.
            for (sigma, &s) in dirs.iter().enumerate() {
                if let Some(&q) = index_of.get(&sub(node, s)) {
                    let w = parts.interface[q].2;
                    push(&column_of, &mut trip, row, Unknown { site: q, rho, sigma }, w);
                    push(&column_of, &mut trip, row, Unknown { site: q, rho: neg, sigma }, -w);
                }
            }
            if let Some(&q) = index_of.get(&node) {
                let w = parts.interface[q].2;
                for sigma in 0..n {
                    push(&column_of, &mut trip, row, Unknown { site: q, rho, sigma }, -w);
                    push(&column_of, &mut trip, row, Unknown { site: q, rho: neg, sigma }, w);
                }
            }
            let ca = atomistic_coeff(parts.core, node, dirs[rho]);
            let ccv = cc.get(&node).map_or(0.0, |v| v[h]);
            rhs.push(-(ca + ccv));
            kinds.push(RowKind::Force { node, rho });
        }
    }
    let matrix = CsrMatrix::from_triplets(rhs.len(), unknowns.len(), trip);
    Ok(ConsistencySystem {
        unknowns,
        matrix,
        rhs,
        kinds,
        interface_sites: parts.interface.iter().map(|&(_, s, _)| s).collect(),
        stencil_len: n,
        column_of,
    })
}

fn push(columns: &HashMap<Unknown, usize>, trip: &mut Vec<(usize, usize, f64)>, row: usize, u: Unknown, v: f64) {
    if let Some(&c) = columns.get(&u) {
        trip.push((row, c, v));
    }
}

/// Consistency problem of a coupled discretisation.
pub fn system_parts<'a>(
    geom: &AcGeometry,
    volumes: &EffectiveVolumes,
    core: &'a dyn Fn(Coord) -> bool,
    allowed: &'a dyn Fn(Coord) -> bool,
) -> SystemParts<'a> {
    let decomp = &geom.decomp;
    let config = decomp.config();
    let interface = (0..decomp.interface_sites().len())
        .map(|q| (decomp.interface_coord(q), decomp.interface_sites()[q], volumes.omega_i[q]))
        .collect();
    let mesh = &geom.mesh;
    let elements = mesh
        .triangles()
        .iter()
        .zip(&volumes.omega_t)
        .map(|(t, &omega)| ElementPart { nodes: t.nodes.map(|i| mesh.nodes()[i].coord), grads: t.grads, omega })
        .collect();
    let mut row_nodes = interface_reach(geom);
    if volumes.method == CouplingMethod::M2 {
        row_nodes.retain(|&c| decomp.in_atomistic_closure(c));
    }
    SystemParts {
        stencil: decomp.stencil().clone(),
        basis: config.basis().clone(),
        interface,
        core,
        allowed,
        elements,
        row_nodes,
    }
}

/// Assembles the consistency system of `geom` for the given volumes.
pub fn assemble_system(geom: &AcGeometry, volumes: &EffectiveVolumes) -> Result<ConsistencySystem> {
    let decomp = &geom.decomp;
    let k = decomp.atomistic_layers();
    let core = |c: Coord| decomp.config().row_distance(c) <= k;
    let all = |_: Coord| true;
    let closure = |c: Coord| decomp.in_atomistic_closure(c);
    let allowed: &dyn Fn(Coord) -> bool = match volumes.method {
        CouplingMethod::M1 => &all,
        CouplingMethod::M2 => &closure,
    };
    let parts = system_parts(geom, volumes, &core, allowed);
    let sys = assemble_parts(&parts)?;
    if !(sys.n_cols() > sys.n_rows()) {
        return Err(Error::Internal(format!(
            "consistency system is not underdetermined: {} rows, {} unknowns",
            sys.n_rows(),
            sys.n_cols()
        )));
    }
    Ok(sys)
}

/// Largest residual allowed for a solved system.
pub const FEASIBILITY_TOL: f64 = 1e-10;

fn check_solution(sys: &ConsistencySystem, x: &[f64]) -> Result<()> {
    let (row, residual) = sys.max_residual(x);
    if residual > FEASIBILITY_TOL || !residual.is_finite() {
        return Err(Error::Infeasible { row, residual });
    }
    Ok(())
}

/// Minimum-Euclidean-norm solution.
pub fn solve_min_norm(sys: &ConsistencySystem) -> Result<Vec<ReconstructionMatrix>> {
    let x = min_norm_solve(sys)?;
    check_solution(sys, &x)?;
    Ok(sys.unpack(&x))
}

/// ℓ¹-minimal solution and the LP diagnostics.
pub fn solve_l1(sys: &ConsistencySystem) -> Result<(Vec<ReconstructionMatrix>, LpReport)> {
    let (x, report) = solve_lp(sys)?;
    check_solution(sys, &x)?;
    Ok((sys.unpack(&x), report))
}

/// Re-labels coefficients to the interface site ids of `geom`, which must
/// list the interface in the same order (as a defect-free twin does).
pub fn retarget(coeffs: &[ReconstructionMatrix], geom: &AcGeometry) -> Vec<ReconstructionMatrix> {
    coeffs
        .iter()
        .zip(geom.decomp.interface_sites())
        .map(|(c, &site)| ReconstructionMatrix { site, entries: c.entries.clone() })
        .collect()
}

/// Ghost force and energy mismatch at one uniform deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub strain: Mat2,
    pub ghost_force: f64,
    pub energy_mismatch: f64,
    pub force_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchReport {
    pub samples: Vec<PatchSample>,
    pub pass: bool,
}

/// Relative ghost-force tolerance used by [`verify_patch_tests`].
pub const GHOST_FORCE_TOL: f64 = 1e-9;
/// Absolute per-site energy tolerance used by [`verify_patch_tests`].
pub const ENERGY_PATCH_TOL: f64 = 1e-10;

/// Evaluates both patch tests on the defect-free twin of `geom`.
pub fn verify_patch_tests(
    coeffs: &[ReconstructionMatrix],
    geom: &AcGeometry,
    volumes: &EffectiveVolumes,
    params: EamParams,
    kappa: f64,
    strains: &[Mat2],
) -> Result<PatchReport> {
    let twin = geom.defect_free()?;
    if twin.decomp.interface_sites().len() != geom.decomp.interface_sites().len() {
        return Err(Error::Internal("defect-free twin has a different interface".into()));
    }
    let coeffs = retarget(coeffs, &twin);
    let model = AcFunctional::coupled(&twin, volumes, &coeffs, kappa, params)?;
    let cb = crate::potential::CauchyBorn::new(geom.decomp.stencil(), geom.decomp.config().basis(), params);
    let mut samples = Vec::new();
    let mut pass = true;
    for f in strains {
        let scale = cb.force_scale(f)?;
        let gf = model.ghost_force(f)?;
        let mismatch = model.interface_energy_mismatch(f)?;
        pass &= gf.max <= GHOST_FORCE_TOL * scale && mismatch <= ENERGY_PATCH_TOL;
        samples.push(PatchSample { strain: *f, ghost_force: gf.max, energy_mismatch: mismatch, force_scale: scale });
    }
    Ok(PatchReport { samples, pass })
}
