use crate::error::{Error, Result};
use crate::geometry::clip::{area, clip_convex};
use crate::geometry::AcGeometry;
use crate::lattice::{add, Coord, LatticeBasis, Mat2, ReferenceConfig, Vec2, NN};

/// Errors of an approximate solution against the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `‖∇y_ref - ∇y_h‖_{L²}`.
    pub h1_seminorm: f64,
    /// `‖∇y_ref - ∇y_h‖_{L^∞}` (Frobenius norm pointwise).
    pub w1inf_seminorm: f64,
    /// `|E_h - E_ref| / |E_ref|`, energies relative to the predictor `Bx`.
    pub energy_error: f64,
    pub dof: usize,
}

/// Large-domain atomistic solution used as the exact answer.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub config: ReferenceConfig,
    /// Deformed positions per site.
    pub y: Vec<Vec2>,
    /// Sites at hop distance `≥ free_layers` are clamped to `Bx`.
    pub free_layers: u32,
    /// `E(y; Bx)`.
    pub energy: f64,
}

/// A solution to be measured.
#[derive(Debug, Clone, Copy)]
pub enum Approximation<'a> {
    /// Atomistic solution clamped at hop distance `free_layers`.
    Atomistic { config: &'a ReferenceConfig, y: &'a [Vec2], free_layers: u32, energy: f64 },
    /// Coupled solution, one value per DOF.
    Coupled { geom: &'a AcGeometry, y: &'a [Vec2], energy: f64 },
}

impl Approximation<'_> {
    fn radius(&self) -> u32 {
        match self {
            Approximation::Atomistic { free_layers, .. } => *free_layers,
            Approximation::Coupled { geom, .. } => geom.decomp.layers(),
        }
    }

    fn energy(&self) -> f64 {
        match self {
            Approximation::Atomistic { energy, .. } | Approximation::Coupled { energy, .. } => *energy,
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            Approximation::Atomistic { config, free_layers, .. } => {
                config.sites().iter().filter(|&&c| config.row_distance(c) <= *free_layers).count()
            }
            Approximation::Coupled { geom, .. } => geom.dofs.len(),
        }
    }
}

/// The two canonical triangles anchored at `c`, counter-clockwise.
fn canonical_cells(c: Coord) -> [[Coord; 3]; 2] {
    let (e1, e2) = (NN[0], NN[1]);
    [[c, add(c, e1), add(c, e2)], [add(c, e1), add(add(c, e1), e2), add(c, e2)]]
}

/// Gradient of the linear interpolant of `values` at `pts`.
fn p1_gradient(pts: [Vec2; 3], values: [Vec2; 3]) -> Result<Mat2> {
    let x = Mat2::from_columns(&[pts[1] - pts[0], pts[2] - pts[0]]);
    let y = Mat2::from_columns(&[values[1] - values[0], values[2] - values[0]]);
    let inv = x.try_inverse().ok_or_else(|| Error::Internal("degenerate interpolation triangle".into()))?;
    Ok(y * inv)
}

struct Accumulator {
    sq: f64,
    max: f64,
}

impl Accumulator {
    fn add(&mut self, area: f64, diff: Mat2) {
        let n = diff.norm();
        self.sq += area * n * n;
        if area > 1e-14 {
            self.max = self.max.max(n);
        }
    }
}

/// H¹ and W^{1,∞} seminorm errors and the relative energy error.
///
/// Both solutions are P1 functions on the canonical triangulation of the
/// lattice (cells touching a vacancy are left out), except that the coupled
/// solution is P1 on its own mesh in the graded region, where each element
/// is intersected exactly with the lattice cells. Outside their domains both
/// equal `Bx`.
pub fn error_norms(approx: &Approximation, reference: &ReferenceSolution, b: &Mat2) -> Result<ErrorReport> {
    let rconf = &reference.config;
    if reference.free_layers < approx.radius() {
        return Err(Error::Config(format!(
            "reference domain of {} layers does not cover the approximation's {}",
            reference.free_layers,
            approx.radius()
        )));
    }
    let basis: &LatticeBasis = rconf.basis();
    let ref_value = |c: Coord| -> Vec2 {
        match rconf.index_of(c) {
            Some(s) => reference.y[s],
            None => b * basis.position(c),
        }
    };
    let ref_grad =
        |cell: &[Coord; 3]| -> Result<Mat2> { p1_gradient(cell.map(|c| basis.position(c)), cell.map(ref_value)) };

    let mut acc = Accumulator { sq: 0.0, max: 0.0 };
    let cell_area = 0.5 * basis.voronoi_volume();
    for &anchor in rconf.sites() {
        for cell in canonical_cells(anchor) {
            if cell.iter().any(|&c| rconf.index_of(c).is_none()) {
                continue;
            }
            let dist = cell.map(|c| rconf.row_distance(c));
            let (dmin, dmax) = (dist.iter().min().copied().unwrap_or(0), dist.iter().max().copied().unwrap_or(0));
            let approx_grad = match approx {
                Approximation::Atomistic { config, y, .. } => {
                    let vals = cell.map(|c| config.index_of(c).map_or(b * basis.position(c), |s| y[s]));
                    p1_gradient(cell.map(|c| basis.position(c)), vals)?
                }
                Approximation::Coupled { geom, y, .. } => {
                    let decomp = &geom.decomp;
                    if dmax <= decomp.band_outer() {
                        let mut vals = [Vec2::zeros(); 3];
                        for (v, &c) in vals.iter_mut().zip(&cell) {
                            let d = geom.dof_at(c).ok_or(Error::Interpolation { node: anchor_index(rconf, c) })?;
                            *v = y[d];
                        }
                        p1_gradient(cell.map(|c| basis.position(c)), vals)?
                    } else if dmin >= decomp.layers() {
                        *b
                    } else {
                        // Graded region: handled element by element below.
                        continue;
                    }
                }
            };
            acc.add(cell_area, ref_grad(&cell)? - approx_grad);
        }
    }

    if let Approximation::Coupled { geom, y, .. } = approx {
        let mesh = &geom.mesh;
        for t in mesh.triangles().iter().filter(|t| !t.canonical) {
            let mut grad = Mat2::zeros();
            for (&n, g) in t.nodes.iter().zip(&t.grads) {
                grad += y[geom.dofs.node_dof(n)] * g.transpose();
            }
            let poly: Vec<Vec2> = t.nodes.iter().map(|&n| mesh.nodes()[n].position).collect();
            let coords: Vec<Coord> = t.nodes.iter().map(|&n| mesh.nodes()[n].coord).collect();
            let lo = [
                coords.iter().map(|c| c[0]).min().unwrap_or(0) - 1,
                coords.iter().map(|c| c[1]).min().unwrap_or(0) - 1,
            ];
            let hi = [coords.iter().map(|c| c[0]).max().unwrap_or(0), coords.iter().map(|c| c[1]).max().unwrap_or(0)];
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for cell in canonical_cells([i, j]) {
                        let tri: Vec<Vec2> = cell.iter().map(|&c| basis.position(c)).collect();
                        let cut = clip_convex(&poly, &tri);
                        if cut.is_empty() {
                            continue;
                        }
                        acc.add(area(&cut), ref_grad(&cell)? - grad);
                    }
                }
            }
        }
    }

    let e_ref = reference.energy;
    if e_ref == 0.0 {
        return Err(Error::InsufficientData("reference energy is zero; relative error undefined".into()));
    }
    Ok(ErrorReport {
        h1_seminorm: acc.sq.sqrt(),
        w1inf_seminorm: acc.max,
        energy_error: (approx.energy() - e_ref).abs() / e_ref.abs(),
        dof: approx.dof(),
    })
}

fn anchor_index(config: &ReferenceConfig, c: Coord) -> usize {
    config.index_of(c).unwrap_or(usize::MAX)
}
