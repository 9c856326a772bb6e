use super::clip::{area, clip_convex, voronoi_cell};
use super::AcGeometry;
use crate::error::{Error, Result};
use crate::lattice::{add, Coord, Vec2, NN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingMethod {
    /// Interface cells are full Voronoi cells; elements lose the overlap.
    M1,
    /// Interface cells are clipped to `Ω^a`; elements keep their full area.
    M2,
}

/// `ω^i_ℓ` aligned with the interface site list and `ω_T` aligned with the
/// mesh triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveVolumes {
    pub method: CouplingMethod,
    pub omega_i: Vec<f64>,
    pub omega_t: Vec<f64>,
}

/// Canonical triangles of `Ω^a` incident to `c`, counter-clockwise.
fn atomistic_fan(geom: &AcGeometry, c: Coord) -> Vec<[Vec2; 3]> {
    let decomp = &geom.decomp;
    let basis = decomp.config().basis();
    (0..6)
        .filter_map(|j| {
            let (p, q) = (add(c, NN[j]), add(c, NN[(j + 1) % 6]));
            (decomp.in_atomistic_closure(p) && decomp.in_atomistic_closure(q))
                .then(|| [basis.position(c), basis.position(p), basis.position(q)])
        })
        .collect()
}

/// The pieces of `v^i_ℓ`: the whole Voronoi cell, or its parts inside `Ω^a`.
fn interface_cell(geom: &AcGeometry, q: usize, method: CouplingMethod) -> Result<Vec<Vec<Vec2>>> {
    let c = geom.decomp.interface_coord(q);
    let basis = geom.decomp.config().basis();
    let vor = voronoi_cell(basis.position(c), basis).to_vec();
    match method {
        CouplingMethod::M1 => Ok(vec![vor]),
        CouplingMethod::M2 => {
            let fan = atomistic_fan(geom, c);
            if fan.is_empty() {
                return Err(Error::Geometry { cell: q, msg: "interface site outside Ω^a".into() });
            }
            Ok(fan.iter().map(|t| clip_convex(&vor, t)).filter(|p| !p.is_empty()).collect())
        }
    }
}

pub fn effective_volumes(geom: &AcGeometry, method: CouplingMethod) -> Result<EffectiveVolumes> {
    let decomp = &geom.decomp;
    let config = decomp.config();
    let vor_area = config.basis().voronoi_volume();
    let n_int = decomp.interface_sites().len();

    let mut cells = Vec::with_capacity(n_int);
    let mut omega_i = Vec::with_capacity(n_int);
    for q in 0..n_int {
        let pieces = interface_cell(geom, q, method)?;
        let a: f64 = pieces.iter().map(|p| area(p)).sum();
        let w = a / vor_area;
        if !(w > 0.0 && w <= 1.0 + 1e-12) {
            return Err(Error::Geometry { cell: q, msg: format!("effective volume {w} outside (0, 1]") });
        }
        omega_i.push(w.min(1.0));
        cells.push(pieces);
    }

    let mesh = &geom.mesh;
    let interface_index = |c: Coord| -> Option<usize> {
        let s = config.index_of(c)?;
        decomp.interface_sites().binary_search(&s).ok()
    };
    let mut omega_t = Vec::with_capacity(mesh.triangles().len());
    for (ti, t) in mesh.triangles().iter().enumerate() {
        let poly: Vec<Vec2> = t.nodes.iter().map(|&i| mesh.nodes()[i].position).collect();
        // Voronoi cells reaching into T belong to vertices of T or their neighbours.
        let mut candidates: Vec<usize> = Vec::new();
        for &i in &t.nodes {
            let c = mesh.nodes()[i].coord;
            for d in std::iter::once([0, 0]).chain(NN) {
                if let Some(q) = interface_index(add(c, d)) {
                    if !candidates.contains(&q) {
                        candidates.push(q);
                    }
                }
            }
        }
        let mut overlap = 0.0;
        for q in candidates {
            for piece in &cells[q] {
                let cut = clip_convex(piece, &poly);
                if !cut.is_empty() {
                    overlap += area(&cut);
                }
            }
        }
        let w = t.area - overlap;
        if w < -1e-12 * t.area {
            return Err(Error::Geometry { cell: ti, msg: format!("negative element volume {w}") });
        }
        omega_t.push(w.max(0.0));
    }
    Ok(EffectiveVolumes { method, omega_i, omega_t })
}
