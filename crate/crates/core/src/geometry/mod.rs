//! Domain decomposition into atomistic core, interface and continuum,
//! the graded finite-element mesh, effective volumes and nodal interpolation.

pub mod clip;
mod mesh;
mod volumes;

pub use mesh::{build_mesh, Mesh, MeshNode, Triangle};
pub use volumes::{effective_volumes, CouplingMethod, EffectiveVolumes};

use crate::energy::{HybridState, StateKind};
use crate::error::{Error, Result};
use crate::lattice::{add, Coord, Mat2, ReferenceConfig, Stencil, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// `Λ^a`: within `K` hops of the defect row.
    Core,
    /// `Λ^i`: the next `r` layers.
    Interface,
    /// `Λ^c`: atom-coincident nodes of the canonically triangulated band.
    ContinuumAtom,
    /// Graded part of the continuum, up to `∂Ω`.
    Continuum,
    Outside,
}

/// Region bookkeeping for one `(config, K, stencil)` triple.
///
/// Membership is decided by hop distance to the defect row, so it does not
/// depend on whether a position is occupied.
#[derive(Debug, Clone)]
pub struct Decomposition {
    config: ReferenceConfig,
    stencil: Stencil,
    k_atom: u32,
    band_outer: u32,
    core: Vec<usize>,
    interface: Vec<usize>,
    continuum_atoms: Vec<usize>,
}

impl Decomposition {
    pub fn new(config: ReferenceConfig, k_atom: u32, stencil: Stencil) -> Result<Self> {
        let r = stencil.hop_radius();
        if k_atom < r + 1 {
            return Err(Error::Config(format!(
                "atomistic radius K = {k_atom} must be at least hop radius + 1 = {}",
                r + 1
            )));
        }
        let n = config.layers();
        if n < k_atom + 3 * r {
            return Err(Error::Config(format!(
                "domain of {n} layers is too small for K = {k_atom}; need at least {}",
                k_atom + 3 * r
            )));
        }
        let band_outer = (k_atom + 3 * r).min(n);
        let (mut core, mut interface, mut continuum_atoms) = (Vec::new(), Vec::new(), Vec::new());
        for (s, &c) in config.sites().iter().enumerate() {
            let d = config.row_distance(c);
            if d <= k_atom {
                core.push(s);
            } else if d <= k_atom + r {
                interface.push(s);
            } else if d <= band_outer {
                continuum_atoms.push(s);
            }
        }
        Ok(Self { config, stencil, k_atom, band_outer, core, interface, continuum_atoms })
    }

    pub fn config(&self) -> &ReferenceConfig {
        &self.config
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// `K`.
    pub fn atomistic_layers(&self) -> u32 {
        self.k_atom
    }

    /// `N`.
    pub fn layers(&self) -> u32 {
        self.config.layers()
    }

    pub fn interface_width(&self) -> u32 {
        self.stencil.hop_radius()
    }

    /// Outermost layer of the canonically triangulated band.
    pub fn band_outer(&self) -> u32 {
        self.band_outer
    }

    pub fn core_sites(&self) -> &[usize] {
        &self.core
    }

    pub fn interface_sites(&self) -> &[usize] {
        &self.interface
    }

    pub fn continuum_atom_sites(&self) -> &[usize] {
        &self.continuum_atoms
    }

    pub fn region(&self, c: Coord) -> Region {
        let d = self.config.row_distance(c);
        let r = self.interface_width();
        if d <= self.k_atom {
            Region::Core
        } else if d <= self.k_atom + r {
            Region::Interface
        } else if d <= self.band_outer {
            Region::ContinuumAtom
        } else if d <= self.layers() {
            Region::Continuum
        } else {
            Region::Outside
        }
    }

    /// Whether `c` lies in the closed atomistic domain `Ω^a`, the union of
    /// canonical triangles with all vertices in `Λ^a ∪ Λ^i` (vacancies included).
    pub fn in_atomistic_closure(&self, c: Coord) -> bool {
        self.config.row_distance(c) <= self.k_atom + self.interface_width()
    }

    /// Interface site position for the `q`-th entry of [`Self::interface_sites`].
    pub fn interface_coord(&self, q: usize) -> Coord {
        self.config.coord(self.interface[q])
    }
}

/// Degree-of-freedom numbering shared by sites and mesh nodes.
///
/// Order: `Λ^a`, then `Λ^i`, then the remaining mesh nodes in mesh order.
/// Atom-coincident nodes are stored once.
#[derive(Debug, Clone)]
pub struct DofMap {
    coords: Vec<Coord>,
    fixed: Vec<bool>,
    site_dof: Vec<Option<usize>>,
    node_dof: Vec<usize>,
}

impl DofMap {
    fn build(decomp: &Decomposition, mesh: &Mesh) -> Self {
        let config = decomp.config();
        let mut coords = Vec::new();
        let mut fixed = Vec::new();
        let mut site_dof = vec![None; config.len()];
        for &s in decomp.core_sites().iter().chain(decomp.interface_sites()) {
            site_dof[s] = Some(coords.len());
            coords.push(config.coord(s));
            fixed.push(false);
        }
        let mut node_dof = Vec::with_capacity(mesh.nodes().len());
        for node in mesh.nodes() {
            let existing = config.index_of(node.coord).and_then(|s| site_dof[s]);
            let dof = match existing {
                Some(d) => {
                    fixed[d] |= node.boundary;
                    d
                }
                None => {
                    let d = coords.len();
                    coords.push(node.coord);
                    fixed.push(node.boundary);
                    if let Some(s) = config.index_of(node.coord) {
                        site_dof[s] = Some(d);
                    }
                    d
                }
            };
            node_dof.push(dof);
        }
        Self { coords, fixed, site_dof, node_dof }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn site_dof(&self, site: usize) -> Option<usize> {
        self.site_dof[site]
    }

    pub fn node_dof(&self, node: usize) -> usize {
        self.node_dof[node]
    }
}

/// Everything describing one coupled discretisation.
#[derive(Debug, Clone)]
pub struct AcGeometry {
    pub decomp: Decomposition,
    pub mesh: Mesh,
    pub dofs: DofMap,
}

impl AcGeometry {
    pub fn build(config: ReferenceConfig, k_atom: u32, stencil: Stencil) -> Result<Self> {
        let decomp = Decomposition::new(config, k_atom, stencil)?;
        let mesh = build_mesh(&decomp)?;
        let dofs = DofMap::build(&decomp, &mesh);
        Ok(Self { decomp, mesh, dofs })
    }

    /// The same discretisation with the vacancies filled by core atoms.
    pub fn defect_free(&self) -> Result<Self> {
        Self::build(
            self.decomp.config().defect_free_twin(),
            self.decomp.atomistic_layers(),
            self.decomp.stencil().clone(),
        )
    }

    /// DOF index of the lattice point `c`, if it carries one.
    pub fn dof_at(&self, c: Coord) -> Option<usize> {
        let s = self.decomp.config().index_of(c)?;
        self.dofs.site_dof(s)
    }

    /// DOF of the neighbour `c + d`.
    pub fn neighbour_dof(&self, c: Coord, d: Coord) -> Result<usize> {
        self.dof_at(add(c, d)).ok_or(Error::MissingNeighbor { site: c, dir: d })
    }

    pub fn position(&self, dof: usize) -> Vec2 {
        self.decomp.config().basis().position(self.dofs.coords()[dof])
    }

    /// `y(x) = Fx` on every DOF.
    pub fn affine_state(&self, f: &Mat2) -> HybridState {
        let values = (0..self.dofs.len()).map(|d| f * self.position(d)).collect();
        HybridState { values, kind: StateKind::Deformation, applied_strain: *f }
    }
}

/// Nodal interpolation of a lattice field onto the coupled discretisation.
pub fn interpolate(
    geom: &AcGeometry,
    source: &ReferenceConfig,
    y: &[Vec2],
    applied_strain: Mat2,
) -> Result<HybridState> {
    let mut values = Vec::with_capacity(geom.dofs.len());
    for (d, &c) in geom.dofs.coords().iter().enumerate() {
        let s = source.index_of(c).ok_or(Error::Interpolation { node: d })?;
        values.push(y[s]);
    }
    Ok(HybridState { values, kind: StateKind::Deformation, applied_strain })
}
