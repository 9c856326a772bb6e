//! Atomistic and coupled energies, their first and second variations, and
//! the ghost-force evaluator.
//!
//! A model is compiled into three flat term lists over a common DOF
//! numbering: atomistic sites `V(Dy(ℓ))`, interface sites
//! `ω_ℓ [V(C_ℓ·Dy(ℓ)) + κ|D²_nn y(ℓ)|²]` and elements `ω_T W(∇y_T)`.

use std::borrow::Cow;

use crate::consistency::ReconstructionMatrix;
use crate::error::{Error, Result};
use crate::geometry::{AcGeometry, CouplingMethod, EffectiveVolumes};
use crate::lattice::{add, sub, Coord, Mat2, ReferenceConfig, Stencil, Vec2, NN};
use crate::potential::{apply_curvature, curvature, eval_v, eval_with_gradient, BondCurvature, EamParams};
use crate::sparse::{CsrMatrix, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// Values are `u = y - Bx`.
    Displacement,
    /// Values are `y`.
    Deformation,
}

/// Per-DOF values of a coupled or atomistic configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub values: Vec<Vec2>,
    pub kind: StateKind,
    pub applied_strain: Mat2,
}

impl HybridState {
    fn deformation<'a>(&'a self, positions: &[Vec2]) -> Cow<'a, [Vec2]> {
        match self.kind {
            StateKind::Deformation => Cow::Borrowed(&self.values),
            StateKind::Displacement => {
                Cow::Owned(self.values.iter().zip(positions).map(|(u, x)| u + self.applied_strain * x).collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
struct InterfaceTerm {
    centre: usize,
    weight: f64,
    nbr: Vec<usize>,
    /// `C_ℓ`, row-major over `(ρ, ς)`.
    coeffs: Vec<f64>,
    stab: [[usize; 2]; 3],
}

#[derive(Debug, Clone)]
struct ElementTerm {
    nodes: [usize; 3],
    grads: [Vec2; 3],
    weight: f64,
}

/// Result of [`AcFunctional::ghost_force`].
#[derive(Debug, Clone, PartialEq)]
pub struct GhostForce {
    /// Largest force component over free DOFs.
    pub max: f64,
    /// Forces per DOF (zero on Dirichlet DOFs).
    pub field: Vec<Vec2>,
}

/// A compiled energy functional.
#[derive(Debug, Clone)]
pub struct AcFunctional {
    params: EamParams,
    dirs: Vec<Vec2>,
    cell: f64,
    kappa: f64,
    method: Option<CouplingMethod>,
    coords: Vec<Coord>,
    positions: Vec<Vec2>,
    fixed: Vec<bool>,
    free: Vec<usize>,
    atom_centre: Vec<usize>,
    atom_start: Vec<usize>,
    atom_nbr: Vec<usize>,
    interface: Vec<InterfaceTerm>,
    elements: Vec<ElementTerm>,
}

impl AcFunctional {
    /// Full atomistic model on `config`: sites within `free_layers - 1` hops of
    /// the defect row are free, the rest are clamped to the far field. Every
    /// site whose stencil reaches a free site contributes an energy term.
    pub fn atomistic(config: &ReferenceConfig, stencil: &Stencil, params: EamParams, free_layers: u32) -> Result<Self> {
        let r = stencil.hop_radius();
        if config.layers() < free_layers + 2 * r {
            return Err(Error::Config(format!(
                "atomistic domain of {} layers cannot clamp {} free layers",
                config.layers(),
                free_layers
            )));
        }
        let coords = config.sites().to_vec();
        let positions: Vec<Vec2> = (0..config.len()).map(|s| config.position(s)).collect();
        let fixed: Vec<bool> = coords.iter().map(|&c| config.row_distance(c) >= free_layers).collect();
        let mut atom_centre = Vec::new();
        let mut atom_start = vec![0];
        let mut atom_nbr = Vec::new();
        for (s, &c) in coords.iter().enumerate() {
            if config.row_distance(c) > free_layers - 1 + r {
                continue;
            }
            let nbrs = config.neighbours(s, stencil)?;
            atom_centre.push(s);
            atom_nbr.extend(nbrs.iter().map(|&(_, t)| t));
            atom_start.push(atom_nbr.len());
        }
        Ok(Self::finish(Self {
            params,
            dirs: stencil.physical(config.basis()),
            cell: config.basis().voronoi_volume(),
            kappa: 0.0,
            method: None,
            coords,
            positions,
            fixed,
            free: Vec::new(),
            atom_centre,
            atom_start,
            atom_nbr,
            interface: Vec::new(),
            elements: Vec::new(),
        }))
    }

    /// Coupled energy on `geom` with interface coefficients `coeffs`
    /// (aligned with the interface site list) and stabilisation `kappa`.
    pub fn coupled(
        geom: &AcGeometry,
        volumes: &EffectiveVolumes,
        coeffs: &[ReconstructionMatrix],
        kappa: f64,
        params: EamParams,
    ) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::Config(format!("stabilisation κ = {kappa} must be non-negative")));
        }
        let decomp = &geom.decomp;
        let config = decomp.config();
        let stencil = decomp.stencil();
        if coeffs.len() != decomp.interface_sites().len() {
            return Err(Error::Config(format!(
                "{} reconstruction matrices for {} interface sites",
                coeffs.len(),
                decomp.interface_sites().len()
            )));
        }
        let dof = |s: usize| geom.dofs.site_dof(s).expect("core and interface sites carry DOFs");

        let mut atom_centre = Vec::new();
        let mut atom_start = vec![0];
        let mut atom_nbr = Vec::new();
        for &s in decomp.core_sites() {
            let c = config.coord(s);
            atom_centre.push(dof(s));
            for (_, t) in config.neighbours(s, stencil)? {
                let d =
                    geom.dofs.site_dof(t).ok_or(Error::MissingNeighbor { site: c, dir: sub(config.coord(t), c) })?;
                atom_nbr.push(d);
            }
            atom_start.push(atom_nbr.len());
        }

        let rr = stencil.len();
        let mut interface = Vec::with_capacity(coeffs.len());
        for (q, (&s, cm)) in decomp.interface_sites().iter().zip(coeffs).enumerate() {
            let c = config.coord(s);
            if cm.site != s || cm.entries.len() != rr * rr {
                return Err(Error::Config(format!("reconstruction matrix {q} does not match interface site {s}")));
            }
            let nbr = stencil.directions().iter().map(|&d| geom.neighbour_dof(c, d)).collect::<Result<Vec<_>>>()?;
            let mut stab = [[0; 2]; 3];
            for (j, b) in NN[..3].iter().enumerate() {
                stab[j] = [geom.neighbour_dof(c, *b)?, geom.neighbour_dof(c, crate::lattice::neg(*b))?];
            }
            interface.push(InterfaceTerm {
                centre: dof(s),
                weight: volumes.omega_i[q],
                nbr,
                coeffs: cm.entries.clone(),
                stab,
            });
        }

        let mesh = &geom.mesh;
        let elements = mesh
            .triangles()
            .iter()
            .zip(&volumes.omega_t)
            .filter(|(_, &w)| w > 0.0)
            .map(|(t, &w)| ElementTerm { nodes: t.nodes.map(|n| geom.dofs.node_dof(n)), grads: t.grads, weight: w })
            .collect();

        let positions = (0..geom.dofs.len()).map(|d| geom.position(d)).collect();
        Ok(Self::finish(Self {
            params,
            dirs: stencil.physical(config.basis()),
            cell: config.basis().voronoi_volume(),
            kappa,
            method: Some(volumes.method),
            coords: geom.dofs.coords().to_vec(),
            positions,
            fixed: geom.dofs.fixed().to_vec(),
            free: Vec::new(),
            atom_centre,
            atom_start,
            atom_nbr,
            interface,
            elements,
        }))
    }

    fn finish(mut self) -> Self {
        self.free = (0..self.fixed.len()).filter(|&d| !self.fixed[d]).collect();
        self
    }

    /// Copy with a different stabilisation weight.
    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self { kappa, ..self.clone() }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn method(&self) -> Option<CouplingMethod> {
        self.method
    }

    pub fn params(&self) -> &EamParams {
        &self.params
    }

    pub fn n_dofs(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    /// Free DOFs in increasing order.
    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// Centre DOFs of the interface terms.
    pub fn interface_dofs(&self) -> Vec<usize> {
        self.interface.iter().map(|t| t.centre).collect()
    }

    pub fn affine_state(&self, f: &Mat2) -> HybridState {
        HybridState {
            values: self.positions.iter().map(|x| f * x).collect(),
            kind: StateKind::Deformation,
            applied_strain: *f,
        }
    }

    fn check_len(&self, y: &HybridState) -> Result<()> {
        if y.values.len() != self.n_dofs() {
            return Err(Error::Config(format!("state has {} values for {} DOFs", y.values.len(), self.n_dofs())));
        }
        Ok(())
    }

    /// Energies of the individual terms, in the order atoms, interface, elements.
    fn term_energies(&self, y: &[Vec2], mut sink: impl FnMut(f64)) -> Result<()> {
        let mut g = Vec::with_capacity(self.dirs.len());
        for (t, &c) in self.atom_centre.iter().enumerate() {
            g.clear();
            g.extend(self.atom_nbr[self.atom_start[t]..self.atom_start[t + 1]].iter().map(|&n| y[n] - y[c]));
            sink(eval_v(&g, &self.params)?);
        }
        let mut dy = Vec::with_capacity(self.dirs.len());
        for term in &self.interface {
            self.reconstruct(term, y, &mut dy, &mut g);
            let mut e = eval_v(&g, &self.params)?;
            e += self.kappa * stab_sq(term, y);
            sink(term.weight * e);
        }
        for term in &self.elements {
            let f = element_gradient(term, y);
            g.clear();
            g.extend(self.dirs.iter().map(|r| f * r));
            sink(term.weight * eval_v(&g, &self.params)? / self.cell);
        }
        Ok(())
    }

    /// `g = C_ℓ · Dy(ℓ)`.
    fn reconstruct(&self, term: &InterfaceTerm, y: &[Vec2], dy: &mut Vec<Vec2>, g: &mut Vec<Vec2>) {
        let n = term.nbr.len();
        dy.clear();
        dy.extend(term.nbr.iter().map(|&k| y[k] - y[term.centre]));
        g.clear();
        for r in 0..n {
            let row = &term.coeffs[r * n..(r + 1) * n];
            let mut s = Vec2::zeros();
            for (c, d) in row.iter().zip(dy.iter()) {
                if *c != 0.0 {
                    s += d * *c;
                }
            }
            g.push(s);
        }
    }

    /// `Σ_terms Φ(y)`.
    pub fn total_energy(&self, y: &[Vec2]) -> Result<f64> {
        let mut sum = 0.0;
        self.term_energies(y, |e| sum += e)?;
        Ok(sum)
    }

    /// `E(y; z) = Σ_terms [Φ(y) - Φ(z)]`, differenced term by term.
    pub fn energy(&self, y: &HybridState, z: &HybridState) -> Result<f64> {
        self.check_len(y)?;
        self.check_len(z)?;
        let yv = y.deformation(&self.positions);
        let zv = z.deformation(&self.positions);
        let mut ez = Vec::new();
        self.term_energies(&zv, |e| ez.push(e))?;
        let mut sum = 0.0;
        let mut i = 0;
        self.term_energies(&yv, |e| {
            sum += e - ez[i];
            i += 1;
        })?;
        Ok(sum)
    }

    /// Total energy and its gradient with respect to every DOF (fixed ones
    /// included); `out` is overwritten.
    pub fn energy_gradient_all(&self, y: &[Vec2], out: &mut [Vec2]) -> Result<f64> {
        out.iter_mut().for_each(|o| *o = Vec2::zeros());
        let n = self.dirs.len();
        let mut g = Vec::with_capacity(n);
        let mut dv = vec![Vec2::zeros(); n];
        let mut total = 0.0;
        for (t, &c) in self.atom_centre.iter().enumerate() {
            let nbrs = &self.atom_nbr[self.atom_start[t]..self.atom_start[t + 1]];
            g.clear();
            g.extend(nbrs.iter().map(|&k| y[k] - y[c]));
            total += eval_with_gradient(&g, &self.params, &mut dv)?;
            let mut sc = Vec2::zeros();
            for (&k, d) in nbrs.iter().zip(&dv) {
                out[k] += d;
                sc += d;
            }
            out[c] -= sc;
        }
        let mut dy = Vec::with_capacity(n);
        for term in &self.interface {
            self.reconstruct(term, y, &mut dy, &mut g);
            let e = eval_with_gradient(&g, &self.params, &mut dv)?;
            total += term.weight * (e + self.kappa * stab_sq(term, y));
            scatter_reconstructed(term, &dv, term.weight, out);
            if self.kappa != 0.0 {
                for &[f, b] in &term.stab {
                    let s = (y[f] - 2.0 * y[term.centre] + y[b]) * (2.0 * self.kappa * term.weight);
                    out[f] += s;
                    out[b] += s;
                    out[term.centre] -= 2.0 * s;
                }
            }
        }
        for term in &self.elements {
            let f = element_gradient(term, y);
            g.clear();
            g.extend(self.dirs.iter().map(|r| f * r));
            let e = eval_with_gradient(&g, &self.params, &mut dv)?;
            let scale = term.weight / self.cell;
            total += scale * e;
            scatter_element(term, &self.dirs, &dv, scale, out);
        }
        Ok(total)
    }

    /// First variation with Dirichlet DOFs zeroed.
    pub fn gradient(&self, y: &HybridState) -> Result<Vec<Vec2>> {
        self.check_len(y)?;
        let yv = y.deformation(&self.positions);
        let mut out = vec![Vec2::zeros(); self.n_dofs()];
        self.energy_gradient_all(&yv, &mut out)?;
        for (o, &f) in out.iter_mut().zip(&self.fixed) {
            if f {
                *o = Vec2::zeros();
            }
        }
        Ok(out)
    }

    /// Second variation at `y`.
    pub fn hessian(&self, y: &HybridState) -> Result<HessianOperator<'_>> {
        self.check_len(y)?;
        let yv = y.deformation(&self.positions);
        self.linearize(&yv)
    }

    pub fn linearize(&self, y: &[Vec2]) -> Result<HessianOperator<'_>> {
        let n = self.dirs.len();
        let mut atom_curv = vec![BondCurvature::default(); self.atom_nbr.len()];
        let mut atom_fpp = Vec::with_capacity(self.atom_centre.len());
        let mut g = Vec::with_capacity(n);
        for (t, &c) in self.atom_centre.iter().enumerate() {
            let range = self.atom_start[t]..self.atom_start[t + 1];
            g.clear();
            g.extend(self.atom_nbr[range.clone()].iter().map(|&k| y[k] - y[c]));
            atom_fpp.push(curvature(&g, &self.params, &mut atom_curv[range])?);
        }
        let mut iface_curv = vec![BondCurvature::default(); self.interface.len() * n];
        let mut iface_fpp = Vec::with_capacity(self.interface.len());
        let mut dy = Vec::with_capacity(n);
        for (q, term) in self.interface.iter().enumerate() {
            self.reconstruct(term, y, &mut dy, &mut g);
            iface_fpp.push(curvature(&g, &self.params, &mut iface_curv[q * n..(q + 1) * n])?);
        }
        let mut elem_curv = vec![BondCurvature::default(); self.elements.len() * n];
        let mut elem_fpp = Vec::with_capacity(self.elements.len());
        for (e, term) in self.elements.iter().enumerate() {
            let f = element_gradient(term, y);
            g.clear();
            g.extend(self.dirs.iter().map(|r| f * r));
            elem_fpp.push(curvature(&g, &self.params, &mut elem_curv[e * n..(e + 1) * n])?);
        }
        let mut free_index = vec![usize::MAX; self.n_dofs()];
        for (i, &d) in self.free.iter().enumerate() {
            free_index[d] = i;
        }
        Ok(HessianOperator { model: self, atom_curv, atom_fpp, iface_curv, iface_fpp, elem_curv, elem_fpp, free_index })
    }

    /// Forces at the uniform state `y = Fx`. Meaningful on a defect-free
    /// discretisation, where they must vanish for a consistent coupling.
    pub fn ghost_force(&self, f: &Mat2) -> Result<GhostForce> {
        let field = self.gradient(&self.affine_state(f))?;
        let max = field.iter().map(|v| v.x.abs().max(v.y.abs())).fold(0.0, f64::max);
        Ok(GhostForce { max, field })
    }

    /// Largest `|Φ^i_ℓ(y_F) - Φ_ℓ(y_F)|` over interface sites.
    pub fn interface_energy_mismatch(&self, f: &Mat2) -> Result<f64> {
        let y: Vec<Vec2> = self.positions.iter().map(|x| f * x).collect();
        let exact = eval_v(&self.dirs.iter().map(|r| f * r).collect::<Vec<_>>(), &self.params)?;
        let (mut dy, mut g) = (Vec::new(), Vec::new());
        let mut worst: f64 = 0.0;
        for term in &self.interface {
            self.reconstruct(term, &y, &mut dy, &mut g);
            let e = eval_v(&g, &self.params)? + self.kappa * stab_sq(term, &y);
            worst = worst.max((e - exact).abs());
        }
        Ok(worst)
    }
}

fn stab_sq(term: &InterfaceTerm, y: &[Vec2]) -> f64 {
    term.stab.iter().map(|&[f, b]| (y[f] - 2.0 * y[term.centre] + y[b]).norm_squared()).sum()
}

fn element_gradient(term: &ElementTerm, y: &[Vec2]) -> Mat2 {
    let mut f = Mat2::zeros();
    for (&n, g) in term.nodes.iter().zip(&term.grads) {
        f += y[n] * g.transpose();
    }
    f
}

/// Adds `scale · Σ_ρ C_{ρς} v_ρ` to `ℓ+ς` and subtracts it from `ℓ`.
fn scatter_reconstructed(term: &InterfaceTerm, v: &[Vec2], scale: f64, out: &mut [Vec2]) {
    let n = term.nbr.len();
    let mut sc = Vec2::zeros();
    for (s, &k) in term.nbr.iter().enumerate() {
        let mut t = Vec2::zeros();
        for (r, vr) in v.iter().enumerate().take(n) {
            let c = term.coeffs[r * n + s];
            if c != 0.0 {
                t += vr * c;
            }
        }
        t *= scale;
        out[k] += t;
        sc += t;
    }
    out[term.centre] -= sc;
}

fn scatter_element(term: &ElementTerm, dirs: &[Vec2], v: &[Vec2], scale: f64, out: &mut [Vec2]) {
    for (&node, grad) in term.nodes.iter().zip(&term.grads) {
        let mut s = Vec2::zeros();
        for (d, r) in v.iter().zip(dirs) {
            s += d * r.dot(grad);
        }
        out[node] += s * scale;
    }
}

/// The Hessian of a model at a fixed state, applied matrix-free.
pub struct HessianOperator<'a> {
    model: &'a AcFunctional,
    atom_curv: Vec<BondCurvature>,
    atom_fpp: Vec<f64>,
    iface_curv: Vec<BondCurvature>,
    iface_fpp: Vec<f64>,
    elem_curv: Vec<BondCurvature>,
    elem_fpp: Vec<f64>,
    free_index: Vec<usize>,
}

impl HessianOperator<'_> {
    pub fn model(&self) -> &AcFunctional {
        self.model
    }

    /// `out = H w` over all DOFs, without Dirichlet masking.
    pub fn apply_field(&self, w: &[Vec2], out: &mut [Vec2]) {
        let m = self.model;
        out.iter_mut().for_each(|o| *o = Vec2::zeros());
        let n = m.dirs.len();
        let mut dw = Vec::with_capacity(n);
        let mut s = vec![Vec2::zeros(); n];
        for (t, &c) in m.atom_centre.iter().enumerate() {
            let range = m.atom_start[t]..m.atom_start[t + 1];
            let nbrs = &m.atom_nbr[range.clone()];
            dw.clear();
            dw.extend(nbrs.iter().map(|&k| w[k] - w[c]));
            let k = nbrs.len();
            apply_curvature(&self.atom_curv[range], self.atom_fpp[t], &dw, &mut s[..k]);
            let mut sc = Vec2::zeros();
            for (&k, v) in nbrs.iter().zip(&s[..k]) {
                out[k] += v;
                sc += v;
            }
            out[c] -= sc;
        }
        let mut g = Vec::with_capacity(n);
        for (q, term) in m.interface.iter().enumerate() {
            m.reconstruct(term, w, &mut dw, &mut g);
            apply_curvature(&self.iface_curv[q * n..(q + 1) * n], self.iface_fpp[q], &g, &mut s);
            scatter_reconstructed(term, &s, term.weight, out);
            if m.kappa != 0.0 {
                for &[f, b] in &term.stab {
                    let d = (w[f] - 2.0 * w[term.centre] + w[b]) * (2.0 * m.kappa * term.weight);
                    out[f] += d;
                    out[b] += d;
                    out[term.centre] -= 2.0 * d;
                }
            }
        }
        for (e, term) in m.elements.iter().enumerate() {
            let f = element_gradient(term, w);
            g.clear();
            g.extend(m.dirs.iter().map(|r| f * r));
            apply_curvature(&self.elem_curv[e * n..(e + 1) * n], self.elem_fpp[e], &g, &mut s);
            scatter_element(term, &m.dirs, &s, term.weight / m.cell, out);
        }
    }

    /// Expands a free-DOF vector to a DOF field with zeros on Dirichlet DOFs.
    pub fn expand(&self, x: &[f64]) -> Vec<Vec2> {
        let mut w = vec![Vec2::zeros(); self.model.n_dofs()];
        for (i, &d) in self.model.free.iter().enumerate() {
            w[d] = Vec2::new(x[2 * i], x[2 * i + 1]);
        }
        w
    }

    pub fn restrict(&self, field: &[Vec2], x: &mut [f64]) {
        for (i, &d) in self.model.free.iter().enumerate() {
            x[2 * i] = field[d].x;
            x[2 * i + 1] = field[d].y;
        }
    }

    /// Diagonal of the free-DOF matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        let m = self.model;
        let mut d = vec![Vec2::zeros(); m.n_dofs()];
        // Atomistic terms: the centre block is Σ_kl V_kl, a neighbour block is V_kk.
        for (t, &c) in m.atom_centre.iter().enumerate() {
            let range = m.atom_start[t]..m.atom_start[t + 1];
            let fpp = self.atom_fpp[t];
            let mut esum = Vec2::zeros();
            for (&k, b) in m.atom_nbr[range.clone()].iter().zip(&self.atom_curv[range]) {
                let own = Vec2::new(
                    b.across + (b.along - b.across) * b.unit.x * b.unit.x,
                    b.across + (b.along - b.across) * b.unit.y * b.unit.y,
                );
                d[k] += own + b.embed.component_mul(&b.embed) * fpp;
                d[c] += own;
                esum += b.embed;
            }
            d[c] += esum.component_mul(&esum) * fpp;
        }
        // Interface and element terms are probed one local unit vector at a time.
        self.for_each_local_block(|dofs, block| {
            let k = dofs.len();
            for (i, &di) in dofs.iter().enumerate() {
                d[di].x += block[(2 * i) * 2 * k + 2 * i];
                d[di].y += block[(2 * i + 1) * 2 * k + 2 * i + 1];
            }
        });
        let mut out = vec![0.0; 2 * m.free.len()];
        self.restrict(&d, &mut out);
        out
    }

    /// Calls `f(dofs, block)` with each interface/element term's dense local
    /// Hessian (row-major, `2k × 2k`).
    fn for_each_local_block(&self, mut f: impl FnMut(&[usize], &[f64])) {
        let m = self.model;
        let n = m.dirs.len();
        let mut s = vec![Vec2::zeros(); n];
        let mut g = Vec::with_capacity(n);
        let mut dw = Vec::with_capacity(n);
        let mut w = vec![Vec2::zeros(); m.n_dofs()];
        let mut out = vec![Vec2::zeros(); m.n_dofs()];
        for (q, term) in m.interface.iter().enumerate() {
            let mut dofs = vec![term.centre];
            for &k in term.nbr.iter().chain(term.stab.iter().flatten()) {
                if !dofs.contains(&k) {
                    dofs.push(k);
                }
            }
            let block = local_block(&dofs, &mut w, &mut out, |w, out| {
                m.reconstruct(term, w, &mut dw, &mut g);
                apply_curvature(&self.iface_curv[q * n..(q + 1) * n], self.iface_fpp[q], &g, &mut s);
                scatter_reconstructed(term, &s, term.weight, out);
                if m.kappa != 0.0 {
                    for &[fw, b] in &term.stab {
                        let d = (w[fw] - 2.0 * w[term.centre] + w[b]) * (2.0 * m.kappa * term.weight);
                        out[fw] += d;
                        out[b] += d;
                        out[term.centre] -= 2.0 * d;
                    }
                }
            });
            f(&dofs, &block);
        }
        for (e, term) in m.elements.iter().enumerate() {
            let block = local_block(&term.nodes, &mut w, &mut out, |w, out| {
                let fm = element_gradient(term, w);
                g.clear();
                g.extend(m.dirs.iter().map(|r| fm * r));
                apply_curvature(&self.elem_curv[e * n..(e + 1) * n], self.elem_fpp[e], &g, &mut s);
                scatter_element(term, &m.dirs, &s, term.weight / m.cell, out);
            });
            f(&term.nodes, &block);
        }
    }

    /// Assembled free-DOF Hessian in CSR form (two rows per DOF).
    pub fn assemble(&self) -> CsrMatrix {
        let m = self.model;
        let mut trip = Vec::new();
        let mut push = |dofs: &[usize], block: &[f64]| {
            let k = dofs.len();
            for (i, &di) in dofs.iter().enumerate() {
                let fi = self.free_index[di];
                if fi == usize::MAX {
                    continue;
                }
                for (j, &dj) in dofs.iter().enumerate() {
                    let fj = self.free_index[dj];
                    if fj == usize::MAX {
                        continue;
                    }
                    for a in 0..2 {
                        for b in 0..2 {
                            let v = block[(2 * i + a) * 2 * k + 2 * j + b];
                            if v != 0.0 {
                                trip.push((2 * fi + a, 2 * fj + b, v));
                            }
                        }
                    }
                }
            }
        };
        let mut s = Vec::new();
        let mut w = vec![Vec2::zeros(); m.n_dofs()];
        let mut out = vec![Vec2::zeros(); m.n_dofs()];
        for (t, &c) in m.atom_centre.iter().enumerate() {
            let range = m.atom_start[t]..m.atom_start[t + 1];
            let mut dofs = vec![c];
            dofs.extend_from_slice(&m.atom_nbr[range.clone()]);
            let curv = &self.atom_curv[range.clone()];
            let fpp = self.atom_fpp[t];
            let block = local_block(&dofs, &mut w, &mut out, |w, out| {
                let nbrs = &m.atom_nbr[range.clone()];
                let dw: Vec<Vec2> = nbrs.iter().map(|&k| w[k] - w[c]).collect();
                s.resize(nbrs.len(), Vec2::zeros());
                apply_curvature(curv, fpp, &dw, &mut s);
                for (&k, v) in nbrs.iter().zip(&s) {
                    out[k] += v;
                    out[c] -= v;
                }
            });
            push(&dofs, &block);
        }
        self.for_each_local_block(|dofs, block| push(dofs, block));
        let n = 2 * m.free.len();
        CsrMatrix::from_triplets(n, n, trip)
    }
}

/// Dense local matrix of a linear map restricted to `dofs`, probing with unit
/// vectors. `w` and `out` are global scratch fields that must be zero on entry
/// and are left zero; the map may only write to `dofs`.
fn local_block(
    dofs: &[usize],
    w: &mut [Vec2],
    out: &mut [Vec2],
    mut apply: impl FnMut(&[Vec2], &mut [Vec2]),
) -> Vec<f64> {
    let k = dofs.len();
    let mut block = vec![0.0; 4 * k * k];
    for (j, &dj) in dofs.iter().enumerate() {
        for b in 0..2 {
            w[dj][b] = 1.0;
            apply(w, out);
            w[dj][b] = 0.0;
            for (i, &di) in dofs.iter().enumerate() {
                for a in 0..2 {
                    block[(2 * i + a) * 2 * k + 2 * j + b] = out[di][a];
                }
                out[di] = Vec2::zeros();
            }
        }
    }
    block
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        2 * self.model.free.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.expand(x);
        let mut out = vec![Vec2::zeros(); w.len()];
        self.apply_field(&w, &mut out);
        self.restrict(&out, y);
    }
}

/// Coordinates of `Λ^i + R`: every lattice point reached from an interface
/// site by a stencil direction or the zero vector.
pub fn interface_reach(geom: &AcGeometry) -> Vec<Coord> {
    let decomp = &geom.decomp;
    let mut out: Vec<Coord> = Vec::new();
    for q in 0..decomp.interface_sites().len() {
        let c = decomp.interface_coord(q);
        for &d in std::iter::once(&[0, 0]).chain(decomp.stencil().directions()) {
            out.push(add(c, d));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
