//! Embedded-atom site potential `V(g) = Σ_ρ φ(|g_ρ|) + F(Σ_ρ ψ(|g_ρ|))`
//! and the Cauchy–Born energy density built from it.

use crate::error::{Error, Result};
use crate::lattice::{LatticeBasis, Mat2, Stencil, Vec2};

/// `φ(r) = e^{-2a(r-1)} - 2e^{-a(r-1)}`, `ψ(r) = e^{-br}`,
/// `F(t) = c[(t-ρ₀)² + (t-ρ₀)⁴]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EamParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub rho0: f64,
}

impl Default for EamParams {
    fn default() -> Self {
        let b = 3.0;
        Self { a: 4.4, b, c: 5.0, rho0: 6.0 * (-b).exp() }
    }
}

impl EamParams {
    /// `(φ, φ', φ'')` at `r`.
    #[inline]
    pub fn pair(&self, r: f64) -> (f64, f64, f64) {
        let e = (-self.a * (r - 1.0)).exp();
        let e2 = e * e;
        let a = self.a;
        (e2 - 2.0 * e, -2.0 * a * e2 + 2.0 * a * e, 4.0 * a * a * e2 - 2.0 * a * a * e)
    }

    /// `(ψ, ψ', ψ'')` at `r`.
    #[inline]
    pub fn density(&self, r: f64) -> (f64, f64, f64) {
        let e = (-self.b * r).exp();
        (e, -self.b * e, self.b * self.b * e)
    }

    /// `(F, F', F'')` at `t`.
    #[inline]
    pub fn embedding(&self, t: f64) -> (f64, f64, f64) {
        let s = t - self.rho0;
        let s2 = s * s;
        (self.c * (s2 + s2 * s2), self.c * (2.0 * s + 4.0 * s2 * s), self.c * (2.0 + 12.0 * s2))
    }
}

#[inline]
fn bond_length(g: &Vec2, bond: usize) -> Result<f64> {
    let r = g.norm();
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Singular { bond })
    }
}

pub fn eval_v(g: &[Vec2], p: &EamParams) -> Result<f64> {
    let mut pair = 0.0;
    let mut t = 0.0;
    for (k, gk) in g.iter().enumerate() {
        let r = bond_length(gk, k)?;
        pair += p.pair(r).0;
        t += p.density(r).0;
    }
    Ok(pair + p.embedding(t).0)
}

/// Site energy and `∇_ρV` written into `out`.
pub fn eval_with_gradient(g: &[Vec2], p: &EamParams, out: &mut [Vec2]) -> Result<f64> {
    let mut pair = 0.0;
    let mut t = 0.0;
    // First pass stores (φ', ψ') / r in `out` so the lengths are computed once.
    for (k, gk) in g.iter().enumerate() {
        let r = bond_length(gk, k)?;
        let (f, df, _) = p.pair(r);
        let (s, ds, _) = p.density(r);
        pair += f;
        t += s;
        out[k] = Vec2::new(df / r, ds / r);
    }
    let (emb, demb, _) = p.embedding(t);
    for (k, gk) in g.iter().enumerate() {
        let c = out[k];
        out[k] = gk * (c.x + demb * c.y);
    }
    Ok(pair + emb)
}

pub fn grad_v(g: &[Vec2], p: &EamParams) -> Result<Vec<Vec2>> {
    let mut out = vec![Vec2::zeros(); g.len()];
    eval_with_gradient(g, p, &mut out)?;
    Ok(out)
}

/// Second-derivative data of `V` at one argument.
///
/// `V_{ρς} = δ_{ρς}[α_ρ ĝĝᵀ + β_ρ(I - ĝĝᵀ)] + F''·e_ρ e_ςᵀ` with
/// `e_ρ = ψ'(|g_ρ|) ĝ_ρ`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BondCurvature {
    pub unit: Vec2,
    pub along: f64,
    pub across: f64,
    pub embed: Vec2,
}

/// Fills `out` with the bond curvatures of `V` at `g` and returns `F''`.
pub fn curvature(g: &[Vec2], p: &EamParams, out: &mut [BondCurvature]) -> Result<f64> {
    let mut t = 0.0;
    for (k, gk) in g.iter().enumerate() {
        t += p.density(bond_length(gk, k)?).0;
    }
    let (_, demb, ddemb) = p.embedding(t);
    for (k, gk) in g.iter().enumerate() {
        let r = gk.norm();
        let unit = gk / r;
        let (_, df, ddf) = p.pair(r);
        let (_, ds, dds) = p.density(r);
        out[k] = BondCurvature { unit, along: ddf + demb * dds, across: (df + demb * ds) / r, embed: unit * ds };
    }
    Ok(ddemb)
}

/// `out_ρ = Σ_ς V_{ρς} w_ς` from precomputed curvature data.
#[inline]
pub fn apply_curvature(bonds: &[BondCurvature], fpp: f64, w: &[Vec2], out: &mut [Vec2]) {
    let mut s = 0.0;
    for (b, wk) in bonds.iter().zip(w) {
        s += b.embed.dot(wk);
    }
    let s = fpp * s;
    for ((b, wk), o) in bonds.iter().zip(w).zip(out.iter_mut()) {
        let par = b.unit.dot(wk);
        *o = b.unit * ((b.along - b.across) * par) + wk * b.across + b.embed * s;
    }
}

/// Dense Hessian blocks `V_{ρς}`, row-major over `(ρ, ς)`.
pub fn hess_v(g: &[Vec2], p: &EamParams) -> Result<Vec<Mat2>> {
    let n = g.len();
    let mut bonds = vec![BondCurvature::default(); n];
    let fpp = curvature(g, p, &mut bonds)?;
    let mut out = vec![Mat2::zeros(); n * n];
    for r in 0..n {
        for s in 0..n {
            let mut m = fpp * bonds[r].embed * bonds[s].embed.transpose();
            if r == s {
                let u = bonds[r].unit;
                let uu = u * u.transpose();
                m += uu * bonds[r].along + (Mat2::identity() - uu) * bonds[r].across;
            }
            out[r * n + s] = m;
        }
    }
    Ok(out)
}

/// Cauchy–Born energy density `W(F) = V((Fρ)_ρ) / det A`.
#[derive(Debug, Clone)]
pub struct CauchyBorn {
    params: EamParams,
    dirs: Vec<Vec2>,
    det_a: f64,
}

impl CauchyBorn {
    pub fn new(stencil: &Stencil, basis: &LatticeBasis, params: EamParams) -> Self {
        Self { params, dirs: stencil.physical(basis), det_a: basis.voronoi_volume() }
    }

    pub fn params(&self) -> &EamParams {
        &self.params
    }

    /// Stencil directions in physical coordinates.
    pub fn directions(&self) -> &[Vec2] {
        &self.dirs
    }

    pub fn cell_volume(&self) -> f64 {
        self.det_a
    }

    pub fn deformed(&self, f: &Mat2) -> Vec<Vec2> {
        self.dirs.iter().map(|r| f * r).collect()
    }

    pub fn energy(&self, f: &Mat2) -> Result<f64> {
        Ok(eval_v(&self.deformed(f), &self.params)? / self.det_a)
    }

    /// `∂W/∂F = Σ_ρ ∇_ρV ⊗ ρ / det A`.
    pub fn stress(&self, f: &Mat2) -> Result<Mat2> {
        let dv = grad_v(&self.deformed(f), &self.params)?;
        let mut s = Mat2::zeros();
        for (d, r) in dv.iter().zip(&self.dirs) {
            s += d * r.transpose();
        }
        Ok(s / self.det_a)
    }

    /// Largest `|∇_ρV|` at the uniform state `F`, used as the force scale.
    pub fn force_scale(&self, f: &Mat2) -> Result<f64> {
        let dv = grad_v(&self.deformed(f), &self.params)?;
        Ok(dv.iter().map(|d| d.norm()).fold(0.0, f64::max))
    }

    /// `(W, W', W'')` along the dilation path `α ↦ W(αI)`.
    pub fn dilation(&self, alpha: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let (mut w, mut dw, mut ddw) = (0.0, 0.0, 0.0);
        let (mut t, mut dt, mut ddt) = (0.0, 0.0, 0.0);
        for r in &self.dirs {
            let len = r.norm();
            let (f, df, ddf) = p.pair(alpha * len);
            let (s, ds, dds) = p.density(alpha * len);
            w += f;
            dw += df * len;
            ddw += ddf * len * len;
            t += s;
            dt += ds * len;
            ddt += dds * len * len;
        }
        let (e, de, dde) = p.embedding(t);
        ((w + e) / self.det_a, (dw + de * dt) / self.det_a, (ddw + dde * dt * dt + de * ddt) / self.det_a)
    }
}

/// Ground-state strain `F₀ = α* I` minimising `α ↦ W(αI)` on `[0.5, 2]`.
pub fn find_f0(stencil: &Stencil, basis: &LatticeBasis, params: &EamParams) -> Result<Mat2> {
    let cb = CauchyBorn::new(stencil, basis, *params);
    let w = |x: f64| cb.dilation(x).0;
    let (lo, hi) = (0.5, 2.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (w(c), w(d));
    while b - a > 1e-8 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = w(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = w(d);
        }
    }
    let mut alpha = 0.5 * (a + b);
    if !(w(alpha) < w(lo) && w(alpha) < w(hi)) || alpha - lo < 1e-6 || hi - alpha < 1e-6 {
        return Err(Error::Config("no interior minimiser of W(αI) in [0.5, 2]".into()));
    }
    for _ in 0..50 {
        let (_, dw, ddw) = cb.dilation(alpha);
        if dw.abs() <= 1e-12 {
            break;
        }
        if !(ddw > 0.0) {
            return Err(Error::Config("W(αI) is not convex near its minimiser".into()));
        }
        alpha -= dw / ddw;
    }
    if cb.dilation(alpha).1.abs() > 1e-12 {
        return Err(Error::Config("Newton polish of the ground-state strain did not converge".into()));
    }
    Ok(Mat2::identity() * alpha)
}
