//! Energy minimisation, stability checks and error norms.

mod lanczos;
mod norms;

pub use lanczos::{min_eigenvalue, min_eigenvalue_dense};
pub use norms::{error_norms, Approximation, ErrorReport, ReferenceSolution};

use crate::energy::{AcFunctional, HessianOperator, HybridState, StateKind};
use crate::error::{Error, Result};
use crate::lattice::Vec2;
use crate::sparse::LinearOperator;

/// Backtracking parameters: steps shrink by `shrink` until the Armijo
/// condition with constant `armijo` holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { shrink: 0.5, armijo: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the largest free gradient component is at most this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearch,
    /// Cap on inner conjugate-gradient iterations per Newton step.
    pub cg_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 200, line_search: LineSearch::default(), cg_max_iter: 20_000 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config(format!("grad_tol = {} must be positive", self.grad_tol)));
        }
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(Error::Config(format!("line-search shrink = {} must lie in (0, 1)", ls.shrink)));
        }
        if !(ls.armijo > 0.0 && ls.armijo < 1.0) {
            return Err(Error::Config(format!("Armijo constant = {} must lie in (0, 1)", ls.armijo)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinimizeReport {
    /// Accepted Newton or gradient steps.
    pub iterations: usize,
    pub cg_iterations: usize,
    /// Steps that fell back to the preconditioned gradient direction.
    pub gradient_steps: usize,
    pub grad_norm: f64,
    /// `E(y_k) - E(y_0)` after each accepted step.
    pub history: Vec<f64>,
}

/// Largest-magnitude component of a flat vector.
fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton-CG minimisation of `model` from `x0`; Dirichlet DOFs keep their
/// initial values. Each step solves `H p = -g` by Jacobi-preconditioned CG,
/// truncated at the first direction of non-positive curvature, and is
/// globalised by Armijo backtracking on the term-wise energy difference.
pub fn minimize(model: &AcFunctional, x0: &HybridState, cfg: &SolverConfig) -> Result<(HybridState, MinimizeReport)> {
    cfg.validate()?;
    let positions = model.positions();
    let mut y: Vec<Vec2> = match x0.kind {
        StateKind::Deformation => x0.values.clone(),
        StateKind::Displacement => x0.values.iter().zip(positions).map(|(u, x)| u + x0.applied_strain * x).collect(),
    };
    if y.len() != model.n_dofs() {
        return Err(Error::Config(format!("initial state has {} values for {} DOFs", y.len(), model.n_dofs())));
    }
    let state =
        |y: Vec<Vec2>| HybridState { values: y, kind: StateKind::Deformation, applied_strain: x0.applied_strain };
    let free = model.free_dofs().to_vec();
    let mut report = MinimizeReport::default();
    let mut field = vec![Vec2::zeros(); model.n_dofs()];
    let mut energy_gradient = |y: &[Vec2], g: &mut Vec<f64>| -> Result<()> {
        model.energy_gradient_all(y, &mut field)?;
        g.clear();
        g.extend(free.iter().flat_map(|&d| [field[d].x, field[d].y]));
        Ok(())
    };
    let mut g = Vec::new();
    energy_gradient(&y, &mut g)?;
    // Energy changes below this are indistinguishable from rounding.
    let slack = 1e-12 * (1.0 + model.total_energy(&y)?.abs());
    let mut progress = 0.0;
    loop {
        report.grad_norm = sup(&g);
        if report.grad_norm <= cfg.grad_tol {
            return Ok((state(y), report));
        }
        if report.iterations >= cfg.max_iter {
            return Err(Error::NonConvergence { iterations: report.iterations, grad_norm: report.grad_norm });
        }
        let hess = model.linearize(&y)?;
        let diag: Vec<f64> = hess.diagonal().into_iter().map(|d| if d > 0.0 { d } else { 1.0 }).collect();
        let gnorm = dot(&g, &g).sqrt();
        let tol = gnorm * gnorm.sqrt().min(0.5);
        let (mut p, cg_iters) = truncated_cg(&hess, &diag, &g, tol, cfg.cg_max_iter);
        report.cg_iterations += cg_iters;
        let mut newton = dot(&g, &p) < 0.0;
        if !newton {
            p = g.iter().zip(&diag).map(|(gi, d)| -gi / d).collect();
        }
        let step = loop {
            match line_search(model, &hess, &y, &p, &g, report.grad_norm, slack, cfg, &mut energy_gradient)? {
                Some(step) => break step,
                None if newton => {
                    newton = false;
                    p = g.iter().zip(&diag).map(|(gi, d)| -gi / d).collect();
                }
                None => {
                    return Err(Error::NonConvergence { iterations: report.iterations, grad_norm: report.grad_norm })
                }
            }
        };
        if !newton {
            report.gradient_steps += 1;
        }
        let (y_new, g_new, de) = step;
        y = y_new;
        g = g_new;
        progress += de;
        report.history.push(progress);
        report.iterations += 1;
    }
}

type Step = (Vec<Vec2>, Vec<f64>, f64);

/// Backtracks along `p`; returns the accepted state, its gradient and the
/// energy change, or `None` if no step length is acceptable.
#[allow(clippy::too_many_arguments)]
fn line_search(
    model: &AcFunctional,
    hess: &HessianOperator,
    y: &[Vec2],
    p: &[f64],
    g: &[f64],
    gsup: f64,
    slack: f64,
    cfg: &SolverConfig,
    energy_gradient: &mut impl FnMut(&[Vec2], &mut Vec<f64>) -> Result<()>,
) -> Result<Option<Step>> {
    let dir = hess.expand(p);
    let slope = dot(g, p);
    let ls = &cfg.line_search;
    let old = HybridState { values: y.to_vec(), kind: StateKind::Deformation, applied_strain: Default::default() };
    let mut alpha = 1.0;
    let mut g_new = Vec::new();
    for _ in 0..=ls.max_backtracks {
        let trial: Vec<Vec2> = y.iter().zip(&dir).map(|(a, d)| a + d * alpha).collect();
        let new = HybridState { values: trial, kind: StateKind::Deformation, applied_strain: Default::default() };
        // Non-physical trial states (collapsed bonds) just shorten the step.
        if let Ok(de) = model.energy(&new, &old) {
            let armijo = de <= ls.armijo * alpha * slope;
            let flat = de <= slack && (ls.armijo * alpha * slope).abs() <= slack;
            if armijo || flat {
                energy_gradient(&new.values, &mut g_new)?;
                if armijo || sup(&g_new) < gsup {
                    return Ok(Some((new.values, g_new, de)));
                }
            }
        }
        alpha *= ls.shrink;
    }
    Ok(None)
}

/// Preconditioned CG for `H p = -g`, stopped at residual `tol`, at
/// `max_iter`, or before the first direction of non-positive curvature.
fn truncated_cg(op: &dyn LinearOperator, diag: &[f64], g: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut hd = vec![0.0; n];
    for it in 0..max_iter {
        op.apply(&d, &mut hd);
        let curv = dot(&d, &hd);
        if curv <= 0.0 {
            if it == 0 {
                // Fall back to the preconditioned gradient.
                return (d, it);
            }
            return (x, it);
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * hd[i];
        }
        if dot(&r, &r).sqrt() <= tol {
            return (x, it + 1);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    (x, max_iter)
}
