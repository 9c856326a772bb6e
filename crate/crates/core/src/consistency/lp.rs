//! ℓ¹-minimal solutions by a dense revised simplex method.
//!
//! `min Σ|x_j|` subject to `A x = b` is posed as `min 1ᵀ(x⁺ + x⁻)` with
//! `A(x⁺ - x⁻) = b`, `x± ≥ 0`. Each independent block of the system is solved
//! separately: phase 1 drives a full set of artificials to zero, phase 2
//! minimises the split objective. Pricing uses devex weights and the ratio
//! test is Harris' two-pass rule; after a run of degenerate pivots both fall
//! back to Bland's rule until the objective moves again, which rules out
//! cycling.

use nalgebra::DMatrix;

use super::ConsistencySystem;
use crate::error::{Error, Result};

const COST_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
const PIVOT_REL: f64 = 1e-7;
const FEAS_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 2000;
const RECOMPUTE_DUALS: usize = 100;

/// Diagnostics of an ℓ¹ solve, accumulated over blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpReport {
    pub blocks: usize,
    pub phase1_iterations: usize,
    pub phase2_iterations: usize,
    /// `Σ|x_j|` at the solution.
    pub objective: f64,
    /// Value of the dual objective `bᵀy`.
    pub dual_objective: f64,
    /// Largest `|cᵀx - bᵀy|` over blocks.
    pub duality_gap: f64,
    /// Most negative reduced cost at termination (zero if dual feasible).
    pub dual_infeasibility: f64,
    /// Rows found linearly dependent and left with a zero artificial.
    pub redundant_rows: usize,
}

pub fn solve_lp(sys: &ConsistencySystem) -> Result<(Vec<f64>, LpReport)> {
    let mut x = vec![0.0; sys.n_cols()];
    let mut report = LpReport::default();
    for (rows, cols) in sys.blocks() {
        if rows.is_empty() {
            continue;
        }
        let local: std::collections::HashMap<usize, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols.len()];
        for (i, &r) in rows.iter().enumerate() {
            for (c, v) in sys.matrix.row(r) {
                columns[local[&c]].push((i, v));
            }
        }
        let b: Vec<f64> = rows.iter().map(|&r| sys.rhs[r]).collect();
        let mut lp = Simplex::new(columns, b);
        let sol = lp.solve().map_err(|e| match e {
            Error::Infeasible { row, residual } => Error::Infeasible { row: rows[row], residual },
            other => other,
        })?;
        for (&c, v) in cols.iter().zip(&sol) {
            x[c] = *v;
        }
        report.blocks += 1;
        report.phase1_iterations += lp.iterations[0];
        report.phase2_iterations += lp.iterations[1];
        report.objective += sol.iter().map(|v| v.abs()).sum::<f64>();
        report.dual_objective += lp.dual_objective;
        report.duality_gap = report.duality_gap.max(lp.gap);
        report.dual_infeasibility = report.dual_infeasibility.min(lp.min_reduced_cost);
        report.redundant_rows += lp.locked.iter().filter(|&&l| l).count();
    }
    Ok((x, report))
}

/// Revised simplex on `[A, -A, I]` with sign-normalised rows.
struct Simplex {
    m: usize,
    n: usize,
    /// Structural columns of the sign-normalised `A`.
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Dense row-major `B⁻¹`.
    binv: Vec<f64>,
    xb: Vec<f64>,
    /// Rows whose artificial stays basic at zero (dependent rows).
    locked: Vec<bool>,
    iterations: [usize; 2],
    since_refactor: usize,
    dual_objective: f64,
    gap: f64,
    min_reduced_cost: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

impl Simplex {
    fn new(mut cols: Vec<Vec<(usize, f64)>>, mut b: Vec<f64>) -> Self {
        let m = b.len();
        let n = cols.len();
        let sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        for col in &mut cols {
            for (r, v) in col.iter_mut() {
                *v *= sign[*r];
            }
        }
        for (v, s) in b.iter_mut().zip(&sign) {
            *v *= s;
        }
        let total = 2 * n + m;
        let mut in_basis = vec![false; total];
        let basis: Vec<usize> = (0..m).map(|i| 2 * n + i).collect();
        for &j in &basis {
            in_basis[j] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let xb = b.clone();
        Self {
            m,
            n,
            cols,
            b,
            basis,
            in_basis,
            binv,
            xb,
            locked: vec![false; m],
            iterations: [0; 2],
            since_refactor: 0,
            dual_objective: 0.0,
            gap: 0.0,
            min_reduced_cost: 0.0,
        }
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= 2 * self.n
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => f64::from(u8::from(self.is_artificial(j))),
            Phase::Two => f64::from(u8::from(!self.is_artificial(j))),
        }
    }

    /// Sparse column `j` of `[A, -A, I]`.
    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            self.cols[j].clone()
        } else if j < 2 * self.n {
            self.cols[j - self.n].iter().map(|&(r, v)| (r, -v)).collect()
        } else {
            vec![(j - 2 * self.n, 1.0)]
        }
    }

    fn duals(&self, phase: Phase) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = self.cost(j, phase);
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                y.iter_mut().zip(row).for_each(|(a, r)| *a += c * r);
            }
        }
        y
    }

    /// Reduced costs of the structural columns, `(d⁺, d⁻)` per column.
    fn reduced_costs(&self, y: &[f64], phase: Phase, out: &mut Vec<f64>) {
        out.clear();
        out.resize(2 * self.n + self.m, 0.0);
        for (j, col) in self.cols.iter().enumerate() {
            let ya: f64 = col.iter().map(|&(r, v)| y[r] * v).sum();
            out[j] = self.cost(j, phase) - ya;
            out[self.n + j] = self.cost(self.n + j, phase) + ya;
        }
        for (i, &yi) in y.iter().enumerate().take(self.m) {
            let j = 2 * self.n + i;
            out[j] = self.cost(j, phase) - yi;
        }
    }

    fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|i| col.iter().map(|&(k, v)| self.binv[i * m + k] * v).sum()).collect()
    }

    fn pivot(&mut self, r: usize, q: usize, w: &[f64]) -> Result<()> {
        let m = self.m;
        let theta = self.xb[r] / w[r];
        for (x, wi) in self.xb.iter_mut().zip(w) {
            *x -= theta * wi;
        }
        self.xb[r] = theta;
        for x in self.xb.iter_mut() {
            if *x < 0.0 && *x > -PIVOT_TOL {
                *x = 0.0;
            }
        }
        let inv = 1.0 / w[r];
        let (head, tail) = self.binv.split_at_mut(r * m);
        let (row_r, tail) = tail.split_at_mut(m);
        row_r.iter_mut().for_each(|v| *v *= inv);
        for (i, &wi) in w.iter().enumerate() {
            if i == r || wi == 0.0 {
                continue;
            }
            let row = if i < r { &mut head[i * m..(i + 1) * m] } else { &mut tail[(i - r - 1) * m..(i - r) * m] };
            row.iter_mut().zip(row_r.iter()).for_each(|(a, b)| *a -= wi * b);
        }
        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Textbook ratio test; ties go to the lowest basic variable index.
    fn ratio_bland(&self, w: &[f64]) -> Option<usize> {
        let mut r: Option<usize> = None;
        let mut ratio = f64::INFINITY;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= PIVOT_TOL || self.locked[i] {
                continue;
            }
            let t = self.xb[i].max(0.0) / wi;
            let tie = (t - ratio).abs() <= 1e-12 * (1.0 + ratio.abs());
            if r.is_none() || (!tie && t < ratio) || (tie && self.basis[i] < self.basis[r.unwrap_or(0)]) {
                r = Some(i);
                ratio = ratio.min(t);
            }
        }
        r
    }

    /// Harris' two-pass test: the largest pivot among rows whose ratio is
    /// within the feasibility tolerance of the minimum.
    fn ratio_harris(&self, w: &[f64]) -> Option<usize> {
        let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = PIVOT_TOL.max(PIVOT_REL * wmax);
        let mut bound = f64::INFINITY;
        for (i, &wi) in w.iter().enumerate() {
            if wi > tol && !self.locked[i] {
                bound = bound.min((self.xb[i].max(0.0) + FEAS_TOL) / wi);
            }
        }
        let mut r: Option<usize> = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi > tol && !self.locked[i] && self.xb[i].max(0.0) / wi <= bound && r.is_none_or(|k| wi > w[k]) {
                r = Some(i);
            }
        }
        r
    }

    /// Recomputes `B⁻¹` and `x_B` from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut dense = DMatrix::<f64>::zeros(m, m);
        for (i, &j) in self.basis.iter().enumerate() {
            for (r, v) in self.column(j) {
                dense[(r, i)] = v;
            }
        }
        let inv = dense.try_inverse().ok_or_else(|| Error::Internal("simplex basis became singular".into()))?;
        {
            for i in 0..m {
                for k in 0..m {
                    self.binv[i * m + k] = inv[(i, k)];
                }
            }
            let b = self.b.clone();
            self.xb = (0..m).map(|i| (0..m).map(|k| self.binv[i * m + k] * b[k]).sum()).collect();
            for x in self.xb.iter_mut() {
                if *x < 0.0 && *x > -PIVOT_TOL {
                    *x = 0.0;
                }
            }
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn eligible(&self, j: usize, phase: Phase) -> bool {
        !self.in_basis[j] && !(phase == Phase::Two && self.is_artificial(j))
    }

    /// `e_rᵀ B⁻¹ a_j` for every column.
    fn pivot_row(&self, rho: &[f64], out: &mut [f64]) {
        for (j, col) in self.cols.iter().enumerate() {
            let s: f64 = col.iter().map(|&(k, v)| rho[k] * v).sum();
            out[j] = s;
            out[self.n + j] = -s;
        }
        out[2 * self.n..].copy_from_slice(rho);
    }

    /// Simplex iterations with devex pricing and incrementally updated
    /// duals and reduced costs.
    fn run(&mut self, phase: Phase) -> Result<()> {
        let m = self.m;
        let total = 2 * self.n + m;
        let limit = 50 * total + 1000;
        let slot = usize::from(phase == Phase::Two);
        let mut degenerate = 0;
        let mut d = Vec::new();
        let mut y = self.duals(phase);
        self.reduced_costs(&y, phase, &mut d);
        let mut fresh = true;
        let mut since = 0;
        let mut weights = vec![1.0; total];
        let mut alpha = vec![0.0; total];
        let mut banned = vec![false; total];
        loop {
            if since >= RECOMPUTE_DUALS {
                y = self.duals(phase);
                self.reduced_costs(&y, phase, &mut d);
                fresh = true;
                since = 0;
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut q = None;
            let mut best = 0.0;
            for (j, &dj) in d.iter().enumerate() {
                if dj >= -COST_TOL || banned[j] || !self.eligible(j, phase) {
                    continue;
                }
                if bland {
                    q = Some(j);
                    break;
                }
                let score = dj * dj / weights[j];
                if score > best {
                    best = score;
                    q = Some(j);
                }
            }
            let Some(q) = q else {
                if fresh {
                    return Ok(());
                }
                since = RECOMPUTE_DUALS;
                continue;
            };
            if self.iterations[slot] >= limit {
                return Err(Error::Internal(format!("simplex iteration limit {limit} reached")));
            }
            let w = self.ftran(&self.column(q));
            let r = if bland { self.ratio_bland(&w) } else { self.ratio_harris(&w) };
            let Some(r) = r else {
                // Both phases are bounded below, so a descent column without a
                // pivot is roundoff in its reduced cost. Retry on a fresh
                // factorisation, then price it out until the next pivot.
                if fresh && self.since_refactor == 0 {
                    banned[q] = true;
                } else {
                    self.refactor()?;
                    since = RECOMPUTE_DUALS;
                }
                continue;
            };
            banned.iter_mut().for_each(|b| *b = false);
            degenerate = if self.xb[r] / w[r] <= 0.0 { degenerate + 1 } else { 0 };

            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            self.pivot_row(&rho, &mut alpha);
            let theta = d[q] / w[r];
            let wq = weights[q];
            for j in 0..total {
                if self.in_basis[j] || alpha[j] == 0.0 {
                    continue;
                }
                d[j] -= theta * alpha[j];
                let a = alpha[j] / w[r];
                weights[j] = weights[j].max(a * a * wq);
            }
            let leaving = self.basis[r];
            d[q] = 0.0;
            d[leaving] = -theta;
            weights[leaving] = (wq / (w[r] * w[r])).max(1.0);
            y.iter_mut().zip(&rho).for_each(|(a, b)| *a += theta * b);

            self.pivot(r, q, &w)?;
            self.iterations[slot] += 1;
            since += 1;
            fresh = false;
        }
    }

    /// Pivots basic artificials out on nonzero structural entries; rows
    /// without one are dependent and keep a locked artificial at zero.
    fn expel_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..2 * self.n {
                if self.in_basis[j] {
                    continue;
                }
                let col = if j < self.n { &self.cols[j] } else { &self.cols[j - self.n] };
                let s = if j < self.n { 1.0 } else { -1.0 };
                let a: f64 = s * col.iter().map(|&(k, v)| row[k] * v).sum::<f64>();
                if a.abs() > PIVOT_TOL && best.is_none_or(|(_, v)| a.abs() > v.abs() * (1.0 + 1e-12)) {
                    best = Some((j, a));
                }
            }
            match best {
                Some((q, _)) => {
                    let w = self.ftran(&self.column(q));
                    // x_B[r] is zero, so this pivot keeps every value.
                    self.xb[r] = 0.0;
                    self.pivot(r, q, &w)?;
                }
                None => self.locked[r] = true,
            }
        }
        Ok(())
    }

    fn solve(&mut self) -> Result<Vec<f64>> {
        self.run(Phase::One)?;
        self.refactor()?;
        let infeas: f64 =
            self.basis.iter().zip(&self.xb).filter(|(j, _)| self.is_artificial(**j)).map(|(_, x)| x.abs()).sum();
        if infeas > PHASE1_TOL {
            let (row, residual) = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(j, _)| self.is_artificial(**j))
                .map(|(j, x)| (j - 2 * self.n, x.abs()))
                .fold((0, 0.0), |acc, (r, v)| if v > acc.1 { (r, v) } else { acc });
            return Err(Error::Infeasible { row, residual });
        }
        self.expel_artificials()?;
        self.run(Phase::Two)?;
        self.refactor()?;

        let y = self.duals(Phase::Two);
        let mut d = Vec::new();
        self.reduced_costs(&y, Phase::Two, &mut d);
        self.min_reduced_cost =
            d[..2 * self.n].iter().zip(&self.in_basis).filter(|(_, &b)| !b).map(|(v, _)| *v).fold(0.0, f64::min);
        let mut split = vec![0.0; 2 * self.n];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < 2 * self.n {
                split[j] = self.xb[i];
            }
        }
        let primal: f64 = split.iter().sum();
        self.dual_objective = y.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        self.gap = (primal - self.dual_objective).abs();
        Ok((0..self.n).map(|j| split[j] - split[self.n + j]).collect())
    }
}
