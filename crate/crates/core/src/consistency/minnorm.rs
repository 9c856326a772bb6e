//! Minimum-norm solution of the consistency system.
//!
//! Each block is reduced in two orthogonal steps. The two energy rows of a
//! group `(ℓ, ρ)` touch only that group's unknowns, so they are eliminated by
//! `x_g = x0_g + N_g z_g` with `x0_g` in the row space and `N_g` an
//! orthonormal null-space basis; then `‖x‖² = Σ‖x0_g‖² + ‖z‖²`. The remaining
//! force rows `M z = b̃` are solved for the minimum-norm `z` by a column
//! pivoted Householder QR of `Mᵀ`.

use std::collections::HashMap;

use super::{ConsistencySystem, RowKind};
use crate::error::{Error, Result};

/// Relative threshold on `|R_kk| / |R_00|` below which rows count as dependent.
const RANK_TOL: f64 = 1e-9;
const REFINEMENT_STEPS: usize = 3;

pub fn min_norm_solve(sys: &ConsistencySystem) -> Result<Vec<f64>> {
    let mut x = vec![0.0; sys.n_cols()];
    for (rows, cols) in sys.blocks() {
        if rows.is_empty() {
            continue;
        }
        let block = Block::new(sys, &rows, &cols)?;
        let rhs: Vec<f64> = rows.iter().map(|&r| sys.rhs[r]).collect();
        let mut xb = block.solve(&rhs);
        for _ in 0..REFINEMENT_STEPS {
            let res = block.residual(&xb, &rhs);
            let dx = block.solve(&res);
            for (a, d) in xb.iter_mut().zip(dx) {
                *a += d;
            }
        }
        for (&c, v) in cols.iter().zip(xb) {
            x[c] = v;
        }
    }
    Ok(x)
}

struct Group {
    cols: Vec<usize>,
    /// Energy-row entries, `2 × cols.len()`.
    e: [Vec<f64>; 2],
    rows: [usize; 2],
    /// `(E Eᵀ)⁻¹`.
    gram_inv: [[f64; 2]; 2],
    /// Orthonormal null-space basis, one vector per entry.
    null: Vec<Vec<f64>>,
    offset: usize,
}

struct Block {
    /// Sparse rows in block-local indices.
    rows: Vec<Vec<(usize, f64)>>,
    groups: Vec<Group>,
    /// Group and position of each local column.
    col_group: Vec<(usize, usize)>,
    force_rows: Vec<usize>,
    qr: PivotedQr,
}

impl Block {
    fn new(sys: &ConsistencySystem, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let local: HashMap<usize, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let rows_local: Vec<Vec<(usize, f64)>> =
            rows.iter().map(|&r| sys.matrix.row(r).map(|(c, v)| (local[&c], v)).collect()).collect();

        let mut group_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        let mut force_rows = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            match sys.kinds[r] {
                RowKind::Energy { site, rho, comp } => {
                    let g = *group_of.entry((site, rho)).or_insert_with(|| {
                        groups.push(Group {
                            cols: Vec::new(),
                            e: [Vec::new(), Vec::new()],
                            rows: [usize::MAX; 2],
                            gram_inv: [[0.0; 2]; 2],
                            null: Vec::new(),
                            offset: 0,
                        });
                        groups.len() - 1
                    });
                    groups[g].rows[comp] = i;
                }
                RowKind::Force { .. } => force_rows.push(i),
            }
        }
        let mut col_group = vec![(usize::MAX, 0); cols.len()];
        for (i, &c) in cols.iter().enumerate() {
            let u = sys.unknowns[c];
            let g = *group_of
                .get(&(u.site, u.rho))
                .ok_or_else(|| Error::Internal(format!("unknown {c} has no energy rows in its block")))?;
            col_group[i] = (g, groups[g].cols.len());
            groups[g].cols.push(i);
        }
        let mut offset = 0;
        for (gi, g) in groups.iter_mut().enumerate() {
            if g.rows.contains(&usize::MAX) {
                return Err(Error::Internal(format!("energy group {gi} is incomplete")));
            }
            let k = g.cols.len();
            for comp in 0..2 {
                let mut e = vec![0.0; k];
                for &(c, v) in &rows_local[g.rows[comp]] {
                    e[col_group[c].1] = v;
                }
                g.e[comp] = e;
            }
            let (a, b, d) = (dot(&g.e[0], &g.e[0]), dot(&g.e[0], &g.e[1]), dot(&g.e[1], &g.e[1]));
            let det = a * d - b * b;
            if !(det > 1e-12 * a * d) {
                return Err(Error::Infeasible { row: rows[g.rows[0]], residual: f64::INFINITY });
            }
            g.gram_inv = [[d / det, -b / det], [-b / det, a / det]];
            g.null = null_basis(&g.e);
            g.offset = offset;
            offset += g.null.len();
        }

        // Reduced force matrix, stored as its transpose (one column per force row).
        let nz = offset;
        let mut mt: Vec<Vec<f64>> = Vec::with_capacity(force_rows.len());
        for &fr in &force_rows {
            let mut col = vec![0.0; nz];
            for &(c, v) in &rows_local[fr] {
                let (g, p) = col_group[c];
                let grp = &groups[g];
                for (t, nv) in grp.null.iter().enumerate() {
                    col[grp.offset + t] += v * nv[p];
                }
            }
            mt.push(col);
        }
        let qr = PivotedQr::new(mt, nz);
        Ok(Self { rows: rows_local, groups, col_group, force_rows, qr })
    }

    fn residual(&self, x: &[f64], rhs: &[f64]) -> Vec<f64> {
        self.rows.iter().zip(rhs).map(|(row, b)| b - row.iter().map(|&(c, v)| v * x[c]).sum::<f64>()).collect()
    }

    /// Minimum-norm `x` with `A x = rhs` (in the least-squares sense on
    /// dependent rows).
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.col_group.len()];
        for g in &self.groups {
            let r = [rhs[g.rows[0]], rhs[g.rows[1]]];
            let lam =
                [g.gram_inv[0][0] * r[0] + g.gram_inv[0][1] * r[1], g.gram_inv[1][0] * r[0] + g.gram_inv[1][1] * r[1]];
            for (p, &c) in g.cols.iter().enumerate() {
                x[c] = g.e[0][p] * lam[0] + g.e[1][p] * lam[1];
            }
        }
        let reduced: Vec<f64> = self
            .force_rows
            .iter()
            .map(|&fr| rhs[fr] - self.rows[fr].iter().map(|&(c, v)| v * x[c]).sum::<f64>())
            .collect();
        let z = self.qr.min_norm(&reduced);
        for g in &self.groups {
            for (t, nv) in g.null.iter().enumerate() {
                let zt = z[g.offset + t];
                if zt != 0.0 {
                    for (p, &c) in g.cols.iter().enumerate() {
                        x[c] += zt * nv[p];
                    }
                }
            }
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of `{v : e_0·v = e_1·v = 0}` by twice-iterated
/// Gram–Schmidt against the rows and the unit vectors in order.
fn null_basis(e: &[Vec<f64>; 2]) -> Vec<Vec<f64>> {
    let k = e[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for row in e {
        let mut v = row.clone();
        orthogonalize(&mut v, &basis);
        let n = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        basis.push(v);
    }
    let mut null = Vec::new();
    for i in 0..k {
        if basis.len() == k {
            break;
        }
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        orthogonalize(&mut v, &basis);
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v.clone());
            null.push(v);
        }
    }
    null
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let d = dot(v, b);
            v.iter_mut().zip(b).for_each(|(a, bb)| *a -= d * bb);
        }
    }
}

/// Householder QR with column pivoting of an `n × m` matrix given by columns.
pub(crate) struct PivotedQr {
    /// Factored columns: `R` on and above the diagonal, reflectors below.
    cols: Vec<Vec<f64>>,
    betas: Vec<f64>,
    /// Reflector heads `v_k[k]`.
    heads: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub(crate) fn new(mut cols: Vec<Vec<f64>>, n: usize) -> Self {
        let m = cols.len();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut norms: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        let mut betas = Vec::new();
        let mut heads = Vec::new();
        let mut rank = 0;
        let mut r00 = 0.0;
        for k in 0..m.min(n) {
            let mut p = k;
            for j in k + 1..m {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            cols.swap(k, p);
            norms.swap(k, p);
            perm.swap(k, p);
            let alpha_sq: f64 = cols[k][k..].iter().map(|a| a * a).sum();
            let alpha = alpha_sq.sqrt();
            if k == 0 {
                r00 = alpha;
            }
            if alpha <= RANK_TOL * r00 || alpha == 0.0 {
                break;
            }
            let x0 = cols[k][k];
            let r_kk = if x0 >= 0.0 { -alpha } else { alpha };
            let head = x0 - r_kk;
            // v = (head, x[k+1..]) and H = I - β v vᵀ with β = 1 / (α² - x0·r_kk).
            let beta = 1.0 / (alpha_sq - x0 * r_kk);
            let (left, right) = cols.split_at_mut(k + 1);
            let ck = &mut left[k];
            for (j, cj) in right.iter_mut().enumerate() {
                let mut s = head * cj[k];
                for i in k + 1..n {
                    s += ck[i] * cj[i];
                }
                s *= beta;
                cj[k] -= s * head;
                let mut nrm = 0.0;
                for i in k + 1..n {
                    cj[i] -= s * ck[i];
                    nrm += cj[i] * cj[i];
                }
                norms[k + 1 + j] = nrm;
            }
            ck[k] = r_kk;
            betas.push(beta);
            heads.push(head);
            rank = k + 1;
        }
        Self { cols, betas, heads, perm, rank }
    }

    #[cfg(test)]
    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    /// Minimum-norm solution of `Aᵀ z = b`, where `A` is the factored matrix.
    pub(crate) fn min_norm(&self, b: &[f64]) -> Vec<f64> {
        let n = self.cols.first().map_or(0, |c| c.len());
        let r = self.rank;
        // Rᵀ w = (Pᵀ b)[..r] by forward substitution.
        let mut w = vec![0.0; r];
        for j in 0..r {
            let mut s = b[self.perm[j]];
            for (i, wi) in w.iter().enumerate().take(j) {
                s -= self.cols[j][i] * wi;
            }
            w[j] = s / self.cols[j][j];
        }
        // z = H_0 ⋯ H_{r-1} [w; 0].
        let mut z = vec![0.0; n];
        z[..r].copy_from_slice(&w);
        for k in (0..r).rev() {
            let v = &self.cols[k];
            let mut s = self.heads[k] * z[k];
            for i in k + 1..n {
                s += v[i] * z[i];
            }
            s *= self.betas[k];
            z[k] -= s * self.heads[k];
            for i in k + 1..n {
                z[i] -= s * v[i];
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivoted_qr_min_norm_matches_normal_equations() {
        // A = [[1, 2, 0, 1], [0, 1, 1, 1], [1, 3, 1, 2]] has rank 2 (row 3 = row 1 + row 2).
        let a = [[1.0, 2.0, 0.0, 1.0], [0.0, 1.0, 1.0, 1.0], [1.0, 3.0, 1.0, 2.0]];
        let cols: Vec<Vec<f64>> = a.iter().map(|r| r.to_vec()).collect();
        let qr = PivotedQr::new(cols, 4);
        assert_eq!(qr.rank(), 2);
        let b = [1.0, 2.0, 3.0];
        let z = qr.min_norm(&b);
        for (row, bi) in a.iter().zip(b) {
            assert!((dot(row, &z) - bi).abs() < 1e-12);
        }
        // Minimum norm: z lies in the row space, i.e. z = Aᵀ λ for λ on rows 1, 2.
        // Solve the 2×2 normal equations for λ and compare.
        let (r1, r2) = (&a[0], &a[1]);
        let g = [[dot(r1, r1), dot(r1, r2)], [dot(r2, r1), dot(r2, r2)]];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let lam = [(g[1][1] * b[0] - g[0][1] * b[1]) / det, (g[0][0] * b[1] - g[1][0] * b[0]) / det];
        for i in 0..4 {
            assert!((z[i] - (lam[0] * r1[i] + lam[1] * r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn null_basis_is_orthonormal_and_annihilated() {
        let e = [vec![1.0, 0.0, -1.0, 2.0, 0.0], vec![0.0, 1.0, 1.0, 0.0, -1.0]];
        let n = null_basis(&e);
        assert_eq!(n.len(), 3);
        for (i, v) in n.iter().enumerate() {
            assert!(dot(v, &e[0]).abs() < 1e-14 && dot(v, &e[1]).abs() < 1e-14);
            for (j, u) in n.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(v, u) - expect).abs() < 1e-14);
            }
        }
    }
}
