use nalgebra::{DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, LinearOperator};

/// Krylov dimension per restart.
const BASIS: usize = 300;
const RESTARTS: usize = 40;
/// Seeds tried in turn for the starting vector after a breakdown.
const SEEDS: [u64; 4] = [0x5eed, 17, 4242, 90_210];

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest eigenvalue of a symmetric operator by explicitly restarted
/// Lanczos with full reorthogonalisation. Converges when the Ritz residual
/// is below `1e-8` relative to the spectral scale, which bounds the
/// eigenvalue error well below `1e-6` relative.
pub fn min_eigenvalue(op: &dyn LinearOperator) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Eigen("empty operator".into()));
    }
    let mut seed = 0;
    let mut start = random_unit(n, SEEDS[0]);
    let mut best = f64::INFINITY;
    for _ in 0..RESTARTS {
        match lanczos(op, &start) {
            Ok(run) => {
                best = best.min(run.theta);
                if run.converged {
                    return Ok(run.theta);
                }
                start = run.ritz;
            }
            Err(_) if seed + 1 < SEEDS.len() => {
                seed += 1;
                start = random_unit(n, SEEDS[seed]);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Eigen(format!("Lanczos did not converge after {RESTARTS} restarts (estimate {best:e})")))
}

struct Run {
    theta: f64,
    ritz: Vec<f64>,
    converged: bool,
}

fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let s = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|a| *a /= s);
    v
}

fn lanczos(op: &dyn LinearOperator, start: &[f64]) -> Result<Run> {
    let n = op.dim();
    let m = BASIS.min(n);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let norm = dot(start, start).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Eigen("zero starting vector".into()));
    }
    q.push(start.iter().map(|v| v / norm).collect());
    let mut w = vec![0.0; n];
    let mut scale: f64 = 0.0;
    loop {
        let j = q.len() - 1;
        op.apply(&q[j], &mut w);
        let a = dot(&w, &q[j]);
        alpha.push(a);
        // Full reorthogonalisation, applied twice.
        for _ in 0..2 {
            for v in &q {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = dot(&w, &w).sqrt();
        scale = scale.max(a.abs() + b + beta.last().copied().unwrap_or(0.0));
        let exhausted = q.len() == n || b <= 1e-14 * scale;
        if j % 10 == 9 || exhausted || q.len() == m {
            let (theta, s) = smallest_ritz(&alpha, &beta);
            let residual = b * s[j].abs();
            if !(residual <= 1e-8 * scale || exhausted || q.len() == m) {
                beta.push(b);
                q.push(w.iter().map(|x| x / b).collect());
                continue;
            }
            let mut ritz = vec![0.0; n];
            for (v, c) in q.iter().zip(&s) {
                ritz.iter_mut().zip(v).for_each(|(x, y)| *x += c * y);
            }
            let converged = residual <= 1e-8 * scale || exhausted;
            if b <= 1e-14 * scale && q.len() < n && residual > 1e-8 * scale {
                return Err(Error::Eigen("Lanczos breakdown".into()));
            }
            return Ok(Run { theta, ritz, converged });
        }
        beta.push(b);
        q.push(w.iter().map(|x| x / b).collect());
    }
}

/// Smallest eigenpair of the tridiagonal matrix `(alpha, beta)`.
fn smallest_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (i, theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    (theta, eig.eigenvectors.column(i).iter().copied().collect())
}

/// Smallest eigenvalue of a small matrix by dense symmetric decomposition.
pub fn min_eigenvalue_dense(a: &CsrMatrix) -> Result<f64> {
    let n = a.rows();
    if n == 0 || a.cols() != n {
        return Err(Error::Eigen(format!("matrix of shape {}x{} is not square and nonempty", n, a.cols())));
    }
    let dense = a.to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (dense[i][j] + dense[j][i]));
    Ok(SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}
