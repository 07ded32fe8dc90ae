//! Block shift-invert Krylov eigensolver for `K x = ν M x` with `K`
//! symmetric and `M` symmetric positive definite.
//!
//! The operator `T = (K − σM)⁻¹M` is self-adjoint in the M inner product, so
//! an M-orthonormal Krylov basis with Rayleigh–Ritz on `VᵀM T V` yields the
//! eigenvalues nearest above `σ` as the largest `θ = 1/(ν − σ)`. The basis is
//! thick-restarted from the current Ritz vectors when it reaches its maximum
//! size.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, CsrMatrix, Factorization};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    /// Relative residual tolerance: `‖Kx − νMx‖ ≤ tol·(|ν| + |σ|)·‖Mx‖`.
    pub tol: f64,
    /// Maximum number of block applications of the shift-inverted operator.
    pub max_iter: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 500, block: 6, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

struct Basis<'a> {
    m: &'a CsrMatrix,
    v: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
    tv: Vec<Vec<f64>>,
}

impl Basis<'_> {
    /// M-orthogonalizes `x` against the basis twice and normalizes it;
    /// returns `None` if nothing independent is left.
    fn orthonormalize(&self, mut x: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut mx = self.m.mul_vec(&x);
        let n0 = dot(&x, &mx).max(0.0).sqrt();
        if n0 == 0.0 || !n0.is_finite() {
            return None;
        }
        for _ in 0..2 {
            for (v, mv) in self.v.iter().zip(&self.mv) {
                let c = dot(mv, &x);
                axpy(-c, v, &mut x);
            }
            mx = self.m.mul_vec(&x);
        }
        let n1 = dot(&x, &mx).max(0.0).sqrt();
        if !(n1 > 1e-10 * n0) {
            return None;
        }
        x.iter_mut().for_each(|e| *e /= n1);
        mx.iter_mut().for_each(|e| *e /= n1);
        Some((x, mx))
    }
}

fn canonical_sign(x: &mut [f64]) {
    let max = x.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if let Some(&first) = x.iter().find(|e| e.abs() > 1e-6 * max) {
        if first < 0.0 {
            x.iter_mut().for_each(|e| *e = -*e);
        }
    }
}

/// The `count` eigenpairs of `(K, M)` nearest above `shift`, in ascending
/// order, M-orthonormal, with a deterministic sign convention.
pub fn solve_eigs(k: &CsrMatrix, m: &CsrMatrix, count: usize, shift: f64, opts: &EigOptions) -> Result<EigenPairs> {
    let n = k.n;
    if count == 0 {
        return Err(Error::Parameter("eigenpair count must be at least 1".into()));
    }
    if count > n {
        return Err(Error::Parameter(format!("requested {count} eigenpairs of a {n}-dof problem")));
    }
    let a = k.lin_comb(1.0, m, -shift);
    let fac = Factorization::symmetric(&a)?;
    let apply = |x: &[f64]| -> Vec<f64> { fac.solve(&m.mul_vec(x)) };

    let p = opts.block.max(1).min(n);
    let mut max_dim = (3 * count + 4 * p).max(40).min(n);
    let mut keep = (count + p).min(max_dim.saturating_sub(p)).max(count);
    // orthogonalization cost grows with the square of the basis size
    let keep_cap = (8 * (count + p)).min(n);
    // restarts since the last enlargement; slow progress usually means a
    // cluster straddles the cut, so the retained block is doubled
    let mut stalled = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis = Basis { m, v: Vec::new(), mv: Vec::new(), tv: Vec::new() };
    let mut pending: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let mut iterations = 0;
    let mut converged = 0;

    loop {
        // expand until the basis is full or the Krylov space is exhausted
        while basis.v.len() < max_dim && !pending.is_empty() {
            let mut added = Vec::new();
            for x in pending.drain(..) {
                if basis.v.len() >= max_dim {
                    break;
                }
                if let Some((q, mq)) = basis.orthonormalize(x) {
                    added.push(q.clone());
                    basis.v.push(q);
                    basis.mv.push(mq);
                    basis.tv.push(Vec::new());
                }
            }
            if added.is_empty() {
                break;
            }
            iterations += 1;
            let start = basis.v.len() - added.len();
            for (j, q) in added.iter().enumerate() {
                let t = apply(q);
                basis.tv[start + j] = t.clone();
                pending.push(t);
            }
            if iterations > opts.max_iter {
                return Err(Error::NoConvergence { requested: count, converged, iterations });
            }
        }
        let dim = basis.v.len();
        if dim < count {
            // exhausted: top up with random directions
            let more: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
            pending = more;
            iterations += 1;
            if iterations > opts.max_iter {
                return Err(Error::NoConvergence { requested: count, converged, iterations });
            }
            continue;
        }

        // Rayleigh–Ritz on H = VᵀM T V
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = 0.5 * (dot(&basis.mv[i], &basis.tv[j]) + dot(&basis.mv[j], &basis.tv[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // never cut through a tight cluster: its members converge only together
        let mut take = keep.min(dim);
        while take < dim.saturating_sub(p) {
            let (a, b) = (eig.eigenvalues[order[take - 1]], eig.eigenvalues[order[take]]);
            if (a - b).abs() > 1e-3 * a.abs() {
                break;
            }
            take += 1;
        }
        let mut ritz = Vec::with_capacity(take);
        let mut all_ok = true;
        converged = 0;
        for (rank, &c) in order.iter().take(take).enumerate() {
            let theta = eig.eigenvalues[c];
            let y = eig.eigenvectors.column(c);
            let mut x = vec![0.0; n];
            let mut tx = vec![0.0; n];
            let mut mx = vec![0.0; n];
            for j in 0..dim {
                axpy(y[j], &basis.v[j], &mut x);
                axpy(y[j], &basis.tv[j], &mut tx);
                axpy(y[j], &basis.mv[j], &mut mx);
            }
            let (nu, res) = if theta > 0.0 {
                let nu = shift + 1.0 / theta;
                let kx = k.mul_vec(&x);
                let r: Vec<f64> = kx.iter().zip(&mx).map(|(a, b)| a - nu * b).collect();
                (nu, norm(&r) / ((nu.abs() + shift.abs()) * norm(&mx)).max(f64::MIN_POSITIVE))
            } else {
                (f64::INFINITY, f64::INFINITY)
            };
            if rank < count {
                if res <= opts.tol {
                    converged += 1;
                } else {
                    all_ok = false;
                }
            }
            ritz.push((nu, res, x, tx, mx));
        }
        if all_ok {
            let mut out = EigenPairs { values: Vec::new(), vectors: Vec::new(), residuals: Vec::new(), iterations };
            for (nu, res, mut x, _, _) in ritz.into_iter().take(count) {
                canonical_sign(&mut x);
                out.values.push(nu);
                out.vectors.push(x);
                out.residuals.push(res);
            }
            return Ok(out);
        }
        if dim == n {
            return Err(Error::NoConvergence { requested: count, converged, iterations });
        }
        stalled += 1;
        if stalled >= 4 && keep < keep_cap {
            keep = (2 * keep).min(keep_cap);
            max_dim = (keep + 2 * count + 4 * p).min(n).max(keep);
            stalled = 0;
        }
        // thick restart: keep the leading Ritz vectors, continue from T applied to them
        basis.v.clear();
        basis.mv.clear();
        basis.tv.clear();
        pending.clear();
        let mut next = Vec::new();
        for (rank, (_, res, x, tx, mx)) in ritz.into_iter().enumerate() {
            basis.v.push(x);
            basis.mv.push(mx);
            if rank < count + p && res > opts.tol {
                next.push(tx.clone());
            }
            basis.tv.push(tx);
        }
        if next.is_empty() {
            next = basis.tv.iter().take(p).cloned().collect();
        }
        pending = next;
    }
}
