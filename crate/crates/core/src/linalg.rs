//! Sparse symmetric matrices and direct solvers.
//!
//! Matrices are kept in CSR form with sorted column indices. Factorizations
//! are delegated to faer's supernodal sparse Cholesky (for definite systems)
//! and sparse LU with partial pivoting (for indefinite shifted systems).

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{MatMut, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity pattern; `rows[i]` must be sorted
    /// and free of duplicates.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for r in rows {
            indices.extend_from_slice(r);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        Self { n, indptr, indices, values: vec![0.0; nnz] }
    }

    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        let k = row.binary_search(&j).expect("entry in pattern");
        self.values[self.indptr[i] + k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.indptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    /// `x·(A y)`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n, "dimensions differ");
        if self.indptr == other.indptr && self.indices == other.indices {
            let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
            return CsrMatrix { n: self.n, indptr: self.indptr.clone(), indices: self.indices.clone(), values };
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for (mat, s) in [(self, a), (other, b)] {
            for i in 0..mat.n {
                for k in mat.indptr[i]..mat.indptr[i + 1] {
                    t.push((i, mat.indices[k], s * mat.values[k]));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, t)
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖A − Aᵀ‖_F`.
    pub fn asymmetry(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let d = self.values[k] - self.get(j, i);
                s += d * d;
            }
        }
        s.sqrt()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        // Symmetric: the CSR arrays of A are the CSC arrays of Aᵀ = A, but we
        // transpose explicitly so nonsymmetric inputs are handled correctly.
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0usize; self.nnz()];
        let mut val = vec![0.0; self.nnz()];
        for i in 0..n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                row_idx[next[j]] = i;
                val[next[j]] = self.values[k];
                next[j] += 1;
            }
        }
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        Ok(SparseColMat::new(symbolic, val))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A factorized sparse matrix.
pub enum Factorization {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factorization::Cholesky(_) => f.write_str("Factorization::Cholesky"),
            Factorization::Lu(_) => f.write_str("Factorization::Lu"),
        }
    }
}

impl Factorization {
    /// Sparse Cholesky; fails if the matrix is not numerically positive definite.
    pub fn cholesky(a: &CsrMatrix) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_cholesky(Side::Lower)
            .map(Factorization::Cholesky)
            .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))
    }

    pub fn lu(a: &CsrMatrix) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_lu().map(Factorization::Lu).map_err(|e| Error::Factorization(format!("lu: {e:?}")))
    }

    /// Cholesky if it succeeds, LU otherwise.
    pub fn symmetric(a: &CsrMatrix) -> Result<Self> {
        Self::cholesky(a).or_else(|_| Self::lu(a))
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, Factorization::Cholesky(_))
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        let rhs = MatMut::from_column_major_slice_mut(b, n, 1);
        match self {
            Factorization::Cholesky(f) => f.solve_in_place(rhs),
            Factorization::Lu(f) => f.solve_in_place(rhs),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve with iterative refinement against the unfactored matrix; returns
    /// the solution and its relative residual `‖b − Ax‖ / ‖b‖`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> (Vec<f64>, f64) {
        let mut x = self.solve(b);
        let bn = norm(b).max(f64::MIN_POSITIVE);
        let mut r: Vec<f64> = b.iter().zip(a.mul_vec(&x)).map(|(bi, ax)| bi - ax).collect();
        let mut rel = norm(&r) / bn;
        for _ in 0..steps {
            if rel < 1e-14 {
                break;
            }
            let dx = self.solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
            let rc: Vec<f64> = b.iter().zip(a.mul_vec(&cand)).map(|(bi, ax)| bi - ax).collect();
            let relc = norm(&rc) / bn;
            if relc >= rel {
                break;
            }
            x = cand;
            r = rc;
            rel = relc;
        }
        (x, rel)
    }
}
