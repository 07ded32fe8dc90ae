use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eigs::{solve_eigs, EigOptions};
use crate::error::{Error, Result};
use crate::fem::{assemble_forms, build_mesh, AssembledForms, Bc, Coeff, Coefficients, Domain, Mesh, Physics};
use crate::geometry::{InclusionShape, SymmetryOp};
use crate::linalg::Factorization;

/// Default pole guard relative to the first eigenvalue.
pub const POLE_GUARD: f64 = 1e-3;

/// Maximum relative residual accepted for a resolvent column.
pub const RESOLVENT_TOL: f64 = 1e-9;

/// Dirichlet eigenpairs of one inclusion, with moments `m_n = ∫ φ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    pub moments: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub requested: usize,
    pub converged: usize,
    pub shape_key: String,
    pub h: f64,
    pub ncomp: usize,
    /// Area of the meshed inclusion.
    pub area: f64,
}

impl EigenDecomposition {
    pub fn first(&self) -> f64 {
        self.values[0]
    }

    /// A pole is significant iff `‖m_n‖ > 1e-6·√|Q|`.
    pub fn is_significant(&self, n: usize) -> bool {
        let m = self.moments[n].iter().map(|x| x * x).sum::<f64>().sqrt();
        m > 1e-6 * self.area.sqrt()
    }

    pub fn significant_poles(&self) -> Vec<f64> {
        (0..self.values.len()).filter(|&n| self.is_significant(n)).map(|n| self.values[n]).collect()
    }

    fn moment_matrix(&self, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_column_slice(self.ncomp, 1, &self.moments[n]);
        &m * m.transpose()
    }

    /// Truncated eigen-expansion `Σ m_n⊗m_n/(ν_n − λ)`.
    pub fn expansion(&self, lambda: f64) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.ncomp, self.ncomp);
        for n in 0..self.values.len() {
            b += self.moment_matrix(n) / (self.values[n] - lambda);
        }
        b
    }

    /// Tail-corrected expansion: `B(0) + λ Σ m_n⊗m_n/(ν_n(ν_n − λ))`, which
    /// folds the untruncated modes into the exact `B(0)`.
    pub fn expansion_with_tail(&self, b0: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let mut b = b0.clone();
        for n in 0..self.values.len() {
            let nu = self.values[n];
            b += self.moment_matrix(n) * (lambda / (nu * (nu - lambda)));
        }
        b
    }
}

/// Response to constant unit loads: `(A₀ − λ) b⁽ⁱ⁾ = eᵢ` on the inclusion,
/// with `B_ij = ∫ b⁽ⁱ⁾·e_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSample {
    pub lambda: f64,
    pub columns: Vec<Vec<f64>>,
    pub b: DMatrix<f64>,
    /// `min_n |ν_n − λ|` over the known eigenvalues (∞ if none supplied).
    pub pole_distance: f64,
    /// Largest relative residual over the columns.
    pub residual: f64,
}

/// Mesh and assembled Dirichlet forms of one inclusion shape.
#[derive(Debug, Clone)]
pub struct InclusionProblem {
    pub shape: InclusionShape,
    pub coeff: Coeff,
    pub h: f64,
    pub mesh: Mesh,
    pub forms: AssembledForms,
    loads: Vec<Vec<f64>>,
}

pub(crate) fn physics_of(c: &Coeff) -> Physics {
    match c {
        Coeff::Scalar(_) => Physics::Scalar,
        Coeff::Tensor(_) => Physics::Elasticity,
    }
}

impl InclusionProblem {
    pub fn new(shape: &InclusionShape, coeff: &Coeff, h: f64) -> Result<Self> {
        let mesh = build_mesh(&Domain::ShapeInterior(shape), h)?;
        Self::from_mesh(shape.clone(), coeff, h, mesh)
    }

    /// Uses a caller-supplied mesh whose boundary edges are tagged Dirichlet.
    pub fn from_mesh(shape: InclusionShape, coeff: &Coeff, h: f64, mesh: Mesh) -> Result<Self> {
        let forms = assemble_forms(&mesh, physics_of(coeff), &Coefficients::uniform(coeff.clone()), Bc::Dirichlet)?;
        if forms.ndof() == 0 {
            return Err(Error::Mesh(format!("shape {:?} has no interior nodes at h = {h}; refine the mesh", shape.id)));
        }
        let nc = forms.ncomp;
        let loads = (0..nc)
            .map(|i| {
                let mut e = vec![0.0; nc];
                e[i] = 1.0;
                forms.constant_load(&e)
            })
            .collect();
        Ok(Self { shape, coeff: coeff.clone(), h, mesh, forms, loads })
    }

    /// The same discrete problem on the image `scale·op(Q)`: the mesh is the
    /// mapped mesh of `Q`, so symmetric images are exactly equivalent.
    pub fn mapped(&self, op: SymmetryOp, scale: f64) -> Result<Self> {
        let shape = InclusionShape { id: self.shape.id.clone(), vertices: self.shape.placed(op, scale, [0.0, 0.0]) };
        let mesh = self.mesh.mapped(op, scale, [0.0, 0.0]);
        Self::from_mesh(shape, &self.coeff, self.h * scale, mesh)
    }

    pub fn ncomp(&self) -> usize {
        self.forms.ncomp
    }

    /// Content hash of (shape, physics, coefficient, h, count).
    pub fn key(&self, count: usize) -> String {
        let mut s = Sha256::new();
        s.update(b"hcband.eig/1");
        for p in &self.mesh.nodes {
            s.update(p[0].to_le_bytes());
            s.update(p[1].to_le_bytes());
        }
        for t in &self.mesh.triangles {
            for i in t {
                s.update((*i as u64).to_le_bytes());
            }
        }
        match &self.coeff {
            Coeff::Scalar(c) => {
                s.update(b"scalar");
                s.update(c.to_le_bytes());
            }
            Coeff::Tensor(t) => {
                s.update(b"tensor");
                for c in t.components() {
                    s.update(c.to_le_bytes());
                }
            }
        }
        s.update(self.h.to_le_bytes());
        s.update((count as u64).to_le_bytes());
        hex::encode(s.finalize())
    }

    pub fn eigen(&self, count: usize, opts: &EigOptions) -> Result<EigenDecomposition> {
        let count = count.min(self.forms.ndof());
        let pairs = solve_eigs(&self.forms.k, &self.forms.m, count, 0.0, opts)?;
        let moments = pairs.vectors.iter().map(|v| self.forms.integral(v)).collect();
        Ok(EigenDecomposition {
            values: pairs.values,
            moments,
            residuals: pairs.residuals,
            vectors: pairs.vectors,
            requested: count,
            converged: count,
            shape_key: self.key(count),
            h: self.h,
            ncomp: self.ncomp(),
            area: self.mesh.area(),
        })
    }

    /// Direct resolvent solve at `λ`. If eigenvalues are supplied, `λ` within
    /// `guard` of any of them is rejected with [`Error::NearPole`].
    pub fn resolvent(&self, lambda: f64, eig: Option<&EigenDecomposition>, guard: f64) -> Result<ResolventSample> {
        if !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be finite, got {lambda}")));
        }
        let mut pole_distance = f64::INFINITY;
        if let Some(e) = eig {
            for &nu in &e.values {
                let d = (lambda - nu).abs();
                if d < guard {
                    return Err(Error::NearPole { lambda, pole: nu, distance: d });
                }
                pole_distance = pole_distance.min(d);
            }
        }
        let a = self.forms.k.lin_comb(1.0, &self.forms.m, -lambda);
        let fac = Factorization::symmetric(&a)?;
        let nc = self.ncomp();
        let mut columns = Vec::with_capacity(nc);
        let mut residual: f64 = 0.0;
        for f in &self.loads {
            let (x, rel) = fac.solve_refined(&a, f, 3);
            residual = residual.max(rel);
            columns.push(x);
        }
        if !(residual <= RESOLVENT_TOL) {
            return Err(Error::Resolvent { lambda, residual });
        }
        let mut b = DMatrix::zeros(nc, nc);
        for i in 0..nc {
            for j in 0..nc {
                b[(i, j)] = crate::linalg::dot(&columns[i], &self.loads[j]);
            }
        }
        Ok(ResolventSample { lambda, columns, b, pole_distance, residual })
    }
}

/// Dirichlet spectrum of `−div C₀∇` (or `−c Δ`) on the shape; cached by
/// content hash when a cache is supplied.
pub fn dirichlet_spectrum(
    shape: &InclusionShape,
    coeff: &Coeff,
    h: f64,
    count: usize,
    cache: Option<&super::cache::EigenCache>,
) -> Result<EigenDecomposition> {
    let problem = InclusionProblem::new(shape, coeff, h)?;
    match cache {
        Some(c) => c.get_or_compute(&problem, count, &EigOptions::default()),
        None => problem.eigen(count, &EigOptions::default()),
    }
}

/// One-shot resolvent solve on a freshly meshed shape.
pub fn solve_b_lambda(shape: &InclusionShape, coeff: &Coeff, lambda: f64, h: f64) -> Result<ResolventSample> {
    InclusionProblem::new(shape, coeff, h)?.resolvent(lambda, None, 0.0)
}
