use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::Serialize;

use super::quadrature::uniform_average;
use super::sets::{SetLabel, SpectralSet};
use crate::error::{Error, Result};
use crate::fem::Coeff;
use crate::geometry::{InclusionModel, Marginal, SymmetryOp};
use crate::linalg::dot;
use crate::spectral::{EigOptions, EigenCache, EigenDecomposition, InclusionProblem, POLE_GUARD};
use crate::tensors::ElasticityTensor;

/// Spatial dimension of all lattice models.
pub const DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    /// Mesh size on the reference shape.
    pub h: f64,
    /// Upper end of the λ-range of interest; the eigen-decompositions are
    /// extended until they cover it (with headroom for the tail evaluator).
    pub lambda_max: f64,
    /// Initial number of Dirichlet eigenpairs.
    pub count: usize,
    /// Pole guard relative to the λ-scale.
    pub guard_rel: f64,
    /// Gauss–Legendre nodes for continuous scaling laws.
    pub gl_nodes: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { h: 0.02, lambda_max: 0.0, count: 24, guard_rel: POLE_GUARD, gl_nodes: 16 }
    }
}

/// The β-matrix `λI + λ²𝔼[B̄_λ]` at one λ, or a pole flag.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaMatrix {
    pub lambda: f64,
    pub value: Option<DMatrix<f64>>,
    pub pole_flag: bool,
    pub provenance: String,
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let s = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("nonempty")
}

pub fn nonnegative_count(m: &DMatrix<f64>) -> usize {
    sym_eigenvalues(m).iter().filter(|&&x| x >= 0.0).count()
}

impl BetaMatrix {
    pub fn max_eigenvalue(&self) -> Option<f64> {
        self.value.as_ref().map(max_eigenvalue)
    }

    pub fn nonnegative_count(&self) -> Option<usize> {
        self.value.as_ref().map(nonnegative_count)
    }
}

/// `B_Q(μ)` from `B(0)`, `B'(0)` and the leading eigenpairs:
/// `B(0) + μB'(0) + μ² Σ m_n⊗m_n / (ν_n²(ν_n − μ))`. The two leading Taylor
/// terms are exact, so truncation only affects an `O(μ²/ν_N³)` tail.
#[derive(Debug, Clone)]
pub struct SpectralEvaluator {
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    nus: Vec<f64>,
    outer: Vec<DMatrix<f64>>,
}

impl SpectralEvaluator {
    pub fn new(problem: &InclusionProblem, eig: &EigenDecomposition) -> Result<Self> {
        let r = problem.resolvent(0.0, None, 0.0)?;
        let nc = problem.ncomp();
        let mut b1 = DMatrix::zeros(nc, nc);
        let mcols: Vec<Vec<f64>> = r.columns.iter().map(|c| problem.forms.m.mul_vec(c)).collect();
        for i in 0..nc {
            for j in 0..nc {
                b1[(i, j)] = dot(&r.columns[i], &mcols[j]);
            }
        }
        let outer = eig
            .moments
            .iter()
            .map(|m| {
                let v = DMatrix::from_column_slice(nc, 1, m);
                &v * v.transpose()
            })
            .collect();
        Ok(Self { b0: r.b, b1, nus: eig.values.clone(), outer })
    }

    pub fn eval(&self, mu: f64) -> DMatrix<f64> {
        let mut b = &self.b0 + &self.b1 * mu;
        for (nu, o) in self.nus.iter().zip(&self.outer) {
            b += o * (mu * mu / (nu * nu * (nu - mu)));
        }
        b
    }

    /// `Σ m_n⊗m_n / (ν_n − μ)` without the exact low-order terms.
    pub fn truncated(&self, mu: f64) -> DMatrix<f64> {
        let nc = self.b0.nrows();
        let mut b = DMatrix::zeros(nc, nc);
        for (nu, o) in self.nus.iter().zip(&self.outer) {
            b += o / (nu - mu);
        }
        b
    }
}

struct Oriented {
    op: SymmetryOp,
    problem: InclusionProblem,
    eig: EigenDecomposition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportAtom {
    /// Index into the engine's oriented problems.
    pub orient: usize,
    pub op: SymmetryOp,
    pub scale: f64,
    pub weight: f64,
}

enum Law {
    Atoms(Vec<SupportAtom>),
    Uniform { r1: f64, r2: f64, nodes: Vec<f64>, weights: Vec<f64> },
    Empty,
}

/// A pole of λ ↦ 𝛃(λ): a point `ν/s²` for discrete laws, an interval
/// `[ν/r₂², ν/r₁²]` for a continuous scaling law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pole {
    pub lo: f64,
    pub hi: f64,
    pub significant: bool,
}

/// Evaluates β-matrices and related quantities for one inclusion model.
pub struct BetaEngine {
    pub model: InclusionModel,
    pub coeff: Coeff,
    pub options: EngineOptions,
    orients: Vec<Oriented>,
    law: Law,
    lambda_scale: f64,
    guard: f64,
    ncomp: usize,
    evaluator: OnceLock<SpectralEvaluator>,
    // 𝛃 by the bit pattern of λ; set construction revisits the same points
    memo: Mutex<HashMap<u64, BetaMatrix>>,
}

impl std::fmt::Debug for BetaEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BetaEngine")
            .field("model", &self.model.kind)
            .field("lambda_scale", &self.lambda_scale)
            .field("guard", &self.guard)
            .finish()
    }
}

fn covering_eigen(
    problem: &InclusionProblem,
    count: usize,
    need: f64,
    cache: Option<&EigenCache>,
) -> Result<EigenDecomposition> {
    let opts = EigOptions::default();
    let ndof = problem.forms.ndof();
    let mut count = count.max(1).min(ndof);
    loop {
        let eig = match cache {
            Some(c) => c.get_or_compute(problem, count, &opts)?,
            None => problem.eigen(count, &opts)?,
        };
        if *eig.values.last().expect("nonempty") >= need || count >= ndof {
            return Ok(eig);
        }
        count = (2 * count).min(ndof);
    }
}

/// Headroom of the eigen-decomposition over the largest scaled λ needed.
const COVER: f64 = 4.0;

impl BetaEngine {
    pub fn new(model: &InclusionModel, coeff: &Coeff, options: EngineOptions, cache: Option<&EigenCache>) -> Result<Self> {
        model.validate()?;
        if let Coeff::Tensor(t) = coeff {
            if t.dim() != DIM {
                return Err(Error::DimensionMismatch { expected: DIM, got: t.dim() });
            }
        }
        let ncomp = match coeff {
            Coeff::Scalar(_) => 1,
            Coeff::Tensor(_) => DIM,
        };
        let marginal = model.marginal();
        let shape = model.shape();
        let mut orients: Vec<Oriented> = Vec::new();
        let base = match (&marginal, shape) {
            (Marginal::Empty, _) | (_, None) => None,
            (_, Some(s)) => Some(InclusionProblem::new(s, coeff, options.h)?),
        };
        let mut orient_of = |op: SymmetryOp, max_scale: f64| -> Result<usize> {
            if let Some(i) = orients.iter().position(|o| o.op == op) {
                return Ok(i);
            }
            let base = base.as_ref().expect("shape present");
            let problem = if op == SymmetryOp::Identity { base.clone() } else { base.mapped(op, 1.0)? };
            let need = COVER * options.lambda_max * max_scale * max_scale;
            let eig = covering_eigen(&problem, options.count, need, cache)?;
            orients.push(Oriented { op, problem, eig });
            Ok(orients.len() - 1)
        };
        let law = match marginal {
            Marginal::Empty => Law::Empty,
            Marginal::Atoms(atoms) => {
                let smax = atoms.iter().map(|a| a.scale).fold(0.0, f64::max);
                let mut out = Vec::new();
                for a in atoms {
                    let orient = orient_of(a.op, smax)?;
                    out.push(SupportAtom { orient, op: a.op, scale: a.scale, weight: a.weight });
                }
                Law::Atoms(out)
            }
            Marginal::UniformScale { r1, r2 } => {
                orient_of(SymmetryOp::Identity, r2)?;
                let (nodes, weights) = uniform_average(r1, r2, options.gl_nodes.max(1));
                Law::Uniform { r1, r2, nodes, weights }
            }
        };
        let lambda_scale = orients.first().map(|o| o.eig.first()).unwrap_or(1.0);
        let guard = options.guard_rel * lambda_scale;
        Ok(Self {
            model: model.clone(),
            coeff: coeff.clone(),
            options,
            orients,
            law,
            lambda_scale,
            guard,
            ncomp,
            evaluator: OnceLock::new(),
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// First Dirichlet eigenvalue of the reference shape (1 for the empty model).
    pub fn lambda_scale(&self) -> f64 {
        self.lambda_scale
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn reference_eigen(&self) -> Option<&EigenDecomposition> {
        self.orients.first().map(|o| &o.eig)
    }

    pub fn reference_problem(&self) -> Option<&InclusionProblem> {
        self.orients.first().map(|o| &o.problem)
    }

    pub fn support_atoms(&self) -> Vec<SupportAtom> {
        match &self.law {
            Law::Atoms(a) => a.clone(),
            _ => Vec::new(),
        }
    }

    pub fn scaling_range(&self) -> Option<(f64, f64)> {
        match &self.law {
            Law::Uniform { r1, r2, .. } => Some((*r1, *r2)),
            _ => None,
        }
    }

    /// Tail evaluator of the reference shape, built on first use.
    pub fn evaluator(&self) -> Result<&SpectralEvaluator> {
        if let Some(e) = self.evaluator.get() {
            return Ok(e);
        }
        let o = self.orients.first().ok_or_else(|| Error::Model("model has no inclusion shape".into()))?;
        let ev = SpectralEvaluator::new(&o.problem, &o.eig)?;
        Ok(self.evaluator.get_or_init(|| ev))
    }

    /// `B` of the inclusion `scale·op(Q)` at λ, by a direct resolvent solve.
    /// The dilation is applied through the exact discrete identity
    /// `B_{sQ}(λ) = s^{d+2} B_Q(s²λ)` on the shared mesh.
    pub fn inclusion_b(&self, orient: usize, scale: f64, lambda: f64) -> Result<DMatrix<f64>> {
        let o = &self.orients[orient];
        let s2 = scale * scale;
        let r = o.problem.resolvent(s2 * lambda, Some(&o.eig), self.guard * s2)?;
        Ok(r.b * s2.powi((DIM as i32 + 2) / 2))
    }

    fn in_uniform_pole(&self, lambda: f64) -> Option<Pole> {
        self.poles(f64::INFINITY).into_iter().find(|p| lambda >= p.lo - self.guard && lambda <= p.hi + self.guard)
    }

    /// `𝔼[B̄_λ]` per unit cell.
    pub fn expected_b(&self, lambda: f64) -> Result<DMatrix<f64>> {
        let nc = self.ncomp;
        match &self.law {
            Law::Empty => Ok(DMatrix::zeros(nc, nc)),
            Law::Atoms(atoms) => {
                let mut b = DMatrix::zeros(nc, nc);
                for a in atoms {
                    b += self.inclusion_b(a.orient, a.scale, lambda)? * a.weight;
                }
                Ok(b)
            }
            Law::Uniform { nodes, weights, .. } => {
                if let Some(p) = self.in_uniform_pole(lambda) {
                    return Err(Error::NearPole { lambda, pole: p.lo, distance: 0.0 });
                }
                let mut b = DMatrix::zeros(nc, nc);
                for (r, w) in nodes.iter().zip(weights) {
                    b += self.inclusion_b(0, *r, lambda)? * *w;
                }
                Ok(b)
            }
        }
    }

    pub fn provenance(&self) -> String {
        match &self.law {
            Law::Empty => "no inclusions".into(),
            Law::Atoms(a) => {
                let parts: Vec<String> = a.iter().map(|a| format!("{:?}x{}@{}", a.op, a.scale, a.weight)).collect();
                format!("atoms [{}], h = {}", parts.join(", "), self.options.h)
            }
            Law::Uniform { r1, r2, nodes, .. } => {
                format!("uniform scale [{r1}, {r2}], {}-node Gauss-Legendre, h = {}", nodes.len(), self.options.h)
            }
        }
    }

    /// `𝛃(λ) = λI + λ²𝔼[B̄_λ]`; exactly zero at λ = 0, pole-flagged inside a
    /// pole guard.
    pub fn beta(&self, lambda: f64) -> Result<BetaMatrix> {
        let key = lambda.to_bits();
        if let Some(b) = self.memo.lock().expect("memo poisoned").get(&key) {
            return Ok(b.clone());
        }
        let b = self.beta_uncached(lambda)?;
        self.memo.lock().expect("memo poisoned").insert(key, b.clone());
        Ok(b)
    }

    fn beta_uncached(&self, lambda: f64) -> Result<BetaMatrix> {
        let nc = self.ncomp;
        if lambda == 0.0 {
            return Ok(BetaMatrix { lambda, value: Some(DMatrix::zeros(nc, nc)), pole_flag: false, provenance: self.provenance() });
        }
        match self.expected_b(lambda) {
            Ok(b) => {
                let v = DMatrix::identity(nc, nc) * lambda + b * (lambda * lambda);
                Ok(BetaMatrix { lambda, value: Some(v), pole_flag: false, provenance: self.provenance() })
            }
            Err(Error::NearPole { .. }) => Ok(BetaMatrix { lambda, value: None, pole_flag: true, provenance: self.provenance() }),
            Err(e) => Err(e),
        }
    }

    /// `λI + λ²B` of every support atom (discrete laws only).
    pub fn atom_betas(&self, lambda: f64) -> Result<Vec<DMatrix<f64>>> {
        let nc = self.ncomp;
        match &self.law {
            Law::Atoms(atoms) => atoms
                .iter()
                .map(|a| {
                    let b = self.inclusion_b(a.orient, a.scale, lambda)?;
                    Ok(DMatrix::identity(nc, nc) * lambda + b * (lambda * lambda))
                })
                .collect(),
            _ => Err(Error::Model("atom betas need a discrete law".into())),
        }
    }

    /// `λI + λ²B_{rQ}(λ)` from the tail evaluator.
    pub fn scaled_beta_eval(&self, r: f64, lambda: f64) -> Result<DMatrix<f64>> {
        let nc = self.ncomp;
        let r2 = r * r;
        let b = self.evaluator()?.eval(r2 * lambda) * r2.powi((DIM as i32 + 2) / 2);
        Ok(DMatrix::identity(nc, nc) * lambda + b * (lambda * lambda))
    }

    /// All computed poles up to `lambda_max`.
    pub fn poles(&self, lambda_max: f64) -> Vec<Pole> {
        let mut out = Vec::new();
        match &self.law {
            Law::Empty => {}
            Law::Atoms(atoms) => {
                for a in atoms {
                    let e = &self.orients[a.orient].eig;
                    for n in 0..e.values.len() {
                        let p = e.values[n] / (a.scale * a.scale);
                        if p <= lambda_max {
                            out.push(Pole { lo: p, hi: p, significant: e.is_significant(n) });
                        }
                    }
                }
            }
            Law::Uniform { r1, r2, .. } => {
                let e = &self.orients[0].eig;
                for n in 0..e.values.len() {
                    let lo = e.values[n] / (r2 * r2);
                    if lo <= lambda_max {
                        out.push(Pole { lo, hi: e.values[n] / (r1 * r1), significant: e.is_significant(n) });
                    }
                }
            }
        }
        out.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        out
    }

    /// Within the guard of any pole.
    pub fn near_pole(&self, lambda: f64) -> bool {
        self.poles(f64::INFINITY).iter().any(|p| lambda >= p.lo - self.guard && lambda <= p.hi + self.guard)
    }

    /// `σ(A₀)`: the union of the Dirichlet spectra over the support.
    pub fn sigma_a0(&self, lambda_max: f64) -> SpectralSet {
        let mut iv = Vec::new();
        let mut pts = Vec::new();
        for p in self.poles(lambda_max) {
            if p.lo == p.hi {
                pts.push(p.lo);
            } else {
                iv.push([p.lo, p.hi]);
            }
        }
        SpectralSet::new(SetLabel::SigmaA0, lambda_max, iv, pts)
    }

    /// `λ ↦ λI + λ²B` of the inclusion in a placement, for β∞ sampling.
    pub(crate) fn placement_b(&self, op: SymmetryOp, scale: f64, lambda: f64, atom_b: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        match &self.law {
            Law::Atoms(atoms) => {
                let i = atoms
                    .iter()
                    .position(|a| a.op == op && a.scale == scale)
                    .ok_or_else(|| Error::Model(format!("placement {op:?} x {scale} outside the model support")))?;
                Ok(atom_b[i].clone())
            }
            Law::Uniform { .. } => {
                let r2 = scale * scale;
                Ok(self.evaluator()?.eval(r2 * lambda) * r2.powi((DIM as i32 + 2) / 2))
            }
            Law::Empty => Ok(DMatrix::zeros(self.ncomp, self.ncomp)),
        }
    }

    pub(crate) fn atom_bs(&self, lambda: f64) -> Result<Vec<DMatrix<f64>>> {
        match &self.law {
            Law::Atoms(atoms) => atoms.iter().map(|a| self.inclusion_b(a.orient, a.scale, lambda)).collect(),
            _ => Ok(Vec::new()),
        }
    }
}

/// The β-matrix of a model at one λ (one-shot convenience).
pub fn beta_matrix(model: &InclusionModel, coeff: &Coeff, lambda: f64, h: f64) -> Result<BetaMatrix> {
    let opts = EngineOptions { h, lambda_max: lambda, ..Default::default() };
    BetaEngine::new(model, coeff, opts, None)?.beta(lambda)
}

/// β-matrix of the periodic problem with reference inclusion `rQ`, computed
/// three ways.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaR {
    pub r: f64,
    pub lambda: f64,
    /// Direct resolvent solve on the dilated mesh `r·Q`.
    pub direct: DMatrix<f64>,
    /// From the eigenpairs of `Q`: poles `r⁻²ν_n`, squared moments scaled by
    /// `r^d` (the dilation of unit-normalized eigenfunctions).
    pub from_eigen: DMatrix<f64>,
    /// The printed formula with prefactor `r^{-2d}` on the squared moments.
    pub literal: DMatrix<f64>,
    /// `‖direct − from_eigen‖ / ‖direct‖`.
    pub discrepancy: f64,
    /// `‖direct − literal‖ / ‖direct‖`.
    pub literal_discrepancy: f64,
}

/// Computes `β_r(λ)` by a direct solve and from the reference eigenpairs, and
/// reports the discrepancy rather than reconciling it.
pub fn beta_r(engine: &BetaEngine, r: f64, lambda: f64) -> Result<BetaR> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Parameter(format!("scale must lie in (0, 1], got {r}")));
    }
    let problem = engine.reference_problem().ok_or_else(|| Error::Model("model has no inclusion shape".into()))?;
    let eig = engine.reference_eigen().expect("present");
    let r2 = r * r;
    for &nu in &eig.values {
        let d = (lambda - nu / r2).abs();
        if d < engine.guard() {
            return Err(Error::NearPole { lambda, pole: nu / r2, distance: d });
        }
    }
    let nc = engine.ncomp();
    let id = DMatrix::<f64>::identity(nc, nc) * lambda;
    let l2 = lambda * lambda;
    let scaled = problem.mapped(SymmetryOp::Identity, r)?;
    let direct_b = scaled.resolvent(lambda, None, 0.0)?.b;
    // Σ m_n⊗m_n/(r⁻²ν_n − λ) = r² B_Q(r²λ), tail-corrected
    let ev = engine.evaluator()?;
    let sum = ev.eval(r2 * lambda) * r2;
    let d = DIM as i32;
    let direct = &id + direct_b * l2;
    let from_eigen = &id + &sum * (l2 * r.powi(d));
    let literal = &id + &sum * (l2 * r.powi(-2 * d));
    let n = direct.norm().max(f64::MIN_POSITIVE);
    Ok(BetaR {
        r,
        lambda,
        discrepancy: (&direct - &from_eigen).norm() / n,
        literal_discrepancy: (&direct - &literal).norm() / n,
        direct,
        from_eigen,
        literal,
    })
}

/// Roots of the dispersion relation `det(r²·(k̂·Ĉ·k̂) − 𝛃) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSolution {
    pub lambda: f64,
    pub direction: Vec<f64>,
    /// `(r, c)` pairs sorted by `r`; `c` is a unit polarization.
    pub roots: Vec<(f64, Vec<f64>)>,
}

pub fn dispersion(lambda: f64, k_hat: &[f64], chom: &ElasticityTensor, beta: &DMatrix<f64>) -> Result<DispersionSolution> {
    let d = chom.dim();
    if k_hat.len() != d || beta.nrows() != d || beta.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: k_hat.len() });
    }
    let kn = k_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(kn > 0.0) {
        return Err(Error::Parameter("direction must be nonzero".into()));
    }
    let k: Vec<f64> = k_hat.iter().map(|x| x / kn).collect();
    let a = chom.acoustic(&k);
    let ae = a.clone().symmetric_eigen();
    if ae.eigenvalues.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::NotElliptic(ae.eigenvalues.min()));
    }
    let inv_sqrt = &ae.eigenvectors
        * DMatrix::from_diagonal(&ae.eigenvalues.map(|x| 1.0 / x.sqrt()))
        * ae.eigenvectors.transpose();
    let s = &inv_sqrt * beta * &inv_sqrt;
    let s = (&s + s.transpose()) * 0.5;
    let se = s.symmetric_eigen();
    let mut roots = Vec::new();
    for i in 0..d {
        let mu = se.eigenvalues[i];
        if mu >= 0.0 {
            let c = &inv_sqrt * se.eigenvectors.column(i);
            let c = &c / c.norm();
            roots.push((mu.sqrt(), c.iter().copied().collect::<Vec<f64>>()));
        }
    }
    roots.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(DispersionSolution { lambda, direction: k, roots })
}
