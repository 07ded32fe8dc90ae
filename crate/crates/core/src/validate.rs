//! Direct finite-ε spectra of the two-phase operator on a torus and
//! quasimode residuals.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{assemble_forms, build_mesh, AssembledForms, Bc, Coeff, Coefficients, Domain, Material, Mesh, Physics};
use crate::geometry::{generate_configuration, Configuration, InclusionModel, ModelKind, Point, SymmetryOp};
use crate::homog::{periodic_corrector, CellProblemResult};
use crate::linalg::{dot, CsrMatrix, Factorization};
use crate::spectral::{solve_eigs, EigOptions, InclusionProblem};
use crate::tensors::ElasticityTensor;
use crate::zhikov::{dispersion, BetaEngine, SpectralSet};

/// Default cap on the number of unknowns of a torus problem.
pub const DEFAULT_DOF_BUDGET: usize = 400_000;

/// Shift used for the torus eigenproblem, whose stiffness is singular.
const TORUS_SHIFT: f64 = -1.0;

/// Residual tolerance of the torus eigensolve. Near-degenerate clusters of
/// inclusion modes converge very slowly to 1e-9, while 1e-6 already pins
/// the eigenvalues far below any tolerance the comparisons use.
pub const TORUS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSpectrumReport {
    pub epsilon: f64,
    pub n_cells: usize,
    pub h: f64,
    pub ndof: usize,
    pub eigenvalues: Vec<f64>,
    /// Distance of each eigenvalue to the reference set (empty without one).
    pub distances: Vec<f64>,
}

impl EpsilonSpectrumReport {
    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    /// Eigenvalues lying deeper than `tol` inside a gap of `set`.
    pub fn gap_violations(&self, set: &SpectralSet, tol: f64) -> Vec<f64> {
        self.eigenvalues.iter().copied().filter(|&v| set.distance(v) > tol).collect()
    }

    /// Attaches distances to `set`.
    pub fn with_reference(mut self, set: &SpectralSet) -> Self {
        self.distances = self.eigenvalues.iter().map(|&v| set.distance(v)).collect();
        self
    }
}

fn estimate_dofs(n_cells: usize, h_cell: f64) -> usize {
    let per_side = n_cells as f64 * (1.0 / h_cell).ceil();
    // two components; refined triangulations carry ~1.3 nodes per grid square
    (2.0 * 1.3 * per_side * per_side) as usize
}

fn tensor(c: &Coeff) -> Result<&ElasticityTensor> {
    match c {
        Coeff::Tensor(t) => Ok(t),
        Coeff::Scalar(_) => Err(Error::Parameter("torus validation needs elasticity tensors".into())),
    }
}

/// Mesh and forms of the `n × n` torus with `C₁` in the matrix and `ε²C₀`
/// in the inclusions, `ε = 1/n`.
#[derive(Debug, Clone)]
pub struct TorusProblem {
    pub cfg: Configuration,
    pub epsilon: f64,
    pub mesh: Mesh,
    pub forms: AssembledForms,
}

impl TorusProblem {
    pub fn new(cfg: Configuration, c0: &ElasticityTensor, c1: &ElasticityTensor, h_cell: f64, budget: usize) -> Result<Self> {
        let n = cfg.window_side;
        let est = estimate_dofs(n, h_cell);
        if est > budget {
            return Err(Error::Budget { dofs: est, budget });
        }
        let epsilon = 1.0 / n as f64;
        let mesh = build_mesh(&Domain::TwoPhaseTorus { cfg: &cfg, epsilon }, h_cell)?;
        let coeffs = Coefficients {
            matrix: Some(Coeff::Tensor(c1.clone())),
            inclusion: Some(Coeff::Tensor(c0.scaled(epsilon * epsilon))),
        };
        let forms = assemble_forms(&mesh, Physics::Elasticity, &coeffs, Bc::Periodic)?;
        if forms.ndof() > budget {
            return Err(Error::Budget { dofs: forms.ndof(), budget });
        }
        Ok(Self { cfg, epsilon, mesh, forms })
    }
}

/// Lowest `count` eigenvalues of the discretized two-phase operator on the
/// torus of `n_cells × n_cells` cells sampled from `model`.
pub fn epsilon_spectrum(
    model: &InclusionModel,
    c0: &ElasticityTensor,
    c1: &ElasticityTensor,
    n_cells: usize,
    h_cell: f64,
    count: usize,
    seed: u64,
    budget: usize,
) -> Result<EpsilonSpectrumReport> {
    let est = estimate_dofs(n_cells, h_cell);
    if est > budget {
        return Err(Error::Budget { dofs: est, budget });
    }
    let cfg = generate_configuration(model, n_cells, seed)?;
    let t = TorusProblem::new(cfg, c0, c1, h_cell, budget)?;
    let pairs = solve_eigs(&t.forms.k, &t.forms.m, count, TORUS_SHIFT, &EigOptions { tol: TORUS_TOL, ..Default::default() })?;
    Ok(EpsilonSpectrumReport {
        epsilon: t.epsilon,
        n_cells,
        h: h_cell,
        ndof: t.forms.ndof(),
        eigenvalues: pairs.values,
        distances: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasimodeOptions {
    /// Side of the envelope box (torus units, at most 1).
    pub envelope: f64,
    pub n_cells: usize,
    pub h_cell: f64,
    /// Prescribed wavenumber and polarization; skips the dispersion solve.
    pub wave: Option<(f64, [f64; 2])>,
    pub budget: usize,
}

impl Default for QuasimodeOptions {
    fn default() -> Self {
        Self { envelope: 1.0, n_cells: 4, h_cell: 1.0 / 16.0, wave: None, budget: DEFAULT_DOF_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasimodeReport {
    pub lambda0: f64,
    pub envelope: f64,
    pub epsilon: f64,
    pub wavenumber: f64,
    pub polarization: [f64; 2],
    /// Regularized residual of the corrected quasimode `(1 + λ₀b^ε)u_L`.
    pub residual_ratio: f64,
    /// The same for the bare envelope `u_L` (`b ≡ 0`).
    pub uncorrected_ratio: f64,
    pub ndof: usize,
}

/// Bucketed P1 point location on a triangle mesh.
struct Locator {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(mesh: &Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let side = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE);
        let nx = ((hi[0] - lo[0]) / cell) as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell) as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let ps = tri.map(|v| mesh.nodes[v]);
            let bx = |k: usize, f: fn(f64, f64) -> f64| ps.iter().map(|p| p[k]).fold(ps[0][k], f);
            let (i0, i1) = (((bx(0, f64::min) - lo[0]) / cell) as usize, ((bx(0, f64::max) - lo[0]) / cell) as usize);
            let (j0, j1) = (((bx(1, f64::min) - lo[1]) / cell) as usize, ((bx(1, f64::max) - lo[1]) / cell) as usize);
            for j in j0..=j1.min(ny - 1) {
                for i in i0..=i1.min(nx - 1) {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        Self { lo, cell, nx, ny, buckets }
    }

    /// Triangle containing `p` and its barycentric weights.
    fn locate(&self, mesh: &Mesh, p: Point) -> Option<(usize, [f64; 3])> {
        let tol = 1e-9;
        let fi = (p[0] - self.lo[0]) / self.cell;
        let fj = (p[1] - self.lo[1]) / self.cell;
        if fi < -tol || fj < -tol {
            return None;
        }
        let (i, j) = ((fi.max(0.0) as usize).min(self.nx - 1), (fj.max(0.0) as usize).min(self.ny - 1));
        for &t in &self.buckets[j * self.nx + i] {
            let tri = mesh.triangles[t];
            let [a, b, c] = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
            let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
            let l0 = 1.0 - l1 - l2;
            if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                return Some((t, [l0, l1, l2]));
            }
        }
        None
    }
}

fn interpolate<const K: usize>(mesh: &Mesh, hit: (usize, [f64; 3]), fields: &[Vec<f64>]) -> [[f64; 2]; K] {
    let (t, w) = hit;
    let tri = mesh.triangles[t];
    let mut out = [[0.0; 2]; K];
    for (i, f) in fields.iter().enumerate().take(K) {
        for a in 0..2 {
            out[i][a] = (0..3).map(|k| w[k] * f[2 * tri[k] + a]).sum();
        }
    }
    out
}

/// Period of a periodic model in cells.
fn period(model: &InclusionModel) -> usize {
    match model.kind {
        ModelKind::PeriodicRotation => 2,
        _ => 1,
    }
}

/// The periodic cell correctors `N̂` (one per unit strain) on the
/// perforated period window.
struct CellCorrector {
    cell: CellProblemResult,
    loc: Locator,
    period: usize,
}

impl CellCorrector {
    fn new(model: &InclusionModel, c1: &ElasticityTensor, h: f64) -> Result<Self> {
        let p = period(model);
        let cfg = generate_configuration(model, p, 0)?;
        let cell = periodic_corrector(&cfg, c1, h)?;
        let loc = Locator::new(&cell.mesh);
        Ok(Self { cell, loc, period: p })
    }

    /// `N̂` at window point `y` (reduced modulo the period).
    fn at(&self, y: Point) -> Option<[[f64; 2]; 3]> {
        let p = self.period as f64;
        let y = [y[0].rem_euclid(p), y[1].rem_euclid(p)];
        let hit = self.loc.locate(&self.cell.mesh, y)?;
        Some(interpolate::<3>(&self.cell.mesh, hit, &self.cell.correctors))
    }
}

/// Resolvent responses `b` on one placed inclusion, as nodal fields on the
/// mapped reference mesh, together with the cell correctors extended
/// harmonically from the interface into the inclusion.
struct LocalB {
    problem: InclusionProblem,
    loc: Locator,
    /// `fields[i]`: response to `e_i`, two values per geometric node.
    fields: Vec<Vec<f64>>,
    extension: Vec<Vec<f64>>,
}

impl LocalB {
    fn new(base: &InclusionProblem, op: SymmetryOp, scale: f64, lambda: f64, center: Point, cc: &CellCorrector) -> Result<Self> {
        let problem = base.mapped(op, scale)?;
        let r = problem.resolvent(lambda, None, 0.0)?;
        let fields = r.columns.iter().map(|c| problem.forms.expand(c)).collect();
        let extension = Self::extend(&problem, center, cc)?;
        let loc = Locator::new(&problem.mesh);
        Ok(Self { problem, loc, fields, extension })
    }

    /// Discrete harmonic extension of `N̂` from the boundary nodes, where the
    /// elastic forms eliminated the dofs, into the interior nodes.
    fn extend(problem: &InclusionProblem, center: Point, cc: &CellCorrector) -> Result<Vec<Vec<f64>>> {
        let mesh = &problem.mesh;
        let nn = mesh.nodes.len();
        let lap = assemble_forms(mesh, Physics::Scalar, &Coefficients::uniform(Coeff::Scalar(1.0)), Bc::None)?;
        let interior: Vec<Option<usize>> = {
            let mut next = 0;
            (0..nn)
                .map(|v| {
                    problem.forms.node_dof[v].map(|_| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let ni = interior.iter().flatten().count();
        let mut boundary = vec![[[0.0; 2]; 3]; nn];
        for v in 0..nn {
            if interior[v].is_none() {
                let p = mesh.nodes[v];
                boundary[v] = cc
                    .at([center[0] + p[0], center[1] + p[1]])
                    .ok_or_else(|| Error::Geometry(format!("interface point {p:?} is outside the cell mesh")))?;
            }
        }
        let mut out = vec![vec![0.0; 2 * nn]; 3];
        for v in 0..nn {
            if interior[v].is_none() {
                for (k, f) in out.iter_mut().enumerate() {
                    f[2 * v] = boundary[v][k][0];
                    f[2 * v + 1] = boundary[v][k][1];
                }
            }
        }
        if ni == 0 {
            return Ok(out);
        }
        let k = &lap.k;
        let dof = |v: usize| lap.node_dof[v].expect("no constraints");
        let mut node_of = vec![0; lap.n_free];
        for (v, d) in lap.node_dof.iter().enumerate() {
            if let Some(d) = d {
                node_of[*d] = v;
            }
        }
        let mut trip = Vec::new();
        let mut rhs = vec![vec![0.0; ni]; 6];
        for v in 0..nn {
            let Some(i) = interior[v] else { continue };
            let row = dof(v);
            for p in k.indptr[row]..k.indptr[row + 1] {
                let col = k.indices[p];
                let w = node_of[col];
                match interior[w] {
                    Some(j) => trip.push((i, j, k.values[p])),
                    None => {
                        for (f, r) in rhs.iter_mut().enumerate() {
                            r[i] -= k.values[p] * boundary[w][f / 2][f % 2];
                        }
                    }
                }
            }
        }
        let fac = Factorization::cholesky(&CsrMatrix::from_triplets(ni, trip))?;
        for (f, r) in rhs.iter().enumerate() {
            let x = fac.solve(r);
            for v in 0..nn {
                if let Some(i) = interior[v] {
                    out[f / 2][2 * v + f % 2] = x[i];
                }
            }
        }
        Ok(out)
    }

    /// `b(y)` (column i: response to e_i) and the extended correctors at a
    /// point of the inclusion.
    fn at(&self, y: Point) -> Option<([[f64; 2]; 2], [[f64; 2]; 3])> {
        let hit = self.loc.locate(&self.problem.mesh, y)?;
        let b = interpolate::<2>(&self.problem.mesh, hit, &self.fields);
        let n = interpolate::<3>(&self.problem.mesh, hit, &self.extension);
        Some(([[b[0][0], b[1][0]], [b[0][1], b[1][1]]], n))
    }
}

/// `η_L`, its gradient, for the product of `sin²` bumps on the centered box
/// of side `L`.
fn envelope_grad(x: Point, l: f64) -> (f64, Point) {
    use std::f64::consts::PI;
    let mut s = [0.0; 2];
    let mut ds = [0.0; 2];
    for k in 0..2 {
        let t = (x[k] - 0.5 + l / 2.0) / l;
        if !(0.0..=1.0).contains(&t) {
            return (0.0, [0.0; 2]);
        }
        s[k] = (PI * t).sin().powi(2);
        ds[k] = PI / l * (2.0 * PI * t).sin();
    }
    (s[0] * s[1], [ds[0] * s[1], s[0] * ds[1]])
}

/// Builds the quasimode `(1 + λ₀b^ε)u₀ + εN̂(x/ε)sym∇u₀` with
/// `u₀ = η_L c cos(r k̂·x)` on the torus and returns its residual ratio next
/// to that of the same field with `b ≡ 0`.
///
/// The first-order periodic corrector is part of the construction: without
/// it the stiff matrix sees an O(1) strain mismatch and no refinement in ε
/// reduces the residual. The residual is measured in the regularized norm
/// `√(λ₀+μ)·‖(A+μ)^{-1/2}(A−λ₀)u‖ / ‖u‖` with `μ` the λ-scale, which is finite
/// for P1 fields and bounds `dist(λ₀, σ)/√2` from below whenever that
/// distance is at most `λ₀ + μ`.
pub fn quasimode_residual(
    engine: &BetaEngine,
    c1: &ElasticityTensor,
    chom: &ElasticityTensor,
    lambda0: f64,
    k_hat: [f64; 2],
    opts: &QuasimodeOptions,
) -> Result<QuasimodeReport> {
    if !engine.model.is_periodic() {
        return Err(Error::Model("quasimodes are built for periodic models".into()));
    }
    if !(opts.envelope > 0.0 && opts.envelope <= 1.0) {
        return Err(Error::Parameter(format!("envelope width must lie in (0, 1], got {}", opts.envelope)));
    }
    if opts.n_cells % period(&engine.model) != 0 {
        return Err(Error::Parameter(format!("the torus must hold whole periods, got {} cells", opts.n_cells)));
    }
    let c0 = tensor(&engine.coeff)?;
    let (r, pol) = match opts.wave {
        Some(w) => w,
        None => {
            let beta = engine.beta(lambda0)?;
            let b = beta.value.ok_or(Error::NearPole { lambda: lambda0, pole: f64::NAN, distance: 0.0 })?;
            let sol = dispersion(lambda0, &k_hat, chom, &b)?;
            let (r, c) = sol.roots.last().cloned().ok_or(Error::NoPropagatingBranch(lambda0))?;
            (r, [c[0], c[1]])
        }
    };
    let kn = k_hat[0].hypot(k_hat[1]);
    let k = [k_hat[0] / kn, k_hat[1] / kn];

    let cfg = generate_configuration(&engine.model, opts.n_cells, 0)?;
    let torus = TorusProblem::new(cfg, c0, c1, opts.h_cell, opts.budget)?;
    let eps = torus.epsilon;
    let mesh = &torus.mesh;
    let forms = &torus.forms;
    let cc = CellCorrector::new(&engine.model, c1, opts.h_cell)?;

    // nodes strictly inside an inclusion: touched by inclusion triangles only
    let nn = mesh.nodes.len();
    let mut in_matrix = vec![false; nn];
    let mut inclusion: Vec<Option<u32>> = vec![None; nn];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            match mesh.materials[t] {
                Material::Matrix => in_matrix[v] = true,
                Material::Inclusion(k) => inclusion[v] = Some(k),
            }
        }
    }
    let base = engine.reference_problem().ok_or_else(|| Error::Model("model has no inclusion shape".into()))?;
    let per = cc.period as i64;
    let key = |p: &crate::geometry::Placement| (p.op as u8, p.scale.to_bits(), p.cell[0].rem_euclid(per), p.cell[1].rem_euclid(per));
    let mut local: HashMap<(u8, u64, i64, i64), LocalB> = HashMap::new();
    for p in &torus.cfg.placements {
        if let std::collections::hash_map::Entry::Vacant(e) = local.entry(key(p)) {
            let center = [key(p).2 as f64 + 0.5, key(p).3 as f64 + 0.5];
            e.insert(LocalB::new(base, p.op, p.scale, lambda0, center, &cc)?);
        }
    }

    let nf = forms.ndof();
    let mut u = vec![0.0; nf];
    let mut u0 = vec![0.0; nf];
    for node in 0..nn {
        let Some(i) = forms.node_dof[node] else { continue };
        let x = mesh.nodes[node];
        let (eta, deta) = envelope_grad(x, opts.envelope);
        let phase = r * (k[0] * x[0] + k[1] * x[1]);
        let (c, s) = (phase.cos(), phase.sin());
        let w = [eta * c * pol[0], eta * c * pol[1]];
        // ∂_q u₀_p
        let g: [[f64; 2]; 2] =
            std::array::from_fn(|p| std::array::from_fn(|q| pol[p] * (deta[q] * c - eta * r * k[q] * s)));
        let strain = [g[0][0], g[1][1], g[0][1] + g[1][0]];
        let y = [x[0] / eps, x[1] / eps];
        let (n, b) = match (in_matrix[node], inclusion[node]) {
            (false, Some(kidx)) => {
                let p = &torus.cfg.placements[kidx as usize];
                let lb = &local[&key(p)];
                let yl = [y[0] - p.cell[0] as f64 - 0.5, y[1] - p.cell[1] as f64 - 0.5];
                let (b, n) = lb.at(yl).ok_or_else(|| Error::Geometry(format!("node {x:?} is outside its inclusion")))?;
                (n, Some(b))
            }
            _ => (cc.at(y).ok_or_else(|| Error::Geometry(format!("node {x:?} is outside the cell mesh")))?, None),
        };
        let mut v0 = w;
        for a in 0..2 {
            v0[a] += eps * (0..3).map(|m| strain[m] * n[m][a]).sum::<f64>();
        }
        let mut v = v0;
        if let Some(b) = b {
            for a in 0..2 {
                v[a] += lambda0 * (b[a][0] * w[0] + b[a][1] * w[1]);
            }
        }
        u[2 * i] = v[0];
        u[2 * i + 1] = v[1];
        u0[2 * i] = v0[0];
        u0[2 * i + 1] = v0[1];
    }
    let mu = engine.lambda_scale();
    let reg = forms.k.lin_comb(1.0, &forms.m, mu);
    let fac = Factorization::cholesky(&reg)?;
    let ratio = |u: &[f64]| -> f64 {
        let ku = forms.k.mul_vec(u);
        let mu_v = forms.m.mul_vec(u);
        let res: Vec<f64> = ku.iter().zip(&mu_v).map(|(a, b)| a - lambda0 * b).collect();
        let z = fac.solve(&res);
        let num = dot(&res, &z).max(0.0);
        let den = dot(u, &mu_v);
        ((lambda0 + mu) * num / den).sqrt()
    };
    Ok(QuasimodeReport {
        lambda0,
        envelope: opts.envelope,
        epsilon: eps,
        wavenumber: r,
        polarization: pol,
        residual_ratio: ratio(&u),
        uncorrected_ratio: ratio(&u0),
        ndof: nf,
    })
}
