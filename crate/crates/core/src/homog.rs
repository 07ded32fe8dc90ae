//! Periodic cell problems on perforated cells and the homogenized tensor.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::assemble::hat_gradients;
use crate::fem::{assemble_forms, build_mesh, AssembledForms, Bc, BoundaryTag, Coeff, Coefficients, Domain, Mesh, Physics};
use crate::geometry::{generate_configuration, Configuration, InclusionModel};
use crate::linalg::{norm, CsrMatrix, Factorization};
use crate::tensors::ElasticityTensor;

/// Index pairs of the symmetric strain basis in the plane.
pub const STRAIN_PAIRS: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];

/// Corrector fields and the homogenized tensor of one periodic cell.
#[derive(Debug, Clone)]
pub struct CellProblemResult {
    /// Nodal values (two per geometric node) for each strain in
    /// [`STRAIN_PAIRS`]; zero mean over the perforated region.
    pub correctors: Vec<Vec<f64>>,
    pub chom: ElasticityTensor,
    pub cell_cfg: Configuration,
    pub h: f64,
    pub mesh: Mesh,
    /// Area of the perforated (matrix) region.
    pub matrix_area: f64,
    /// Area of the full cell, the normalization of the tensor.
    pub cell_area: f64,
    /// Largest relative residual of the corrector equations.
    pub residual: f64,
    /// `|Ĉξ·ξ − (∫C₁ξ·ξ + ∫C₁ξ·sym∇N)/|cell||` over the basis, relative.
    pub energy_mismatch: f64,
}

fn unit_strain(p: (usize, usize)) -> [[f64; 2]; 2] {
    let mut e = [[0.0; 2]; 2];
    e[p.0][p.1] += 0.5;
    e[p.1][p.0] += 0.5;
    e
}

/// Union-find over the periodic representatives: the matrix region must be
/// one piece on the torus.
fn check_connected(mesh: &Mesh) -> Result<()> {
    let rep = mesh.representatives();
    let mut parent: Vec<usize> = (0..mesh.nodes.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in &mesh.triangles {
        let a = find(&mut parent, rep[t[0]]);
        for &v in &t[1..] {
            let b = find(&mut parent, rep[v]);
            parent[b] = a;
        }
    }
    let mut roots: Vec<usize> = mesh.triangles.iter().map(|t| find(&mut parent, rep[t[0]])).collect();
    roots.sort_unstable();
    roots.dedup();
    if roots.len() > 1 {
        return Err(Error::Disconnected(format!("matrix region splits into {} components", roots.len())));
    }
    Ok(())
}

/// Element strains `sym∇u` of a nodal field.
fn strains(mesh: &Mesh, u: &[f64]) -> Vec<[[f64; 2]; 2]> {
    mesh.triangles
        .iter()
        .map(|t| {
            let (g, _) = hat_gradients([mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]]);
            let mut e = [[0.0; 2]; 2];
            for a in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        e[i][j] += 0.5 * (u[2 * t[a] + i] * g[a][j] + u[2 * t[a] + j] * g[a][i]);
                    }
                }
            }
            e
        })
        .collect()
}

fn contract(c: &ElasticityTensor, x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]) -> f64 {
    let mut s = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for m in 0..2 {
                for n in 0..2 {
                    s += c.get(a, b, m, n) * x[m][n] * y[a][b];
                }
            }
        }
    }
    s
}

/// `f_(i,α) = −∫ C ξ : ∇(φ_i e_α)` on the free dofs.
fn strain_load(mesh: &Mesh, forms: &AssembledForms, c: &ElasticityTensor, xi: &[[f64; 2]; 2]) -> Vec<f64> {
    let mut f = vec![0.0; forms.ndof()];
    for t in &mesh.triangles {
        let (g, area) = hat_gradients([mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]]);
        for a in 0..3 {
            for alpha in 0..2 {
                let Some(d) = forms.dof(t[a], alpha) else { continue };
                let mut s = 0.0;
                for beta in 0..2 {
                    for m in 0..2 {
                        for n in 0..2 {
                            s += c.get(alpha, beta, m, n) * xi[m][n] * g[a][beta];
                        }
                    }
                }
                f[d] -= area * s;
            }
        }
    }
    f
}

/// The system with the dofs of one anchor node removed.
fn anchored(k: &CsrMatrix, anchor: &[usize]) -> (CsrMatrix, Vec<Option<usize>>) {
    let mut map = vec![None; k.n];
    let mut next = 0;
    for (i, m) in map.iter_mut().enumerate() {
        if !anchor.contains(&i) {
            *m = Some(next);
            next += 1;
        }
    }
    let mut t = Vec::with_capacity(k.nnz());
    for i in 0..k.n {
        let Some(ri) = map[i] else { continue };
        for p in k.indptr[i]..k.indptr[i + 1] {
            if let Some(cj) = map[k.indices[p]] {
                t.push((ri, cj, k.values[p]));
            }
        }
    }
    (CsrMatrix::from_triplets(next, t), map)
}

/// Solves the periodic cell problems `∫ C₁(ξ + sym∇N̂):sym∇φ = 0` on the
/// perforated cell (holes with traction-free boundaries) for the three unit
/// strains, and assembles `Ĉ^hom` normalized by the full cell area.
pub fn periodic_corrector(cell_cfg: &Configuration, c1: &ElasticityTensor, h: f64) -> Result<CellProblemResult> {
    if c1.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: c1.dim() });
    }
    c1.require_elliptic()?;
    let mesh = build_mesh(&Domain::PerforatedCell { cfg: cell_cfg, hole_tag: BoundaryTag::Interface }, h)?;
    check_connected(&mesh)?;
    let coeff = Coeff::Tensor(c1.clone());
    let forms = assemble_forms(&mesh, Physics::Elasticity, &Coefficients::uniform(coeff), Bc::Periodic)?;
    let anchor = [0, 1];
    let (ka, map) = anchored(&forms.k, &anchor);
    let fac = Factorization::cholesky(&ka)?;
    let matrix_area = mesh.area();
    let cell_area = (cell_cfg.window_side * cell_cfg.window_side) as f64;

    let mut correctors = Vec::with_capacity(3);
    let mut fields = Vec::with_capacity(3);
    let mut residual: f64 = 0.0;
    for &p in &STRAIN_PAIRS {
        let xi = unit_strain(p);
        let f = strain_load(&mesh, &forms, c1, &xi);
        let fa: Vec<f64> = (0..f.len()).filter(|i| map[*i].is_some()).map(|i| f[i]).collect();
        let (xa, _) = fac.solve_refined(&ka, &fa, 3);
        let mut x = vec![0.0; f.len()];
        for (i, m) in map.iter().enumerate() {
            if let Some(j) = m {
                x[i] = xa[*j];
            }
        }
        // zero mean over the perforated region
        let mean = forms.integral(&x);
        for i in 0..forms.n_free {
            for a in 0..2 {
                x[2 * i + a] -= mean[a] / matrix_area;
            }
        }
        // residual against every test function, anchor included
        let kx = forms.k.mul_vec(&x);
        let r: Vec<f64> = kx.iter().zip(&f).map(|(a, b)| a - b).collect();
        // without holes the load vanishes, so measure against the strain scale
        let scale = norm(&f).max(1e-12 * c1.norm() * cell_area.sqrt());
        residual = residual.max(norm(&r) / scale);
        let nodal = forms.expand(&x);
        fields.push((xi, strains(&mesh, &nodal)));
        correctors.push(nodal);
    }
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let mut table = [[0.0; 3]; 3];
    let mut energy_mismatch: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let (xi, ei) = &fields[i];
            let (xj, ej) = &fields[j];
            let mut s = 0.0;
            for t in 0..areas.len() {
                let mut a = *xi;
                let mut b = *xj;
                for p in 0..2 {
                    for q in 0..2 {
                        a[p][q] += ei[t][p][q];
                        b[p][q] += ej[t][p][q];
                    }
                }
                s += areas[t] * contract(c1, &a, &b);
            }
            table[i][j] = s / cell_area;
        }
        let (xi, ei) = &fields[i];
        let mut alt = 0.0;
        for t in 0..areas.len() {
            let mut a = *xi;
            for p in 0..2 {
                for q in 0..2 {
                    a[p][q] += ei[t][p][q];
                }
            }
            alt += areas[t] * contract(c1, &a, xi);
        }
        alt /= cell_area;
        energy_mismatch = energy_mismatch.max((alt - table[i][i]).abs() / table[i][i].abs().max(f64::MIN_POSITIVE));
    }
    let index = |a: usize, b: usize| match (a.min(b), a.max(b)) {
        (0, 0) => 0,
        (1, 1) => 1,
        _ => 2,
    };
    let chom = ElasticityTensor::from_fn(2, |a, b, m, n| table[index(a, b)][index(m, n)])?;
    Ok(CellProblemResult {
        correctors,
        chom,
        cell_cfg: cell_cfg.clone(),
        h,
        mesh,
        matrix_area,
        cell_area,
        residual,
        energy_mismatch,
    })
}

impl CellProblemResult {
    /// `‖sym∇N̂‖_{L²(cell)}` of each corrector.
    pub fn corrector_strain_norms(&self) -> Vec<f64> {
        self.correctors
            .iter()
            .map(|u| {
                strains(&self.mesh, u)
                    .iter()
                    .enumerate()
                    .map(|(t, e)| {
                        let s: f64 = e.iter().flatten().map(|x| x * x).sum();
                        self.mesh.triangle_area(t) * s
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Matrix-area fraction of the cell.
    pub fn matrix_fraction(&self) -> f64 {
        self.matrix_area / self.cell_area
    }
}

/// Sample mean and per-entry spread of periodized RVE estimates.
#[derive(Debug, Clone, Serialize)]
pub struct RveEstimate {
    #[serde(skip)]
    pub mean: ElasticityTensor,
    /// Standard deviation per stored component (zero for one sample).
    pub spread: Vec<f64>,
    #[serde(skip)]
    pub samples: Vec<ElasticityTensor>,
    /// Per-sample `(Ĉ₁₁₁₁, Ĉ₂₂₂₂, Ĉ₁₂₁₂)`.
    pub energies: Vec<[f64; 3]>,
}

/// Periodized RVE approximation of the stochastic homogenized tensor: the
/// mean over `samples` windows of `n_cells × n_cells` cells, each treated as
/// one period.
pub fn chom_rve(
    model: &InclusionModel,
    c1: &ElasticityTensor,
    n_cells: usize,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<RveEstimate> {
    if samples == 0 {
        return Err(Error::Parameter("at least one RVE sample is needed".into()));
    }
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let cfg = generate_configuration(model, n_cells, seed.wrapping_add(s as u64))?;
        out.push(periodic_corrector(&cfg, c1, h)?.chom);
    }
    let n = out[0].components().len();
    let mut mean = vec![0.0; n];
    for t in &out {
        for (m, c) in mean.iter_mut().zip(t.components()) {
            *m += c / samples as f64;
        }
    }
    let spread = (0..n)
        .map(|i| {
            if samples < 2 {
                return 0.0;
            }
            let v: f64 = out.iter().map(|t| (t.components()[i] - mean[i]).powi(2)).sum();
            (v / (samples - 1) as f64).sqrt()
        })
        .collect();
    let energies = out.iter().map(|t| [t.get(0, 0, 0, 0), t.get(1, 1, 1, 1), t.get(0, 1, 0, 1)]).collect();
    Ok(RveEstimate { mean: ElasticityTensor::from_components(2, mean)?, spread, samples: out, energies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Material;

    #[test]
    fn split_matrix_region_is_rejected() {
        let mesh = Mesh {
            nodes: vec![[0.0, 0.0], [0.2, 0.0], [0.0, 0.2], [0.6, 0.6], [0.8, 0.6], [0.6, 0.8]],
            triangles: vec![[0, 1, 2], [3, 4, 5]],
            materials: vec![Material::Matrix; 2],
            edges: vec![],
            periodic: vec![],
            period: Some(1.0),
            h: 0.2,
        };
        assert!(matches!(check_connected(&mesh), Err(Error::Disconnected(_))));
        let one = Mesh { triangles: vec![[0, 1, 2]], materials: vec![Material::Matrix], ..mesh };
        assert!(check_connected(&one).is_ok());
    }
}
