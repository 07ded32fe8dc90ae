use super::mesh::{BoundaryTag, Material, Mesh};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::linalg::CsrMatrix;
use crate::tensors::ElasticityTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Physics {
    Scalar,
    Elasticity,
}

impl Physics {
    pub fn components(self) -> usize {
        match self {
            Physics::Scalar => 1,
            Physics::Elasticity => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coeff {
    Scalar(f64),
    Tensor(ElasticityTensor),
}

/// Per-phase coefficients; `None` means the phase contributes no stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub matrix: Option<Coeff>,
    pub inclusion: Option<Coeff>,
}

impl Coefficients {
    pub fn uniform(c: Coeff) -> Self {
        Self { matrix: Some(c.clone()), inclusion: Some(c) }
    }

    fn for_material(&self, m: Material) -> Option<&Coeff> {
        match m {
            Material::Matrix => self.matrix.as_ref(),
            Material::Inclusion(_) => self.inclusion.as_ref(),
        }
    }
}

/// Boundary treatment. `Periodic` identifies periodic slaves with their
/// masters and, if the mesh also carries Dirichlet-tagged edges (perforated
/// cells with clamped holes), eliminates those too.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    Periodic,
    None,
}

/// Stiffness and mass on the free dofs.
///
/// Dof `i·ncomp + α` is component `α` of free node `i`; geometric nodes map
/// to free nodes through `node_dof` (`None` for eliminated Dirichlet nodes).
#[derive(Debug, Clone)]
pub struct AssembledForms {
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    pub ncomp: usize,
    pub node_dof: Vec<Option<usize>>,
    pub n_free: usize,
    /// Geometric nodes whose dofs were eliminated (Dirichlet) or merged
    /// into another node (periodic slaves).
    pub constrained: Vec<usize>,
    /// `∫ φ_i` for each free node's hat function.
    pub hat_integrals: Vec<f64>,
}

impl AssembledForms {
    pub fn ndof(&self) -> usize {
        self.n_free * self.ncomp
    }

    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.node_dof[node].map(|i| i * self.ncomp + comp)
    }

    /// Load vector of the constant field `e`: `f_i = ∫ e·φ_i`.
    pub fn constant_load(&self, e: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.ndof()];
        for (i, &w) in self.hat_integrals.iter().enumerate() {
            for (a, &ea) in e.iter().enumerate().take(self.ncomp) {
                f[i * self.ncomp + a] = w * ea;
            }
        }
        f
    }

    /// `∫ u` per component (exact for P1).
    pub fn integral(&self, u: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.ncomp];
        for (i, &w) in self.hat_integrals.iter().enumerate() {
            for (a, sa) in s.iter_mut().enumerate() {
                *sa += w * u[i * self.ncomp + a];
            }
        }
        s
    }

    /// Nodal interpolant of `f` on the free dofs.
    pub fn interpolate(&self, mesh: &Mesh, f: impl Fn(Point) -> Vec<f64>) -> Vec<f64> {
        let mut u = vec![0.0; self.ndof()];
        let mut done = vec![false; self.n_free];
        for (node, d) in self.node_dof.iter().enumerate() {
            if let Some(i) = *d {
                if !done[i] {
                    done[i] = true;
                    let v = f(mesh.nodes[node]);
                    u[i * self.ncomp..(i + 1) * self.ncomp].copy_from_slice(&v[..self.ncomp]);
                }
            }
        }
        u
    }

    /// Values at every geometric node (zero on eliminated Dirichlet nodes).
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.node_dof.len() * self.ncomp];
        for (node, d) in self.node_dof.iter().enumerate() {
            if let Some(i) = *d {
                out[node * self.ncomp..(node + 1) * self.ncomp].copy_from_slice(&u[i * self.ncomp..(i + 1) * self.ncomp]);
            }
        }
        out
    }
}

/// Gradients of the three barycentric hat functions and the area.
pub(crate) fn hat_gradients(p: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let s = 1.0 / (2.0 * area);
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (j, k) = ((a + 1) % 3, (a + 2) % 3);
        g[a] = [(p[j][1] - p[k][1]) * s, (p[k][0] - p[j][0]) * s];
    }
    (g, area)
}

fn check_coeff(c: &Coeff, physics: Physics) -> Result<()> {
    match (c, physics) {
        (Coeff::Scalar(v), Physics::Scalar) => {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::NotElliptic(*v));
            }
        }
        (Coeff::Tensor(t), Physics::Elasticity) => {
            if t.dim() != 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: t.dim() });
            }
            t.require_elliptic()?;
        }
        _ => return Err(Error::Assembly("coefficient kind does not match the physics".into())),
    }
    Ok(())
}

/// Assembles P1 stiffness `∫ C sym∇u·sym∇v` (or `∫ c ∇u·∇v`) and consistent
/// mass `∫ u·v` on the free dofs selected by `bc`.
pub fn assemble_forms(mesh: &Mesh, physics: Physics, coeffs: &Coefficients, bc: Bc) -> Result<AssembledForms> {
    for c in [&coeffs.matrix, &coeffs.inclusion].into_iter().flatten() {
        check_coeff(c, physics)?;
    }
    let nn = mesh.nodes.len();
    let rep = match bc {
        Bc::Periodic => {
            if mesh.periodic.is_empty() && mesh.edges_tagged(BoundaryTag::PeriodicSlave).next().is_some() {
                return Err(Error::Assembly("periodic edges present but no slave/master pairs".into()));
            }
            let slaves = mesh.nodes_tagged(BoundaryTag::PeriodicSlave);
            let rep = mesh.representatives();
            if let Some(s) = slaves.iter().find(|&&s| rep[s] == s) {
                return Err(Error::Assembly(format!("unpaired periodic slave node {s}")));
            }
            rep
        }
        _ => (0..nn).collect(),
    };
    let mut clamped = vec![false; nn];
    if matches!(bc, Bc::Dirichlet | Bc::Periodic) {
        for i in mesh.nodes_tagged(BoundaryTag::Dirichlet) {
            clamped[rep[i]] = true;
        }
    }
    let mut node_dof = vec![None; nn];
    let mut n_free = 0;
    let mut constrained = Vec::new();
    for i in 0..nn {
        if rep[i] == i && !clamped[i] {
            node_dof[i] = Some(n_free);
            n_free += 1;
        }
    }
    for i in 0..nn {
        if rep[i] != i {
            node_dof[i] = node_dof[rep[i]];
        }
        if rep[i] != i || clamped[rep[i]] {
            constrained.push(i);
        }
    }

    // node adjacency over free nodes
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_free];
    for t in &mesh.triangles {
        let f: Vec<usize> = t.iter().filter_map(|&i| node_dof[i]).collect();
        for &a in &f {
            adj[a].extend_from_slice(&f);
        }
    }
    let nc = physics.components();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n_free * nc);
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
        let cols: Vec<usize> = a.iter().flat_map(|&j| (0..nc).map(move |c| j * nc + c)).collect();
        for _ in 0..nc {
            rows.push(cols.clone());
        }
    }
    drop(adj);
    let mut k = CsrMatrix::from_pattern(&rows);
    drop(rows);
    let mut m = k.clone();
    let mut hat_integrals = vec![0.0; n_free];

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let (g, area) = hat_gradients(p);
        if !(area > 0.0) {
            return Err(Error::Assembly(format!("triangle {t} has non-positive area")));
        }
        let dofs = tri.map(|i| node_dof[i]);
        for a in 0..3 {
            if let Some(ia) = dofs[a] {
                hat_integrals[ia] += area / 3.0;
            }
        }
        let coeff = coeffs.for_material(mesh.materials[t]);
        for a in 0..3 {
            let Some(ia) = dofs[a] else { continue };
            for b in 0..3 {
                let Some(ib) = dofs[b] else { continue };
                let mass = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                for c in 0..nc {
                    m.add(ia * nc + c, ib * nc + c, mass);
                }
                match coeff {
                    None => {}
                    Some(Coeff::Scalar(c)) => {
                        let v = area * c * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                        k.add(ia, ib, v);
                    }
                    Some(Coeff::Tensor(ct)) => {
                        for al in 0..2 {
                            for mu in 0..2 {
                                let mut v = 0.0;
                                for be in 0..2 {
                                    for nu in 0..2 {
                                        v += ct.get(al, be, mu, nu) * g[a][be] * g[b][nu];
                                    }
                                }
                                k.add(ia * 2 + al, ib * 2 + mu, area * v);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(AssembledForms { k, m, ncomp: nc, node_dof, n_free, constrained, hat_integrals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesher::{build_mesh, Domain};
    use crate::geometry::{Configuration, InclusionShape};
    use crate::tensors::{make_isotropic, IsotropicModuli};

    fn iso(c1: f64, c2: f64) -> ElasticityTensor {
        make_isotropic(IsotropicModuli::new(c1, c2).unwrap(), 2).unwrap()
    }

    #[test]
    fn forms_are_symmetric() {
        let shape = InclusionShape::disk("d", 0.4, 20).unwrap();
        let mesh = build_mesh(&Domain::ShapeInterior(&shape), 0.05).unwrap();
        let f = assemble_forms(&mesh, Physics::Elasticity, &Coefficients::uniform(Coeff::Tensor(iso(1.3, 0.7))), Bc::Dirichlet)
            .unwrap();
        assert!(f.k.asymmetry() <= 1e-12 * f.k.frobenius());
        assert!(f.m.asymmetry() <= 1e-12 * f.m.frobenius());
        let total: f64 = f.hat_integrals.iter().sum();
        assert!(total < shape.area());
    }

    #[test]
    fn rigid_motions_in_kernel() {
        let shape = InclusionShape::new("p", vec![[0.0, 0.0], [0.4, 0.05], [0.3, 0.35], [0.05, 0.3]]).unwrap();
        let mesh = build_mesh(&Domain::ShapeInterior(&shape), 0.04).unwrap();
        let f = assemble_forms(&mesh, Physics::Elasticity, &Coefficients::uniform(Coeff::Tensor(iso(2.0, 1.0))), Bc::None)
            .unwrap();
        for motion in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, -0.2, 1.0]] {
            let u = f.interpolate(&mesh, |p| vec![motion[0] - motion[2] * p[1], motion[1] + motion[2] * p[0]]);
            let ku = f.k.mul_vec(&u);
            let rel = crate::linalg::norm(&ku) / (f.k.frobenius() * crate::linalg::norm(&u));
            assert!(rel < 1e-10, "{rel}");
        }
    }

    #[test]
    fn linear_field_energy_on_torus() {
        let cfg = Configuration::empty(1);
        let mesh = build_mesh(&Domain::TwoPhaseTorus { cfg: &cfg, epsilon: 1.0 }, 0.2).unwrap();
        let (c1, c2) = (1.5, 0.8);
        // no bc: the linear field is not periodic
        let f = assemble_forms(&mesh, Physics::Elasticity, &Coefficients::uniform(Coeff::Tensor(iso(c1, c2))), Bc::None)
            .unwrap();
        let xi = [[0.3, -0.7], [0.2, 0.5]];
        let u = f.interpolate(&mesh, |p| vec![xi[0][0] * p[0] + xi[0][1] * p[1], xi[1][0] * p[0] + xi[1][1] * p[1]]);
        let e = f.k.form(&u, &u);
        let tr = xi[0][0] + xi[1][1];
        let s01 = 0.5 * (xi[0][1] + xi[1][0]);
        let sym2 = xi[0][0].powi(2) + xi[1][1].powi(2) + 2.0 * s01 * s01;
        let exact = c1 * tr * tr + c2 * sym2;
        assert!((e - exact).abs() < 1e-10 * exact, "{e} vs {exact}");
    }

    #[test]
    fn rejects_bad_coefficients() {
        let sq = InclusionShape::square("s", 1.0).unwrap();
        let mesh = build_mesh(&Domain::ShapeInterior(&sq), 0.25).unwrap();
        let bad = Coefficients::uniform(Coeff::Scalar(-1.0));
        assert!(assemble_forms(&mesh, Physics::Scalar, &bad, Bc::Dirichlet).is_err());
        let mixed = Coefficients::uniform(Coeff::Scalar(1.0));
        assert!(assemble_forms(&mesh, Physics::Elasticity, &mixed, Bc::Dirichlet).is_err());
    }

    #[test]
    fn periodic_identification() {
        let cfg = Configuration::empty(2);
        let mesh = build_mesh(&Domain::TwoPhaseTorus { cfg: &cfg, epsilon: 0.5 }, 0.25).unwrap();
        let f = assemble_forms(&mesh, Physics::Scalar, &Coefficients::uniform(Coeff::Scalar(1.0)), Bc::Periodic).unwrap();
        // constants are in the kernel and the mass integrates to the torus area
        let one = vec![1.0; f.ndof()];
        assert!(crate::linalg::norm(&f.k.mul_vec(&one)) < 1e-12);
        assert!((f.m.form(&one, &one) - 1.0).abs() < 1e-12);
        assert_eq!(f.n_free, mesh.nodes.len() - mesh.periodic.len());
    }
}
