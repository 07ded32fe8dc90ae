//! Constant fourth-order elasticity tensors.
//!
//! Components are stored as a flat `d⁴` array in row-major `αβμν` order.
//! Every constructor enforces the major symmetry `C_{αβμν} = C_{μναβ}` and the
//! minor symmetry `C_{αβμν} = C_{αβνμ}` (hence also `C_{αβμν} = C_{βαμν}`) on the
//! stored array, so reads are symmetric bit-for-bit.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_SCHEMA: &str = "hcband.tensor/1";
pub const INDEX_ORDER: &str = "abmn-row-major";

/// Coefficients of the isotropic law `Cξ = c1 tr(ξ) I + c2 sym(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsotropicModuli {
    pub c1: f64,
    pub c2: f64,
}

impl IsotropicModuli {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        let m = Self { c1, c2 };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if !(self.c1.is_finite() && self.c2.is_finite()) {
            return Err(Error::Moduli("moduli must be finite".into()));
        }
        if self.c2 <= 0.0 {
            return Err(Error::Moduli(format!("c2 must be positive, got {}", self.c2)));
        }
        if self.c1 < 0.0 {
            return Err(Error::Moduli(format!("c1 must be nonnegative, got {}", self.c1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityTensor {
    dim: usize,
    comp: Vec<f64>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::Dimension(d))
    }
}

impl ElasticityTensor {
    #[inline]
    fn idx(d: usize, a: usize, b: usize, m: usize, n: usize) -> usize {
        ((a * d + b) * d + m) * d + n
    }

    /// Builds a tensor from an arbitrary component function, projecting onto the
    /// symmetric subspace by averaging over the eight index permutations of the
    /// symmetry group.
    pub fn from_fn(d: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        check_dim(d)?;
        let mut comp = vec![0.0; d * d * d * d];
        for a in 0..d {
            for b in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        comp[Self::idx(d, a, b, m, n)] = f(a, b, m, n);
                    }
                }
            }
        }
        let mut t = Self { dim: d, comp };
        t.symmetrize();
        Ok(t)
    }

    /// Builds a tensor from stored components; the input must already satisfy
    /// both symmetries to a relative tolerance of 1e-12.
    pub fn from_components(d: usize, comp: Vec<f64>) -> Result<Self> {
        check_dim(d)?;
        if comp.len() != d * d * d * d {
            return Err(Error::DimensionMismatch { expected: d * d * d * d, got: comp.len() });
        }
        if comp.iter().any(|c| !c.is_finite()) {
            return Err(Error::parse("tensor", "non-finite component"));
        }
        let scale = comp.iter().fold(0.0f64, |s, c| s.max(c.abs())).max(f64::MIN_POSITIVE);
        let tol = 1e-12 * scale;
        for a in 0..d {
            for b in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        let c = comp[Self::idx(d, a, b, m, n)];
                        if (c - comp[Self::idx(d, m, n, a, b)]).abs() > tol {
                            return Err(Error::Symmetry { which: "major", index: [a, b, m, n] });
                        }
                        if (c - comp[Self::idx(d, a, b, n, m)]).abs() > tol {
                            return Err(Error::Symmetry { which: "minor", index: [a, b, m, n] });
                        }
                    }
                }
            }
        }
        let mut t = Self { dim: d, comp };
        t.symmetrize();
        Ok(t)
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        let mut out = vec![0.0; self.comp.len()];
        for a in 0..d {
            for b in 0..d {
                for m in 0..d {
                    for n in 0..d {
                        // Sum in a fixed order over the orbit so that every member of
                        // the orbit receives the identical floating-point value.
                        let mut orbit = [
                            (a, b, m, n),
                            (b, a, m, n),
                            (a, b, n, m),
                            (b, a, n, m),
                            (m, n, a, b),
                            (n, m, a, b),
                            (m, n, b, a),
                            (n, m, b, a),
                        ];
                        orbit.sort_unstable();
                        let s: f64 = orbit
                            .iter()
                            .map(|&(p, q, r, s)| self.comp[Self::idx(d, p, q, r, s)])
                            .sum();
                        out[Self::idx(d, a, b, m, n)] = s / 8.0;
                    }
                }
            }
        }
        self.comp = out;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, m: usize, n: usize) -> f64 {
        self.comp[Self::idx(self.dim, a, b, m, n)]
    }

    pub fn components(&self) -> &[f64] {
        &self.comp
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { dim: self.dim, comp: self.comp.iter().map(|c| c * s).collect() }
    }

    /// Contraction `(Cξ)_{αβ} = C_{αβμν} ξ_{μν}`.
    pub fn apply(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim;
        if xi.nrows() != d || xi.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: xi.nrows().max(xi.ncols()) });
        }
        Ok(DMatrix::from_fn(d, d, |a, b| {
            let mut s = 0.0;
            for m in 0..d {
                for n in 0..d {
                    s += self.get(a, b, m, n) * xi[(m, n)];
                }
            }
            s
        }))
    }

    /// `Cξ : η`.
    pub fn energy(&self, xi: &DMatrix<f64>, eta: &DMatrix<f64>) -> Result<f64> {
        Ok(self.apply(xi)?.component_mul(eta).sum())
    }

    /// Orthonormal basis of the symmetric `d×d` matrices (Frobenius inner product):
    /// diagonal units first, then `(e_i⊗e_j + e_j⊗e_i)/√2` for `i < j`.
    pub fn symmetric_basis(d: usize) -> Vec<DMatrix<f64>> {
        let mut basis = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            let mut e = DMatrix::zeros(d, d);
            e[(i, i)] = 1.0;
            basis.push(e);
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..d {
            for j in (i + 1)..d {
                let mut e = DMatrix::zeros(d, d);
                e[(i, j)] = s;
                e[(j, i)] = s;
                basis.push(e);
            }
        }
        basis
    }

    /// Representation on the symmetric subspace in the orthonormal basis above
    /// (a Mandel-scaled Voigt matrix).
    pub fn voigt(&self) -> DMatrix<f64> {
        let basis = Self::symmetric_basis(self.dim);
        let n = basis.len();
        let images: Vec<_> = basis.iter().map(|e| self.apply(e).expect("basis shape")).collect();
        let mut v = DMatrix::from_fn(n, n, |i, j| images[j].component_mul(&basis[i]).sum());
        // exact symmetry from major symmetry, up to summation order
        let vt = v.transpose();
        v = (&v + vt) * 0.5;
        v
    }

    /// Minimum of `Cξ·ξ` over unit-Frobenius symmetric `ξ`. A nonpositive value
    /// signals a non-elliptic tensor.
    pub fn ellipticity_constant(&self) -> f64 {
        SymmetricEigen::new(self.voigt()).eigenvalues.min()
    }

    pub fn require_elliptic(&self) -> Result<()> {
        let c = self.ellipticity_constant();
        if c > 0.0 {
            Ok(())
        } else {
            Err(Error::NotElliptic(c))
        }
    }

    /// Pushes the tensor forward under an orthogonal map `q`:
    /// `C'_{ijkl} = q_{ia} q_{jb} q_{kc} q_{ld} C_{abcd}`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        let d = self.dim;
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: q.nrows() });
        }
        Self::from_fn(d, |i, j, k, l| {
            let mut s = 0.0;
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        for e in 0..d {
                            s += q[(i, a)] * q[(j, b)] * q[(k, c)] * q[(l, e)] * self.get(a, b, c, e);
                        }
                    }
                }
            }
            s
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.comp.iter().zip(&other.comp).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn norm(&self) -> f64 {
        self.comp.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// The `d×d` acoustic matrix `(k·C·k)_{αβ} = C_{αμνβ} k_μ k_ν`.
    pub fn acoustic(&self, k: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |a, b| {
            let mut s = 0.0;
            for m in 0..d {
                for n in 0..d {
                    s += self.get(a, m, n, b) * k[m] * k[n];
                }
            }
            s
        })
    }

    pub fn to_json(&self) -> TensorFile {
        TensorFile {
            schema: TENSOR_SCHEMA.to_string(),
            dim: self.dim,
            index_order: INDEX_ORDER.to_string(),
            components: self.comp.clone(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: TensorFile = serde_json::from_str(s).map_err(|e| Error::parse("tensor", e))?;
        f.into_tensor()
    }
}

/// `Cξ = c1 tr(ξ) I + c2 sym(ξ)`, i.e.
/// `C_{αβμν} = c1 δ_{αβ}δ_{μν} + (c2/2)(δ_{αμ}δ_{βν} + δ_{αν}δ_{βμ})`.
pub fn make_isotropic(m: IsotropicModuli, d: usize) -> Result<ElasticityTensor> {
    check_dim(d)?;
    m.check()?;
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let t = ElasticityTensor::from_fn(d, |a, b, mu, nu| {
        m.c1 * delta(a, b) * delta(mu, nu)
            + 0.5 * m.c2 * (delta(a, mu) * delta(b, nu) + delta(a, nu) * delta(b, mu))
    })?;
    t.require_elliptic()?;
    Ok(t)
}

/// On-disk tensor record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub schema: String,
    pub dim: usize,
    pub index_order: String,
    pub components: Vec<f64>,
}

impl TensorFile {
    pub fn into_tensor(self) -> Result<ElasticityTensor> {
        if self.schema != TENSOR_SCHEMA {
            return Err(Error::parse("tensor", format!("unknown schema {:?}", self.schema)));
        }
        if self.index_order != INDEX_ORDER {
            return Err(Error::parse("tensor", format!("unsupported index order {:?}", self.index_order)));
        }
        ElasticityTensor::from_components(self.dim, self.components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iso(c1: f64, c2: f64, d: usize) -> ElasticityTensor {
        make_isotropic(IsotropicModuli::new(c1, c2).unwrap(), d).unwrap()
    }

    #[test]
    fn isotropic_identity_images() {
        let c = iso(1.0, 2.0, 2);
        let out = c.apply(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(out, DMatrix::identity(2, 2) * 4.0);

        let c = iso(1.0, 1.0, 3);
        let out = c.apply(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(out, DMatrix::identity(3, 3) * 4.0);
    }

    #[test]
    fn isotropic_kills_antisymmetric() {
        let c = iso(0.0, 1.0, 2);
        let xi = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(c.apply(&xi).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn apply_examples() {
        let c = iso(1.0, 2.0, 2);
        assert_eq!(c.apply(&DMatrix::zeros(2, 2)).unwrap(), DMatrix::zeros(2, 2));
        let out = c.apply(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
        assert!(matches!(c.apply(&DMatrix::zeros(3, 3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ellipticity_examples() {
        assert!((iso(0.0, 1.0, 2).ellipticity_constant() - 1.0).abs() < 1e-14);
        // Voigt eigenvalues {1, 1, 1 + 2 c1}
        assert!((iso(1.0, 1.0, 2).ellipticity_constant() - 1.0).abs() < 1e-14);
        let broken = ElasticityTensor::from_fn(2, |a, b, m, n| {
            if a == 0 && b == 0 && m == 0 && n == 0 {
                -1.0
            } else if (a, b) == (m, n) || (a, b) == (n, m) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        assert!(broken.ellipticity_constant() < 0.0);
        assert!(broken.require_elliptic().is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(make_isotropic(IsotropicModuli { c1: 1.0, c2: 1.0 }, 4), Err(Error::Dimension(4))));
        assert!(IsotropicModuli::new(1.0, 0.0).is_err());
        assert!(IsotropicModuli::new(-0.5, 1.0).is_err());
        let mut comp = iso(1.0, 1.0, 2).components().to_vec();
        comp[1] += 0.5;
        assert!(matches!(ElasticityTensor::from_components(2, comp), Err(Error::Symmetry { .. })));
    }

    #[test]
    fn json_round_trip() {
        let c = iso(0.7, 1.3, 2);
        let s = serde_json::to_string(&c.to_json()).unwrap();
        assert_eq!(ElasticityTensor::from_json_str(&s).unwrap(), c);
        assert!(ElasticityTensor::from_json_str("{\"schema\":\"x\"}").is_err());
    }

    #[test]
    fn rotation_invariance_of_isotropic() {
        let c = iso(0.4, 1.7, 2);
        let (s, co) = 0.3f64.sin_cos();
        let q = DMatrix::from_row_slice(2, 2, &[co, -s, s, co]);
        assert!(c.rotated(&q).unwrap().max_abs_diff(&c) < 1e-14);
    }

    fn arb_tensor() -> impl Strategy<Value = ElasticityTensor> {
        prop::collection::vec(-2.0f64..2.0, 16)
            .prop_map(|v| ElasticityTensor::from_fn(2, |a, b, m, n| v[((a * 2 + b) * 2 + m) * 2 + n]).unwrap())
    }

    fn arb_mat() -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-3.0f64..3.0, 4).prop_map(|v| DMatrix::from_row_slice(2, 2, &v))
    }

    proptest! {
        #[test]
        fn stored_components_are_exactly_symmetric(c in arb_tensor()) {
            for a in 0..2 { for b in 0..2 { for m in 0..2 { for n in 0..2 {
                prop_assert_eq!(c.get(a, b, m, n).to_bits(), c.get(m, n, a, b).to_bits());
                prop_assert_eq!(c.get(a, b, m, n).to_bits(), c.get(a, b, n, m).to_bits());
            }}}}
        }

        #[test]
        fn apply_ignores_antisymmetric_part(c in arb_tensor(), xi in arb_mat()) {
            let sym = (&xi + xi.transpose()) * 0.5;
            let d = c.apply(&xi).unwrap() - c.apply(&sym).unwrap();
            prop_assert!(d.norm() < 1e-12);
        }

        #[test]
        fn apply_is_linear_and_self_adjoint(c in arb_tensor(), xi in arb_mat(), eta in arb_mat(), s in -2.0f64..2.0) {
            let lin = c.apply(&(&xi * s + &eta)).unwrap() - (c.apply(&xi).unwrap() * s + c.apply(&eta).unwrap());
            prop_assert!(lin.norm() < 1e-11);
            let xs = (&xi + xi.transpose()) * 0.5;
            let es = (&eta + eta.transpose()) * 0.5;
            let l = c.energy(&xs, &es).unwrap();
            let r = c.energy(&es, &xs).unwrap();
            prop_assert!((l - r).abs() < 1e-11 * (1.0 + l.abs()));
        }

        #[test]
        fn isotropic_ellipticity_at_least_c2(c1 in 0.0f64..5.0, c2 in 0.01f64..5.0, d in 2usize..4) {
            let t = make_isotropic(IsotropicModuli { c1, c2 }, d).unwrap();
            prop_assert!(t.ellipticity_constant() >= c2 * (1.0 - 1e-12));
        }
    }
}
