use std::f64::consts::PI;

use hcband_core::fem::{BoundaryTag, Coeff, Material, Mesh, TaggedEdge};
use hcband_core::geometry::InclusionShape;
use hcband_core::spectral::{
    dirichlet_spectrum, solve_b_lambda, CacheManifest, EigOptions, EigenCache, InclusionProblem,
};
use hcband_core::tensors::{make_isotropic, IsotropicModuli};

fn unit() -> Coeff {
    Coeff::Scalar(1.0)
}

fn iso(c1: f64, c2: f64) -> Coeff {
    Coeff::Tensor(make_isotropic(IsotropicModuli::new(c1, c2).unwrap(), 2).unwrap())
}

fn sine_series_b0() -> f64 {
    let mut s = 0.0;
    for m in (1..2000).step_by(2) {
        for n in (1..2000).step_by(2) {
            let (m, n) = (m as f64, n as f64);
            s += 64.0 / (PI.powi(6) * m * m * n * n * (m * m + n * n));
        }
    }
    s
}

/// Criss-cross mesh of `[-1/2, 1/2]²` (each grid square split by both
/// diagonals), invariant under the full square symmetry group.
fn criss_cross(n: usize) -> Mesh {
    let s = 1.0 / n as f64;
    let mut nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * s - 0.5, j as f64 * s - 0.5]);
        }
    }
    let corner = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let c = nodes.len();
            nodes.push([(i as f64 + 0.5) * s - 0.5, (j as f64 + 0.5) * s - 0.5]);
            let (a, b, d, e) = (corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1));
            triangles.extend([[a, b, c], [b, d, c], [d, e, c], [e, a, c]]);
        }
    }
    let mut edges = Vec::new();
    for k in 0..n {
        for (u, v) in [
            (corner(k, 0), corner(k + 1, 0)),
            (corner(n, k), corner(n, k + 1)),
            (corner(k, n), corner(k + 1, n)),
            (corner(0, k), corner(0, k + 1)),
        ] {
            edges.push(TaggedEdge { nodes: [u, v], tag: BoundaryTag::Dirichlet });
        }
    }
    let materials = vec![Material::Inclusion(0); triangles.len()];
    let mesh = Mesh { nodes, triangles, materials, edges, periodic: vec![], period: None, h: s };
    mesh.validate().unwrap();
    mesh
}

#[test]
fn unit_square_scalar_eigenvalues() {
    let sq = InclusionShape::square("sq", 1.0).unwrap();
    let e = dirichlet_spectrum(&sq, &unit(), 1.0 / 64.0, 3, None).unwrap();
    for (nu, exact) in e.values.iter().zip([2.0, 5.0, 5.0]) {
        let exact = exact * PI * PI;
        assert!((nu - exact).abs() < 0.02 * exact, "{nu} vs {exact}");
        // conforming elements approximate from above
        assert!(*nu >= exact);
    }
    assert!(e.residuals.iter().all(|&r| r <= 1e-9));
}

#[test]
fn eigenvectors_are_mass_orthonormal() {
    let shape = InclusionShape::new("p", vec![[0.0, 0.0], [0.35, 0.02], [0.3, 0.3], [0.02, 0.25]]).unwrap();
    let p = InclusionProblem::new(&shape, &iso(1.0, 0.6), 0.03).unwrap();
    let e = p.eigen(8, &EigOptions::default()).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let g = p.forms.m.form(&e.vectors[i], &e.vectors[j]);
            assert!((g - if i == j { 1.0 } else { 0.0 }).abs() <= 1e-8);
        }
        let kv = p.forms.k.mul_vec(&e.vectors[i]);
        let mv = p.forms.m.mul_vec(&e.vectors[i]);
        let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - e.values[i] * b).collect();
        let nmv: f64 = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nr: f64 = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(nr <= 1e-8 * e.values[i] * nmv);
    }
    assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn disk_first_eigenvalue() {
    let disk = InclusionShape::disk("disk", 1.0, 64).unwrap();
    let e = dirichlet_spectrum(&disk, &unit(), 1.0 / 16.0, 1, None).unwrap();
    let j01 = 2.404_825_557_695_773_f64;
    assert!((e.values[0] - j01 * j01).abs() < 0.03 * j01 * j01, "{}", e.values[0]);
}

#[test]
fn elasticity_self_convergence() {
    let sq = InclusionShape::square("sq", 1.0).unwrap();
    let levels: Vec<Vec<f64>> =
        [16.0, 32.0, 64.0].iter().map(|n| dirichlet_spectrum(&sq, &iso(1.0, 1.0), 1.0 / n, 4, None).unwrap().values).collect();
    for k in 0..4 {
        let r1 = (4.0 * levels[1][k] - levels[0][k]) / 3.0;
        let r2 = (4.0 * levels[2][k] - levels[1][k]) / 3.0;
        assert!((r1 - r2).abs() < 0.005 * r2, "mode {k}: {r1} vs {r2}");
        // monotone decrease under refinement
        assert!(levels[0][k] >= levels[1][k] && levels[1][k] >= levels[2][k]);
    }
}

#[test]
fn dilation_of_square_spectrum() {
    for s in [0.4, 0.7] {
        let sq = InclusionShape::square("sq", s).unwrap();
        let e = dirichlet_spectrum(&sq, &unit(), s / 40.0, 1, None).unwrap();
        let exact = 2.0 * PI * PI / (s * s);
        assert!((e.values[0] - exact).abs() < 0.02 * exact);
    }
}

#[test]
fn odd_modes_have_zero_moment() {
    let sq = InclusionShape::square("sq", 1.0).unwrap();
    let p = InclusionProblem::from_mesh(sq, &unit(), 1.0 / 32.0, criss_cross(32)).unwrap();
    let e = p.eigen(3, &EigOptions::default()).unwrap();
    assert!((e.values[1] - e.values[2]).abs() < 1e-9 * e.values[1]);
    for n in [1, 2] {
        assert!(e.moments[n][0].abs() < 1e-6, "{:?}", e.moments[n]);
        assert!(!e.is_significant(n));
    }
    assert!(e.is_significant(0));
}

#[test]
fn b0_matches_sine_series() {
    let sq = InclusionShape::square("sq", 1.0).unwrap();
    let r = solve_b_lambda(&sq, &unit(), 0.0, 1.0 / 64.0).unwrap();
    let s = sine_series_b0();
    assert!((r.b[(0, 0)] - s).abs() < 1e-3 * s, "{} vs {s}", r.b[(0, 0)]);
}

#[test]
fn elastic_b0_is_spd_and_symmetric() {
    let shape = InclusionShape::new("p", vec![[0.0, 0.0], [0.35, 0.02], [0.3, 0.3], [0.02, 0.25]]).unwrap();
    let r = solve_b_lambda(&shape, &iso(1.0, 0.5), 0.0, 0.02).unwrap();
    assert!((r.b[(0, 1)] - r.b[(1, 0)]).abs() <= 1e-9 * r.b.norm());
    let ev = r.b.clone().symmetric_eigen().eigenvalues;
    assert!(ev.iter().all(|&x| x > 0.0));
    assert!(r.residual <= 1e-9);
}

#[test]
fn resolvent_matches_tail_corrected_expansion() {
    let shape = InclusionShape::new("p", vec![[0.0, 0.0], [0.35, 0.02], [0.3, 0.3], [0.02, 0.25]]).unwrap();
    let p = InclusionProblem::new(&shape, &iso(1.0, 0.5), 0.02).unwrap();
    let e = p.eigen(60, &EigOptions::default()).unwrap();
    let b0 = p.resolvent(0.0, Some(&e), 0.0).unwrap().b;
    let nu1 = e.first();
    for f in [0.3, 0.7, 1.5, 2.2] {
        let lambda = f * nu1;
        let Ok(r) = p.resolvent(lambda, Some(&e), 1e-3 * nu1) else { continue };
        let oracle = e.expansion_with_tail(&b0, lambda);
        // relative to the response scale B(0): B itself crosses zero between poles
        let scale = r.b.norm().max(b0.norm());
        assert!((&r.b - &oracle).norm() <= 1e-3 * scale, "lambda = {lambda}");
        assert!((r.b[(0, 1)] - r.b[(1, 0)]).abs() <= 1e-9 * r.b.norm());
    }
}

#[test]
fn blow_up_towards_first_pole() {
    let sq = InclusionShape::square("sq", 1.0).unwrap();
    let p = InclusionProblem::new(&sq, &unit(), 1.0 / 24.0).unwrap();
    let e = p.eigen(4, &EigOptions::default()).unwrap();
    let nu1 = e.first();
    let m1 = e.moments[0][0];
    for d in [1e-2, 1e-3] {
        let r = p.resolvent(nu1 - d * nu1, Some(&e), 1e-4 * nu1).unwrap();
        let c = r.b[(0, 0)] * d * nu1;
        assert!((c - m1 * m1).abs() < 0.05 * m1 * m1, "{c} vs {}", m1 * m1);
    }
    // inside the guard the solve is refused
    assert!(p.resolvent(nu1 * (1.0 + 1e-5), Some(&e), 1e-3 * nu1).is_err());
}

#[test]
fn norm_of_b_times_pole_distance_is_bounded() {
    let sq = InclusionShape::square("sq", 0.4).unwrap();
    let p = InclusionProblem::new(&sq, &unit(), 0.02).unwrap();
    let e = p.eigen(10, &EigOptions::default()).unwrap();
    let nu1 = e.first();
    let mut prods = Vec::new();
    for i in 0..60 {
        let lambda = 3.0 * nu1 * i as f64 / 60.0 + 0.013 * nu1;
        let Ok(r) = p.resolvent(lambda, Some(&e), 1e-3 * nu1) else { continue };
        let bn = p.forms.m.form(&r.columns[0], &r.columns[0]).sqrt();
        prods.push(bn * r.pole_distance);
    }
    let mut sorted = prods.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    assert!(prods.iter().all(|&x| x <= 20.0 * median));
}

#[test]
fn persistent_cache_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let shape = InclusionShape::disk("d", 0.3, 16).unwrap();
    let a = {
        let cache = EigenCache::persistent(dir.path()).unwrap();
        dirichlet_spectrum(&shape, &unit(), 0.05, 4, Some(&cache)).unwrap()
    };
    let cache = EigenCache::persistent(dir.path()).unwrap();
    let manifest = cache.manifest().unwrap();
    assert_eq!(manifest.entries.len(), 1);
    let b = dirichlet_spectrum(&shape, &unit(), 0.05, 4, Some(&cache)).unwrap();
    assert_eq!(a, b);
    // a different mesh size is a different key
    let c = dirichlet_spectrum(&shape, &unit(), 0.04, 4, Some(&cache)).unwrap();
    assert_ne!(c.shape_key, a.shape_key);
    assert_eq!(cache.manifest().unwrap().entries.len(), 2);
    let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert_eq!(CacheManifest::from_json_str(&text).unwrap(), cache.manifest().unwrap());
    assert!(CacheManifest::from_json_str("{\"schema\":\"x\",\"entries\":{}}").is_err());
}
