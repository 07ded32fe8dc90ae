use hcband_core::geometry::{generate_configuration, InclusionModel, InclusionShape, ScalingLaw};
use hcband_core::homog::{chom_rve, periodic_corrector};
use hcband_core::tensors::{make_isotropic, ElasticityTensor, IsotropicModuli};
use nalgebra::DMatrix;

fn c1() -> ElasticityTensor {
    make_isotropic(IsotropicModuli::new(1.0, 2.0).unwrap(), 2).unwrap()
}

fn square_hole(side: f64) -> InclusionModel {
    InclusionModel::periodic_single(InclusionShape::square("hole", side).unwrap())
}

fn energy(c: &ElasticityTensor, xi: &DMatrix<f64>) -> f64 {
    c.energy(xi, xi).unwrap()
}

#[test]
fn no_inclusions_reproduce_the_matrix_tensor() {
    let cfg = generate_configuration(&InclusionModel::empty(), 1, 0).unwrap();
    let r = periodic_corrector(&cfg, &c1(), 0.1).unwrap();
    assert!(r.chom.max_abs_diff(&c1()) <= 1e-12 * c1().norm());
    assert!(r.correctors.iter().flatten().all(|x| x.abs() <= 1e-12));
}

#[test]
fn square_hole_respects_voigt_bound_and_identities() {
    let cfg = generate_configuration(&square_hole(0.4), 1, 0).unwrap();
    let r = periodic_corrector(&cfg, &c1(), 0.05).unwrap();
    assert!((r.matrix_fraction() - 0.84).abs() < 1e-12);
    let e11 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert!(energy(&r.chom, &e11) <= 0.84 * energy(&c1(), &e11));
    for xi in [[0.3, -0.7, 1.1], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
        let m = DMatrix::from_row_slice(2, 2, &[xi[0], xi[2], xi[2], xi[1]]);
        let e = energy(&r.chom, &m);
        assert!(e > 0.0 && e <= 0.84 * energy(&c1(), &m) * (1.0 + 1e-12));
    }
    assert!(r.residual <= 1e-9, "{}", r.residual);
    assert!(r.energy_mismatch <= 1e-8, "{}", r.energy_mismatch);
    // both tensor symmetries and zero-mean correctors
    let c = &r.chom;
    assert!((c.get(0, 1, 0, 0) - c.get(0, 0, 0, 1)).abs() <= 1e-12);
    for u in &r.correctors {
        let mut s = [0.0; 2];
        for (t, tri) in r.mesh.triangles.iter().enumerate() {
            let a = r.mesh.triangle_area(t) / 3.0;
            for &v in tri {
                s[0] += a * u[2 * v];
                s[1] += a * u[2 * v + 1];
            }
        }
        assert!(s[0].abs() <= 1e-10 && s[1].abs() <= 1e-10, "{s:?}");
    }
}

#[test]
fn self_convergence_from_above() {
    let cfg = generate_configuration(&square_hole(0.4), 1, 0).unwrap();
    let vals: Vec<[f64; 3]> = [0.025, 0.0125, 0.00625]
        .iter()
        .map(|&h| {
            let c = periodic_corrector(&cfg, &c1(), h).unwrap().chom;
            [c.get(0, 0, 0, 0), c.get(1, 1, 1, 1), c.get(0, 1, 0, 1)]
        })
        .collect();
    for k in 0..3 {
        assert!(vals[0][k] >= vals[1][k] && vals[1][k] >= vals[2][k], "{vals:?}");
        assert!((vals[1][k] - vals[2][k]).abs() <= 0.01 * vals[2][k], "{vals:?}");
    }
}

#[test]
fn corrector_strain_norm_grows_like_cell_volume() {
    let mut ratios = Vec::new();
    for r in [1, 2, 4] {
        let cfg = generate_configuration(&square_hole(0.4), r, 0).unwrap();
        let res = periodic_corrector(&cfg, &c1(), 0.1).unwrap();
        let n = res.corrector_strain_norms();
        ratios.push(n[0] / r as f64);
        // the periodized tensor does not depend on the number of periods
        if r > 1 {
            let one = periodic_corrector(&generate_configuration(&square_hole(0.4), 1, 0).unwrap(), &c1(), 0.1).unwrap();
            assert!(res.chom.max_abs_diff(&one.chom) <= 1e-9 * one.chom.norm());
        }
    }
    for w in ratios.windows(2) {
        assert!((w[0] - w[1]).abs() <= 1e-6 * w[0], "{ratios:?}");
    }
}

#[test]
fn rve_spread() {
    let est = chom_rve(&square_hole(0.4), &c1(), 2, 3, 0.1, 5).unwrap();
    assert!(est.spread.iter().all(|s| *s <= 1e-9));
    let one = periodic_corrector(&generate_configuration(&square_hole(0.4), 1, 0).unwrap(), &c1(), 0.1).unwrap();
    assert!(est.mean.max_abs_diff(&one.chom) <= 1e-9 * one.chom.norm());

    let model =
        InclusionModel::iid_scaling(InclusionShape::square("s", 0.8).unwrap(), ScalingLaw::Uniform { r1: 0.3, r2: 0.9 })
            .unwrap();
    let s2 = chom_rve(&model, &c1(), 2, 16, 0.1, 11).unwrap();
    let s4 = chom_rve(&model, &c1(), 4, 16, 0.1, 11).unwrap();
    let idx = [0, 15, 5];
    for i in idx {
        assert!(s4.spread[i] <= s2.spread[i], "{} vs {}", s4.spread[i], s2.spread[i]);
    }
    for t in s4.samples.iter().chain(&s2.samples) {
        for xi in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, -0.3, 0.2]] {
            let m = DMatrix::from_row_slice(2, 2, &[xi[0], xi[2], xi[2], xi[1]]);
            assert!(energy(t, &m) <= energy(&c1(), &m));
        }
    }
}
