use hcband_core::fem::Coeff;
use hcband_core::geometry::{InclusionModel, InclusionShape, ModelKind, ScalingLaw, SymmetryOp};
use hcband_core::spectral::InclusionProblem;
use hcband_core::tensors::{make_isotropic, IsotropicModuli};
use hcband_core::zhikov::*;
use nalgebra::DMatrix;

fn iso(c1: f64, c2: f64) -> Coeff {
    Coeff::Tensor(make_isotropic(IsotropicModuli::new(c1, c2).unwrap(), 2).unwrap())
}

fn rect() -> InclusionShape {
    InclusionShape::rectangle("q", 0.2, 0.4).unwrap()
}

fn engine(model: &InclusionModel, coeff: &Coeff, h: f64, lambda_max: f64) -> BetaEngine {
    BetaEngine::new(model, coeff, EngineOptions { h, lambda_max, ..Default::default() }, None).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

#[test]
fn beta_vanishes_at_zero_and_is_symmetric() {
    let model = InclusionModel::periodic_single(rect());
    let e = engine(&model, &iso(1.0, 0.5), 0.02, 0.0);
    let b0 = e.beta(0.0).unwrap();
    assert_eq!(b0.value.unwrap(), DMatrix::zeros(2, 2));
    let nu1 = e.lambda_scale();
    for f in [0.1, 0.6, 1.3, 2.7] {
        let b = e.beta(f * nu1).unwrap();
        if let Some(v) = b.value {
            assert!((&v - v.transpose()).norm() <= 1e-9 * v.norm());
        }
    }
}

#[test]
fn single_shape_matches_eigen_expansion() {
    let shape = rect();
    let coeff = iso(1.0, 0.5);
    let model = InclusionModel::periodic_single(shape.clone());
    let e = engine(&model, &coeff, 0.02, 0.0);
    let p = InclusionProblem::new(&shape, &coeff, 0.02).unwrap();
    let eig = p.eigen(60, &Default::default()).unwrap();
    let b0 = p.resolvent(0.0, None, 0.0).unwrap().b;
    let nu1 = eig.first();
    for f in [0.2, 0.5, 0.9] {
        let lambda = f * nu1;
        let beta = e.beta(lambda).unwrap().value.unwrap();
        for k in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]] {
            let kv = DMatrix::from_column_slice(2, 1, &k);
            let got = (kv.transpose() * &beta * &kv)[(0, 0)];
            let oracle_b = eig.expansion_with_tail(&b0, lambda);
            let want = lambda + lambda * lambda * (kv.transpose() * oracle_b * &kv)[(0, 0)];
            assert!((got - want).abs() <= 1e-3 * want.abs(), "{got} vs {want}");
        }
    }
}

#[test]
fn two_atom_scaling_is_the_average() {
    let base = InclusionShape::square("s", 0.8).unwrap();
    let coeff = iso(1.0, 0.5);
    let law = ScalingLaw::Atoms { values: vec![0.4 / 0.8, 0.5 / 0.8], weights: vec![0.5, 0.5] };
    let model = InclusionModel::iid_scaling(base.clone(), law).unwrap();
    let e = engine(&model, &coeff, 0.04, 0.0);
    let single = engine(&InclusionModel::periodic_single(base), &coeff, 0.04, 0.0);
    let lambda = 0.4 * e.lambda_scale();
    let beta = e.beta(lambda).unwrap().value.unwrap();
    let b1 = beta_r(&single, 0.5, lambda).unwrap().direct;
    let b2 = beta_r(&single, 0.625, lambda).unwrap().direct;
    assert!(rel(&beta, &((b1 + b2) * 0.5)) <= 1e-9);
}

#[test]
fn beta_r_consistency_and_literal_discrepancy() {
    let base = InclusionShape::square("s", 0.8).unwrap();
    let coeff = iso(1.0, 0.5);
    let e = engine(&InclusionModel::periodic_single(base), &coeff, 0.03, 0.0);
    let nu1 = e.lambda_scale();
    // r = 1 is the single-shape β
    let lambda = 0.5 * nu1;
    let one = beta_r(&e, 1.0, lambda).unwrap();
    assert!(rel(&one.direct, &e.beta(lambda).unwrap().value.unwrap()) <= 1e-9);
    let r = 0.5;
    let lambda = 0.3 * nu1 / (r * r);
    let br = beta_r(&e, r, lambda).unwrap();
    assert!(br.discrepancy <= 1e-3, "{}", br.discrepancy);
    // the r^{-2d} prefactor disagrees with the direct solve
    assert!(br.literal_discrepancy > 1e-2, "{}", br.literal_discrepancy);
    // poles at ν/r² of the first mode with a large moment: k·βk blows up
    // with opposite signs on both sides
    let eig = e.reference_eigen().unwrap();
    let n = (0..eig.values.len()).find(|&n| eig.moments[n][0].abs() > 0.1).unwrap();
    let p = eig.values[n] / (r * r);
    let below = beta_r(&e, r, p * (1.0 - 1e-2)).unwrap().direct;
    let above = beta_r(&e, r, p * (1.0 + 1e-2)).unwrap().direct;
    assert!(below[(0, 0)] > 0.0 && above[(0, 0)] < 0.0);
    assert!(below[(0, 0)] > 10.0 * br.direct[(0, 0)].abs());
}

#[test]
fn closed_form_of_discrete_model_is_the_larger_atom() {
    let base = InclusionShape::square("s", 0.8).unwrap();
    let coeff = iso(1.0, 0.5);
    let law = ScalingLaw::Atoms { values: vec![0.5, 0.625], weights: vec![0.5, 0.5] };
    let model = InclusionModel::iid_scaling(base, law).unwrap();
    let e = engine(&model, &coeff, 0.04, 0.0);
    let nu1 = e.lambda_scale();
    for f in [0.3, 1.2, 2.0, 3.1] {
        let lambda = f * nu1;
        if e.near_pole(lambda) {
            continue;
        }
        let atoms = e.atom_betas(lambda).unwrap();
        let want = atoms.iter().map(max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
        let params = BetaInfParams { cube: 3, samples: 6, seed: 7, prefer_closed_form: true };
        let r = beta_infinity(&e, lambda, &params).unwrap();
        assert_eq!(r.closed_form, Some(want));
        let est = r.estimate.unwrap();
        assert!(est <= want + 1e-9);
        assert!(r.running_max.windows(2).all(|w| w[0] <= w[1]));
        // β ≤ β∞
        let bm = e.beta(lambda).unwrap().max_eigenvalue().unwrap();
        assert!(bm <= want + 1e-9);
    }
}

#[test]
fn iid_rotation_closed_form_is_the_largest_diagonal() {
    let coeff = iso(1.0, 0.5);
    let rot = engine(&InclusionModel::iid_rotation(rect()), &coeff, 0.02, 0.0);
    let single = engine(&InclusionModel::periodic_single(rect()), &coeff, 0.02, 0.0);
    let nu1 = single.lambda_scale();
    for f in [0.4, 0.8, 1.6] {
        let lambda = f * nu1;
        if single.near_pole(lambda) || rot.near_pole(lambda) {
            continue;
        }
        let per = single.beta(lambda).unwrap().value.unwrap();
        let (cf, _) = closed_form(&rot, lambda).unwrap();
        let want = per[(0, 0)].max(per[(1, 1)]);
        // the rectangle mesh is not exactly mirror-symmetric, so the off-diagonal
        // entry is only small
        assert!((cf - want).abs() <= 1e-5 * per.norm(), "{cf} vs {want}");
    }
}

#[test]
fn reflection_model_is_diagonal_and_rotation_model_is_isotropic() {
    let coeff = iso(1.0, 0.5);
    let shape = InclusionShape::new("t", vec![[-0.2, -0.15], [0.22, -0.1], [0.05, 0.2]]).unwrap();
    let refl = engine(&InclusionModel::iid_reflection(shape.clone()), &coeff, 0.02, 0.0);
    let rot = engine(&InclusionModel::periodic_rotation(shape.clone()), &coeff, 0.02, 0.0);
    let single = engine(&InclusionModel::periodic_single(shape), &coeff, 0.02, 0.0);
    let nu1 = single.lambda_scale();
    for f in [0.3, 0.9, 1.7] {
        let lambda = f * nu1;
        if single.near_pole(lambda) {
            continue;
        }
        let b = refl.beta(lambda).unwrap().value.unwrap();
        assert!(b[(0, 1)].abs() <= 1e-6 * b.norm());
        let b = rot.beta(lambda).unwrap().value.unwrap();
        let t = b.trace() / 2.0;
        assert!((&b - DMatrix::identity(2, 2) * t).norm() <= 1e-6 * b.norm());
        let per = single.beta(lambda).unwrap().value.unwrap();
        assert!((t - per.trace() / 2.0).abs() <= 1e-9 * b.norm());
    }
}

#[test]
fn sigma_a0_for_shapes_and_scaling_intervals() {
    let coeff = Coeff::Scalar(1.0);
    let single = engine(&InclusionModel::periodic_single(rect()), &coeff, 0.02, 0.0);
    let nu = single.reference_eigen().unwrap().values.clone();
    let lm = nu[3] * 1.01;
    let s = single.sigma_a0(lm);
    assert!(s.intervals.is_empty());
    assert_eq!(s.points.len(), nu.iter().filter(|&&v| v <= lm).count());
    assert!((s.points[0] - nu[0]).abs() < 1e-12);

    let base = InclusionShape::square("s", 0.7).unwrap();
    let law = ScalingLaw::Uniform { r1: 0.5, r2: 1.0 };
    let model = InclusionModel::iid_scaling(base.clone(), law).unwrap();
    let e = engine(&model, &coeff, 0.03, 0.0);
    let nu1 = e.lambda_scale();
    let s = e.sigma_a0(3.0 * nu1);
    // [ν₁, 4ν₁] merges with the images of the higher modes
    assert!((s.intervals[0][0] - nu1).abs() < 1e-12 * nu1);
    assert!(s.intervals[0][1] >= 3.0 * nu1 - 1e-12);

    // narrow scaling range: the images of ν₁ and ν₂ overlap iff ν₂/ν₁ < (1/0.9)²
    let law = ScalingLaw::Uniform { r1: 0.9, r2: 1.0 };
    let e = engine(&InclusionModel::iid_scaling(base, law).unwrap(), &coeff, 0.03, 0.0);
    let nu = e.reference_eigen().unwrap().values.clone();
    let lm = nu[5];
    let s = e.sigma_a0(lm);
    let mut expect: Vec<[f64; 2]> = Vec::new();
    for &v in nu.iter().filter(|&&v| v / 1.0 <= lm) {
        let iv = [v, (v / 0.81).min(lm)];
        match expect.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => expect.push(iv),
        }
    }
    assert_eq!(s.intervals, expect);
    // the degenerate pair ν₂ = ν₃ of the square is reported once
    assert!(s.intervals.len() < nu.iter().filter(|&&v| v <= lm).count());
}

#[test]
fn scalar_band_structure() {
    let coeff = Coeff::Scalar(1.0);
    let single = engine(&InclusionModel::periodic_single(rect()), &coeff, 0.02, 0.0);
    let nu1 = single.lambda_scale();
    let lm = 3.0 * nu1;
    let e = engine(&InclusionModel::periodic_single(rect()), &coeff, 0.02, lm);
    let grid = lambda_grid(lm, 400);
    let (s, betas) = spectrum_hom(&e, &grid).unwrap();
    // a band starts at 0
    assert_eq!(s.intervals[0][0], 0.0);
    // just above the first pole β is negative, so there is a gap
    let gaps = s.gaps();
    assert!(gaps.iter().any(|g| g[0] >= nu1 && g[0] <= nu1 * (1.0 + 1e-9)), "{gaps:?}");
    // band edges are roots of β
    for iv in &s.intervals {
        for x in iv {
            if *x > 0.0 && *x < grid[grid.len() - 1] && !e.near_pole(*x) {
                let v = e.beta(*x).unwrap().max_eigenvalue().unwrap();
                assert!(v.abs() <= 1e-5 * x, "β({x}) = {v}");
            }
        }
    }
    // the single-shape 𝒢 coincides with σ(A^hom)
    let g = set_g(&e, &grid, &BetaInfParams::default()).unwrap();
    assert_eq!(g.intervals, s.intervals);
    assert_eq!(betas.len(), grid.len());
}

#[test]
fn directional_monotonicity_and_pole_signature() {
    let coeff = iso(1.0, 0.5);
    let single = engine(&InclusionModel::periodic_single(rect()), &coeff, 0.02, 0.0);
    let nu1 = single.lambda_scale();
    let lm = 2.5 * nu1;
    let e = engine(&InclusionModel::periodic_single(rect()), &coeff, 0.02, lm);
    let grid = lambda_grid(lm, 400);
    let poles: Vec<f64> = e.poles(lm).iter().filter(|p| p.significant).map(|p| p.lo).collect();
    for k in [[1.0, 0.0], [0.0, 1.0], [0.8, 0.6]] {
        let kv = DMatrix::from_column_slice(2, 1, &k);
        let kbk = |l: f64| e.beta(l).unwrap().value.map(|b| (kv.transpose() * b * &kv)[(0, 0)]);
        let mut prev: Option<(f64, f64)> = None;
        for &l in &grid {
            let Some(v) = kbk(l) else {
                prev = None;
                continue;
            };
            if let Some((pl, pv)) = prev {
                if !poles.iter().any(|&p| pl < p && p < l) {
                    assert!(v > pv, "k = {k:?} at {l}");
                }
            }
            prev = Some((l, v));
        }
        let m = e.reference_eigen().unwrap();
        let largest = m.moments.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
        for &p in &poles {
            let n = m.values.iter().position(|&v| v == p).unwrap();
            let mk = m.moments[n][0] * k[0] + m.moments[n][1] * k[1];
            // poles of symmetry-odd modes carry only a discretization-size moment
            if mk.abs() < 0.05 * largest {
                continue;
            }
            let g = 2.0 * e.guard();
            assert!(kbk(p - g).unwrap() > 0.0 && kbk(p + g).unwrap() < 0.0);
        }
    }
}

#[test]
fn iid_rotation_g_strictly_contains_sigma_hom() {
    let coeff = iso(1.0, 0.5);
    let model = InclusionModel::iid_rotation(rect());
    let probe = engine(&model, &coeff, 0.02, 0.0);
    let lm = 3.0 * probe.lambda_scale();
    let e = engine(&model, &coeff, 0.02, lm);
    let grid = lambda_grid(lm, 200);
    let a = analyze(&e, &grid, &BetaInfParams::default()).unwrap();
    let tol = 1e-6 * e.lambda_scale();
    assert!(a.sigma_a0.is_subset_of(&a.sigma_hom, tol));
    assert!(a.sigma_hom.is_subset_of(&a.g, tol));
    assert!(a.g.measure() > a.sigma_hom.measure() + 1e-3 * lm);
    for row in &a.table {
        if let (Some(b), Some(i)) = (row.beta_max, row.beta_inf) {
            assert!(b <= i + 1e-9);
        }
    }
    // weak bands: exactly one nonnegative eigenvalue somewhere
    assert!(a.table.iter().any(|r| r.count_hom == Some(1) || r.count_g == Some(1)));
}

#[test]
fn dispersion_examples() {
    let c = make_isotropic(IsotropicModuli::new(1.0, 1.0).unwrap(), 2).unwrap();
    // build A = diag(4, 1) from the acoustic tensor directly
    let a = c.acoustic(&[1.0, 0.0]);
    let beta = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a[(0, 0)] / 4.0, a[(1, 1)]]));
    let sol = dispersion(1.0, &[1.0, 0.0], &c, &beta).unwrap();
    assert_eq!(sol.roots.len(), 2);
    assert!((sol.roots[0].0 - 0.5).abs() < 1e-12 && (sol.roots[1].0 - 1.0).abs() < 1e-12);
    assert!((sol.roots[0].1[0].abs() - 1.0).abs() < 1e-12);
    assert!((sol.roots[1].1[1].abs() - 1.0).abs() < 1e-12);

    let neg = DMatrix::identity(2, 2) * -1.0;
    assert!(dispersion(1.0, &[0.6, 0.8], &c, &neg).unwrap().roots.is_empty());

    let b = 0.7;
    let k = [0.6, 0.8];
    let sol = dispersion(1.0, &k, &c, &(DMatrix::identity(2, 2) * b)).unwrap();
    let mut want: Vec<f64> = c.acoustic(&k).symmetric_eigen().eigenvalues.iter().map(|e| (b / e).sqrt()).collect();
    want.sort_by(f64::total_cmp);
    for ((r, pol), w) in sol.roots.iter().zip(&want) {
        assert!((r - w).abs() < 1e-12);
        let cv = DMatrix::from_column_slice(2, 1, pol);
        let res = (c.acoustic(&k) * (r * r) - DMatrix::identity(2, 2) * b) * cv;
        assert!(res.norm() <= 1e-8);
    }
}

#[test]
fn empty_model_is_a_single_band() {
    let e = engine(&InclusionModel::empty(), &iso(1.0, 0.5), 0.02, 10.0);
    let grid = lambda_grid(10.0, 50);
    let (s, _) = spectrum_hom(&e, &grid).unwrap();
    assert_eq!(s.intervals, vec![[0.0, 10.0]]);
    let _ = (SymmetryOp::Identity, ModelKind::Empty);
}

