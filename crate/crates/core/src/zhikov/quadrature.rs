use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> =
        (0..n).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize against rounding
    for i in 0..n / 2 {
        let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
        let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Nodes and weights for the uniform average over `[a, b]` (weights sum to 1).
pub fn uniform_average(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|w| 0.5 * w).collect())
}

/// Maximum of `f` on `[a, b]`: a uniform scan with `scan` points followed by
/// golden-section refinement around the best sample. Endpoints are always
/// evaluated. Returns `(argmax, max)`.
pub fn maximize(f: impl Fn(f64) -> f64, a: f64, b: f64, scan: usize, tol: f64) -> (f64, f64) {
    let scan = scan.max(2);
    let xs: Vec<f64> = (0..scan).map(|i| a + (b - a) * i as f64 / (scan - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let (mut bi, mut best) = (0, f64::NEG_INFINITY);
    for (i, &y) in ys.iter().enumerate() {
        if y > best {
            best = y;
            bi = i;
        }
    }
    let mut lo = xs[bi.saturating_sub(1)];
    let mut hi = xs[(bi + 1).min(scan - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut arg = xs[bi];
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, y) in [(x1, f1), (x2, f2)] {
        if y > best {
            best = y;
            arg = x;
        }
    }
    (arg, best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        for p in 0..32 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p + 1) as f64 };
            assert!((s - exact).abs() < 1e-13, "degree {p}");
        }
        let (_, w) = uniform_average(0.3, 0.9, 16);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn golden_section_finds_interior_and_endpoint_maxima() {
        let (x, y) = maximize(|x| -(x - 0.37f64).powi(2), 0.0, 1.0, 9, 1e-12);
        assert!((x - 0.37).abs() < 1e-6 && y.abs() < 1e-12);
        let (x, y) = maximize(|x| x, 0.0, 1.0, 5, 1e-12);
        assert_eq!((x, y), (1.0, 1.0));
    }
}
