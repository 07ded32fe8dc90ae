use serde::Serialize;

use super::beta::{max_eigenvalue, nonnegative_count, BetaEngine, BetaMatrix};
use super::infinity::{beta_inf_value, BetaInfParams};
use super::sets::{BandSample, SetLabel, SpectralSet};
use crate::error::Result;

/// Maximum bisection steps for a band edge.
pub const BISECTION_STEPS: usize = 60;

/// `n` equispaced points on `[0, λ_max]`.
pub fn lambda_grid(lambda_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| lambda_max * i as f64 / (n - 1) as f64).collect()
}

/// One row of the grid table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub lambda: f64,
    /// Upper triangle of 𝛃 in row-major order; `None` inside a pole guard.
    pub beta: Option<Vec<f64>>,
    pub beta_max: Option<f64>,
    pub beta_inf: Option<f64>,
    pub count_hom: Option<usize>,
    pub count_g: Option<usize>,
    pub in_sigma_a0: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub sigma_a0: SpectralSet,
    pub sigma_hom: SpectralSet,
    pub g: SpectralSet,
    pub table: Vec<GridRow>,
    pub ncomp: usize,
    pub lambda_scale: f64,
}

/// Open λ-segments between the significant poles (or the significant pole
/// intervals of a scaling law).
fn segments(engine: &BetaEngine, lambda_max: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<(f64, f64)> =
        engine.poles(lambda_max).into_iter().filter(|p| p.significant).map(|p| (p.lo, p.hi)).collect();
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut start = 0.0;
    for (lo, hi) in cuts {
        if lo > start {
            out.push((start, lo));
        }
        start = f64::max(start, hi);
    }
    if start < lambda_max {
        out.push((start, lambda_max));
    }
    out
}

/// Superlevel set `{f ≥ 0}` inside the segments. `f` returns `None` where it
/// cannot be evaluated (pole guards); such points are skipped. Sign changes
/// between consecutive evaluable points are located by bisection.
fn superlevel(
    f: &dyn Fn(f64) -> Option<f64>,
    segs: &[(f64, f64)],
    grid: &[f64],
    guard: f64,
    tol: f64,
) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for &(a, b) in segs {
        let mut pts: Vec<f64> = grid.iter().copied().filter(|&x| x > a && x < b).collect();
        // refinement next to the poles
        for x in [a + 2.0 * guard, b - 2.0 * guard] {
            if x > a && x < b {
                pts.push(x);
            }
        }
        if a == 0.0 {
            pts.push(0.0);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let vals: Vec<(f64, f64)> = pts.iter().filter_map(|&x| f(x).map(|v| (x, v))).collect();
        if vals.is_empty() {
            continue;
        }
        let mut start = if vals[0].1 >= 0.0 { Some(a) } else { None };
        for w in vals.windows(2) {
            let ((x0, v0), (x1, v1)) = (w[0], w[1]);
            if (v0 >= 0.0) == (v1 >= 0.0) {
                continue;
            }
            let (mut lo, mut hi) = (x0, x1);
            for _ in 0..BISECTION_STEPS {
                if hi - lo <= tol {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                match f(mid) {
                    Some(v) if (v >= 0.0) == (v0 >= 0.0) => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
            }
            if v0 >= 0.0 {
                out.push([start.take().unwrap_or(a), lo]);
            } else {
                start = Some(hi);
            }
        }
        if let Some(s) = start {
            out.push([s, b]);
        }
    }
    out
}

fn upper(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn beta_max_at(engine: &BetaEngine, lambda: f64) -> Option<f64> {
    engine.beta(lambda).ok()?.max_eigenvalue()
}

/// `σ(A^hom) = σ(A₀) ∪ closure{λ : β_max(λ) ≥ 0}` on the grid, with the
/// per-gridpoint β-matrices.
pub fn spectrum_hom(engine: &BetaEngine, grid: &[f64]) -> Result<(SpectralSet, Vec<BetaMatrix>)> {
    let lambda_max = grid.iter().copied().fold(0.0, f64::max);
    let tol = 1e-8 * engine.lambda_scale();
    let segs = segments(engine, lambda_max);
    let f = |l: f64| beta_max_at(engine, l);
    let iv = superlevel(&f, &segs, grid, engine.guard(), tol);
    let betas: Vec<BetaMatrix> = grid.iter().map(|&l| engine.beta(l)).collect::<Result<_>>()?;
    let s0 = engine.sigma_a0(lambda_max);
    let mut set = SpectralSet::new(SetLabel::SigmaAhom, lambda_max, iv, vec![]).union(&s0, SetLabel::SigmaAhom);
    set.annotation = betas.iter().map(|b| BandSample { lambda: b.lambda, count: b.nonnegative_count() }).collect();
    Ok((set, betas))
}

/// `𝒢 = σ(A₀) ∪ closure{λ : β∞(λ) ≥ 0}` on the grid.
pub fn set_g(engine: &BetaEngine, grid: &[f64], params: &BetaInfParams) -> Result<SpectralSet> {
    let lambda_max = grid.iter().copied().fold(0.0, f64::max);
    let tol = 1e-8 * engine.lambda_scale();
    let segs = segments(engine, lambda_max);
    let f = |l: f64| beta_inf_value(engine, l, params).ok().map(|v| v.0);
    let iv = superlevel(&f, &segs, grid, engine.guard(), tol);
    let s0 = engine.sigma_a0(lambda_max);
    let mut set = SpectralSet::new(SetLabel::G, lambda_max, iv, vec![]).union(&s0, SetLabel::G);
    set.annotation = grid
        .iter()
        .map(|&l| BandSample { lambda: l, count: beta_inf_value(engine, l, params).ok().map(|v| v.1) })
        .collect();
    Ok(set)
}

/// All three sets and the grid table.
pub fn analyze(engine: &BetaEngine, grid: &[f64], params: &BetaInfParams) -> Result<Analysis> {
    let lambda_max = grid.iter().copied().fold(0.0, f64::max);
    let sigma_a0 = engine.sigma_a0(lambda_max);
    let (sigma_hom, betas) = spectrum_hom(engine, grid)?;
    let g = set_g(engine, grid, params)?;
    let guard = engine.guard();
    let table = betas
        .iter()
        .zip(&g.annotation)
        .map(|(b, ga)| {
            let inf = beta_inf_value(engine, b.lambda, params).ok();
            GridRow {
                lambda: b.lambda,
                beta: b.value.as_ref().map(upper),
                beta_max: b.value.as_ref().map(max_eigenvalue),
                beta_inf: inf.map(|v| v.0),
                count_hom: b.value.as_ref().map(nonnegative_count),
                count_g: ga.count,
                in_sigma_a0: sigma_a0.contains(b.lambda, guard),
            }
        })
        .collect();
    Ok(Analysis { sigma_a0, sigma_hom, g, table, ncomp: engine.ncomp(), lambda_scale: engine.lambda_scale() })
}
