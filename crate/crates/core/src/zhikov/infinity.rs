use nalgebra::DMatrix;
use serde::Serialize;

use super::beta::{max_eigenvalue, nonnegative_count, BetaEngine};
use super::quadrature::maximize;
use crate::error::{Error, Result};
use crate::geometry::generate_configuration;

/// Monte Carlo parameters for β∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaInfParams {
    /// Sub-cube side in cells.
    pub cube: usize,
    pub samples: usize,
    pub seed: u64,
    /// Use the closed form when the model admits one.
    pub prefer_closed_form: bool,
}

impl Default for BetaInfParams {
    fn default() -> Self {
        Self { cube: 8, samples: 64, seed: 1, prefer_closed_form: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaInfinity {
    pub lambda: f64,
    /// Monte Carlo estimate (max over sub-cubes and samples); `None` if no
    /// samples were requested.
    pub estimate: Option<f64>,
    pub closed_form: Option<f64>,
    /// Running maximum after each sample.
    pub running_max: Vec<f64>,
    /// Nonnegative-eigenvalue count of the maximizing β.
    pub count: Option<usize>,
}

impl BetaInfinity {
    /// `closed_form − estimate`, when both exist.
    pub fn gap(&self) -> Option<f64> {
        Some(self.closed_form? - self.estimate?)
    }
}

/// Closed form of β∞ at λ: the supremum over the per-cell support of the
/// largest eigenvalue of the single-type β. For periodic models the support
/// is the whole cell pattern, so β∞ coincides with β.
///
/// Returns `(value, count)` with `count` the nonnegative-eigenvalue count of
/// the maximizing matrix.
pub fn closed_form(engine: &BetaEngine, lambda: f64) -> Result<(f64, usize)> {
    let nc = engine.ncomp();
    if lambda == 0.0 {
        return Ok((0.0, nc));
    }
    if engine.model.is_periodic() {
        let b = engine.beta(lambda)?;
        let v = b.value.ok_or(Error::NearPole { lambda, pole: f64::NAN, distance: 0.0 })?;
        return Ok((max_eigenvalue(&v), nonnegative_count(&v)));
    }
    if let Some((r1, r2)) = engine.scaling_range() {
        if engine.near_pole(lambda) {
            return Err(Error::NearPole { lambda, pole: f64::NAN, distance: 0.0 });
        }
        let f = |r: f64| engine.scaled_beta_eval(r, lambda).map(|m| max_eigenvalue(&m)).unwrap_or(f64::NEG_INFINITY);
        let (r, v) = maximize(f, r1, r2, 33, 1e-10 * (r2 - r1));
        let count = nonnegative_count(&engine.scaled_beta_eval(r, lambda)?);
        return Ok((v, count));
    }
    let betas = engine.atom_betas(lambda)?;
    let best = betas
        .iter()
        .map(|m| (max_eigenvalue(m), nonnegative_count(m)))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(best)
}

/// Per-cell `B` contributions of one sampled window, with summed-area
/// tables for O(1) sub-cube averages.
struct Window {
    side: usize,
    nc: usize,
    /// `(side+1)² × nc²`, row-major prefix sums.
    prefix: Vec<f64>,
}

impl Window {
    fn new(side: usize, nc: usize, cells: &[DMatrix<f64>]) -> Self {
        let w = side + 1;
        let k = nc * nc;
        let mut prefix = vec![0.0; w * w * k];
        for j in 0..side {
            for i in 0..side {
                let c = &cells[j * side + i];
                for a in 0..k {
                    let v = c[(a / nc, a % nc)];
                    prefix[((j + 1) * w + i + 1) * k + a] = v + prefix[(j * w + i + 1) * k + a]
                        + prefix[((j + 1) * w + i) * k + a]
                        - prefix[(j * w + i) * k + a];
                }
            }
        }
        Self { side, nc, prefix }
    }

    fn cube_mean(&self, i: usize, j: usize, l: usize) -> DMatrix<f64> {
        let w = self.side + 1;
        let k = self.nc * self.nc;
        let at = |x: usize, y: usize, a: usize| self.prefix[(y * w + x) * k + a];
        let n = (l * l) as f64;
        let mut m = DMatrix::zeros(self.nc, self.nc);
        for a in 0..k {
            let s = at(i + l, j + l, a) - at(i, j + l, a) - at(i + l, j, a) + at(i, j, a);
            m[(a / self.nc, a % self.nc)] = s / n;
        }
        (&m + m.transpose()) * 0.5
    }
}

/// Monte Carlo estimate of β∞ at λ: windows of side `2·cube` are sampled with
/// seeds `seed, seed+1, …`; every aligned sub-cube of side `cube` (stride one
/// cell) contributes `λ_max(λI + λ²·mean B)`. Also returns the closed form
/// when available. This under-estimates β∞ and converges from below.
pub fn beta_infinity(engine: &BetaEngine, lambda: f64, params: &BetaInfParams) -> Result<BetaInfinity> {
    if params.cube == 0 {
        return Err(Error::Parameter("cube side must be at least one cell".into()));
    }
    let nc = engine.ncomp();
    let closed = closed_form(engine, lambda).ok();
    if engine.near_pole(lambda) {
        return Err(Error::NearPole { lambda, pole: f64::NAN, distance: 0.0 });
    }
    let atom_b = engine.atom_bs(lambda)?;
    let side = 2 * params.cube;
    let id = DMatrix::<f64>::identity(nc, nc) * lambda;
    let mut best = f64::NEG_INFINITY;
    let mut best_count = None;
    let mut running = Vec::with_capacity(params.samples);
    for s in 0..params.samples {
        let cfg = generate_configuration(&engine.model, side, params.seed.wrapping_add(s as u64))?;
        let mut cells = vec![DMatrix::<f64>::zeros(nc, nc); side * side];
        for p in &cfg.placements {
            let idx = p.cell[1] as usize * side + p.cell[0] as usize;
            cells[idx] = engine.placement_b(p.op, p.scale, lambda, &atom_b)?;
        }
        let win = Window::new(side, nc, &cells);
        for j in 0..=side - params.cube {
            for i in 0..=side - params.cube {
                let m = &id + win.cube_mean(i, j, params.cube) * (lambda * lambda);
                let v = max_eigenvalue(&m);
                if v > best {
                    best = v;
                    best_count = Some(nonnegative_count(&m));
                }
            }
        }
        running.push(best);
    }
    Ok(BetaInfinity {
        lambda,
        estimate: (params.samples > 0).then_some(best),
        closed_form: closed.map(|c| c.0),
        running_max: running,
        count: closed.map(|c| c.1).or(best_count),
    })
}

/// β∞ as used for the set 𝒢: the closed form when available and preferred,
/// otherwise the Monte Carlo estimate.
pub fn beta_inf_value(engine: &BetaEngine, lambda: f64, params: &BetaInfParams) -> Result<(f64, usize)> {
    if params.prefer_closed_form {
        if let Ok(c) = closed_form(engine, lambda) {
            return Ok(c);
        }
    }
    let r = beta_infinity(engine, lambda, &BetaInfParams { prefer_closed_form: false, ..*params })?;
    match (r.estimate, r.count) {
        (Some(e), Some(c)) => Ok((e, c)),
        _ => Err(Error::Parameter("β∞ needs at least one Monte Carlo sample".into())),
    }
}
