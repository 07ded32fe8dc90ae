//! The pipelines behind each command.

use std::path::{Path, PathBuf};

use hcband_core::fem::Coeff;
use hcband_core::geometry::{generate_configuration, InclusionModel, ModelKind};
use hcband_core::homog::{chom_rve, periodic_corrector};
use hcband_core::spectral::{EigOptions, EigenCache, InclusionProblem};
use hcband_core::validate::{epsilon_spectrum, quasimode_residual, QuasimodeOptions, DEFAULT_DOF_BUDGET};
use hcband_core::zhikov::{
    analyze, beta_infinity, lambda_grid, max_eigenvalue, nonnegative_count, BetaEngine, BetaInfParams, EngineOptions,
    GridRow, SetLabel, SpectralSet,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{Command, RunConfig};
use crate::formats::{self, num, Csv};
use crate::output::{OutputDir, RunManifest};
use crate::{RunError, CACHE_ENV, DEFAULT_CACHE_DIR};

trait Stage<T> {
    fn stage(self, module: &str) -> Result<T, RunError>;
}

impl<T, E: Into<RunError>> Stage<T> for Result<T, E> {
    fn stage(self, module: &str) -> Result<T, RunError> {
        self.map_err(|e| e.into().context(module))
    }
}

/// Runs `cfg` with paths resolved against the working directory.
pub fn run(cfg: &RunConfig) -> Result<RunManifest, RunError> {
    run_in(cfg, Path::new("."), None)
}

/// Runs `cfg`; model and tensor files are resolved against `base`, and
/// `config_text`, if given, is hashed into the manifest.
pub fn run_in(cfg: &RunConfig, base: &Path, config_text: Option<&str>) -> Result<RunManifest, RunError> {
    cfg.validate()?;
    // everything that can be a usage error is checked before the output
    // directory is touched
    let inputs = Inputs::load(cfg, base)?;
    let mut out = OutputDir::create(&cfg.out)?;
    if let Some(t) = config_text {
        out.add_input("config", t.as_bytes());
    }
    for (name, bytes) in &inputs.files {
        out.add_input(name, bytes);
    }
    let cache = if cfg.cache {
        let dir = std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
        EigenCache::persistent(dir).stage("cache")?
    } else {
        EigenCache::in_memory()
    };
    match cfg.command {
        Command::Eigs => eigs(cfg, &inputs, &cache, &mut out)?,
        Command::Beta => beta(cfg, &inputs, &cache, &mut out)?,
        Command::BetaInf => beta_inf(cfg, &inputs, &cache, &mut out)?,
        Command::Spectrum => spectrum(cfg, &inputs, &cache, &mut out)?,
        Command::Bands => bands(&inputs, &mut out)?,
        Command::Chom => chom(cfg, &inputs, &mut out)?,
        Command::Validate => validate(cfg, &inputs, &cache, &mut out)?,
        Command::Quasimode => quasimode(cfg, &inputs, &cache, &mut out)?,
    }
    out.finish(cfg)
}

struct Inputs {
    model: Option<InclusionModel>,
    c0: Option<Coeff>,
    c1: Option<Coeff>,
    sets: Option<(Vec<SpectralSet>, usize)>,
    files: Vec<(String, Vec<u8>)>,
}

impl Inputs {
    fn load(cfg: &RunConfig, base: &Path) -> Result<Self, RunError> {
        let mut files = Vec::new();
        if cfg.command == Command::Bands {
            let p = base.join(cfg.input.as_ref().expect("validated"));
            let text =
                std::fs::read_to_string(&p).map_err(|e| RunError::usage(format!("cannot read {}: {e}", p.display())))?;
            let sets = formats::parse_sets_json(&text).map_err(|e| RunError::usage(format!("{}: {e}", p.display())))?;
            files.push(("input".to_string(), text.into_bytes()));
            return Ok(Self { model: None, c0: None, c1: None, sets: Some(sets), files });
        }
        let (model, text) = cfg.load_model(base)?;
        if let Some(t) = text {
            files.push(("model".to_string(), t.into_bytes()));
        }
        let c0 = cfg.c0.coeff(base)?;
        let c1 = cfg.c1.coeff(base)?;
        let needs_tensors = matches!(cfg.command, Command::Chom | Command::Validate | Command::Quasimode);
        if needs_tensors && !(matches!(c0, Coeff::Tensor(_)) && matches!(c1, Coeff::Tensor(_))) {
            return Err(RunError::usage(format!("command {} needs elasticity tensors for c0 and c1", cfg.command.name())));
        }
        if cfg.command == Command::Quasimode {
            if cfg.lambda.is_none() {
                return Err(RunError::usage("command quasimode needs lambda"));
            }
            if !model.is_periodic() {
                return Err(RunError::usage("command quasimode needs a periodic model"));
            }
        }
        if cfg.command == Command::Eigs && model.shape().is_none() {
            return Err(RunError::usage("command eigs needs a model with a base shape"));
        }
        Ok(Self { model: Some(model), c0: Some(c0), c1: Some(c1), sets: None, files })
    }

    fn model(&self) -> &InclusionModel {
        self.model.as_ref().expect("loaded")
    }

    fn c0(&self) -> &Coeff {
        self.c0.as_ref().expect("loaded")
    }

    fn tensor(c: &Option<Coeff>) -> &hcband_core::tensors::ElasticityTensor {
        match c {
            Some(Coeff::Tensor(t)) => t,
            _ => unreachable!("tensors checked on load"),
        }
    }
}

/// The β-engine over `[0, λ_max]`; without an explicit `lambda_max` the
/// range is three times the first inclusion eigenvalue.
fn engine(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache) -> Result<(BetaEngine, f64), RunError> {
    let opts = EngineOptions { h: cfg.h, lambda_max: cfg.lambda_max.unwrap_or(0.0), ..Default::default() };
    let e = BetaEngine::new(inputs.model(), inputs.c0(), opts.clone(), Some(cache)).stage("spectral")?;
    match cfg.lambda_max {
        Some(l) => Ok((e, l)),
        None => {
            let l = 3.0 * e.lambda_scale();
            let e = BetaEngine::new(inputs.model(), inputs.c0(), EngineOptions { lambda_max: l, ..opts }, Some(cache))
                .stage("spectral")?;
            Ok((e, l))
        }
    }
}

/// Maps `f` over `xs` on `threads` scoped workers, preserving order.
fn par_map<T: Send>(
    threads: usize,
    xs: &[f64],
    f: impl Fn(f64) -> Result<T, RunError> + Sync,
) -> Result<Vec<T>, RunError> {
    if threads <= 1 || xs.len() < 2 {
        return xs.iter().map(|&x| f(x)).collect();
    }
    let chunk = xs.len().div_ceil(threads);
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> =
            xs.chunks(chunk).map(|c| s.spawn(move || c.iter().map(|&x| f(x)).collect::<Result<Vec<T>, _>>())).collect();
        let mut out = Vec::with_capacity(xs.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

fn eigs(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache, out: &mut OutputDir) -> Result<(), RunError> {
    let shape = inputs.model().shape().expect("checked on load");
    let problem = InclusionProblem::new(shape, inputs.c0(), cfg.h).stage("spectral")?;
    let eig = cache.get_or_compute(&problem, cfg.count, &EigOptions::default()).stage("spectral")?;
    let mut header = vec!["n", "nu", "residual"];
    let names = ["moment_1", "moment_2", "moment_3"];
    header.extend(&names[..eig.ncomp]);
    header.push("significant");
    let mut csv = Csv::new(formats::EIGS_SCHEMA, &header);
    for (n, &nu) in eig.values.iter().enumerate() {
        let mut row = vec![(n + 1).to_string(), num(nu), num(eig.residuals[n])];
        row.extend(eig.moments[n].iter().map(|&m| num(m)));
        row.push((eig.is_significant(n) as u8).to_string());
        csv.push(row);
    }
    out.write("eigs.csv", &csv.render())
}

fn upper(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::new();
    for i in 0..n {
        for j in i..n {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn beta(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache, out: &mut OutputDir) -> Result<(), RunError> {
    let (engine, lm) = engine(cfg, inputs, cache)?;
    let grid = lambda_grid(lm, cfg.grid_points);
    let sigma0 = engine.sigma_a0(lm);
    let rows = par_map(cfg.threads, &grid, |l| {
        let b = engine.beta(l).stage("zhikov")?;
        Ok(GridRow {
            lambda: l,
            beta: b.value.as_ref().map(upper),
            beta_max: b.value.as_ref().map(max_eigenvalue),
            beta_inf: None,
            count_hom: b.value.as_ref().map(nonnegative_count),
            count_g: None,
            in_sigma_a0: sigma0.contains(l, engine.guard()),
        })
    })?;
    out.write("beta.csv", &formats::grid_csv(&rows, engine.ncomp()))
}

fn inf_params(cfg: &RunConfig) -> BetaInfParams {
    BetaInfParams { cube: cfg.cells, samples: cfg.samples, seed: cfg.seed, prefer_closed_form: !cfg.monte_carlo }
}

fn beta_inf(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache, out: &mut OutputDir) -> Result<(), RunError> {
    let (engine, lm) = engine(cfg, inputs, cache)?;
    let grid = lambda_grid(lm, cfg.grid_points);
    let params = inf_params(cfg);
    let rows = par_map(cfg.threads, &grid, |l| beta_infinity(&engine, l, &params).stage("zhikov"))?;
    let mut csv = Csv::new(formats::BETA_INF_SCHEMA, &["lambda", "estimate", "closed_form", "gap", "count"]);
    let o = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in &rows {
        csv.push(vec![
            num(r.lambda),
            o(r.estimate),
            o(r.closed_form),
            o(r.gap()),
            r.count.map(|c| c.to_string()).unwrap_or_default(),
        ]);
    }
    out.write("beta_inf.csv", &csv.render())
}

fn spectrum(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache, out: &mut OutputDir) -> Result<(), RunError> {
    let (engine, lm) = engine(cfg, inputs, cache)?;
    let grid = lambda_grid(lm, cfg.grid_points);
    let a = analyze(&engine, &grid, &inf_params(cfg)).stage("zhikov")?;
    let sets = [a.sigma_a0, a.sigma_hom, a.g];
    out.write("grid.csv", &formats::grid_csv(&a.table, a.ncomp))?;
    out.write("sets.json", &formats::sets_json(&sets, a.ncomp))?;
    out.write("bands.svg", &formats::emit_band_diagram(&sets, a.ncomp))
}

fn bands(inputs: &Inputs, out: &mut OutputDir) -> Result<(), RunError> {
    let (sets, ncomp) = inputs.sets.as_ref().expect("loaded");
    out.write("bands.svg", &formats::emit_band_diagram(sets, *ncomp))
}

#[derive(Serialize)]
struct RveReport<'a> {
    schema: &'static str,
    cells: usize,
    samples: usize,
    seed: u64,
    h_cell: f64,
    spread: &'a [f64],
}

fn chom(cfg: &RunConfig, inputs: &Inputs, out: &mut OutputDir) -> Result<(), RunError> {
    let model = inputs.model();
    let c1 = Inputs::tensor(&inputs.c1);
    if model.is_periodic() {
        let period = if matches!(model.kind, ModelKind::PeriodicRotation) { 2 } else { 1 };
        let cell = generate_configuration(model, period, 0).stage("geometry")?;
        let r = periodic_corrector(&cell, c1, cfg.h_cell).stage("homog")?;
        return out.write("chom.json", &formats::json(&r.chom.to_json()));
    }
    let est = chom_rve(model, c1, cfg.cells, cfg.samples, cfg.h_cell, cfg.seed).stage("homog")?;
    out.write("chom.json", &formats::json(&est.mean.to_json()))?;
    let mut csv = Csv::new(formats::ENERGY_SCHEMA, &["sample", "c1111", "c2222", "c1212"]);
    for (i, e) in est.energies.iter().enumerate() {
        csv.push(vec![i.to_string(), num(e[0]), num(e[1]), num(e[2])]);
    }
    out.write("energies.csv", &csv.render())?;
    let rep = RveReport {
        schema: "hcband.rve/1",
        cells: cfg.cells,
        samples: cfg.samples,
        seed: cfg.seed,
        h_cell: cfg.h_cell,
        spread: &est.spread,
    };
    out.write("rve.json", &formats::json(&rep))
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    schema: &'static str,
    epsilon: f64,
    n_cells: usize,
    h_cell: f64,
    ndof: usize,
    lambda_scale: f64,
    max_distance: f64,
    /// Eigenvalues farther than 0.05·λ-scale from 𝒢.
    gap_violations: Vec<f64>,
    g: &'a SpectralSet,
}

fn validate(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache, out: &mut OutputDir) -> Result<(), RunError> {
    let (engine, lm) = engine(cfg, inputs, cache)?;
    let grid = lambda_grid(lm, cfg.grid_points);
    let a = analyze(&engine, &grid, &inf_params(cfg)).stage("zhikov")?;
    debug_assert_eq!(a.g.label, SetLabel::G);
    let c0 = Inputs::tensor(&inputs.c0);
    let c1 = Inputs::tensor(&inputs.c1);
    let budget = cfg.dof_budget.unwrap_or(DEFAULT_DOF_BUDGET);
    let rep = epsilon_spectrum(inputs.model(), c0, c1, cfg.cells, cfg.h_cell, cfg.count, cfg.seed, budget)
        .stage("validate")?
        .with_reference(&a.g);
    let mut csv = Csv::new(formats::EPS_SCHEMA, &["index", "eigenvalue", "distance_to_g"]);
    for (i, (v, d)) in rep.eigenvalues.iter().zip(&rep.distances).enumerate() {
        csv.push(vec![(i + 1).to_string(), num(*v), num(*d)]);
    }
    out.write("eps_spectrum.csv", &csv.render())?;
    let report = ValidateReport {
        schema: "hcband.validate/1",
        epsilon: rep.epsilon,
        n_cells: rep.n_cells,
        h_cell: rep.h,
        ndof: rep.ndof,
        lambda_scale: a.lambda_scale,
        max_distance: rep.max_distance(),
        gap_violations: rep.gap_violations(&a.g, 0.05 * a.lambda_scale),
        g: &a.g,
    };
    out.write("validate.json", &formats::json(&report))
}

fn quasimode(cfg: &RunConfig, inputs: &Inputs, cache: &EigenCache, out: &mut OutputDir) -> Result<(), RunError> {
    let (engine, _) = engine(cfg, inputs, cache)?;
    let c1 = Inputs::tensor(&inputs.c1);
    let model = inputs.model();
    let period = if matches!(model.kind, ModelKind::PeriodicRotation) { 2 } else { 1 };
    let cell = generate_configuration(model, period, 0).stage("geometry")?;
    let chom = periodic_corrector(&cell, c1, cfg.h_cell).stage("homog")?.chom;
    let opts = QuasimodeOptions {
        envelope: cfg.envelope.unwrap_or(1.0),
        n_cells: cfg.cells,
        h_cell: cfg.h_cell,
        wave: None,
        budget: cfg.dof_budget.unwrap_or(DEFAULT_DOF_BUDGET),
    };
    let lambda0 = cfg.lambda.expect("checked on load");
    let r = quasimode_residual(&engine, c1, &chom, lambda0, cfg.k_hat, &opts).stage("validate")?;
    out.write("quasimode.json", &formats::json(&r))
}
