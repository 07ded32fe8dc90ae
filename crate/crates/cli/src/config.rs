//! Run configuration: a TOML file, overridden field by field from the
//! command line.

use std::path::{Path, PathBuf};

use hcband_core::fem::Coeff;
use hcband_core::geometry::InclusionModel;
use hcband_core::tensors::{make_isotropic, ElasticityTensor, IsotropicModuli, TensorFile};
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eigs,
    Beta,
    BetaInf,
    Spectrum,
    Bands,
    Chom,
    Validate,
    Quasimode,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eigs => "eigs",
            Command::Beta => "beta",
            Command::BetaInf => "beta-inf",
            Command::Spectrum => "spectrum",
            Command::Bands => "bands",
            Command::Chom => "chom",
            Command::Validate => "validate",
            Command::Quasimode => "quasimode",
        }
    }
}

/// Material of one phase: `[c]` is a scalar coefficient, `[c1, c2]` the
/// isotropic law `c1 tr(ξ) I + c2 ξ`, a string names a tensor JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialSpec {
    Moduli(Vec<f64>),
    File(PathBuf),
}

impl MaterialSpec {
    pub fn coeff(&self, base: &Path) -> Result<Coeff, RunError> {
        match self {
            MaterialSpec::Moduli(v) => match v.as_slice() {
                [c] if *c > 0.0 && c.is_finite() => Ok(Coeff::Scalar(*c)),
                [c] => Err(RunError::usage(format!("scalar coefficient must be positive, got {c}"))),
                [c1, c2] => Ok(Coeff::Tensor(make_isotropic(IsotropicModuli::new(*c1, *c2)?, 2)?)),
                _ => Err(RunError::usage("a material is [c] or [c1, c2] or a tensor file path")),
            },
            MaterialSpec::File(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| RunError::usage(format!("cannot read {}: {e}", path.display())))?;
                let t: TensorFile = serde_json::from_str(&text)
                    .map_err(|e| RunError::usage(format!("{}: {e}", path.display())))?;
                Ok(Coeff::Tensor(t.into_tensor()?))
            }
        }
    }

    pub fn tensor(&self, base: &Path) -> Result<ElasticityTensor, RunError> {
        match self.coeff(base)? {
            Coeff::Tensor(t) => Ok(t),
            Coeff::Scalar(_) => Err(RunError::usage("this command needs elasticity tensors, not scalar coefficients")),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_h() -> f64 {
    0.02
}

fn default_grid() -> usize {
    400
}

fn default_cells() -> usize {
    8
}

fn default_samples() -> usize {
    64
}

fn default_count() -> usize {
    20
}

fn default_seed() -> u64 {
    1
}

fn default_threads() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_c0() -> MaterialSpec {
    MaterialSpec::Moduli(vec![1.0, 0.5])
}

fn default_c1() -> MaterialSpec {
    MaterialSpec::Moduli(vec![1.0, 2.0])
}

fn default_h_cell() -> f64 {
    1.0 / 16.0
}

fn default_k_hat() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Inline model (same fields as the model JSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<InclusionModel>,
    /// Model JSON file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    /// Inclusion material (soft phase).
    #[serde(default = "default_c0")]
    pub c0: MaterialSpec,
    /// Matrix material (stiff phase).
    #[serde(default = "default_c1")]
    pub c1: MaterialSpec,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Mesh size on the reference inclusion.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Upper end of the λ-range; defaults to three times the first
    /// inclusion eigenvalue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    /// Single λ for `quasimode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Cube side L for β∞, cells per side for the torus and the RVE.
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Eigenpairs per solve.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_true")]
    pub cache: bool,
    /// Use the Monte Carlo estimator for β∞ even when a closed form exists.
    #[serde(default)]
    pub monte_carlo: bool,
    /// Mesh size per cell for the torus and the cell problem.
    #[serde(default = "default_h_cell")]
    pub h_cell: f64,
    #[serde(default = "default_k_hat")]
    pub k_hat: [f64; 2],
    /// Envelope width for `quasimode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<f64>,
    /// `sets.json` to render for `bands`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof_budget: Option<usize>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        let text = format!("command = \"{}\"", command.name());
        toml::from_str(&text).expect("defaults parse")
    }

    pub fn from_toml_str(s: &str) -> Result<Self, RunError> {
        toml::from_str(s).map_err(|e| RunError::usage(format!("config: {}", e.message())))
    }

    /// Checks every documented range; a failure is a usage error.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::usage(m));
        if !(self.h > 0.0 && self.h <= 0.25) {
            return bad(format!("h must lie in (0, 0.25], got {}", self.h));
        }
        if !(self.h_cell > 0.0 && self.h_cell <= 0.5) {
            return bad(format!("h_cell must lie in (0, 0.5], got {}", self.h_cell));
        }
        if let Some(l) = self.lambda_max {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda_max must be positive and finite, got {l}"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda must be nonnegative and finite, got {l}"));
            }
        }
        if !(2..=100_000).contains(&self.grid_points) {
            return bad(format!("grid_points must lie in [2, 100000], got {}", self.grid_points));
        }
        if !(1..=256).contains(&self.cells) {
            return bad(format!("cells must lie in [1, 256], got {}", self.cells));
        }
        if self.samples == 0 || self.samples > 1_000_000 {
            return bad(format!("samples must lie in [1, 1000000], got {}", self.samples));
        }
        if self.count == 0 || self.count > 10_000 {
            return bad(format!("count must lie in [1, 10000], got {}", self.count));
        }
        if !(1..=1024).contains(&self.threads) {
            return bad(format!("threads must lie in [1, 1024], got {}", self.threads));
        }
        if !(self.k_hat[0].hypot(self.k_hat[1]) > 0.0) {
            return bad("k_hat must be nonzero".into());
        }
        if let Some(e) = self.envelope {
            if !(e > 0.0 && e <= 1.0) {
                return bad(format!("envelope must lie in (0, 1], got {e}"));
            }
        }
        if self.model.is_some() && self.model_file.is_some() {
            return bad("give either model or model_file, not both".into());
        }
        let needs_model = !matches!(self.command, Command::Bands);
        if needs_model && self.model.is_none() && self.model_file.is_none() {
            return bad(format!("command {} needs a model", self.command.name()));
        }
        if self.command == Command::Bands && self.input.is_none() {
            return bad("command bands needs input (a sets.json file)".into());
        }
        Ok(())
    }

    /// The model, loading `model_file` relative to `base`.
    pub fn load_model(&self, base: &Path) -> Result<(InclusionModel, Option<String>), RunError> {
        if let Some(m) = &self.model {
            m.validate()?;
            return Ok((m.clone(), None));
        }
        let p = self.model_file.as_ref().ok_or_else(|| RunError::usage("no model given"))?;
        let path = base.join(p);
        let text =
            std::fs::read_to_string(&path).map_err(|e| RunError::usage(format!("cannot read {}: {e}", path.display())))?;
        let m = InclusionModel::from_json_str(&text)?;
        Ok((m, Some(text)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::new(Command::Spectrum);
        assert_eq!(c.grid_points, 400);
        assert_eq!(c.samples, 64);
        assert!(c.cache);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_usage_errors() {
        assert!(RunConfig::from_toml_str("command = \"beta\"\nbogus = 1").is_err());
        let mut c = RunConfig::new(Command::BetaInf);
        c.model = Some(InclusionModel::empty());
        assert!(c.validate().is_ok());
        c.samples = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn inline_model_parses() {
        let text = r#"
command = "spectrum"
c0 = [1.0, 0.5]
[model]
kind = "periodic-single"
base_shape = { id = "sq", vertices = [[-0.2, -0.2], [0.2, -0.2], [0.2, 0.2], [-0.2, 0.2]] }
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        c.validate().unwrap();
        let (m, _) = c.load_model(Path::new(".")).unwrap();
        assert!(m.is_periodic());
    }
}
