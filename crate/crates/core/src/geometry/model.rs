use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Configuration, Placement, CELL_MARGIN};
use super::shape::{InclusionShape, SymmetryOp};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA: &str = "hcband.model/1";

/// Law of the per-cell scaling factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ScalingLaw {
    Uniform { r1: f64, r2: f64 },
    Atoms { values: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// The base shape, untransformed, in every cell.
    PeriodicSingle,
    /// Checkerboard of the base shape and its quarter-turn rotation. This is
    /// the planar counterpart of the three-orientation periodic cell.
    #[serde(alias = "periodic-triple-rotation")]
    PeriodicRotation,
    /// Independently in each cell: the base shape or its quarter-turn rotation.
    IidRotation { weights: Vec<f64> },
    /// Independently in each cell: identity, the two axis reflections, or both.
    IidReflection { weights: Vec<f64> },
    /// Independently in each cell: the base shape scaled by a random factor.
    IidScaling { scaling: ScalingLaw },
    /// No inclusions at all.
    Empty,
}

/// A lattice model: at most one inclusion per unit cell, centered in the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionModel {
    #[serde(default = "model_schema")]
    pub schema: String,
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default)]
    pub base_shape: Option<InclusionShape>,
}

fn model_schema() -> String {
    MODEL_SCHEMA.to_string()
}

/// A single point of the per-cell distribution: transform plus probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub op: SymmetryOp,
    pub scale: f64,
    pub weight: f64,
}

/// The per-cell marginal law of the inclusion transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    /// Finitely many transforms.
    Atoms(Vec<Atom>),
    /// Identity orientation, scale uniform on `[r1, r2]`.
    UniformScale { r1: f64, r2: f64 },
    /// No inclusion.
    Empty,
}

fn check_weights(w: &[f64], n: usize, what: &str) -> Result<()> {
    if w.len() != n {
        return Err(Error::Model(format!("{what}: expected {n} weights, got {}", w.len())));
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Model(format!("{what}: weights must be nonnegative")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::Model(format!("{what}: weights sum to {s}, not 1")));
    }
    Ok(())
}

const ROTATIONS: [SymmetryOp; 2] = [SymmetryOp::Identity, SymmetryOp::Rot90];
const REFLECTIONS: [SymmetryOp; 4] =
    [SymmetryOp::Identity, SymmetryOp::ReflectX1, SymmetryOp::ReflectX2, SymmetryOp::Rot180];

impl InclusionModel {
    pub fn new(kind: ModelKind, base_shape: Option<InclusionShape>) -> Result<Self> {
        let m = Self { schema: MODEL_SCHEMA.to_string(), kind, base_shape };
        m.validate()?;
        Ok(m)
    }

    pub fn periodic_single(shape: InclusionShape) -> Self {
        Self::new(ModelKind::PeriodicSingle, Some(shape)).expect("valid")
    }

    pub fn periodic_rotation(shape: InclusionShape) -> Self {
        Self::new(ModelKind::PeriodicRotation, Some(shape)).expect("valid")
    }

    pub fn iid_rotation(shape: InclusionShape) -> Self {
        Self::new(ModelKind::IidRotation { weights: vec![0.5, 0.5] }, Some(shape)).expect("valid")
    }

    pub fn iid_reflection(shape: InclusionShape) -> Self {
        Self::new(ModelKind::IidReflection { weights: vec![0.25; 4] }, Some(shape)).expect("valid")
    }

    pub fn iid_scaling(shape: InclusionShape, scaling: ScalingLaw) -> Result<Self> {
        Self::new(ModelKind::IidScaling { scaling }, Some(shape))
    }

    pub fn empty() -> Self {
        Self { schema: MODEL_SCHEMA.to_string(), kind: ModelKind::Empty, base_shape: None }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::parse("model", e))?;
        if m.schema != MODEL_SCHEMA {
            return Err(Error::parse("model", format!("unknown schema {:?}", m.schema)));
        }
        if let Some(shape) = &m.base_shape {
            // re-run shape normalization on untrusted input
            InclusionShape::new(shape.id.clone(), shape.vertices.clone())?;
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ModelKind::Empty => return Ok(()),
            ModelKind::IidRotation { weights } => check_weights(weights, 2, "iid-rotation")?,
            ModelKind::IidReflection { weights } => check_weights(weights, 4, "iid-reflection")?,
            ModelKind::IidScaling { scaling } => match scaling {
                ScalingLaw::Uniform { r1, r2 } => {
                    if !(0.0 < *r1 && r1 < r2 && *r2 <= 1.0) {
                        return Err(Error::Model(format!("scaling range must satisfy 0 < r1 < r2 <= 1, got [{r1}, {r2}]")));
                    }
                }
                ScalingLaw::Atoms { values, weights } => {
                    check_weights(weights, values.len(), "scaling atoms")?;
                    if values.is_empty() || values.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
                        return Err(Error::Model("scaling atoms must lie in (0, 1]".into()));
                    }
                }
            },
            ModelKind::PeriodicSingle | ModelKind::PeriodicRotation => {}
        }
        let shape = self.base_shape.as_ref().ok_or_else(|| Error::Model("model requires a base shape".into()))?;
        let e = shape.extent();
        let smax = self.max_scale();
        if e[0].max(e[1]) * smax > 1.0 - 2.0 * CELL_MARGIN {
            return Err(Error::Model(format!(
                "base shape {:?} scaled by {smax} does not fit a unit cell with margin {CELL_MARGIN}",
                shape.id
            )));
        }
        Ok(())
    }

    fn max_scale(&self) -> f64 {
        match &self.kind {
            ModelKind::IidScaling { scaling: ScalingLaw::Uniform { r2, .. } } => *r2,
            ModelKind::IidScaling { scaling: ScalingLaw::Atoms { values, .. } } => {
                values.iter().cloned().fold(0.0, f64::max)
            }
            _ => 1.0,
        }
    }

    pub fn shape(&self) -> Option<&InclusionShape> {
        self.base_shape.as_ref()
    }

    /// Per-cell marginal distribution, i.e. the law of the inclusion at the origin.
    pub fn marginal(&self) -> Marginal {
        let atoms = |ops: &[SymmetryOp], w: &[f64]| {
            Marginal::Atoms(
                ops.iter().zip(w).filter(|(_, w)| **w > 0.0).map(|(&op, &weight)| Atom { op, scale: 1.0, weight }).collect(),
            )
        };
        match &self.kind {
            ModelKind::Empty => Marginal::Empty,
            ModelKind::PeriodicSingle => Marginal::Atoms(vec![Atom { op: SymmetryOp::Identity, scale: 1.0, weight: 1.0 }]),
            ModelKind::PeriodicRotation => atoms(&ROTATIONS, &[0.5, 0.5]),
            ModelKind::IidRotation { weights } => atoms(&ROTATIONS, weights),
            ModelKind::IidReflection { weights } => atoms(&REFLECTIONS, weights),
            ModelKind::IidScaling { scaling: ScalingLaw::Uniform { r1, r2 } } => Marginal::UniformScale { r1: *r1, r2: *r2 },
            ModelKind::IidScaling { scaling: ScalingLaw::Atoms { values, weights } } => Marginal::Atoms(
                values
                    .iter()
                    .zip(weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(&scale, &weight)| Atom { op: SymmetryOp::Identity, scale, weight })
                    .collect(),
            ),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, ModelKind::PeriodicSingle | ModelKind::PeriodicRotation | ModelKind::Empty)
    }

    /// Expected inclusion area per unit cell.
    pub fn expected_volume_fraction(&self) -> f64 {
        let Some(shape) = &self.base_shape else { return 0.0 };
        let a = shape.area();
        match self.marginal() {
            Marginal::Empty => 0.0,
            Marginal::Atoms(atoms) => atoms.iter().map(|t| t.weight * t.scale * t.scale * a).sum(),
            Marginal::UniformScale { r1, r2 } => a * (r2.powi(3) - r1.powi(3)) / (3.0 * (r2 - r1)),
        }
    }
}

fn draw_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Samples the `l × l` window of cells `[0, l)²`. Cells are visited in
/// row-major order (x fastest) and every iid draw consumes the generator in
/// that order, so the output is a pure function of `(model, l, seed)`.
pub fn generate_configuration(model: &InclusionModel, l: usize, seed: u64) -> Result<Configuration> {
    if l == 0 {
        return Err(Error::Parameter("window side must be at least one cell".into()));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placements = Vec::with_capacity(l * l);
    let shape = model.base_shape.clone();
    for j in 0..l {
        for i in 0..l {
            let cell = [i as i64, j as i64];
            let (op, scale) = match &model.kind {
                ModelKind::Empty => continue,
                ModelKind::PeriodicSingle => (SymmetryOp::Identity, 1.0),
                ModelKind::PeriodicRotation => (ROTATIONS[(i + j) % 2], 1.0),
                ModelKind::IidRotation { weights } => (ROTATIONS[draw_index(&mut rng, weights)], 1.0),
                ModelKind::IidReflection { weights } => (REFLECTIONS[draw_index(&mut rng, weights)], 1.0),
                ModelKind::IidScaling { scaling: ScalingLaw::Uniform { r1, r2 } } => {
                    let u: f64 = rng.random();
                    (SymmetryOp::Identity, r1 + (r2 - r1) * u)
                }
                ModelKind::IidScaling { scaling: ScalingLaw::Atoms { values, weights } } => {
                    (SymmetryOp::Identity, values[draw_index(&mut rng, weights)])
                }
            };
            let base = shape.as_ref().expect("validated");
            let p = Placement { cell, shape_id: base.id.clone(), op, scale };
            p.check_fits(base)?;
            placements.push(p);
        }
    }
    Ok(Configuration::new(l, placements, shape.into_iter().collect(), seed))
}
