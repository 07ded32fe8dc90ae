//! Inclusion shapes, lattice inclusion models, sampled windows, and the
//! geometric admissibility checks (diameter, containment, disjointness).

pub mod config;
pub mod model;
pub mod shape;

pub use config::{
    validate_assumptions, volume_fraction_average, Configuration, InclusionCheck, Placement, ValidationReport,
    CELL_MARGIN, MAX_DIAMETER,
};
pub use model::{generate_configuration, Atom, InclusionModel, Marginal, ModelKind, ScalingLaw};
pub use shape::{InclusionShape, Point, SymmetryOp};
