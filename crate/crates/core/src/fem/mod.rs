//! P1 finite elements: meshing and assembly of stiffness and mass forms.

pub mod assemble;
pub mod mesh;
pub mod mesher;

pub use assemble::{assemble_forms, AssembledForms, Bc, Coeff, Coefficients, Physics};
pub use mesh::{BoundaryTag, Material, Mesh, TaggedEdge, MESH_SCHEMA};
pub use mesher::{build_mesh, Domain};
