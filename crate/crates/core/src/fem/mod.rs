//! Structured Q4 meshes, soft-kill assembly and the compliance/volume functionals.

mod density;
mod element;
mod mesh;
mod problem;

pub use density::{volume, DensityVector, VariationVector};
pub use element::{element_sqrt, element_stiffness_q4, ElementMatrix, Material};
pub use mesh::{Axis, Mesh, MeshBuilder};
pub use problem::{assemble_global, compliance, FemProblem, LoadBuilder};
