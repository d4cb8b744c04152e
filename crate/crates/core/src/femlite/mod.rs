//! Minimal P1 triangular finite elements: meshes, assembly, Dirichlet
//! constraints, harmonic lifting and boundary-current observation.

mod assembly;
mod boundary;
mod mesh;

pub use assembly::{assemble_p1, interval_mass, interval_stiffness, P1Assembler, P1System, Rhs};
pub use boundary::{
    apply_dirichlet, boundary_flux, boundary_flux_gradient, constrain_load, harmonic_lift, solve_p1,
    solve_p1_with,
};
pub use mesh::{mesh_unit_disk, mesh_unit_square, BoundaryMarker, TriMesh};
