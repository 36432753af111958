//! Local multipole expansion of unit potentials on spherical Fibonacci designs.

pub mod basis;
pub mod expansion;
pub mod grid;
pub mod harmonics;

pub use basis::{build_design_basis, DesignBasis};
pub use expansion::{
    expand_along_path, expand_along_path_cached, expand_potential, transform_design_points,
    ExpansionSet, LocalFrame,
};
pub use grid::{fibonacci_grid, DesignGrid};
pub use harmonics::solid_harmonic_eval;
