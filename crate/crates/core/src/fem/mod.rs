//! P1 finite elements on structured supercell meshes.

pub mod mesh;
pub mod solution;
pub mod solver;
pub mod system;

pub use mesh::{Bc, ElementCoefficients, SupercellMesh};
pub use solution::{energy_product, CorrectorSolution};
pub use solver::{solve, solve_with, SolveStats, SolverOptions, DEFAULT_MAX_ITERATIONS, DEFAULT_REL_TOL};
pub use system::{assemble, assemble_operator, load_vector, system_for, CsrMatrix, LinearSystem, Nullspace};
