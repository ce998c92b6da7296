//! Homogenization of weakly random perturbations of periodic materials.
//!
//! Apparent tensors of randomly perturbed supercells are computed by
//! Monte-Carlo sampling and compared against the deterministic defect
//! expansion `A_per* + η A₁*,N + η² A₂*,N`.

pub mod analysis;
pub mod defects;
pub mod error;
pub mod fem;
pub mod homogenize;
pub mod material;
pub mod oned;
pub mod stochastic;
pub mod tensor;

pub use error::{Error, Result};
pub use fem::{Bc, CorrectorSolution, SupercellMesh};
pub use material::{
    checkerboard, laminate, material_one, material_one_dim, material_two, realize, sample_bernoulli_pattern, Cell,
    DefectPattern, MaterialSpec, PerturbedMaterial, SupercellField, TensorField,
};
pub use tensor::{Mat2, Vec2};
pub use homogenize::{apparent_tensor, homogenized_tensor, Discretization, Formula, HomTensor, Provenance};
