//! Periodic cell problems and homogenized / apparent tensors.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::mesh::{Bc, ElementCoefficients, SupercellMesh};
use crate::fem::solution::CorrectorSolution;
use crate::fem::solver::{solve_with, SolverOptions, DEFAULT_MAX_ITERATIONS, DEFAULT_REL_TOL};
use crate::fem::system::{assemble_operator, load_vector, system_for, CsrMatrix};
use crate::material::{SupercellField, TensorField};
use crate::tensor::{dot, unit, Mat2, Vec2};

pub const DEFAULT_DENSITY: usize = 10;

/// Mesh density (cells per unit edge) and linear-solver settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub density: usize,
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            density: DEFAULT_DENSITY,
            rel_tol: DEFAULT_REL_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl Discretization {
    pub fn with_density(density: usize) -> Self {
        Discretization { density, ..Default::default() }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.rel_tol,
            max_iterations: self.max_iterations,
        }
    }
}

/// Which formula produced a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    Periodic,
    Apparent,
    FirstOrder,
    FirstOrderDual,
    FirstOrderDirichlet,
    SecondOrder,
    Expansion,
    MonteCarloMean,
    ArithmeticMean,
    HarmonicMean,
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub formula: Formula,
    pub n: usize,
    pub bc: Bc,
    pub density: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u8>,
}

impl Provenance {
    pub fn new(formula: Formula, n: usize, bc: Bc, density: usize) -> Self {
        Provenance {
            formula,
            n,
            bc,
            density,
            seed: None,
            eta: None,
            order: None,
        }
    }
}

/// A `d × d` effective tensor with the metadata needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "HomTensorRepr", try_from = "HomTensorRepr")]
pub struct HomTensor {
    pub dim: usize,
    pub matrix: Mat2,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct HomTensorRepr {
    matrix: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl From<HomTensor> for HomTensorRepr {
    fn from(t: HomTensor) -> Self {
        HomTensorRepr {
            matrix: t.matrix.to_rows(t.dim),
            provenance: t.provenance,
        }
    }
}

impl TryFrom<HomTensorRepr> for HomTensor {
    type Error = Error;
    fn try_from(r: HomTensorRepr) -> Result<Self> {
        let dim = r.matrix.len();
        let matrix = Mat2::from_rows(&r.matrix).ok_or_else(|| Error::Parse("matrix must be 1x1 or 2x2".into()))?;
        Ok(HomTensor {
            dim,
            matrix,
            provenance: r.provenance,
        })
    }
}

impl HomTensor {
    pub fn new(dim: usize, matrix: Mat2, provenance: Provenance) -> Self {
        HomTensor { dim, matrix, provenance }
    }

    /// Entry `(i, j)`, zero-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.matrix.is_symmetric(tol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn csv_header(dim: usize) -> Vec<String> {
        let mut h: Vec<String> = ["formula", "n", "bc", "density", "seed", "eta", "order"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 1..=dim {
            for j in 1..=dim {
                h.push(format!("a{i}{j}"));
            }
        }
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let p = &self.provenance;
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut r = vec![
            p.formula.to_string(),
            p.n.to_string(),
            p.bc.to_string(),
            p.density.to_string(),
            opt(p.seed.map(|s| s.to_string())),
            opt(p.eta.map(|e| e.to_string())),
            opt(p.order.map(|o| o.to_string())),
        ];
        for i in 0..self.dim {
            for j in 0..self.dim {
                r.push(format!("{:.12e}", self.matrix.get(i, j)));
            }
        }
        r
    }
}

/// Per-element flux `A e_i`, the load of the cell problem in direction `i`.
fn cell_flux(coeffs: &ElementCoefficients, i: usize) -> Vec<Vec2> {
    let e = unit(i);
    coeffs.values().iter().map(|a| a.apply(e)).collect()
}

/// Solves `-div(A(∇w_i + e_i)) = 0` on `mesh` for every direction `i`,
/// sharing one assembled operator.
pub fn supercell_correctors(
    mesh: &SupercellMesh,
    coeffs: &ElementCoefficients,
    disc: &Discretization,
    guesses: Option<&[CorrectorSolution]>,
) -> Result<Vec<CorrectorSolution>> {
    let matrix = Arc::new(assemble_operator(mesh, coeffs)?);
    correctors_for(&matrix, coeffs, disc, guesses)
}

pub(crate) fn correctors_for(
    matrix: &Arc<CsrMatrix>,
    coeffs: &ElementCoefficients,
    disc: &Discretization,
    guesses: Option<&[CorrectorSolution]>,
) -> Result<Vec<CorrectorSolution>> {
    let mesh = matrix.mesh();
    let opts = disc.solver();
    (0..mesh.dim())
        .into_par_iter()
        .map(|i| {
            let rhs = load_vector(mesh, &cell_flux(coeffs, i))?;
            let sys = system_for(Arc::clone(matrix), rhs)?;
            let guess = guesses.map(|g| g[i].values());
            let (sol, stats) = solve_with(&sys, &opts, guess)?;
            log::debug!(
                "corrector e{} on I_{} ({} dofs): {} iterations",
                i + 1,
                mesh.n(),
                mesh.n_dofs(),
                stats.iterations
            );
            Ok(sol)
        })
        .collect()
}

/// `(1/|I_N|) Σ_T |T| A_T (∇w_i + e_i)` stored column by column, so that
/// entry `(j, i)` is the `e_j` component.
pub fn flux_average(coeffs: &ElementCoefficients, correctors: &[CorrectorSolution]) -> Result<Mat2> {
    let mesh = correctors
        .first()
        .ok_or_else(|| invalid("no correctors given"))?
        .mesh()
        .clone();
    let measure = mesh.element_measure();
    let mut m = Mat2::ZERO;
    for (i, w) in correctors.iter().enumerate() {
        if w.mesh() != &mesh || coeffs.len() != mesh.n_elements() {
            return Err(Error::MeshMismatch("correctors and coefficients disagree".into()));
        }
        let e = unit(i);
        let mut acc = [0.0; 2];
        for (t, g) in w.gradients().iter().enumerate() {
            let f = coeffs.get(t).apply([g[0] + e[0], g[1] + e[1]]);
            acc[0] += f[0];
            acc[1] += f[1];
        }
        for j in 0..mesh.dim() {
            m.0[j][i] = acc[j] * measure / mesh.volume();
        }
    }
    Ok(m)
}

/// `(1/|I_N|) ∫ A(∇w_i + e_i)·(∇w_j + e_j)` at entry `(j, i)`.
pub fn energy_average(coeffs: &ElementCoefficients, correctors: &[CorrectorSolution]) -> Result<Mat2> {
    let mesh = correctors
        .first()
        .ok_or_else(|| invalid("no correctors given"))?
        .mesh()
        .clone();
    let d = mesh.dim();
    let measure = mesh.element_measure();
    let mut m = Mat2::ZERO;
    for i in 0..d {
        for j in 0..d {
            let (ei, ej) = (unit(i), unit(j));
            let mut acc = 0.0;
            for t in 0..mesh.n_elements() {
                let gi = correctors[i].gradient(t);
                let gj = correctors[j].gradient(t);
                acc += dot(coeffs.get(t).apply([gi[0] + ei[0], gi[1] + ei[1]]), [gj[0] + ej[0], gj[1] + ej[1]]);
            }
            m.0[j][i] = acc * measure / mesh.volume();
        }
    }
    Ok(m)
}

/// Corrector `w_i` of the periodic cell problem on `Q`, zero mean.
pub fn solve_cell_problem(field: &TensorField, i: usize, disc: &Discretization) -> Result<CorrectorSolution> {
    if i >= field.dim() {
        return Err(invalid(format!("direction {i} out of range for d = {}", field.dim())));
    }
    let mut all = solve_cell_problems(field, disc)?;
    Ok(all.swap_remove(i))
}

/// Corrector `w̃_j` of the adjoint cell problem (coefficient `Aᵀ`).
pub fn solve_adjoint_cell_problem(field: &TensorField, j: usize, disc: &Discretization) -> Result<CorrectorSolution> {
    solve_cell_problem(&field.transpose(), j, disc)
}

/// All `d` unit-cell correctors.
pub fn solve_cell_problems(field: &TensorField, disc: &Discretization) -> Result<Vec<CorrectorSolution>> {
    let mesh = SupercellMesh::unit_cell(field.dim(), disc.density)?;
    let coeffs = mesh.sample_periodic(field)?;
    supercell_correctors(&mesh, &coeffs, disc, None)
}

/// `A*_{ji} = ∫_Q A(∇w_i + e_i)·e_j`.
pub fn homogenized_tensor(field: &TensorField, disc: &Discretization) -> Result<HomTensor> {
    let mesh = SupercellMesh::unit_cell(field.dim(), disc.density)?;
    let coeffs = mesh.sample_periodic(field)?;
    let w = supercell_correctors(&mesh, &coeffs, disc, None)?;
    Ok(HomTensor::new(
        field.dim(),
        flux_average(&coeffs, &w)?,
        Provenance::new(Formula::Periodic, 1, Bc::Periodic, disc.density),
    ))
}

/// `A*,N e_i = (1/Nᵈ) ∫_{I_N} A(∇w_i + e_i)` with `w_i` solving the
/// supercell problem under `bc`.
pub fn apparent_tensor(field: &SupercellField, bc: Bc, disc: &Discretization) -> Result<HomTensor> {
    let mesh = SupercellMesh::new(field.dim(), field.n(), disc.density, bc)?;
    let coeffs = mesh.sample(field)?;
    let guesses = match bc {
        Bc::Periodic => {
            let unit = solve_cell_problems(field.base(), disc)?;
            Some(unit.iter().map(|w| w.tile(&mesh)).collect::<Result<Vec<_>>>()?)
        }
        Bc::Dirichlet => None,
    };
    let w = supercell_correctors(&mesh, &coeffs, disc, guesses.as_deref())?;
    Ok(HomTensor::new(
        field.dim(),
        flux_average(&coeffs, &w)?,
        Provenance::new(Formula::Apparent, field.n(), bc, disc.density),
    ))
}

/// Voigt (arithmetic mean of `A`) and Reuss (inverse of the mean of `A⁻¹`)
/// tensors of a sampled field, returned as `(reuss, voigt)`.
pub fn voigt_reuss(coeffs: &ElementCoefficients) -> Result<(Mat2, Mat2)> {
    let d = coeffs.dim();
    let n = coeffs.len() as f64;
    let mut mean = Mat2::ZERO;
    let mut inv_mean = Mat2::ZERO;
    for a in coeffs.values() {
        mean = mean + *a;
        inv_mean = inv_mean + a.inverse(d).ok_or_else(|| invalid("singular coefficient"))?;
    }
    let voigt = mean.scale(1.0 / n);
    let reuss = inv_mean
        .scale(1.0 / n)
        .inverse(d)
        .ok_or_else(|| invalid("singular harmonic mean"))?;
    Ok((reuss, voigt))
}

pub fn arithmetic_mean(field: &TensorField, density: usize) -> Result<HomTensor> {
    let mesh = SupercellMesh::unit_cell(field.dim(), density)?;
    let (_, voigt) = voigt_reuss(&mesh.sample_periodic(field)?)?;
    Ok(HomTensor::new(
        field.dim(),
        voigt,
        Provenance::new(Formula::ArithmeticMean, 1, Bc::Periodic, density),
    ))
}

pub fn harmonic_mean(field: &TensorField, density: usize) -> Result<HomTensor> {
    let mesh = SupercellMesh::unit_cell(field.dim(), density)?;
    let (reuss, _) = voigt_reuss(&mesh.sample_periodic(field)?)?;
    Ok(HomTensor::new(
        field.dim(),
        reuss,
        Provenance::new(Formula::HarmonicMean, 1, Bc::Periodic, density),
    ))
}

/// `lower ≤ t ≤ upper` as quadratic forms, up to `tol` relative to `upper`.
pub fn within_bounds(t: &Mat2, lower: &Mat2, upper: &Mat2, dim: usize, tol: f64) -> bool {
    let scale = upper.operator_norm(dim).max(f64::MIN_POSITIVE);
    let lo = (*t - *lower).sym_eigenvalues(dim)[0];
    let hi = (*upper - *t).sym_eigenvalues(dim)[0];
    lo >= -tol * scale && hi >= -tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{checkerboard, laminate, material_one, DefectPattern};
    use approx::assert_relative_eq;

    fn disc(density: usize) -> Discretization {
        Discretization::with_density(density)
    }

    #[test]
    fn constant_field_has_zero_corrector() {
        let f = TensorField::constant(2, 7.0).unwrap();
        let w = solve_cell_problem(&f, 0, &disc(6)).unwrap();
        assert!(w.max_abs() < 1e-14);
        let t = homogenized_tensor(&f, &disc(6)).unwrap();
        assert_relative_eq!(t.get(0, 0), 7.0, epsilon = 1e-12);
        assert_relative_eq!(t.get(1, 1), 7.0, epsilon = 1e-12);
        assert!(t.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn laminate_corrector_matches_closed_form() {
        let f = laminate(20.0, 100.0).unwrap();
        let mesh = SupercellMesh::unit_cell(2, 10).unwrap();
        let coeffs = mesh.sample_periodic(&f).unwrap();
        let w1 = solve_cell_problem(&f, 0, &disc(10)).unwrap();
        let a_star = 240.0 / 7.0;
        for e in 0..mesh.n_elements() {
            let a = coeffs.get(e).get(0, 0);
            assert_relative_eq!(w1.gradient(e)[0], a_star / a - 1.0, epsilon = 1e-8);
            assert!(w1.gradient(e)[1].abs() < 1e-8);
        }
        let w2 = solve_cell_problem(&f, 1, &disc(10)).unwrap();
        assert!(w2.max_abs() < 1e-12);
    }

    #[test]
    fn laminate_tensor() {
        let t = homogenized_tensor(&laminate(20.0, 100.0).unwrap(), &disc(10)).unwrap();
        assert_relative_eq!(t.get(0, 0), 240.0 / 7.0, max_relative = 1e-9);
        assert_relative_eq!(t.get(1, 1), 70.0, max_relative = 1e-9);
        assert!(t.get(0, 1).abs() < 1e-8);
    }

    #[test]
    fn checkerboard_approaches_geometric_mean_from_above() {
        let target = 2400f64.sqrt();
        let errs: Vec<f64> = [10, 20]
            .iter()
            .map(|&m| {
                let t = homogenized_tensor(&checkerboard(20.0, 120.0).unwrap(), &disc(m)).unwrap();
                assert_relative_eq!(t.get(0, 0), t.get(1, 1), max_relative = 1e-10);
                t.get(0, 0) - target
            })
            .collect();
        // conforming elements overestimate; corner singularities give first order
        assert!(errs[0] > 0.0 && errs[1] > 0.0);
        let ratio = errs[0] / errs[1];
        assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn adjoint_of_non_symmetric_field() {
        let f = TensorField::new(2, Mat2::new(2.0, 1.0, 0.0, 2.0), vec![]).unwrap();
        let inc = material_one(1.0, 3.0, 0.3).unwrap();
        let f = f.plus(inc.base()).unwrap();
        let adj = solve_adjoint_cell_problem(&f, 0, &disc(8)).unwrap();
        let direct = solve_cell_problem(&f.transpose(), 0, &disc(8)).unwrap();
        for (a, b) in adj.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_supercell_collapses_to_unit_cell() {
        let mat = material_one(20.0, 100.0, 0.3).unwrap();
        let t1 = homogenized_tensor(mat.base(), &disc(6)).unwrap();
        let sup = crate::realize(&mat, &DefectPattern::empty(2, 3).unwrap()).unwrap();
        let t3 = apparent_tensor(&sup, Bc::Periodic, &disc(6)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((t1.get(i, j) - t3.get(i, j)).abs() < 1e-7 * t1.get(0, 0));
            }
        }
        assert_eq!(t3.provenance.n, 3);
    }

    #[test]
    fn energy_form_agrees_with_flux_form() {
        let mat = material_one(20.0, 100.0, 0.3).unwrap();
        let mesh = SupercellMesh::unit_cell(2, 10).unwrap();
        let coeffs = mesh.sample_periodic(mat.base()).unwrap();
        let w = supercell_correctors(&mesh, &coeffs, &disc(10), None).unwrap();
        let a = flux_average(&coeffs, &w).unwrap();
        let b = energy_average(&coeffs, &w).unwrap();
        assert!((a - b).max_abs() < 1e-7 * a.max_abs());
    }

    #[test]
    fn json_roundtrip() {
        let t = homogenized_tensor(&laminate(20.0, 100.0).unwrap(), &disc(4)).unwrap();
        let s = t.to_json().unwrap();
        assert!(s.contains("\"matrix\"") && s.contains("\"periodic\""));
        let back: HomTensor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.csv_record().len(), HomTensor::csv_header(2).len());
    }

    #[test]
    fn mesh_refinement_changes_material_one_little() {
        let mat = material_one(20.0, 100.0, 0.3).unwrap();
        let a = homogenized_tensor(mat.base(), &disc(10)).unwrap().get(0, 0);
        let b = homogenized_tensor(mat.base(), &disc(20)).unwrap().get(0, 0);
        assert!((a - b).abs() < 0.02 * b, "{a} vs {b}");
    }
}
