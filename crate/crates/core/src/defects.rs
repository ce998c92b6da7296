//! One- and two-defect supercell problems and the expansion coefficients
//! `A₁*,N`, `A₂*,N` and `B₁*,N`.
//!
//! Defect problems are solved for the difference with the replicated
//! periodic corrector. For a pattern `P` with indicator `χ_P`,
//! `q = w_P − w⁰` solves `−div(A_P ∇q) = div(χ_P C (∇w⁰ + e_i))`, whose
//! right-hand side is supported on the defect cells, and
//! `∫A_P(∇w_P + e_i) − ∫A_per(∇w⁰ + e_i) = ∫A_P∇q + χ_P C(∇w⁰ + e_i)`
//! elementwise, so no `O(Nᵈ)` bulk terms are ever subtracted.
//!
//! For two defects at `l` and `m` with one-defect differences `q_l`, `q_m`,
//! the pair term of the second-order sum equals
//! `∫A_{lm}∇r + χ_m C∇q_l + χ_l C∇q_m` where `r = q_{lm} − q_l − q_m`
//! solves `−div(A_{lm}∇r) = div(χ_m C∇q_l + χ_l C∇q_m)`.

use std::io::Write;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::mesh::{Bc, ElementCoefficients, SupercellMesh};
use crate::fem::solution::CorrectorSolution;
use crate::fem::solver::solve_with;
use crate::fem::system::{assemble, assemble_operator, load_vector, system_for};
use crate::homogenize::{flux_average, supercell_correctors, Discretization, Formula, HomTensor, Provenance};
use crate::material::{realize, Cell, DefectPattern, PerturbedMaterial};
use crate::tensor::{dot, unit, Mat2, Vec2};

/// Default cap on two-defect solves, `25² − 1`.
pub const DEFAULT_TWO_DEFECT_BUDGET: usize = 624;

/// Shared data for all defect problems on one supercell: the unit-cell
/// correctors and their adjoints, and the sampled coefficients.
#[derive(Clone, Debug)]
pub struct DefectSetup {
    mat: PerturbedMaterial,
    n: usize,
    disc: Discretization,
    mesh: SupercellMesh,
    w0: Vec<CorrectorSolution>,
    w0_adj: Vec<CorrectorSolution>,
    a_per_star: Mat2,
    pert_unit: Vec<Mat2>,
}

impl DefectSetup {
    pub fn new(mat: &PerturbedMaterial, n: usize, disc: &Discretization) -> Result<Self> {
        let dim = mat.dim();
        let mesh = SupercellMesh::new(dim, n, disc.density, Bc::Periodic)?;
        let unit_mesh = SupercellMesh::unit_cell(dim, disc.density)?;
        let base_coeffs = unit_mesh.sample_periodic(mat.base())?;
        let w0 = supercell_correctors(&unit_mesh, &base_coeffs, disc, None)?;
        let w0_adj = if mat.base().is_symmetric() {
            w0.clone()
        } else {
            supercell_correctors(&unit_mesh, &base_coeffs.transpose(), disc, None)?
        };
        let a_per_star = flux_average(&base_coeffs, &w0)?;
        let pert_unit = unit_mesh.sample_periodic(mat.perturbation())?.values().to_vec();
        Ok(DefectSetup {
            mat: mat.clone(),
            n,
            disc: *disc,
            mesh,
            w0,
            w0_adj,
            a_per_star,
            pert_unit,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn mesh(&self) -> &SupercellMesh {
        &self.mesh
    }

    pub fn a_per_star(&self) -> HomTensor {
        HomTensor::new(
            self.dim(),
            self.a_per_star,
            Provenance::new(Formula::Periodic, 1, Bc::Periodic, self.disc.density),
        )
    }

    pub fn unit_correctors(&self) -> &[CorrectorSolution] {
        &self.w0
    }

    fn provenance(&self, formula: Formula, bc: Bc) -> Provenance {
        Provenance::new(formula, self.n, bc, self.disc.density)
    }

    fn pattern(&self, cells: &[Cell]) -> Result<DefectPattern> {
        DefectPattern::from_cells(self.dim(), self.n, cells)
    }

    /// `∇w⁰_i + e_i` on element `e` of any mesh with the setup's density.
    fn periodic_gradient(&self, w: &[CorrectorSolution], mesh: &SupercellMesh, e: usize, i: usize) -> Vec2 {
        let g = w[i].gradient(mesh.local_element(e));
        let u = unit(i);
        [g[0] + u[0], g[1] + u[1]]
    }

    fn in_pattern(mesh: &SupercellMesh, pattern: &DefectPattern, e: usize) -> bool {
        pattern.contains_index(mesh.element_cell_index(e))
    }

    /// Per-element `C` restricted to the pattern (zero elsewhere).
    fn pattern_perturbation(&self, mesh: &SupercellMesh, pattern: &DefectPattern, e: usize) -> Mat2 {
        if Self::in_pattern(mesh, pattern, e) {
            self.pert_unit[mesh.local_element(e)]
        } else {
            Mat2::ZERO
        }
    }

    fn coefficients(&self, mesh: &SupercellMesh, pattern: &DefectPattern) -> Result<ElementCoefficients> {
        mesh.sample(&realize(&self.mat, pattern)?)
    }

    /// `χ_P C (∇w⁰_i + e_i)`, the load of the defect difference problem.
    fn defect_flux(&self, mesh: &SupercellMesh, pattern: &DefectPattern, i: usize, adjoint: bool) -> Vec<Vec2> {
        let w = if adjoint { &self.w0_adj } else { &self.w0 };
        (0..mesh.n_elements())
            .map(|e| {
                let c = self.pattern_perturbation(mesh, pattern, e);
                let c = if adjoint { c.transpose() } else { c };
                if c == Mat2::ZERO {
                    [0.0, 0.0]
                } else {
                    c.apply(self.periodic_gradient(w, mesh, e, i))
                }
            })
            .collect()
    }

    /// Differences `q_i = w_P,i − w⁰_i` for all directions on a mesh with the
    /// given boundary condition.
    pub fn defect_differences(
        &self,
        pattern: &DefectPattern,
        bc: Bc,
        adjoint: bool,
    ) -> Result<(SupercellMesh, ElementCoefficients, Vec<CorrectorSolution>)> {
        let mesh = match bc {
            Bc::Periodic => self.mesh.clone(),
            Bc::Dirichlet => SupercellMesh::new(self.dim(), self.n, self.disc.density, Bc::Dirichlet)?,
        };
        let mut coeffs = self.coefficients(&mesh, pattern)?;
        if adjoint {
            coeffs = coeffs.transpose();
        }
        let matrix = Arc::new(assemble_operator(&mesh, &coeffs)?);
        let opts = self.disc.solver();
        let q = (0..self.dim())
            .into_par_iter()
            .map(|i| {
                let rhs = load_vector(&mesh, &self.defect_flux(&mesh, pattern, i, adjoint))?;
                let sys = system_for(Arc::clone(&matrix), rhs)?;
                solve_with(&sys, &opts, None).map(|(s, _)| s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((mesh, coeffs, q))
    }

    /// `∫A_P(∇w_P + e_i) − ∫A_per(∇w⁰ + e_i)` at column `i`, evaluated
    /// elementwise from the differences.
    fn excess_flux(&self, coeffs: &ElementCoefficients, pattern: &DefectPattern, q: &[CorrectorSolution]) -> Mat2 {
        let mesh = q[0].mesh();
        let measure = mesh.element_measure();
        let mut m = Mat2::ZERO;
        for (i, qi) in q.iter().enumerate() {
            let mut acc = [0.0; 2];
            for e in 0..mesh.n_elements() {
                let f = coeffs.get(e).apply(qi.gradient(e));
                acc[0] += f[0];
                acc[1] += f[1];
                if Self::in_pattern(mesh, pattern, e) {
                    let g = self.pert_unit[mesh.local_element(e)].apply(self.periodic_gradient(&self.w0, mesh, e, i));
                    acc[0] += g[0];
                    acc[1] += g[1];
                }
            }
            for j in 0..self.dim() {
                m.0[j][i] = acc[j] * measure;
            }
        }
        m
    }

    /// `A₁*,N` with the single defect placed in cell `k`.
    pub fn first_order_at(&self, k: Cell) -> Result<HomTensor> {
        let pattern = self.pattern(&[k])?;
        let (_, coeffs, q) = self.defect_differences(&pattern, Bc::Periodic, false)?;
        Ok(HomTensor::new(
            self.dim(),
            self.excess_flux(&coeffs, &pattern, &q),
            self.provenance(Formula::FirstOrder, Bc::Periodic),
        ))
    }

    /// `∫_{Q+l} C(∇w_{l,i} + e_i)·(e_j + ∇w̃⁰_j)` from the one-defect
    /// differences at `l`.
    fn dual_from(&self, pattern: &DefectPattern, q: &[CorrectorSolution]) -> Mat2 {
        let mesh = q[0].mesh();
        let measure = mesh.element_measure();
        let d = self.dim();
        let mut m = Mat2::ZERO;
        for e in 0..mesh.n_elements() {
            if !Self::in_pattern(mesh, pattern, e) {
                continue;
            }
            let c = self.pert_unit[mesh.local_element(e)];
            for i in 0..d {
                let g0 = self.periodic_gradient(&self.w0, mesh, e, i);
                let gq = q[i].gradient(e);
                let flux = c.apply([g0[0] + gq[0], g0[1] + gq[1]]);
                for j in 0..d {
                    m.0[j][i] += measure * dot(flux, self.periodic_gradient(&self.w0_adj, mesh, e, j));
                }
            }
        }
        m
    }

    pub fn first_order(&self) -> Result<HomTensor> {
        self.first_order_at([0, 0])
    }

    pub fn first_order_dual(&self) -> Result<HomTensor> {
        let pattern = self.pattern(&[[0, 0]])?;
        let (_, _, q) = self.defect_differences(&pattern, Bc::Periodic, false)?;
        Ok(HomTensor::new(
            self.dim(),
            self.dual_from(&pattern, &q),
            self.provenance(Formula::FirstOrderDual, Bc::Periodic),
        ))
    }

    /// Both first-order formulas from one set of solves, `(volume, dual)`.
    pub fn first_order_both(&self) -> Result<(HomTensor, HomTensor)> {
        let pattern = self.pattern(&[[0, 0]])?;
        let (_, coeffs, q) = self.defect_differences(&pattern, Bc::Periodic, false)?;
        let vol = HomTensor::new(
            self.dim(),
            self.excess_flux(&coeffs, &pattern, &q),
            self.provenance(Formula::FirstOrder, Bc::Periodic),
        );
        let dual = HomTensor::new(
            self.dim(),
            self.dual_from(&pattern, &q),
            self.provenance(Formula::FirstOrderDual, Bc::Periodic),
        );
        Ok((vol, dual))
    }

    /// `B₁*,N e_i·e_j = ∫_Q C(∇w⁰_i + e_i)·(e_j + ∇w̃⁰_j) − ∫A₁⁰∇v_i·∇ṽ_j`
    /// with homogeneous Dirichlet conditions for `v`, `ṽ`.
    pub fn first_order_dirichlet(&self) -> Result<HomTensor> {
        let pattern = self.pattern(&[[0, 0]])?;
        let (mesh, coeffs, v) = self.defect_differences(&pattern, Bc::Dirichlet, false)?;
        let vt = if self.mat.is_symmetric() {
            v.clone()
        } else {
            self.defect_differences(&pattern, Bc::Dirichlet, true)?.2
        };
        let d = self.dim();
        let measure = mesh.element_measure();
        let mut m = Mat2::ZERO;
        for e in 0..mesh.n_elements() {
            let a = coeffs.get(e);
            let in_q = Self::in_pattern(&mesh, &pattern, e);
            for i in 0..d {
                let flux = a.apply(v[i].gradient(e));
                let cflux = if in_q {
                    Some(
                        self.pert_unit[mesh.local_element(e)].apply(self.periodic_gradient(&self.w0, &mesh, e, i)),
                    )
                } else {
                    None
                };
                for j in 0..d {
                    let mut s = -dot(flux, vt[j].gradient(e));
                    if let Some(cf) = cflux {
                        s += dot(cf, self.periodic_gradient(&self.w0_adj, &mesh, e, j));
                    }
                    m.0[j][i] += measure * s;
                }
            }
        }
        Ok(HomTensor::new(d, m, self.provenance(Formula::FirstOrderDirichlet, Bc::Dirichlet)))
    }

    /// Pair term `∫A_{lm}(∇w_{lm} + e) − ∫A_l(∇w_l + e) − ∫A_m(∇w_m + e) +
    /// ∫A_per(∇w⁰ + e)` for defects at `l ≠ m`, given the one-defect
    /// differences `q0` for a defect at the origin.
    fn pair_term(&self, q0: &[CorrectorSolution], l: Cell, m: Cell) -> Result<Mat2> {
        let mesh = &self.mesh;
        let pattern = self.pattern(&[l, m])?;
        let lp = self.pattern(&[l])?;
        let mp = self.pattern(&[m])?;
        let coeffs = self.coefficients(mesh, &pattern)?;
        let matrix = Arc::new(assemble_operator(mesh, &coeffs)?);
        let d = self.dim();
        let measure = mesh.element_measure();
        let opts = self.disc.solver();
        let mut out = Mat2::ZERO;
        for i in 0..d {
            let ql = q0[i].shifted(l)?;
            let qm = q0[i].shifted(m)?;
            // χ_m C∇q_l + χ_l C∇q_m
            let coupling: Vec<Vec2> = (0..mesh.n_elements())
                .map(|e| {
                    if Self::in_pattern(mesh, &mp, e) {
                        self.pert_unit[mesh.local_element(e)].apply(ql.gradient(e))
                    } else if Self::in_pattern(mesh, &lp, e) {
                        self.pert_unit[mesh.local_element(e)].apply(qm.gradient(e))
                    } else {
                        [0.0, 0.0]
                    }
                })
                .collect();
            let sys = system_for(Arc::clone(&matrix), load_vector(mesh, &coupling)?)?;
            let (r, _) = solve_with(&sys, &opts, None)?;
            let mut acc = [0.0; 2];
            for e in 0..mesh.n_elements() {
                let f = coeffs.get(e).apply(r.gradient(e));
                acc[0] += f[0] + coupling[e][0];
                acc[1] += f[1] + coupling[e][1];
            }
            for j in 0..d {
                out.0[j][i] = acc[j] * measure;
            }
        }
        Ok(out)
    }

    /// Pair term for defects at `l` and `m`, with its own one-defect solve.
    pub fn pair_contribution(&self, l: Cell, m: Cell) -> Result<Mat2> {
        if l == m {
            return Err(invalid("the two defects must occupy distinct cells"));
        }
        let (_, _, q0) = self.defect_differences(&self.pattern(&[[0, 0]])?, Bc::Periodic, false)?;
        self.pair_term(&q0, l, m)
    }

    /// `A₂*,N = ½ Σ_{k ∈ 𝒯_N, k ≠ 0} (pair term of (0, k))`.
    pub fn second_order(&self, opts: &SecondOrderOptions, progress: &(dyn Fn(Progress) + Sync)) -> Result<SecondOrder> {
        let all = DefectPattern::full(self.dim(), self.n)?;
        let ks: Vec<Cell> = all.cells().into_iter().filter(|k| *k != [0, 0]).collect();
        let required = ks.len();
        if required > opts.budget {
            if opts.allow_over_budget {
                log::warn!("{required} two-defect solves exceed the budget of {}", opts.budget);
            } else {
                return Err(Error::BudgetExceeded { required, budget: opts.budget });
            }
        }
        let (_, _, q0) = self.defect_differences(&self.pattern(&[[0, 0]])?, Bc::Periodic, false)?;
        let counter = Mutex::new(0usize);
        let terms = ks
            .par_iter()
            .map(|&k| {
                let t = self.pair_term(&q0, [0, 0], k)?;
                let mut done = counter.lock().expect("progress lock");
                *done += 1;
                progress(Progress { done: *done, total: required });
                Ok(t.scale(0.5))
            })
            .collect::<Result<Vec<Mat2>>>()?;
        let mut sum = Mat2::ZERO;
        for t in &terms {
            sum = sum + *t;
        }
        let contributions = ks
            .into_iter()
            .zip(terms)
            .map(|(k, contribution)| KContribution { k, contribution })
            .collect();
        Ok(SecondOrder {
            tensor: HomTensor::new(self.dim(), sum, self.provenance(Formula::SecondOrder, Bc::Periodic)),
            contributions,
        })
    }
}

/// Budget policy for the two-defect sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SecondOrderOptions {
    pub budget: usize,
    pub allow_over_budget: bool,
}

impl Default for SecondOrderOptions {
    fn default() -> Self {
        SecondOrderOptions {
            budget: DEFAULT_TWO_DEFECT_BUDGET,
            allow_over_budget: false,
        }
    }
}

/// Completion event of the two-defect loop; `done` increases by one per
/// event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

pub fn no_progress(_: Progress) {}

/// Contribution `½ (pair term of (0, k))` to `A₂*,N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KContribution {
    pub k: Cell,
    pub contribution: Mat2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrder {
    pub tensor: HomTensor,
    pub contributions: Vec<KContribution>,
}

impl SecondOrder {
    /// Diagnostics CSV: `k1[,k2],c11[,c12,c21,c22]`.
    pub fn write_diagnostics<W: Write>(&self, out: W) -> Result<()> {
        write_contributions(self.tensor.dim, &self.contributions, out)
    }
}

pub fn write_contributions<W: Write>(dim: usize, contributions: &[KContribution], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=dim).map(|i| format!("k{i}")).collect();
    for i in 1..=dim {
        for j in 1..=dim {
            header.push(format!("contribution_{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for c in contributions {
        let mut row: Vec<String> = c.k[..dim].iter().map(|v| v.to_string()).collect();
        for i in 0..dim {
            for j in 0..dim {
                row.push(format!("{:.12e}", c.contribution.get(i, j)));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n % 2 == 0 {
        return Err(invalid(format!("supercell width N must be odd, got {n}")));
    }
    Ok(())
}

/// `w_i^{1,0,N}`: replicated periodic corrector plus the one-defect
/// difference.
pub fn solve_one_defect(mat: &PerturbedMaterial, n: usize, disc: &Discretization, i: usize) -> Result<CorrectorSolution> {
    check_n(n)?;
    let setup = DefectSetup::new(mat, n, disc)?;
    if i >= setup.dim() {
        return Err(invalid(format!("direction {i} out of range")));
    }
    let (mesh, _, q) = setup.defect_differences(&setup.pattern(&[[0, 0]])?, Bc::Periodic, false)?;
    setup.w0[i].tile(&mesh)?.add_scaled(1.0, &q[i])
}

/// `w_i^{2,0,k,N}` with defects in cells `0` and `k`.
pub fn solve_two_defect(
    mat: &PerturbedMaterial,
    k: Cell,
    n: usize,
    disc: &Discretization,
    i: usize,
) -> Result<CorrectorSolution> {
    check_n(n)?;
    let half = (n as i64 - 1) / 2;
    let kk = if mat.dim() == 1 { [k[0], 0] } else { k };
    if kk == [0, 0] {
        return Err(invalid("the second defect must differ from the first (k = 0)"));
    }
    if kk.iter().any(|c| c.abs() > half) || (mat.dim() == 1 && k[1] != 0) {
        return Err(invalid(format!("k = {k:?} lies outside T_{n}")));
    }
    let setup = DefectSetup::new(mat, n, disc)?;
    if i >= setup.dim() {
        return Err(invalid(format!("direction {i} out of range")));
    }
    let pattern = setup.pattern(&[[0, 0], kk])?;
    let mesh = setup.mesh.clone();
    let coeffs = setup.coefficients(&mesh, &pattern)?;
    let sys = assemble(&mesh, &coeffs, &setup.defect_flux(&mesh, &pattern, i, false))?;
    let (q, _) = solve_with(&sys, &disc.solver(), None)?;
    setup.w0[i].tile(&mesh)?.add_scaled(1.0, &q)
}

pub fn first_order_correction(mat: &PerturbedMaterial, n: usize, disc: &Discretization) -> Result<HomTensor> {
    check_n(n)?;
    DefectSetup::new(mat, n, disc)?.first_order()
}

pub fn first_order_dual(mat: &PerturbedMaterial, n: usize, disc: &Discretization) -> Result<HomTensor> {
    check_n(n)?;
    DefectSetup::new(mat, n, disc)?.first_order_dual()
}

pub fn first_order_dirichlet(mat: &PerturbedMaterial, n: usize, disc: &Discretization) -> Result<HomTensor> {
    check_n(n)?;
    DefectSetup::new(mat, n, disc)?.first_order_dirichlet()
}

pub fn second_order_correction(
    mat: &PerturbedMaterial,
    n: usize,
    disc: &Discretization,
    opts: &SecondOrderOptions,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<SecondOrder> {
    check_n(n)?;
    let required = n.pow(mat.dim() as u32) - 1;
    if required > opts.budget && !opts.allow_over_budget {
        return Err(Error::BudgetExceeded { required, budget: opts.budget });
    }
    DefectSetup::new(mat, n, disc)?.second_order(opts, progress)
}

/// `A_per*`, `A₁*,N` and optionally `A₂*,N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionCoefficients {
    pub order0: HomTensor,
    pub order1: HomTensor,
    pub order2: Option<HomTensor>,
    pub n: usize,
    pub diagnostics: Vec<KContribution>,
}

impl ExpansionCoefficients {
    pub fn compute(
        mat: &PerturbedMaterial,
        n: usize,
        order: u8,
        disc: &Discretization,
        opts: &SecondOrderOptions,
        progress: &(dyn Fn(Progress) + Sync),
    ) -> Result<Self> {
        check_order(order)?;
        check_n(n)?;
        let setup = DefectSetup::new(mat, n, disc)?;
        let order1 = setup.first_order()?;
        let (order2, diagnostics) = if order == 2 {
            let s = setup.second_order(opts, progress)?;
            (Some(s.tensor), s.contributions)
        } else {
            (None, Vec::new())
        };
        Ok(ExpansionCoefficients {
            order0: setup.a_per_star(),
            order1,
            order2,
            n,
            diagnostics,
        })
    }

    pub fn dim(&self) -> usize {
        self.order0.dim
    }
}

fn check_order(order: u8) -> Result<()> {
    if !(1..=2).contains(&order) {
        return Err(invalid(format!("expansion order must be 1 or 2, got {order}")));
    }
    Ok(())
}

/// `A_per* + η A₁*,N (+ η² A₂*,N)`.
pub fn expansion(coeffs: &ExpansionCoefficients, eta: f64, order: u8) -> Result<HomTensor> {
    check_order(order)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    let mut m = coeffs.order0.matrix + coeffs.order1.matrix.scale(eta);
    if order == 2 {
        let a2 = coeffs
            .order2
            .as_ref()
            .ok_or_else(|| invalid("order 2 requested but the second-order coefficient is absent"))?;
        m = m + a2.matrix.scale(eta * eta);
    }
    let mut p = Provenance::new(Formula::Expansion, coeffs.n, Bc::Periodic, coeffs.order0.provenance.density);
    p.eta = Some(eta);
    p.order = Some(order);
    Ok(HomTensor::new(coeffs.dim(), m, p))
}
