use crate::error::{invalid, Error, Result};
use crate::fem::mesh::{Bc, ElementCoefficients, SupercellMesh, NO_DOF};
use crate::material::Cell;
use crate::tensor::{dot, Vec2};

/// Nodal P1 field on a supercell mesh together with its elementwise
/// gradient.
#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    mesh: SupercellMesh,
    values: Vec<f64>,
    gradient: Vec<Vec2>,
}

impl CorrectorSolution {
    pub fn from_values(mesh: SupercellMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_dofs() {
            return Err(Error::MeshMismatch(format!(
                "{} nodal values for a mesh with {} DOFs",
                values.len(),
                mesh.n_dofs()
            )));
        }
        let nloc = mesh.nodes_per_element();
        let gradient = (0..mesh.n_elements())
            .map(|e| {
                let grads = mesh.basis_gradients(e);
                let mut g = [0.0; 2];
                for (l, &d) in mesh.element_dofs(e).iter().enumerate().take(nloc) {
                    if d != NO_DOF {
                        let u = values[d as usize];
                        g[0] += u * grads[l][0];
                        g[1] += u * grads[l][1];
                    }
                }
                g
            })
            .collect();
        Ok(CorrectorSolution { mesh, values, gradient })
    }

    pub fn zero(mesh: &SupercellMesh) -> Self {
        let n = mesh.n_dofs();
        Self::from_values(mesh.clone(), vec![0.0; n]).expect("sizes agree")
    }

    pub fn mesh(&self) -> &SupercellMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn gradient(&self, e: usize) -> Vec2 {
        self.gradient[e]
    }

    pub fn gradients(&self) -> &[Vec2] {
        &self.gradient
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Replicates a unit-cell corrector over a periodic supercell of the same
    /// density.
    pub fn tile(&self, target: &SupercellMesh) -> Result<CorrectorSolution> {
        let src = &self.mesh;
        if src.n() != 1 || src.bc() != Bc::Periodic {
            return Err(invalid("only unit-cell periodic correctors can be tiled"));
        }
        if target.bc() != Bc::Periodic || target.density() != src.density() || target.dim() != src.dim() {
            return Err(Error::MeshMismatch("tiling needs a periodic target of equal density".into()));
        }
        let m = src.density();
        let p = target.per_edge();
        let values = (0..target.n_dofs())
            .map(|d| {
                let (a, b) = (d % p, d / p);
                self.values[a % m + if src.dim() == 2 { m * (b % m) } else { 0 }]
            })
            .collect();
        CorrectorSolution::from_values(target.clone(), values)
    }

    /// Translation by the lattice vector `k` on the periodic supercell:
    /// the result at `x + k` equals `self` at `x`.
    pub fn shifted(&self, k: Cell) -> Result<CorrectorSolution> {
        let mesh = &self.mesh;
        if mesh.bc() != Bc::Periodic {
            return Err(invalid("translations are only defined on periodic supercells"));
        }
        let p = mesh.per_edge() as i64;
        let m = mesh.density() as i64;
        let (sa, sb) = (k[0] * m, k[1] * m);
        let values = (0..mesh.n_dofs())
            .map(|d| {
                let (a, b) = ((d as i64) % p, (d as i64) / p);
                let src_a = (a - sa).rem_euclid(p);
                let src_b = if mesh.dim() == 2 { (b - sb).rem_euclid(p) } else { 0 };
                self.values[(src_a + p * src_b) as usize]
            })
            .collect();
        CorrectorSolution::from_values(mesh.clone(), values)
    }

    /// Pointwise `self + s·other`.
    pub fn add_scaled(&self, s: f64, other: &CorrectorSolution) -> Result<CorrectorSolution> {
        if self.mesh != other.mesh {
            return Err(Error::MeshMismatch("cannot add fields on different meshes".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        CorrectorSolution::from_values(self.mesh.clone(), values)
    }
}

/// `Σ_T |T| A_T ∇u · ∇v`, the discrete `∫ A∇u·∇v`.
pub fn energy_product(
    coeffs: &ElementCoefficients,
    u: &CorrectorSolution,
    v: &CorrectorSolution,
) -> Result<f64> {
    if u.mesh != v.mesh {
        return Err(Error::MeshMismatch("energy product of fields on different meshes".into()));
    }
    if coeffs.len() != u.mesh.n_elements() {
        return Err(Error::MeshMismatch(format!(
            "{} coefficients for {} elements",
            coeffs.len(),
            u.mesh.n_elements()
        )));
    }
    let measure = u.mesh.element_measure();
    Ok((0..coeffs.len())
        .map(|e| measure * dot(coeffs.get(e).apply(u.gradient[e]), v.gradient[e]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mat2;

    fn wavy(mesh: &SupercellMesh) -> CorrectorSolution {
        let vals = (0..mesh.n_dofs())
            .map(|d| {
                let x = mesh.dof_position(d);
                (2.0 * std::f64::consts::PI * x[0]).sin() * (1.0 + x[1])
            })
            .collect();
        CorrectorSolution::from_values(mesh.clone(), vals).unwrap()
    }

    #[test]
    fn gradient_is_exact_for_linear_data() {
        let mesh = SupercellMesh::new(2, 1, 5, Bc::Dirichlet).unwrap();
        // u = 2x - 3y restricted to interior nodes is not linear on boundary
        // elements, so test elements away from the boundary only
        let vals: Vec<f64> = (0..mesh.n_dofs()).map(|d| {
            let x = mesh.dof_position(d);
            2.0 * x[0] - 3.0 * x[1]
        }).collect();
        let u = CorrectorSolution::from_values(mesh.clone(), vals).unwrap();
        for e in 0..mesh.n_elements() {
            if mesh.element_dofs(e).iter().all(|&d| d != NO_DOF) {
                let g = u.gradient(e);
                assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_with_zero_is_zero() {
        let mesh = SupercellMesh::new(2, 1, 6, Bc::Periodic).unwrap();
        let c = ElementCoefficients::new(2, vec![Mat2::scalar(2, 3.0); mesh.n_elements()]);
        let u = wavy(&mesh);
        assert_eq!(energy_product(&c, &u, &CorrectorSolution::zero(&mesh)).unwrap(), 0.0);
    }

    #[test]
    fn identity_energy_matches_reversed_accumulation() {
        let mesh = SupercellMesh::new(2, 3, 6, Bc::Periodic).unwrap();
        let c = ElementCoefficients::new(2, vec![Mat2::scalar(2, 1.0); mesh.n_elements()]);
        let u = wavy(&mesh);
        let forward = energy_product(&c, &u, &u).unwrap();
        let reversed: f64 = (0..mesh.n_elements())
            .rev()
            .map(|e| mesh.element_measure() * dot(u.gradient(e), u.gradient(e)))
            .sum();
        assert!((forward - reversed).abs() <= 1e-12 * forward.abs());
    }

    #[test]
    fn energy_rejects_mesh_mismatch() {
        let a = SupercellMesh::new(2, 1, 6, Bc::Periodic).unwrap();
        let b = SupercellMesh::new(2, 3, 6, Bc::Periodic).unwrap();
        let c = ElementCoefficients::new(2, vec![Mat2::scalar(2, 1.0); a.n_elements()]);
        assert!(energy_product(&c, &wavy(&a), &wavy(&b)).is_err());
    }

    #[test]
    fn tile_and_shift() {
        let unit = SupercellMesh::unit_cell(2, 4).unwrap();
        let sup = SupercellMesh::new(2, 3, 4, Bc::Periodic).unwrap();
        let w = wavy(&unit);
        let t = w.tile(&sup).unwrap();
        // a tiled field is invariant under lattice translations
        let s = t.shifted([1, -1]).unwrap();
        assert_eq!(t.values(), s.values());
        for e in 0..sup.n_elements() {
            assert_eq!(t.gradient(e), w.gradient(sup.local_element(e)));
        }
    }

    #[test]
    fn shift_moves_values_by_whole_cells() {
        let sup = SupercellMesh::new(2, 3, 2, Bc::Periodic).unwrap();
        let mut vals = vec![0.0; sup.n_dofs()];
        vals[0] = 1.0; // node (0, 0)
        let u = CorrectorSolution::from_values(sup.clone(), vals).unwrap();
        let s = u.shifted([1, 2]).unwrap();
        let p = sup.per_edge();
        assert_eq!(s.values()[2 + p * 4], 1.0);
        assert_eq!(s.values().iter().sum::<f64>(), 1.0);
    }
}
