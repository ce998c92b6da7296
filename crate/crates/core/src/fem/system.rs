use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::mesh::{ElementCoefficients, SupercellMesh, NO_DOF};
use crate::tensor::{dot, Vec2};

/// Compressed-row sparse matrix sharing its pattern with the mesh.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    mesh: SupercellMesh,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    pub fn n_rows(&self) -> usize {
        self.mesh.n_dofs()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn mesh(&self) -> &SupercellMesh {
        &self.mesh
    }

    /// `y = K x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let d = self.mesh.data();
        for (r, yr) in y.iter_mut().enumerate() {
            let (lo, hi) = (d.row_ptr[r], d.row_ptr[r + 1]);
            let mut s = 0.0;
            for (v, &c) in self.values[lo..hi].iter().zip(&d.col_idx[lo..hi]) {
                s += v * x[c as usize];
            }
            *yr = s;
        }
    }

    /// `y = K x`, returning `x · y`.
    pub fn matvec_dot(&self, x: &[f64], y: &mut [f64]) -> f64 {
        let d = self.mesh.data();
        let mut acc = 0.0;
        if d.col_idx.len() == 7 * y.len() {
            for ((yr, xr), (vals, cols)) in y
                .iter_mut()
                .zip(x)
                .zip(self.values.chunks_exact(7).zip(d.col_idx.chunks_exact(7)))
            {
                let mut s = 0.0;
                for t in 0..7 {
                    s += vals[t] * x[cols[t] as usize];
                }
                *yr = s;
                acc += s * xr;
            }
            return acc;
        }
        for (r, (yr, xr)) in y.iter_mut().zip(x).enumerate() {
            let (lo, hi) = (d.row_ptr[r], d.row_ptr[r + 1]);
            let mut s = 0.0;
            for (v, &c) in self.values[lo..hi].iter().zip(&d.col_idx[lo..hi]) {
                s += v * x[c as usize];
            }
            *yr = s;
            acc += s * xr;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = self.mesh.data();
        (0..self.n_rows())
            .map(|r| {
                let (lo, hi) = (d.row_ptr[r], d.row_ptr[r + 1]);
                let p = lo + d.col_idx[lo..hi].binary_search(&(r as u32)).expect("diagonal present");
                self.values[p]
            })
            .collect()
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let d = self.mesh.data();
        (0..self.n_rows()).flat_map(move |r| {
            (d.row_ptr[r]..d.row_ptr[r + 1]).map(move |p| (r, d.col_idx[p] as usize, self.values[p]))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_rows()];
        for (r, _, v) in self.entries() {
            sums[r] += v;
        }
        sums
    }
}

/// Kernel of the assembled operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Nullspace {
    None,
    /// Periodic problems without zero-order term: constants.
    Constants,
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: Arc<CsrMatrix>,
    pub rhs: Vec<f64>,
    pub nullspace: Nullspace,
}

impl LinearSystem {
    pub fn mesh(&self) -> &SupercellMesh {
        self.matrix.mesh()
    }

    /// Debug dump of the matrix in coordinate format, one `row col value`
    /// triple per line, followed by the right-hand side as `row value`.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "% matrix {} x {} nnz {}", self.matrix.n_rows(), self.matrix.n_rows(), self.matrix.nnz())?;
        for (r, c, v) in self.matrix.entries() {
            writeln!(out, "{r} {c} {v:.17e}")?;
        }
        writeln!(out, "% rhs")?;
        for (r, v) in self.rhs.iter().enumerate() {
            writeln!(out, "{r} {v:.17e}")?;
        }
        Ok(())
    }
}

/// Stiffness matrix `K_ab = Σ_T |T| A_T ∇φ_b · ∇φ_a` with one-point
/// (barycentric) quadrature.
pub fn assemble_operator(mesh: &SupercellMesh, coeffs: &ElementCoefficients) -> Result<CsrMatrix> {
    check_sizes(mesh, coeffs.len(), "coefficients")?;
    let d = mesh.data();
    let nloc = mesh.nodes_per_element();
    let measure = mesh.element_measure();
    let mut values = vec![0.0; d.col_idx.len()];
    for e in 0..mesh.n_elements() {
        let grads = mesh.basis_gradients(e);
        let a = coeffs.get(e);
        for lc in 0..nloc {
            let flux = a.apply(grads[lc]);
            for lr in 0..nloc {
                let slot = d.slots[e * 9 + 3 * lr + lc];
                if slot != NO_DOF {
                    values[slot as usize] += measure * dot(flux, grads[lr]);
                }
            }
        }
    }
    Ok(CsrMatrix {
        mesh: mesh.clone(),
        values,
        symmetric: coeffs.is_symmetric(),
    })
}

/// Load vector of `-div(A∇u) = div(g)`: `F_a = -Σ_T |T| g_T · ∇φ_a`.
pub fn load_vector(mesh: &SupercellMesh, rhs_flux: &[Vec2]) -> Result<Vec<f64>> {
    check_sizes(mesh, rhs_flux.len(), "rhs flux")?;
    let measure = mesh.element_measure();
    let mut rhs = vec![0.0; mesh.n_dofs()];
    for (e, g) in rhs_flux.iter().enumerate() {
        if g[0] == 0.0 && g[1] == 0.0 {
            continue;
        }
        let grads = mesh.basis_gradients(e);
        for (l, &dof) in mesh.element_dofs(e).iter().enumerate() {
            if dof != NO_DOF {
                rhs[dof as usize] -= measure * dot(*g, grads[l]);
            }
        }
    }
    Ok(rhs)
}

pub fn assemble(mesh: &SupercellMesh, coeffs: &ElementCoefficients, rhs_flux: &[Vec2]) -> Result<LinearSystem> {
    let matrix = Arc::new(assemble_operator(mesh, coeffs)?);
    system_for(matrix, load_vector(mesh, rhs_flux)?)
}

/// Pairs an already assembled operator with a new right-hand side.
pub fn system_for(matrix: Arc<CsrMatrix>, rhs: Vec<f64>) -> Result<LinearSystem> {
    if rhs.len() != matrix.n_rows() {
        return Err(Error::MeshMismatch(format!(
            "rhs has {} entries, operator {} rows",
            rhs.len(),
            matrix.n_rows()
        )));
    }
    let nullspace = match matrix.mesh().bc() {
        crate::Bc::Periodic => Nullspace::Constants,
        crate::Bc::Dirichlet => Nullspace::None,
    };
    Ok(LinearSystem { matrix, rhs, nullspace })
}

fn check_sizes(mesh: &SupercellMesh, len: usize, what: &str) -> Result<()> {
    if len != mesh.n_elements() {
        return Err(Error::MeshMismatch(format!(
            "{what} has {len} entries, mesh has {} elements",
            mesh.n_elements()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::Bc;
    use crate::material::material_one;
    use crate::tensor::Mat2;

    fn identity(mesh: &SupercellMesh) -> ElementCoefficients {
        ElementCoefficients::new(mesh.dim(), vec![Mat2::scalar(mesh.dim(), 1.0); mesh.n_elements()])
    }

    #[test]
    fn zero_flux_gives_zero_load() {
        let mesh = SupercellMesh::new(2, 3, 4, Bc::Periodic).unwrap();
        let sys = assemble(&mesh, &identity(&mesh), &vec![[0.0, 0.0]; mesh.n_elements()]).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_flux_telescopes_under_periodicity() {
        let mesh = SupercellMesh::new(2, 3, 4, Bc::Periodic).unwrap();
        let rhs = load_vector(&mesh, &vec![[2.5, -1.0]; mesh.n_elements()]).unwrap();
        assert!(rhs.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn periodic_row_sums_vanish_for_material_one() {
        let mat = material_one(20.0, 100.0, 0.3).unwrap();
        let mesh = SupercellMesh::unit_cell(2, 10).unwrap();
        let coeffs = mesh.sample_periodic(mat.base()).unwrap();
        let k = assemble_operator(&mesh, &coeffs).unwrap();
        let scale = k.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for s in k.row_sums() {
            assert!(s.abs() <= 1e-12 * scale, "row sum {s}");
        }
    }

    #[test]
    fn identity_stencil_is_five_point_laplacian() {
        // with the rising-diagonal split and A = Id the diagonal couplings vanish
        let mesh = SupercellMesh::unit_cell(2, 4).unwrap();
        let k = assemble_operator(&mesh, &identity(&mesh)).unwrap();
        for (r, c, v) in k.entries() {
            if r == c {
                assert!((v - 4.0).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-12 || (v + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coordinate_dump_lists_every_entry() {
        let mesh = SupercellMesh::new(1, 1, 3, Bc::Periodic).unwrap();
        let sys = assemble(&mesh, &identity(&mesh), &[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        let mut buf = Vec::new();
        sys.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data_lines = text.lines().filter(|l| !l.starts_with('%')).count();
        assert_eq!(data_lines, 9 + 3);
    }
}
