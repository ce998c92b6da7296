use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::material::{Cell, SupercellField};
use crate::tensor::{Mat2, Vec2};

/// Boundary condition on `∂I_N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    /// `(Nℤ)ᵈ`-periodic; opposite faces are identified.
    Periodic,
    /// Homogeneous Dirichlet; boundary nodes carry no unknown.
    Dirichlet,
}

impl std::fmt::Display for Bc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bc::Periodic => "periodic",
            Bc::Dirichlet => "dirichlet",
        })
    }
}

impl std::str::FromStr for Bc {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Bc::Periodic),
            "dirichlet" => Ok(Bc::Dirichlet),
            other => Err(invalid(format!("unknown boundary condition '{other}'"))),
        }
    }
}

pub(crate) const NO_DOF: u32 = u32::MAX;

/// Structured P1 mesh of the supercell `I_N = [-N/2, N/2]ᵈ` with `density`
/// cells per unit edge. In 2D each `h × h` square `(a, b)` is split along its
/// rising diagonal into a lower triangle `(a,b),(a+1,b),(a+1,b+1)` and an
/// upper triangle `(a,b),(a+1,b+1),(a,b+1)`, both counter-clockwise.
///
/// Elements are numbered `t + 2(a + P b)` with `P = N·density`. Because the
/// numbering repeats cell by cell, the element `e` of any supercell maps to
/// the element [`SupercellMesh::local_element`] of the unit-cell mesh with
/// the same density, which is what tiling relies on.
#[derive(Clone, Debug)]
pub struct SupercellMesh {
    inner: Arc<MeshData>,
}

#[derive(Debug)]
pub(crate) struct MeshData {
    pub dim: usize,
    pub n: usize,
    pub density: usize,
    pub bc: Bc,
    pub per_edge: usize,
    pub h: f64,
    pub n_dofs: usize,
    /// Local-to-global DOF map, `NO_DOF` for constrained nodes.
    pub elem_dofs: Vec<[u32; 3]>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    /// For element `e`, `slots[e * 9 + 3 * r + c]` is the CSR position of
    /// the local entry `(r, c)`, or `NO_DOF`.
    pub slots: Vec<u32>,
}

impl PartialEq for SupercellMesh {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = (&*self.inner, &*other.inner);
        a.dim == b.dim && a.n == b.n && a.density == b.density && a.bc == b.bc
    }
}

impl SupercellMesh {
    pub fn new(dim: usize, n: usize, density: usize, bc: Bc) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n == 0 || n % 2 == 0 {
            return Err(invalid(format!("supercell width N must be odd, got {n}")));
        }
        if density < 2 {
            return Err(invalid(format!("mesh density must be at least 2, got {density}")));
        }
        let per_edge = n * density;
        let h = 1.0 / density as f64;
        let node_dof = |a: usize, b: usize| -> u32 {
            match bc {
                Bc::Periodic => {
                    let a = a % per_edge;
                    let b = b % per_edge;
                    (a + per_edge * b) as u32
                }
                Bc::Dirichlet => {
                    let interior = |c: usize| c > 0 && c < per_edge;
                    if !interior(a) || (dim == 2 && !interior(b)) {
                        NO_DOF
                    } else if dim == 1 {
                        (a - 1) as u32
                    } else {
                        ((a - 1) + (per_edge - 1) * (b - 1)) as u32
                    }
                }
            }
        };
        let n_dofs = match (bc, dim) {
            (Bc::Periodic, 1) => per_edge,
            (Bc::Periodic, _) => per_edge * per_edge,
            (Bc::Dirichlet, 1) => per_edge - 1,
            (Bc::Dirichlet, _) => (per_edge - 1) * (per_edge - 1),
        };

        let mut elem_dofs = Vec::with_capacity(if dim == 1 { per_edge } else { 2 * per_edge * per_edge });
        if dim == 1 {
            for a in 0..per_edge {
                elem_dofs.push([node_dof(a, 0), node_dof(a + 1, 0), NO_DOF]);
            }
        } else {
            for b in 0..per_edge {
                for a in 0..per_edge {
                    elem_dofs.push([node_dof(a, b), node_dof(a + 1, b), node_dof(a + 1, b + 1)]);
                    elem_dofs.push([node_dof(a, b), node_dof(a + 1, b + 1), node_dof(a, b + 1)]);
                }
            }
        }

        let mut rows: Vec<Vec<u32>> = vec![Vec::with_capacity(8); n_dofs];
        for dofs in &elem_dofs {
            for &r in dofs.iter().filter(|&&d| d != NO_DOF) {
                for &c in dofs.iter().filter(|&&d| d != NO_DOF) {
                    rows[r as usize].push(c);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n_dofs + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        drop(rows);

        let mut slots = vec![NO_DOF; elem_dofs.len() * 9];
        for (e, dofs) in elem_dofs.iter().enumerate() {
            for (lr, &r) in dofs.iter().enumerate() {
                if r == NO_DOF {
                    continue;
                }
                let (lo, hi) = (row_ptr[r as usize], row_ptr[r as usize + 1]);
                for (lc, &c) in dofs.iter().enumerate() {
                    if c == NO_DOF {
                        continue;
                    }
                    let pos = lo + col_idx[lo..hi].binary_search(&c).expect("pattern contains entry");
                    slots[e * 9 + 3 * lr + lc] = pos as u32;
                }
            }
        }

        Ok(SupercellMesh {
            inner: Arc::new(MeshData {
                dim,
                n,
                density,
                bc,
                per_edge,
                h,
                n_dofs,
                elem_dofs,
                row_ptr,
                col_idx,
                slots,
            }),
        })
    }

    /// The unit cell `Q` with periodic identification.
    pub fn unit_cell(dim: usize, density: usize) -> Result<Self> {
        Self::new(dim, 1, density, Bc::Periodic)
    }

    pub(crate) fn data(&self) -> &MeshData {
        &self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    /// Supercell width `N`.
    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn density(&self) -> usize {
        self.inner.density
    }

    pub fn bc(&self) -> Bc {
        self.inner.bc
    }

    pub fn h(&self) -> f64 {
        self.inner.h
    }

    /// Mesh intervals per supercell edge, `N · density`.
    pub fn per_edge(&self) -> usize {
        self.inner.per_edge
    }

    pub fn n_dofs(&self) -> usize {
        self.inner.n_dofs
    }

    pub fn n_elements(&self) -> usize {
        self.inner.elem_dofs.len()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.inner.dim + 1
    }

    /// Element measure `h` (1D) or `h²/2` (2D).
    pub fn element_measure(&self) -> f64 {
        let h = self.inner.h;
        if self.inner.dim == 1 {
            h
        } else {
            0.5 * h * h
        }
    }

    /// Measure of `I_N`, i.e. `Nᵈ`.
    pub fn volume(&self) -> f64 {
        (self.inner.n as f64).powi(self.inner.dim as i32)
    }

    pub fn element_dofs(&self, e: usize) -> &[u32] {
        &self.inner.elem_dofs[e][..self.nodes_per_element()]
    }

    /// Constant gradients of the local basis functions of element `e`.
    #[inline]
    pub fn basis_gradients(&self, e: usize) -> [Vec2; 3] {
        let s = 1.0 / self.inner.h;
        if self.inner.dim == 1 {
            [[-s, 0.0], [s, 0.0], [0.0, 0.0]]
        } else if e % 2 == 0 {
            [[-s, 0.0], [s, -s], [0.0, s]]
        } else {
            [[0.0, -s], [s, 0.0], [-s, s]]
        }
    }

    fn square_of(&self, e: usize) -> (usize, usize, usize) {
        let p = self.inner.per_edge;
        if self.inner.dim == 1 {
            (e, 0, 0)
        } else {
            let sq = e / 2;
            (sq % p, sq / p, e % 2)
        }
    }

    /// Index of the same element within the unit-cell mesh of equal density.
    pub fn local_element(&self, e: usize) -> usize {
        let m = self.inner.density;
        let (a, b, t) = self.square_of(e);
        if self.inner.dim == 1 {
            a % m
        } else {
            t + 2 * (a % m + m * (b % m))
        }
    }

    /// Flattened index in `0..Nᵈ` of the unit cell containing element `e`,
    /// consistent with [`crate::DefectPattern::flat_index`].
    pub fn element_cell_index(&self, e: usize) -> usize {
        let m = self.inner.density;
        let (a, b, _) = self.square_of(e);
        a / m + self.inner.n * (b / m)
    }

    pub fn element_cell(&self, e: usize) -> Cell {
        let half = (self.inner.n as i64 - 1) / 2;
        let m = self.inner.density;
        let (a, b, _) = self.square_of(e);
        let k0 = (a / m) as i64 - half;
        let k1 = if self.inner.dim == 2 { (b / m) as i64 - half } else { 0 };
        [k0, k1]
    }

    /// Barycenter of element `e` in the centred coordinates of `I_N`.
    pub fn barycenter(&self, e: usize) -> Vec2 {
        let h = self.inner.h;
        let origin = -(self.inner.n as f64) / 2.0;
        let (a, b, t) = self.square_of(e);
        if self.inner.dim == 1 {
            return [origin + (a as f64 + 0.5) * h, 0.0];
        }
        let (fx, fy) = if t == 0 { (2.0 / 3.0, 1.0 / 3.0) } else { (1.0 / 3.0, 2.0 / 3.0) };
        [origin + (a as f64 + fx) * h, origin + (b as f64 + fy) * h]
    }

    /// Coordinates of DOF `d`.
    pub fn dof_position(&self, d: usize) -> Vec2 {
        let data = &*self.inner;
        let origin = -(data.n as f64) / 2.0;
        let (a, b) = match (data.bc, data.dim) {
            (Bc::Periodic, 1) => (d, 0),
            (Bc::Periodic, _) => (d % data.per_edge, d / data.per_edge),
            (Bc::Dirichlet, 1) => (d + 1, 0),
            (Bc::Dirichlet, _) => (d % (data.per_edge - 1) + 1, d / (data.per_edge - 1) + 1),
        };
        let y = if data.dim == 2 { origin + b as f64 * data.h } else { 0.0 };
        [origin + a as f64 * data.h, y]
    }

    /// Every element has positive signed area (counter-clockwise vertices).
    pub fn orientation_ok(&self) -> bool {
        (0..2.min(self.n_elements())).all(|e| {
            let g = self.basis_gradients(e);
            if self.dim() == 1 {
                return g[1][0] > 0.0;
            }
            // For a CCW triangle the gradient of φ₀ points from edge (1,2) towards vertex 0.
            let det = g[1][0] * g[2][1] - g[1][1] * g[2][0];
            det > 0.0
        })
    }

    /// Samples a supercell coefficient field at element barycenters,
    /// evaluating the periodic parts once per local element.
    pub fn sample(&self, field: &SupercellField) -> Result<ElementCoefficients> {
        if field.dim() != self.dim() || field.n() != self.n() {
            return Err(invalid(format!(
                "field on I_{} (d={}) does not match mesh on I_{} (d={})",
                field.n(),
                field.dim(),
                self.n(),
                self.dim()
            )));
        }
        let unit = SupercellMesh::unit_cell(self.dim(), self.density())?;
        let local = |f: &crate::TensorField| -> Vec<Mat2> {
            (0..unit.n_elements()).map(|le| f.eval(unit.barycenter(le))).collect()
        };
        let base = local(field.base());
        let pert = local(field.perturbation());
        let pattern = field.pattern();
        let values: Vec<Mat2> = (0..self.n_elements())
            .map(|e| {
                let le = self.local_element(e);
                if pattern.contains_index(self.element_cell_index(e)) {
                    base[le] + pert[le]
                } else {
                    base[le]
                }
            })
            .collect();
        Ok(ElementCoefficients::new(self.dim(), values))
    }

    /// Samples a periodic field over the whole supercell.
    pub fn sample_periodic(&self, field: &crate::TensorField) -> Result<ElementCoefficients> {
        self.sample(&SupercellField::periodic(field, self.n())?)
    }
}

/// Piecewise-constant coefficient matrices, one per element.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementCoefficients {
    dim: usize,
    values: Vec<Mat2>,
    symmetric: bool,
}

impl ElementCoefficients {
    pub fn new(dim: usize, values: Vec<Mat2>) -> Self {
        let symmetric = values.iter().all(|m| m.is_symmetric(0.0));
        ElementCoefficients { dim, values, symmetric }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[Mat2] {
        &self.values
    }

    #[inline]
    pub fn get(&self, e: usize) -> Mat2 {
        self.values[e]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn transpose(&self) -> ElementCoefficients {
        ElementCoefficients::new(self.dim, self.values.iter().map(Mat2::transpose).collect())
    }

    /// Smallest eigenvalue of the symmetric part over all elements.
    pub fn coercivity(&self) -> f64 {
        self.values
            .iter()
            .map(|m| m.sym_eigenvalues(self.dim)[0])
            .fold(f64::INFINITY, f64::min)
    }
}
