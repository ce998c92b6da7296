//! Small fixed-size matrices for `d ∈ {1, 2}`.
//!
//! One-dimensional problems use only the `(0, 0)` entry; the remaining
//! entries are kept at zero so that the same arithmetic serves both cases.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

pub type Vec2 = [f64; 2];

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2([[a11, a12], [a21, a22]])
    }

    /// `c · Id` restricted to the leading `dim × dim` block.
    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut m = Mat2::ZERO;
        for i in 0..dim {
            m.0[i][i] = c;
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        let a = &self.0;
        Mat2([[a[0][0], a[1][0]], [a[0][1], a[1][1]]])
    }

    #[inline]
    pub fn apply(&self, v: Vec2) -> Vec2 {
        let a = &self.0;
        [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
    }

    pub fn scale(&self, s: f64) -> Self {
        let a = &self.0;
        Mat2([[s * a[0][0], s * a[0][1]], [s * a[1][0], s * a[1][1]]])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0[0][1] - self.0[1][0]).abs() <= tol
    }

    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()).scale(0.5)
    }

    /// Inverse of the leading `dim × dim` block.
    pub fn inverse(&self, dim: usize) -> Option<Self> {
        let a = &self.0;
        if dim == 1 {
            return (a[0][0] != 0.0).then(|| Mat2::scalar(1, 1.0 / a[0][0]));
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det == 0.0 {
            return None;
        }
        Some(Mat2([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]))
    }

    /// Eigenvalues (ascending) of the symmetric part, leading block only.
    pub fn sym_eigenvalues(&self, dim: usize) -> Vec<f64> {
        let s = self.symmetric_part().0;
        if dim == 1 {
            return vec![s[0][0]];
        }
        let mean = 0.5 * (s[0][0] + s[1][1]);
        let diff = 0.5 * (s[0][0] - s[1][1]);
        let rad = (diff * diff + s[0][1] * s[0][1]).sqrt();
        vec![mean - rad, mean + rad]
    }

    /// Spectral norm of the leading block.
    pub fn operator_norm(&self, dim: usize) -> f64 {
        let ata = self.transpose() * *self;
        ata.sym_eigenvalues(dim)
            .into_iter()
            .fold(0.0_f64, f64::max)
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn to_rows(&self, dim: usize) -> Vec<Vec<f64>> {
        (0..dim).map(|i| self.0[i][..dim].to_vec()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.len();
        if !(1..=2).contains(&dim) || rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        let mut m = Mat2::ZERO;
        for (i, row) in rows.iter().enumerate() {
            m.0[i][..dim].copy_from_slice(row);
        }
        Some(m)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(c)
    }
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn unit(i: usize) -> Vec2 {
    let mut e = [0.0; 2];
    e[i] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = Mat2::new(3.0, 0.0, 0.0, 1.0);
        assert_eq!(m.sym_eigenvalues(2), vec![1.0, 3.0]);
        assert_eq!(m.sym_eigenvalues(1), vec![3.0]);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(2.0, 1.0, 0.0, 2.0);
        let p = m * m.inverse(2).unwrap();
        assert!((p - Mat2::scalar(2, 1.0)).max_abs() < 1e-15);
    }

    #[test]
    fn operator_norm_of_shear() {
        // singular values of [[1,1],[0,1]] are the golden ratio and its inverse
        let m = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((m.operator_norm(2) - phi).abs() < 1e-12);
    }
}
