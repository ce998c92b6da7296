//! Jacobi-preconditioned Krylov solvers.
//!
//! Symmetric operators go through conjugate gradients; the (rare) operators
//! built from non-symmetric coefficients go through BiCGSTAB. When the
//! operator has the constants in its kernel, every iterate and search
//! direction is projected to zero mean, so the returned solution has zero
//! mean.

use crate::error::{invalid, Error, Result};
use crate::fem::solution::CorrectorSolution;
use crate::fem::system::{LinearSystem, Nullspace};

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 200_000;

/// Relative-residual target and iteration cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rel_tol: DEFAULT_REL_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(rel_tol: f64) -> Self {
        SolverOptions { rel_tol, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b − Kx‖ / ‖b‖` of the returned solution.
    pub relative_residual: f64,
}

pub fn solve(sys: &LinearSystem, rel_tol: f64) -> Result<CorrectorSolution> {
    solve_with(sys, &SolverOptions::with_tol(rel_tol), None).map(|(s, _)| s)
}

pub fn solve_with(
    sys: &LinearSystem,
    opts: &SolverOptions,
    guess: Option<&[f64]>,
) -> Result<(CorrectorSolution, SolveStats)> {
    if !(opts.rel_tol > 0.0) {
        return Err(invalid(format!("rel_tol must be positive, got {}", opts.rel_tol)));
    }
    let n = sys.matrix.n_rows();
    if let Some(g) = guess {
        if g.len() != n {
            return Err(Error::MeshMismatch(format!("initial guess has {} entries, system {n}", g.len())));
        }
    }
    let project = sys.nullspace == Nullspace::Constants;
    let mut b = sys.rhs.clone();
    if project {
        remove_mean(&mut b);
    }
    let b_norm = norm(&b);
    if b_norm == 0.0 {
        return Ok((
            CorrectorSolution::from_values(sys.mesh().clone(), vec![0.0; n])?,
            SolveStats::default(),
        ));
    }
    let diag = sys.matrix.diagonal();
    if let Some((i, &d)) = diag.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        log::debug!("non-positive diagonal entry {d} at row {i}");
        return Err(Error::Indefinite { iteration: 0, curvature: d });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let stats = if sys.matrix.is_symmetric() {
        pcg(sys, &b, b_norm, &inv_diag, &mut x, project, opts)?
    } else {
        bicgstab(sys, &b, b_norm, &inv_diag, &mut x, project, opts)?
    };
    if project {
        remove_mean(&mut x);
    }
    Ok((CorrectorSolution::from_values(sys.mesh().clone(), x)?, stats))
}

fn pcg(
    sys: &LinearSystem,
    b: &[f64],
    b_norm: f64,
    inv_diag: &[f64],
    x: &mut [f64],
    project: bool,
    opts: &SolverOptions,
) -> Result<SolveStats> {
    let k = &*sys.matrix;
    let n = b.len();
    let target = opts.rel_tol * b_norm;
    let mut r = vec![0.0; n];
    let mut q = vec![0.0; n];
    true_residual(sys, b, x, &mut r, project);
    let mut r_norm = norm(&r);
    if r_norm <= target {
        return Ok(SolveStats { iterations: 0, relative_residual: r_norm / b_norm });
    }
    // z = P(D⁻¹ r) is never stored: p ← z + βp is formed from r directly.
    let (mut rz, z_mean) = preconditioned_product(inv_diag, &r, project);
    let mut p: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di - z_mean).collect();
    for it in 1..=opts.max_iterations {
        let pq = k.matvec_dot(&p, &mut q);
        if !(pq > 0.0) {
            return Err(Error::Indefinite {
                iteration: it,
                curvature: pq / dot(&p, &p),
            });
        }
        let alpha = rz / pq;
        let mut rr = 0.0;
        for ((xi, ri), (pi, qi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&q)) {
            *xi += alpha * pi;
            *ri -= alpha * qi;
            rr += *ri * *ri;
        }
        r_norm = rr.sqrt();
        if it % 100 == 0 {
            true_residual(sys, b, x, &mut r, project);
            r_norm = norm(&r);
        }
        if r_norm <= target {
            true_residual(sys, b, x, &mut r, project);
            r_norm = norm(&r);
            if r_norm <= target {
                return Ok(SolveStats { iterations: it, relative_residual: r_norm / b_norm });
            }
        }
        let (rz_new, z_mean) = preconditioned_product(inv_diag, &r, project);
        let beta = rz_new / rz;
        for ((pi, ri), di) in p.iter_mut().zip(&r).zip(inv_diag) {
            *pi = ri * di - z_mean + beta * *pi;
        }
        rz = rz_new;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual: r_norm / b_norm,
    })
}

/// `(r·z, mean(D⁻¹r))` with `z = D⁻¹r` projected to zero mean when `project`.
fn preconditioned_product(inv_diag: &[f64], r: &[f64], project: bool) -> (f64, f64) {
    let (mut rz, mut sz, mut sr) = (0.0, 0.0, 0.0);
    for (ri, di) in r.iter().zip(inv_diag) {
        let zi = ri * di;
        rz += ri * zi;
        sz += zi;
        sr += ri;
    }
    if project {
        let m = sz / r.len() as f64;
        (rz - m * sr, m)
    } else {
        (rz, 0.0)
    }
}

fn bicgstab(
    sys: &LinearSystem,
    b: &[f64],
    b_norm: f64,
    inv_diag: &[f64],
    x: &mut [f64],
    project: bool,
    opts: &SolverOptions,
) -> Result<SolveStats> {
    let k = &*sys.matrix;
    let n = b.len();
    let target = opts.rel_tol * b_norm;
    let mut r = vec![0.0; n];
    true_residual(sys, b, x, &mut r, project);
    let mut r_norm = norm(&r);
    if r_norm <= target {
        return Ok(SolveStats { iterations: 0, relative_residual: r_norm / b_norm });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iterations {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::Breakdown { iteration: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precondition(inv_diag, &p, project);
        k.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(Error::Breakdown { iteration: it });
        }
        alpha = rho_new / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            axpy(alpha, &y, x);
            true_residual(sys, b, x, &mut r, project);
            r_norm = norm(&r);
            if r_norm <= target {
                return Ok(SolveStats { iterations: it, relative_residual: r_norm / b_norm });
            }
            rho = rho_new;
            continue;
        }
        let zs = precondition(inv_diag, &s, project);
        k.matvec(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        axpy(alpha, &y, x);
        axpy(omega, &zs, x);
        for i in 0..n {
            r[i] = s[i] - omega * t[i];
        }
        if project {
            remove_mean(&mut r);
        }
        r_norm = norm(&r);
        if r_norm <= target {
            true_residual(sys, b, x, &mut r, project);
            r_norm = norm(&r);
            if r_norm <= target {
                return Ok(SolveStats { iterations: it, relative_residual: r_norm / b_norm });
            }
        }
        rho = rho_new;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual: r_norm / b_norm,
    })
}

fn true_residual(sys: &LinearSystem, b: &[f64], x: &[f64], r: &mut [f64], project: bool) {
    sys.matrix.matvec(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if project {
        remove_mean(r);
    }
}

fn precondition(inv_diag: &[f64], r: &[f64], project: bool) -> Vec<f64> {
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, b)| a * b).collect();
    if project {
        remove_mean(&mut z);
    }
    z
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::{Bc, ElementCoefficients, SupercellMesh};
    use crate::fem::system::{assemble, assemble_operator, load_vector, system_for};
    use crate::tensor::Mat2;
    use std::sync::Arc;

    fn coeffs(mesh: &SupercellMesh, a: Mat2) -> ElementCoefficients {
        ElementCoefficients::new(mesh.dim(), vec![a; mesh.n_elements()])
    }

    /// Dense Gaussian elimination with the mean-zero constraint appended as
    /// a Lagrange multiplier row.
    fn dense_mean_zero_solve(k: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = (0..=n)
            .map(|i| {
                let mut row = vec![0.0; n + 2];
                if i < n {
                    row[..n].copy_from_slice(&k[i]);
                    row[n] = 1.0;
                    row[n + 1] = b[i];
                } else {
                    row[..n].iter_mut().for_each(|v| *v = 1.0);
                }
                row
            })
            .collect();
        for c in 0..=n {
            let piv = (c..=n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..=n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for j in c..n + 2 {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
        (0..n).map(|i| m[i][n + 1] / m[i][i]).collect()
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let mesh = SupercellMesh::new(2, 1, 6, Bc::Periodic).unwrap();
        let sys = assemble(&mesh, &coeffs(&mesh, Mat2::scalar(2, 1.0)), &vec![[0.0; 2]; mesh.n_elements()]).unwrap();
        let sol = solve(&sys, 1e-10).unwrap();
        assert!(sol.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_node_periodic_system_matches_dense_solve() {
        let mesh = SupercellMesh::new(1, 1, 3, Bc::Periodic).unwrap();
        let c = coeffs(&mesh, Mat2::scalar(1, 1.0));
        // point flux on the first element only
        let flux = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let sys = assemble(&mesh, &c, &flux).unwrap();
        // by hand: K = 3·[[2,-1,-1],[-1,2,-1],[-1,-1,2]], F = (1, -1, 0)
        let k = vec![vec![6.0, -3.0, -3.0], vec![-3.0, 6.0, -3.0], vec![-3.0, -3.0, 6.0]];
        let f = [1.0, -1.0, 0.0];
        for (a, b) in sys.rhs.iter().zip(&f) {
            assert!((a - b).abs() < 1e-14);
        }
        let expected = dense_mean_zero_solve(&k, &f);
        let sol = solve(&sys, 1e-12).unwrap();
        for (a, b) in sol.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(sol.values().iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn residual_meets_tolerance() {
        let mesh = SupercellMesh::new(2, 3, 4, Bc::Dirichlet).unwrap();
        let c = coeffs(&mesh, Mat2::new(3.0, 0.5, 0.5, 1.0));
        let flux: Vec<_> = (0..mesh.n_elements()).map(|e| [(e % 7) as f64 - 3.0, (e % 3) as f64]).collect();
        let sys = assemble(&mesh, &c, &flux).unwrap();
        let sol = solve(&sys, 1e-9).unwrap();
        let mut kx = vec![0.0; sys.rhs.len()];
        sys.matrix.matvec(sol.values(), &mut kx);
        let res: f64 = kx.iter().zip(&sys.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bn: f64 = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-9 * bn);
    }

    #[test]
    fn negative_coefficient_is_reported_as_indefinite() {
        let mesh = SupercellMesh::new(2, 1, 4, Bc::Dirichlet).unwrap();
        let c = coeffs(&mesh, Mat2::scalar(2, -1.0));
        let sys = assemble(&mesh, &c, &vec![[1.0, 0.0]; mesh.n_elements()]).unwrap();
        // constant flux on a Dirichlet mesh still loads the boundary-adjacent rows
        let sys = system_for(sys.matrix.clone(), vec![1.0; sys.rhs.len()]).unwrap();
        assert!(matches!(solve(&sys, 1e-10), Err(Error::Indefinite { .. })));
    }

    #[test]
    fn indefinite_operator_detected_by_curvature() {
        // mixed-sign coefficients keep the diagonal positive but break coercivity
        let mesh = SupercellMesh::new(2, 1, 8, Bc::Dirichlet).unwrap();
        let vals: Vec<Mat2> = (0..mesh.n_elements())
            .map(|e| if mesh.barycenter(e)[0] < 0.0 { Mat2::new(1.0, 0.0, 0.0, -0.9) } else { Mat2::scalar(2, 1.0) })
            .collect();
        let c = ElementCoefficients::new(2, vals);
        let k = Arc::new(assemble_operator(&mesh, &c).unwrap());
        let rhs: Vec<f64> = (0..k.n_rows()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let sys = system_for(k, rhs).unwrap();
        match solve(&sys, 1e-12) {
            Err(Error::Indefinite { .. }) | Err(Error::NotConverged { .. }) => {}
            other => panic!("expected failure on a non-coercive operator, got {other:?}"),
        }
    }

    #[test]
    fn non_convergence_carries_residual() {
        let mesh = SupercellMesh::new(2, 3, 6, Bc::Periodic).unwrap();
        let c = coeffs(&mesh, Mat2::scalar(2, 1.0));
        let flux: Vec<_> = (0..mesh.n_elements()).map(|e| [mesh.barycenter(e)[0].sin(), 0.0]).collect();
        let sys = assemble(&mesh, &c, &flux).unwrap();
        let opts = SolverOptions { rel_tol: 1e-12, max_iterations: 2 };
        match solve_with(&sys, &opts, None) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn bicgstab_handles_non_symmetric_coefficients() {
        let mesh = SupercellMesh::new(2, 1, 8, Bc::Periodic).unwrap();
        let vals: Vec<Mat2> = (0..mesh.n_elements())
            .map(|e| {
                let x = mesh.barycenter(e);
                if x[0] * x[0] + x[1] * x[1] < 0.09 { Mat2::new(5.0, 2.0, -1.0, 4.0) } else { Mat2::scalar(2, 1.0) }
            })
            .collect();
        let c = ElementCoefficients::new(2, vals);
        assert!(!c.is_symmetric());
        let flux: Vec<_> = (0..mesh.n_elements()).map(|e| c.get(e).apply([1.0, 0.0])).collect();
        let k = Arc::new(assemble_operator(&mesh, &c).unwrap());
        let sys = system_for(k.clone(), load_vector(&mesh, &flux).unwrap()).unwrap();
        let sol = solve(&sys, 1e-11).unwrap();
        let mut kx = vec![0.0; sys.rhs.len()];
        k.matvec(sol.values(), &mut kx);
        let res: f64 = kx.iter().zip(&sys.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let bn: f64 = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-10 * bn, "{res} vs {bn}");
        assert!(sol.values().iter().sum::<f64>().abs() < 1e-10);
    }
}
