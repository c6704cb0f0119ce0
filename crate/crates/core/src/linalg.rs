//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::matrix::{Matrix, ShapeError};
use crate::scalar::Real;

/// Off-diagonal Frobenius mass, relative to ‖A‖_F, at which the sweep loop stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
/// Sweep cap. Cyclic Jacobi converges quadratically; well-conditioned inputs
/// finish in under 15 sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Maximum |A − Aᵀ| entry, relative to max(1, max |A|), accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EigenError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("Jacobi iteration did not converge in {sweeps} sweeps (off-diagonal ratio {residual:e}); input is likely ill-conditioned")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// `A = V · diag(values) · Vᵀ`, eigenvalues descending, eigenvectors as columns of `vectors`.
///
/// Each eigenvector is signed so that its largest-magnitude entry (first one on
/// ties) is positive. Equal eigenvalues keep the order the sweep produced them in.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

impl<T: Real> SymmetricEigen<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for (k, &lambda) in self.values.iter().enumerate() {
                    acc = acc + self.vectors.get(i, k) * lambda * self.vectors.get(j, k);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn column(&self, k: usize) -> Vec<T> {
        (0..self.vectors.rows()).map(|i| self.vectors.get(i, k)).collect()
    }
}

pub fn check_symmetric<T: Real>(a: &Matrix<T>) -> Result<(), EigenError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(EigenError::NotSquare { rows, cols });
    }
    if a.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let scale = a.as_slice().iter().fold(T::one(), |m, v| m.max(v.abs()));
    let tol = T::tolerance(SYMMETRY_TOLERANCE) * scale;
    for i in 0..rows {
        for j in (i + 1)..cols {
            let gap = (a.get(i, j) - a.get(j, i)).abs();
            if gap > tol {
                return Err(EigenError::NotSymmetric { row: i, col: j, gap: gap.as_f64() });
            }
        }
    }
    Ok(())
}

fn off_diagonal_norm<T: Real>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a.get(i, j);
            acc = acc + v * v;
        }
    }
    (acc + acc).sqrt()
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Rotations are applied in fixed row-cyclic order `(0,1), (0,2), …, (n−2,n−1)`,
/// so the result is a deterministic function of the input bits.
pub fn eigh_symmetric<T: Real>(a: &Matrix<T>) -> Result<SymmetricEigen<T>, EigenError> {
    check_symmetric(a)?;
    let n = a.rows();
    // Work on the symmetrized copy so both triangles agree exactly.
    let mut work = Matrix::zeros(n, n);
    let half = T::lit(0.5);
    for i in 0..n {
        for j in 0..n {
            work.set(i, j, (a.get(i, j) + a.get(j, i)) * half);
        }
    }
    let mut v = Matrix::identity(n);
    let norm = work.frobenius_norm();
    let tol = T::tolerance(JACOBI_TOLERANCE) * norm;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&work);
        if off <= tol {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(EigenError::NoConvergence { sweeps, residual: (off / norm).as_f64() });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut work, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| work.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));

    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let mut lead = 0;
        for i in 1..n {
            if v.get(i, src).abs() > v.get(lead, src).abs() {
                lead = i;
            }
        }
        let sign = if v.get(lead, src) < T::zero() { -T::one() } else { T::one() };
        for i in 0..n {
            vectors.set(i, k, sign * v.get(i, src));
        }
    }
    Ok(SymmetricEigen { values, vectors, sweeps })
}

/// One Jacobi rotation annihilating `a[p][q]`, accumulated into `v`.
fn rotate<T: Real>(a: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == T::zero() {
        return;
    }
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    let theta = (aqq - app) / (apq + apq);
    // θ² would overflow; use the asymptotic t ≈ 1/(2θ)
    let t = if theta.abs() > T::lit(1e150).min(T::max_value().sqrt()) {
        (theta + theta).recip()
    } else {
        let t = (theta.abs() + (theta * theta + T::one()).sqrt()).recip();
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let c = (t * t + T::one()).sqrt().recip();
    let s = t * c;

    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, T::zero());
    a.set(q, p, T::zero());
    for k in 0..a.rows() {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        a.set(k, p, new_p);
        a.set(p, k, new_p);
        a.set(k, q, new_q);
        a.set(q, k, new_q);
    }
    for k in 0..v.rows() {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Minimum-norm least-squares solution of `W·x = rhs` (i.e. `pinv(W)·rhs`).
///
/// Computed through the eigendecomposition of `WᵀW`; directions whose
/// eigenvalue falls below `1e-12 · λ_max` are treated as null space.
pub fn min_norm_solve<T: Real>(w: &Matrix<T>, rhs: &[T]) -> Result<Vec<T>, EigenError> {
    let wt = w.transpose();
    let gram = wt.matmul(w)?;
    let eig = eigh_symmetric(&gram)?;
    let wt_rhs = wt.matvec(rhs)?;
    let cutoff = eig.values.first().copied().unwrap_or_else(T::zero).max(T::zero()) * T::tolerance(1e-12);
    let d = w.cols();
    let mut x = vec![T::zero(); d];
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda <= cutoff {
            continue;
        }
        let coeff = (0..d).map(|i| eig.vectors.get(i, k) * wt_rhs[i]).sum::<T>() / lambda;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = *xi + coeff * eig.vectors.get(i, k);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_spectrum() {
        let e = eigh_symmetric(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(e.vectors, Matrix::identity(3));
    }

    #[test]
    fn diagonal_sorted_descending() {
        let a = Matrix::<f64>::from_rows(&[[2.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 5.0]]).unwrap();
        let e = eigh_symmetric(&a).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, -1.0]);
        let expected = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(e.vectors, expected);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::<f64>::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = eigh_symmetric(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let h = 0.5f64.sqrt();
        assert!((e.vectors.get(0, 0) - h).abs() < 1e-14 && (e.vectors.get(1, 0) - h).abs() < 1e-14);
        assert!(e.reconstruct().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let a = Matrix::<f64>::from_rows(&[[4.0, -2.0, 0.5], [-2.0, 1.0, 0.3], [0.5, 0.3, -3.0]]).unwrap();
        let e = eigh_symmetric(&a).unwrap();
        for k in 0..3 {
            let col = e.column(k);
            let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = Matrix::<f64>::from_rows(&[[1.0, 2.0], [2.1, 1.0]]).unwrap();
        assert!(matches!(eigh_symmetric(&a), Err(EigenError::NotSymmetric { .. })));
        assert!(matches!(eigh_symmetric(&Matrix::<f64>::zeros(2, 3)), Err(EigenError::NotSquare { .. })));
        let nan = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        assert_eq!(eigh_symmetric(&nan).unwrap_err(), EigenError::NonFinite);
    }

    #[test]
    fn min_norm_solve_matches_pinv() {
        // rank-deficient: second column duplicates the first
        let w = Matrix::<f64>::from_rows(&[[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]]).unwrap();
        let x = min_norm_solve(&w, &[2.0, 4.0, 0.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12, "{x:?}");
        let sq = Matrix::<f64>::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        let x = min_norm_solve(&sq, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.25).abs() < 1e-15);
    }
}
