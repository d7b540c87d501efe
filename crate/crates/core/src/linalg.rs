//! Small dense helpers shared by the filters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative eigenvalue cutoff used by [`pseudo_inverse_sym`].
pub const PINV_RCOND: f64 = 1e-12;
/// Above this condition number the symmetric pseudoinverse replaces a plain solve.
pub const SOLVE_COND_LIMIT: f64 = 1e10;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Moore-Penrose inverse of a symmetric matrix through its eigendecomposition.
/// Eigenvalues with magnitude below `PINV_RCOND * |lambda|_max` are treated as zero.
pub fn pseudo_inverse_sym(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmax = eig.eigenvalues.amax();
    if lmax == 0.0 {
        return Mat::zeros(n, n);
    }
    let cutoff = PINV_RCOND * lmax;
    let inv: Vector = eig.eigenvalues.map(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    symmetrize(&(v * Mat::from_diagonal(&inv) * v.transpose()))
}

/// Inverse of a symmetric matrix: a Cholesky/LU solve when well conditioned,
/// the eigen pseudoinverse otherwise.
pub fn inverse_sym(m: &Mat) -> Mat {
    let n = m.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let s = symmetrize(m);
    let eig = SymmetricEigen::new(s.clone());
    let lmax = eig.eigenvalues.amax();
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if lmax > 0.0 && lmin > 0.0 && lmax / lmin < SOLVE_COND_LIMIT {
        if let Some(inv) = s.clone().lu().try_inverse() {
            return symmetrize(&inv);
        }
    }
    pseudo_inverse_sym(&s)
}

/// Place `blocks` along the diagonal.
pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_singular_matrix() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pseudo_inverse_sym(&m);
        // A A+ A = A
        let back = &m * &p * &m;
        assert!((back - &m).amax() < 1e-12);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_lu_when_well_conditioned() {
        let m = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = inverse_sym(&m);
        assert!((&m * inv - Mat::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn block_diag_layout() {
        let a = Mat::from_element(1, 1, 2.0);
        let b = Mat::from_element(2, 2, 3.0);
        let m = block_diag(&[a, b]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(2, 1)], 3.0);
    }
}
