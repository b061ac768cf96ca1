//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigendecomposition of a symmetric matrix with eigenpairs sorted by
/// descending eigenvalue. Columns of the returned matrix are eigenvectors.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Flips the sign of each column so that its largest-magnitude entry is
/// positive. Ties go to the first such entry.
pub fn fix_column_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best + 1e-12 {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Gram-Schmidt on two vectors. Returns `None` when they are (numerically)
/// parallel or either is zero.
pub fn orthonormal_pair(a: &DVector<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let na = a.norm();
    if na <= f64::EPSILON {
        return None;
    }
    let u = a / na;
    let mut v = b - &u * u.dot(b);
    // second pass keeps orthogonality at 1e-15 level
    v -= &u * u.dot(&v);
    let nv = v.norm();
    if nv <= 1e-12 * b.norm().max(f64::EPSILON) {
        return None;
    }
    Some((u, v / nv))
}

/// `wᵀMw` without allocating.
pub fn quad_form(m: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    m.column_iter().zip(w.iter()).map(|(col, &wj)| wj * col.dot(w)).sum()
}

/// Inverse square root `(M)^{-1/2}` of a symmetric positive-definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_symmetric_eigen(m);
    let scaled = DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()),
    );
    &vectors * DMatrix::from_diagonal(&scaled) * vectors.transpose()
}

/// Population covariance (divides by `n`) of the rows of `x`, together with
/// the column means.
pub fn covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}
