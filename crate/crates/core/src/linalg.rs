//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.is_empty() {
        return 0.0;
    }
    if !m.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let n = m.nrows();
    match nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 1000 * n) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_radius(m),
    }
}

// ‖M^(2^j)‖^(1/2^j) by repeated squaring; never below the true radius.
fn gelfand_radius(m: &DMatrix<f64>) -> f64 {
    let mut log_scale = 0.0;
    let mut p = m.clone();
    let mut estimate = f64::INFINITY;
    for j in 0..40 {
        let norm = spectral_norm(&p);
        if norm == 0.0 {
            return 0.0;
        }
        let pow = 2f64.powi(j);
        estimate = estimate.min(((norm.ln() + log_scale) / pow).exp());
        p /= norm;
        log_scale += norm.ln();
        log_scale *= 2.0;
        p = &p * &p;
    }
    estimate
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Rank with singular values below `max(rows, cols) * eps * sigma_max`
/// counted as zero.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues clamped at 0,
/// returned as `(values, vectors)`.
fn symmetric_clamped(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    (vals, eig.eigenvectors)
}

/// Factor `L` with `L Lᵀ = m` for a symmetric PSD matrix.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_clamped(m);
    let mut l = vecs;
    for (j, v) in vals.iter().enumerate() {
        l.column_mut(j).scale_mut(v.sqrt());
    }
    l
}

/// Symmetric square root of a PSD matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_clamped(m);
    let d = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    &vecs * d * vecs.transpose()
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_clamped(m);
    let vmax = vals.max();
    let tol = vals.len() as f64 * f64::EPSILON * vmax;
    let inv = vals.map(|v| if v > tol { 1.0 / v } else { 0.0 });
    &vecs * DMatrix::from_diagonal(&inv) * vecs.transpose()
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Orthonormal basis (as rows) of the row space of `m`.
pub fn row_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::zeros(0, cols);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(0, cols);
    }
    let tol = m.nrows().max(cols) as f64 * f64::EPSILON * smax;
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tol)
        .map(|(i, _)| i)
        .collect();
    DMatrix::from_fn(keep.len(), cols, |r, c| v_t[(keep[r], c)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&DMatrix::identity(4, 4)), 1.0, max_relative = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.9]));
        assert_relative_eq!(spectral_radius(&d), 0.9, max_relative = 1e-12);
        let th: f64 = 0.3;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.7;
        assert_relative_eq!(spectral_radius(&rot), 0.7, max_relative = 1e-10);
    }

    #[test]
    fn block_diag_layout() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let b = DMatrix::from_element(2, 1, 2.0);
        let m = block_diag(&[a, b]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(2, 2)], 2.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let l = psd_factor(&m);
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-12);
        let s = psd_sqrt(&m);
        assert_relative_eq!(&s * &s, m, epsilon = 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(numeric_rank(&m), 1);
        assert_eq!(row_space_basis(&m).nrows(), 1);
        assert_eq!(numeric_rank(&DMatrix::zeros(3, 3)), 0);
    }
}
