//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Eigenvalues below this are treated as zero when inverting square roots.
pub const PD_EIG_FLOOR: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).eigenvalues.max()
}

/// Operator norm of a symmetric matrix (largest absolute eigenvalue).
pub fn op_norm_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).eigenvalues.amax()
}

/// Symmetric PSD square root; negative eigenvalues from rounding are clamped to 0.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sym_eigen(m);
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn inv_sqrt_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m);
    let min = eig.eigenvalues.min();
    if min <= PD_EIG_FLOOR {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    let vals = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// Eigenvalues of a general square matrix, or `None` if the real Schur
/// iteration does not converge (it can stall on defective matrices).
pub fn eigenvalues_general(a: &DMatrix<f64>) -> Option<Vec<nalgebra::Complex<f64>>> {
    let schur = a.clone().try_schur(f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Spectral radius of a general square matrix. Falls back to Gelfand's
/// formula `lim ‖A^k‖^{1/k}` along `k = 2^j` when the Schur iteration stalls.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    if let Some(eig) = eigenvalues_general(a) {
        return eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    // A^(2^j) = m * exp(log_scale)
    let mut m = a / norm;
    let mut log_scale = norm.ln();
    let mut power = 1.0f64;
    for _ in 0..48 {
        m = &m * &m;
        let nm = m.norm();
        if nm == 0.0 {
            return 0.0;
        }
        m /= nm;
        log_scale = 2.0 * log_scale + nm.ln();
        power *= 2.0;
    }
    (log_scale / power).exp()
}

/// Solve `g x = b` for each column of `b` through a QR factorisation of `g`.
pub fn qr_solve(g: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    g.clone()
        .qr()
        .solve(b)
        .ok_or_else(|| Error::NotPositiveDefinite { min_eig: 0.0 })
}

/// Column-stacking vectorisation.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return invalid(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(())
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return invalid("ragged matrix rows");
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
