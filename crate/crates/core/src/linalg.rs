//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitter added to every covariance matrix before factorization.
pub const JITTER: f64 = 1e-8;

pub type Chol = Cholesky<f64, Dyn>;

/// Symmetrize in place: `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Add `jitter` to the diagonal and factorize. On failure the error carries
/// an eigenvalue-based condition report.
pub fn cholesky_jittered(mut m: DMatrix<f64>, jitter: f64, what: &str) -> Result<Chol> {
    if m.nrows() != m.ncols() {
        return Err(Error::arg(format!(
            "{what}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for i in 0..m.nrows() {
        m[(i, i)] += jitter;
    }
    match m.clone().cholesky() {
        Some(c) => Ok(c),
        None => Err(Error::Factorization {
            what: what.to_string(),
            size: m.nrows(),
            condition: condition_report(&m),
        }),
    }
}

fn condition_report(m: &DMatrix<f64>) -> String {
    if m.iter().any(|v| !v.is_finite()) {
        return "matrix has non-finite entries".into();
    }
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    format!(
        "eigenvalues in [{min:.3e}, {max:.3e}], condition estimate {:.3e}",
        if min > 0.0 { max / min } else { f64::INFINITY }
    )
}

/// Solve `L x = b` for lower-triangular `L` (the factor of `chol`).
pub fn solve_lower(chol: &Chol, b: &DMatrix<f64>) -> DMatrix<f64> {
    chol.l_dirty()
        .solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal")
}

pub fn solve_lower_vec(chol: &Chol, b: &DVector<f64>) -> DVector<f64> {
    chol.l_dirty()
        .solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal")
}

/// Solve `Lᵀ x = b`.
pub fn solve_upper_transpose_vec(chol: &Chol, b: &DVector<f64>) -> DVector<f64> {
    chol.l_dirty()
        .tr_solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal")
}

/// `log |M|` from the Cholesky factor of `M`.
pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Lower-triangular factor times a vector, `L z`.
pub fn lower_mul(chol: &Chol, z: &DVector<f64>) -> DVector<f64> {
    let l = chol.l_dirty();
    let n = z.len();
    let mut out = DVector::zeros(n);
    for j in 0..n {
        let zj = z[j];
        if zj == 0.0 {
            continue;
        }
        for i in j..n {
            out[i] += l[(i, j)] * zj;
        }
    }
    out
}
