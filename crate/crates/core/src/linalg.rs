//! Small dense helpers on top of `nalgebra`.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{CeaError, Result};

/// Relative residual below which a column counts as collinear with the
/// columns before it.
pub const COLLINEARITY_TOL: f64 = 1e-10;

/// Indices of columns of a Gram matrix that are (numerically) linear
/// combinations of earlier columns. Columns are scanned left to right so the
/// first occurrence of a dependent set is kept.
pub fn collinear_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let p = gram.nrows();
    let diag: Vec<f64> = (0..p).map(|i| gram[(i, i)]).collect();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut bad = Vec::new();
    for k in 0..p {
        if !(diag[k] > 0.0) || !diag[k].is_finite() {
            bad.push(k);
            continue;
        }
        let scaled = |i: usize, j: usize| gram[(i, j)] / libm::sqrt(diag[i] * diag[j]);
        for (pos, &j) in kept.iter().enumerate() {
            let mut s = scaled(k, j);
            for &i in &kept[..pos] {
                s -= l[(k, i)] * l[(j, i)];
            }
            l[(k, j)] = s / l[(j, j)];
        }
        let mut r = 1.0;
        for &j in &kept {
            r -= l[(k, j)] * l[(k, j)];
        }
        if r <= COLLINEARITY_TOL {
            bad.push(k);
        } else {
            l[(k, k)] = libm::sqrt(r);
            kept.push(k);
        }
    }
    bad
}

/// Errors with the names of collinear columns, if any.
pub fn check_full_rank(gram: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let bad = collinear_columns(gram);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CeaError::RankDeficient {
            columns: bad
                .into_iter()
                .map(|i| names.get(i).cloned().unwrap_or_else(|| alloc::format!("x{i}")))
                .collect(),
        })
    }
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}

pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn spd_log_det(a: &DMatrix<f64>) -> Option<f64> {
    let c = a.clone().cholesky()?;
    let l = c.l_dirty();
    Some(2.0 * (0..a.nrows()).map(|i| libm::log(l[(i, i)])).sum::<f64>())
}

/// Builds a row-major design into a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}
