//! Dense vector and matrix aliases plus the few numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseVector = DVector<f64>;
pub type DenseMatrix = DMatrix<f64>;

pub fn ensure_finite(v: &DenseVector, what: &str) -> Result<()> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn ensure_finite_matrix(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.iter().all(|e| e.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn ensure_len(v: &DenseVector, expected: usize, context: &'static str) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got: v.len(),
        })
    }
}

/// Checked matrix-vector product.
pub fn mat_vec(m: &DenseMatrix, v: &DenseVector, context: &'static str) -> Result<DenseVector> {
    if m.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: m.ncols(),
            got: v.len(),
        });
    }
    Ok(m * v)
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |a, &b| a.max(b))
}

/// (smallest, largest) eigenvalue of a symmetric matrix.
pub fn symmetric_extremes(m: &DenseMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `n` points log-spaced between `lo` and `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Solve `m x = b` by LU, reporting singularity.
pub fn solve(m: &DenseMatrix, b: &DenseVector, context: &str) -> Result<DenseVector> {
    if m.nrows() != m.ncols() || m.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "linear solve",
            expected: m.nrows(),
            got: b.len(),
        });
    }
    let x = m
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(context.to_string()))?;
    if x.iter().all(|e| e.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular(context.to_string()))
    }
}
