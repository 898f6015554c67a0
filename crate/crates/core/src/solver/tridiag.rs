//! Thomas solvers for the tridiagonal and block-tridiagonal systems of the
//! one-dimensional discretization.

use nalgebra::{DMatrix, DVector};

use crate::error::{MixError, Result};

/// Scalar tridiagonal solve. `lower[i]` couples row `i` to `i-1` (lower[0]
/// unused), `upper[i]` couples row `i` to `i+1` (last entry unused).
pub fn solve_tridiag(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() < 1e-300 {
        return Err(MixError::SingularBlock("zero pivot in row 0".into()));
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot.abs() < 1e-300 {
            return Err(MixError::SingularBlock(format!("zero pivot in row {i}")));
        }
        if i < n - 1 {
            c[i] = upper[i] / pivot;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Block-tridiagonal solve with square blocks of width `m`. The unknowns are
/// stored cellwise; an empty block width returns immediately.
pub fn solve_block_tridiag(
    lower: &[DMatrix<f64>],
    diag: &[DMatrix<f64>],
    upper: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = diag[0].nrows();
    if m == 0 {
        return Ok(vec![DVector::zeros(0); n]);
    }
    let mut gamma: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut delta: Vec<DVector<f64>> = Vec::with_capacity(n);

    let lu0 = diag[0].clone().lu();
    let g0 = lu0
        .solve(&upper[0])
        .ok_or_else(|| MixError::SingularBlock("singular diagonal block 0".into()))?;
    let d0 = lu0
        .solve(&rhs[0])
        .ok_or_else(|| MixError::SingularBlock("singular diagonal block 0".into()))?;
    gamma.push(g0);
    delta.push(d0);

    for i in 1..n {
        let denom = &diag[i] - &lower[i] * &gamma[i - 1];
        let lu = denom.lu();
        let g = if i < n - 1 {
            lu.solve(&upper[i])
                .ok_or_else(|| MixError::SingularBlock(format!("singular diagonal block {i}")))?
        } else {
            DMatrix::zeros(m, m)
        };
        let r = &rhs[i] - &lower[i] * &delta[i - 1];
        let d = lu
            .solve(&r)
            .ok_or_else(|| MixError::SingularBlock(format!("singular diagonal block {i}")))?;
        gamma.push(g);
        delta.push(d);
    }

    let mut x = vec![DVector::zeros(m); n];
    x[n - 1] = delta[n - 1].clone();
    for i in (0..n - 1).rev() {
        x[i] = &delta[i] - &gamma[i] * &x[i + 1];
    }
    Ok(x)
}
