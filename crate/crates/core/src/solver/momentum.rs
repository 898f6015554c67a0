//! Implicit Euler step of the linearized momentum balance.

use crate::error::{MixError, Result};
use crate::solver::{grad_neumann, solve_tridiag, Grid1D, BLOCK_RESIDUAL_TOL};

/// One implicit Euler step of
/// `varrho dv/dt - eta v_xx + zeta_x = f` with zero wall velocity. The wall
/// condition enters through antisymmetric ghosts, the potential gradient
/// through mirror ghosts.
pub fn solve_momentum(
    grid: &Grid1D,
    varrho: &[f64],
    zeta: &[f64],
    rhs_f: &[f64],
    v_n: &[f64],
    dt: f64,
    viscosity: f64,
) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let dx = grid.dx();
    if viscosity <= 0.0 {
        return Err(MixError::Validation("viscosity must be positive".into()));
    }
    let inv_dx2 = viscosity / (dx * dx);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        // Antisymmetric ghosts double the wall-side coupling onto the
        // diagonal: v_ghost = -v_boundary.
        let wall = i == 0 || i + 1 == n;
        diag[i] = varrho[i] / dt + inv_dx2 * if wall { 3.0 } else { 2.0 };
        if i > 0 {
            lower[i] = -inv_dx2;
        }
        if i + 1 < n {
            upper[i] = -inv_dx2;
        }
        rhs[i] = rhs_f[i] + varrho[i] * v_n[i] / dt - grad_neumann(zeta, dx, i);
    }
    let v = solve_tridiag(&lower, &diag, &upper, &rhs)?;

    let mut res: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let mut ax = diag[i] * v[i];
        if i > 0 {
            ax += lower[i] * v[i - 1];
        }
        if i + 1 < n {
            ax += upper[i] * v[i + 1];
        }
        res = res.max((ax - rhs[i]).abs());
        scale = scale.max(rhs[i].abs());
    }
    if res > BLOCK_RESIDUAL_TOL * (1.0 + scale) {
        return Err(MixError::SingularBlock(format!(
            "momentum residual {res:.3e} exceeds tolerance"
        )));
    }
    Ok(v)
}
