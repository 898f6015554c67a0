//! Explicit conservative upwind step for the total mass density.

use crate::error::{MixError, Result};
use crate::solver::{face_velocity, Grid1D, CFL_LIMIT, THRESHOLD_GUARD};
use crate::thermo::MixtureSpec;

/// One explicit upwind step of the continuity equation with frozen
/// velocity. The flux form telescopes, so with zero wall velocity the total
/// discrete mass is preserved to rounding. The run halts with a breach
/// error before any cell leaves the admissible density interval.
pub fn step_continuity(
    spec: &MixtureSpec,
    grid: &Grid1D,
    varrho_n: &[f64],
    v_star: &[f64],
    dt: f64,
    time: f64,
) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let dx = grid.dx();
    let vmax = v_star.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let cfl = dt * vmax / dx;
    if cfl > CFL_LIMIT {
        return Err(MixError::CflViolation {
            number: cfl,
            limit: CFL_LIMIT,
        });
    }

    // Upwind fluxes on faces 0..=n; walls carry zero velocity hence zero flux.
    let mut flux = vec![0.0; n + 1];
    for face in 1..n {
        let vf = face_velocity(v_star, face);
        flux[face] = if vf >= 0.0 {
            varrho_n[face - 1] * vf
        } else {
            varrho_n[face] * vf
        };
    }

    let (lo, hi) = (spec.rho_min(), spec.rho_max());
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = varrho_n[i] - dt / dx * (flux[i + 1] - flux[i]);
        if out[i] <= lo + THRESHOLD_GUARD || out[i] >= hi - THRESHOLD_GUARD {
            return Err(MixError::ThresholdBreach {
                time: time + dt,
                cell: i,
                value: out[i],
                lo,
                hi,
            });
        }
    }
    Ok(out)
}
