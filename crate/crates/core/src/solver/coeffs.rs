//! Pointwise coefficient evaluation at a linearization state.

use nalgebra::{DMatrix, DVector};

use crate::closure::reduce_at_composition;
use crate::error::Result;
use crate::solver::{QField, SolverContext};
use crate::thermo::{self, Composition, FreeEnergy, IdealMixture};

/// Everything the sweep needs at one cell: the reconstructed densities, the
/// density-projection and pressure Jacobians, the reduced transport
/// coefficients and the projected reaction rate.
#[derive(Debug, Clone)]
pub struct CellCoeffs {
    pub rho: DVector<f64>,
    pub r_vec: DVector<f64>,
    pub r_q: DMatrix<f64>,
    pub r_varrho: DVector<f64>,
    pub p_q: DVector<f64>,
    pub p_varrho: f64,
    /// Zeta-free pressure part.
    pub pressure: f64,
    pub m_coord: f64,
    pub m_tilde: DMatrix<f64>,
    pub a_vec: DVector<f64>,
    pub d_scal: f64,
    pub k_core: DMatrix<f64>,
    /// Free energy density at the reconstructed composition.
    pub k_value: f64,
    pub r_tilde: DVector<f64>,
}

/// Evaluates the coefficients on every cell. `m_seeds` carries the all-ones
/// coordinate from the previous evaluation as a warm start and is updated
/// in place.
pub fn eval_cells(
    ctx: &SolverContext,
    varrho: &[f64],
    q: &QField,
    m_seeds: &mut [Option<f64>],
) -> Result<Vec<CellCoeffs>> {
    let n = varrho.len();
    let mut out = Vec::with_capacity(n);
    let energy = IdealMixture::new(&ctx.spec);
    for i in 0..n {
        let q_i = q.cell_vector(i);
        let point =
            thermo::reduced_point_seeded(&ctx.spec, &ctx.frame, varrho[i], &q_i, m_seeds[i])?;
        m_seeds[i] = Some(point.m_coord);
        let comp = Composition::new(point.rho.clone())?;
        let reduced = reduce_at_composition(&ctx.closure, &ctx.frame, &comp)?;
        let reaction = ctx.reaction.evaluate(&ctx.spec, &point.rho);
        let r_tilde = ctx.frame.pi_matrix().transpose() * reaction;
        let k_value = energy.value(&point.rho);
        out.push(CellCoeffs {
            rho: point.rho,
            r_vec: point.r_vec,
            r_q: point.jacobians.r_q,
            r_varrho: point.jacobians.r_varrho,
            p_q: point.jacobians.p_q,
            p_varrho: point.jacobians.p_varrho,
            pressure: point.pressure,
            m_coord: point.m_coord,
            m_tilde: reduced.m_tilde,
            a_vec: reduced.a_vec,
            d_scal: reduced.d_scal,
            k_core: reduced.k_core,
            k_value,
            r_tilde,
        });
    }
    Ok(out)
}
