//! Outer fixed-point iteration of one time step.
//!
//! Each sweep freezes the relative field and the velocity, advances the
//! continuity equation, evaluates the coefficient fields and lower-order
//! sources at the frozen state, solves the coupled potential block and the
//! momentum equation, and measures the increment. The sweep map contracts
//! for small time steps; the measured energy sequence records the
//! contraction factors.

use nalgebra::DVector;

use crate::error::{MixError, Result};
use crate::solver::coeffs::{eval_cells, CellCoeffs};
use crate::solver::forcing::ForceDecomposition;
use crate::solver::qzeta::solve_zeta_given_q;
use crate::solver::{
    grad_dirichlet, grad_neumann, solve_momentum, solve_q_zeta, step_continuity, DiscreteState,
    PicardReport, QField, QZetaCoeffs, SolverContext,
};

/// Fixed-point iteration controls.
#[derive(Debug, Clone)]
pub struct PicardParams {
    /// Relative max-norm increment below which the sweep has converged.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for PicardParams {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 50,
        }
    }
}

/// Byproducts of the converged step used by the monitors.
#[derive(Debug, Clone)]
pub struct StepPayload {
    /// Reconstructed species densities per cell.
    pub rho: Vec<DVector<f64>>,
    /// Free energy density per cell.
    pub k_value: Vec<f64>,
    /// Full pressure per cell (zeta-free part plus volume potential).
    pub pressure: Vec<f64>,
    /// Volume-direction coefficient per cell.
    pub d_scal: Vec<f64>,
    /// Coupling vector per cell.
    pub a_vec: Vec<DVector<f64>>,
    /// Scalar force drive of the potential equation per cell.
    pub h_field: Vec<f64>,
}

struct SweepSources {
    g: QField,
    h: Vec<f64>,
    f: Vec<f64>,
}

/// Per-component copies of a cellwise block field, for gradient stencils.
fn components(q: &QField) -> Vec<Vec<f64>> {
    (0..q.n_comp())
        .map(|l| (0..q.n_cells()).map(|i| q.get(i, l)).collect())
        .collect()
}

/// Lower-order sources evaluated at the frozen state `(varrho, q*, v*)`.
fn assemble_sources(
    ctx: &SolverContext,
    cells: &[CellCoeffs],
    forces: &[ForceDecomposition],
    varrho: &[f64],
    q_star: &QField,
    v_star: &[f64],
) -> SweepSources {
    let n = ctx.grid.n_cells();
    let m = ctx.n_relative();
    let dx = ctx.grid.dx();
    let q_comp = components(q_star);

    // h = d b_hat + A . b_tilde, cellwise.
    let h: Vec<f64> = (0..n)
        .map(|i| cells[i].d_scal * forces[i].hat + cells[i].a_vec.dot(&forces[i].tilde))
        .collect();

    // Divergence of the mobility-weighted force flux in conservative form,
    // zero at the walls.
    let mut force_flux = vec![DVector::zeros(m); n + 1];
    if !ctx.forces.is_none() {
        for face in 1..n {
            let (l, r) = (face - 1, face);
            let m_tilde_f = 0.5 * (&cells[l].m_tilde + &cells[r].m_tilde);
            let a_f = 0.5 * (&cells[l].a_vec + &cells[r].a_vec);
            let tilde_f = 0.5 * (&forces[l].tilde + &forces[r].tilde);
            let hat_f = 0.5 * (forces[l].hat + forces[r].hat);
            force_flux[face] = m_tilde_f * tilde_f + a_f * hat_f;
        }
    }

    let mut g = QField::zeros(n, m);
    let mut f = vec![0.0; n];
    for i in 0..n {
        let div_v = grad_dirichlet(v_star, dx, i);
        let qx = DVector::from_fn(m, |l, _| grad_neumann(&q_comp[l], dx, i));
        let g_i = (&cells[i].r_varrho * varrho[i] - &cells[i].r_vec) * div_v
            - &cells[i].r_q * (&qx * v_star[i])
            - (&force_flux[i + 1] - &force_flux[i]) / dx
            + &cells[i].r_tilde;
        g.set_cell(i, &g_i);

        // One-sided at the walls: the total density carries no boundary
        // condition of its own.
        let rho_x = if i == 0 {
            (varrho[1] - varrho[0]) / dx
        } else if i + 1 == n {
            (varrho[n - 1] - varrho[n - 2]) / dx
        } else {
            (varrho[i + 1] - varrho[i - 1]) / (2.0 * dx)
        };
        f[i] = -cells[i].p_varrho * rho_x - cells[i].p_q.dot(&qx) - varrho[i] * v_star[i] * div_v
            + cells[i].r_vec.dot(&forces[i].tilde)
            + forces[i].hat
            + varrho[i] * forces[i].bar;
    }
    SweepSources { g, h, f }
}

/// Advances one time step by fixed-point iteration of the splitting sweep.
pub fn picard_advance(
    ctx: &SolverContext,
    state_n: &DiscreteState,
    dt: f64,
) -> Result<(DiscreteState, PicardReport, StepPayload)> {
    let n = ctx.grid.n_cells();
    let m = ctx.n_relative();
    let dx = ctx.grid.dx();
    let t_new = state_n.time + dt;

    let forces: Vec<ForceDecomposition> = (0..n)
        .map(|i| {
            ctx.forces
                .decompose_at(m, ctx.grid.length(), ctx.grid.cell_center(i), t_new)
        })
        .collect();

    let mut q_star = state_n.q.clone();
    let mut v_star = state_n.v.clone();
    let mut prev_q = state_n.q.clone();
    let mut prev_v = state_n.v.clone();
    let mut prev_rho = state_n.varrho.clone();
    let mut prev_zeta = state_n.zeta.clone();

    let mut m_seeds: Vec<Option<f64>> = vec![None; n];
    let mut energies: Vec<f64> = Vec::new();
    let mut increments: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut growth_streak = 0usize;

    let mut varrho_new = state_n.varrho.clone();
    let mut q_new = state_n.q.clone();
    let mut zeta_new = state_n.zeta.clone();
    let mut v_new = state_n.v.clone();
    let mut cells: Vec<CellCoeffs> = Vec::new();
    let mut h_field = vec![0.0; n];
    let mut sweeps = 0usize;

    for sweep in 1..=ctx.picard.max_sweeps {
        sweeps = sweep;
        varrho_new = step_continuity(
            &ctx.spec,
            &ctx.grid,
            &state_n.varrho,
            &v_star,
            dt,
            state_n.time,
        )?;
        cells = eval_cells(ctx, &varrho_new, &q_star, &mut m_seeds)?;
        let sources = assemble_sources(ctx, &cells, &forces, &varrho_new, &q_star, &v_star);
        h_field = sources.h.clone();

        let coeffs = QZetaCoeffs {
            r_q: cells.iter().map(|c| c.r_q.clone()).collect(),
            m_tilde: cells.iter().map(|c| c.m_tilde.clone()).collect(),
            a_vec: cells.iter().map(|c| c.a_vec.clone()).collect(),
            d_scal: cells.iter().map(|c| c.d_scal).collect(),
        };
        let (q_next, zeta_next) = solve_q_zeta(
            &ctx.grid, &coeffs, &sources.g, &sources.h, &v_star, &state_n.q, dt,
        )?;
        let v_next = solve_momentum(
            &ctx.grid,
            &varrho_new,
            &zeta_next,
            &sources.f,
            &state_n.v,
            dt,
            ctx.viscosity,
        )?;

        // Increment of the parabolic pair between consecutive sweeps.
        let mut inc: f64 = 0.0;
        for i in 0..n {
            inc = inc.max((v_next[i] - v_star[i]).abs());
            for l in 0..m {
                inc = inc.max((q_next.get(i, l) - q_star.get(i, l)).abs());
            }
        }
        let state_scale = 1.0
            + q_next
                .max_abs()
                .max(v_next.iter().fold(0.0_f64, |a, &x| a.max(x.abs())));
        let rel_inc = inc / state_scale;

        // Weighted squared increment: sup part over the fields plus the
        // time-slab gradient part.
        let mut sup_part = 0.0;
        let mut grad_part = 0.0;
        for i in 0..n {
            let dq = q_next.cell_vector(i) - prev_q.cell_vector(i);
            let dvel = v_next[i] - prev_v[i];
            let dsig = varrho_new[i] - prev_rho[i];
            sup_part += dx * (dq.dot(&dq) + dvel * dvel + dsig * dsig);
        }
        let dq_field = QField::from_fn(n, m, |i, l| q_next.get(i, l) - prev_q.get(i, l));
        let dq_comp = components(&dq_field);
        let dzeta: Vec<f64> = (0..n).map(|i| zeta_next[i] - prev_zeta[i]).collect();
        let dv: Vec<f64> = (0..n).map(|i| v_next[i] - prev_v[i]).collect();
        for i in 0..n {
            let mut gsq = 0.0;
            for comp in &dq_comp {
                let gx = grad_neumann(comp, dx, i);
                gsq += gx * gx;
            }
            let zx = grad_neumann(&dzeta, dx, i);
            let wx = grad_dirichlet(&dv, dx, i);
            grad_part += dx * (gsq + zx * zx + wx * wx);
        }
        energies.push(sup_part + dt * grad_part);

        prev_q = q_next.clone();
        prev_v = v_next.clone();
        prev_rho = varrho_new.clone();
        prev_zeta = zeta_next.clone();

        q_new = q_next;
        zeta_new = zeta_next;
        v_new = v_next;
        increments.push(rel_inc);

        if rel_inc <= ctx.picard.tol {
            converged = true;
            break;
        }
        if increments.len() >= 2 {
            let k = increments.len();
            if increments[k - 1] > increments[k - 2] {
                growth_streak += 1;
                if growth_streak >= 3 {
                    return Err(MixError::PicardDivergence {
                        sweeps: sweep,
                        increment: rel_inc,
                    });
                }
            } else {
                growth_streak = 0;
            }
        }
        q_star = q_new.clone();
        v_star = v_new.clone();
    }

    // Consistency pass: re-solve the potential equation alone at the
    // converged pair so the discrete volume-production identity holds
    // against the recorded fields.
    if converged {
        let coeffs = QZetaCoeffs {
            r_q: cells.iter().map(|c| c.r_q.clone()).collect(),
            m_tilde: cells.iter().map(|c| c.m_tilde.clone()).collect(),
            a_vec: cells.iter().map(|c| c.a_vec.clone()).collect(),
            d_scal: cells.iter().map(|c| c.d_scal).collect(),
        };
        zeta_new = solve_zeta_given_q(&ctx.grid, &coeffs, &q_new, &v_new, &h_field)?;
    }

    let ratios: Vec<f64> = energies
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    let report = PicardReport {
        n_iterations: sweeps,
        final_increment: *increments.last().unwrap_or(&0.0),
        energy_sequence: energies,
        energy_ratios: ratios,
        converged,
    };

    let payload = StepPayload {
        rho: cells.iter().map(|c| c.rho.clone()).collect(),
        k_value: cells.iter().map(|c| c.k_value).collect(),
        pressure: cells
            .iter()
            .zip(zeta_new.iter())
            .map(|(c, z)| c.pressure + z)
            .collect(),
        d_scal: cells.iter().map(|c| c.d_scal).collect(),
        a_vec: cells.iter().map(|c| c.a_vec.clone()).collect(),
        h_field,
    };

    let state = DiscreteState {
        varrho: varrho_new,
        q: q_new,
        zeta: zeta_new,
        v: v_new,
        time: t_new,
    };
    Ok((state, report, payload))
}
