//! Full run orchestration: march the fixed-point stepper, feed the
//! monitors, and collect the emitted record.

use nalgebra::DVector;

use crate::config::{build_scenario, RunConfig};
use crate::diagnostics::{threshold_monitor, total_energy, ExtensionAccumulator, MonitorReport};
use crate::error::{MixError, Result};
use crate::solver::picard::StepPayload;
use crate::solver::qzeta::solve_zeta_given_q;
use crate::solver::{picard_advance, DiscreteState, QZetaCoeffs, SolverContext};

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    ThresholdBreach {
        step: usize,
        time: f64,
        cell: usize,
        value: f64,
    },
    PicardDivergence {
        step: usize,
        sweeps: usize,
        increment: f64,
    },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::ThresholdBreach { .. } => "threshold_breach",
            Termination::PicardDivergence { .. } => "picard_divergence",
        }
    }

    /// Process exit code contract: 0 completed, 2 breach, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Completed => 0,
            Termination::ThresholdBreach { .. } => 2,
            Termination::PicardDivergence { .. } => 3,
        }
    }
}

/// One monitor record per computed step.
#[derive(Debug, Clone)]
pub struct MonitorRow {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub m_lower: f64,
    pub m_upper: f64,
    pub zeta_mean: f64,
    pub volume_residual: f64,
    pub picard_iters: usize,
    pub picard_ratio: f64,
    pub n_crit: f64,
    pub k_crit: f64,
    pub free_energy: f64,
}

/// Field snapshot at one output step.
#[derive(Debug, Clone)]
pub struct FieldsSnapshot {
    pub step: usize,
    pub state: DiscreteState,
    pub rho: Vec<DVector<f64>>,
    pub pressure: Vec<f64>,
}

/// Emitted record of a run.
#[derive(Debug)]
pub struct TimeSeries {
    pub rows: Vec<MonitorRow>,
    pub snapshots: Vec<FieldsSnapshot>,
    pub termination: Termination,
    pub report: MonitorReport,
    pub final_state: DiscreteState,
    pub steps_completed: usize,
}

/// Runs a validated scenario to its final time or to a recorded breakdown.
pub fn run_simulation(config: &RunConfig) -> Result<TimeSeries> {
    let scenario = build_scenario(config)?;
    run_with_context(
        &scenario.context,
        scenario.initial,
        scenario.dt,
        scenario.t_final,
        scenario.cadence,
        scenario.monitor_p,
        scenario.monitor_alpha,
    )
}

/// Lower-level entry point for callers that assembled the context
/// themselves.
pub fn run_with_context(
    ctx: &SolverContext,
    mut state: DiscreteState,
    dt: f64,
    t_final: f64,
    cadence: usize,
    monitor_p: f64,
    monitor_alpha: f64,
) -> Result<TimeSeries> {
    let n = ctx.grid.n_cells();
    let m = ctx.n_relative();
    let n_steps = (t_final / dt).round().max(1.0) as usize;

    // Initial consistency: the volume potential solves its equation at the
    // initial data before the first step.
    {
        let mut m_seeds = vec![None; n];
        let cells = crate::solver::coeffs::eval_cells(ctx, &state.varrho, &state.q, &mut m_seeds)?;
        let forces: Vec<_> = (0..n)
            .map(|i| {
                ctx.forces
                    .decompose_at(m, ctx.grid.length(), ctx.grid.cell_center(i), 0.0)
            })
            .collect();
        let h: Vec<f64> = (0..n)
            .map(|i| cells[i].d_scal * forces[i].hat + cells[i].a_vec.dot(&forces[i].tilde))
            .collect();
        let coeffs = QZetaCoeffs {
            r_q: cells.iter().map(|c| c.r_q.clone()).collect(),
            m_tilde: cells.iter().map(|c| c.m_tilde.clone()).collect(),
            a_vec: cells.iter().map(|c| c.a_vec.clone()).collect(),
            d_scal: cells.iter().map(|c| c.d_scal).collect(),
        };
        state.zeta = solve_zeta_given_q(&ctx.grid, &coeffs, &state.q, &state.v, &h)?;
    }

    let mass0 = state.mass(&ctx.grid);
    let mut accumulator = ExtensionAccumulator::new(&ctx.grid, m, monitor_p, monitor_alpha)?;
    accumulator.push(&state);

    let mut rows: Vec<MonitorRow> = Vec::with_capacity(n_steps);
    let mut snapshots: Vec<FieldsSnapshot> = Vec::new();
    let mut termination = Termination::Completed;
    let mut m_lower_running = f64::INFINITY;
    let mut m_upper_running: f64 = 0.0;
    let mut mass_drift_max: f64 = 0.0;
    let mut zeta_mean_max: f64 = 0.0;
    let mut volume_residual_max: f64 = 0.0;
    let mut picard_energies: Vec<Vec<f64>> = Vec::new();
    let mut steps_completed = 0usize;

    for step in 1..=n_steps {
        let outcome = picard_advance(ctx, &state, dt);
        let (next, report, payload) = match outcome {
            Ok(v) => v,
            Err(MixError::ThresholdBreach {
                time, cell, value, ..
            }) => {
                termination = Termination::ThresholdBreach {
                    step,
                    time,
                    cell,
                    value,
                };
                break;
            }
            Err(MixError::PicardDivergence { sweeps, increment }) => {
                termination = Termination::PicardDivergence {
                    step,
                    sweeps,
                    increment,
                };
                break;
            }
            Err(other) => return Err(other),
        };
        if !report.converged {
            termination = Termination::PicardDivergence {
                step,
                sweeps: report.n_iterations,
                increment: report.final_increment,
            };
            break;
        }
        state = next;
        steps_completed = step;

        let (m_now, m_up_now) = threshold_monitor(&ctx.spec, &state.varrho, state.time)?;
        m_lower_running = m_lower_running.min(m_now);
        m_upper_running = m_upper_running.max(m_up_now);

        let mass = state.mass(&ctx.grid);
        let drift = ((mass - mass0) / mass0).abs();
        mass_drift_max = mass_drift_max.max(drift);
        let zeta_mean = state.zeta_mean();
        zeta_mean_max = zeta_mean_max.max(zeta_mean.abs());
        let volume_residual = payload
            .rho
            .iter()
            .map(|rho| (rho.dot(ctx.spec.vbar()) - 1.0).abs())
            .fold(0.0_f64, f64::max);
        volume_residual_max = volume_residual_max.max(volume_residual);

        accumulator.push(&state);
        let (n_crit, k_crit) = accumulator.current();

        let free_energy = total_energy(&ctx.grid, &payload.k_value, &state.varrho, &state.v);
        let picard_ratio = report.energy_ratios.last().copied().unwrap_or(0.0);
        picard_energies.push(report.energy_sequence.clone());

        rows.push(MonitorRow {
            step,
            time: state.time,
            mass,
            m_lower: m_lower_running,
            m_upper: m_upper_running,
            zeta_mean,
            volume_residual,
            picard_iters: report.n_iterations,
            picard_ratio,
            n_crit,
            k_crit,
            free_energy,
        });

        if step % cadence == 0 {
            snapshots.push(snapshot_of(step, &state, &payload));
        }
    }

    let (n_crit, k_crit) = accumulator.current();
    let report = MonitorReport {
        m_lower: if m_lower_running.is_finite() {
            m_lower_running
        } else {
            0.0
        },
        m_upper: m_upper_running,
        mass_drift: mass_drift_max,
        zeta_mean_max,
        volume_residual_max,
        n_criterion: n_crit,
        k_criterion: k_crit,
        picard_energies,
    };

    Ok(TimeSeries {
        rows,
        snapshots,
        termination,
        report,
        final_state: state,
        steps_completed,
    })
}

fn snapshot_of(step: usize, state: &DiscreteState, payload: &StepPayload) -> FieldsSnapshot {
    FieldsSnapshot {
        step,
        state: state.clone(),
        rho: payload.rho.clone(),
        pressure: payload.pressure.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_frame;
    use crate::closure::ClosureModel;
    use crate::solver::{ForceModel, Grid1D, PicardParams, ReactionModel};
    use crate::thermo::MixtureSpec;

    fn binary_context(n_cells: usize) -> SolverContext {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
        let frame = build_frame(spec.vbar(), 2).unwrap();
        SolverContext {
            spec,
            frame,
            closure: ClosureModel::quasi_diagonal(1.0).unwrap(),
            grid: Grid1D::new(n_cells, 1.0).unwrap(),
            viscosity: 1.0,
            forces: ForceModel::none(),
            reaction: ReactionModel::none(),
            picard: PicardParams::default(),
        }
    }

    #[test]
    fn equilibrium_state_is_preserved() {
        let ctx = binary_context(32);
        let state = DiscreteState::uniform(&ctx.grid, 0, 0.75, &[]);
        let series = run_with_context(&ctx, state, 1e-3, 0.02, 1, 4.0, 0.25).unwrap();
        assert_eq!(series.termination, Termination::Completed);
        assert_eq!(series.steps_completed, 20);
        for row in &series.rows {
            assert_eq!(row.picard_iters, 1);
            assert!(row.zeta_mean.abs() <= 1e-12);
        }
        for (i, &r) in series.final_state.varrho.iter().enumerate() {
            assert!((r - 0.75).abs() <= 1e-10, "cell {i}: {r}");
        }
        for &v in &series.final_state.v {
            assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn interdiffusion_conserves_mass_and_descends_energy() {
        let ctx = binary_context(48);
        let state = {
            let mut s = DiscreteState::uniform(&ctx.grid, 0, 0.75, &[]);
            for i in 0..48 {
                let x = ctx.grid.cell_center(i);
                s.varrho[i] = 0.75 + 0.15 * (std::f64::consts::PI * x).cos();
            }
            s
        };
        let series = run_with_context(&ctx, state, 1e-3, 0.05, 5, 4.0, 0.25).unwrap();
        assert_eq!(series.termination, Termination::Completed);
        assert!(series.report.mass_drift <= 1e-10);
        assert!(series.report.zeta_mean_max <= 1e-12);
        assert!(series.report.volume_residual_max <= 1e-9);
        // Ten snapshots at cadence 5 over 50 steps.
        assert_eq!(series.snapshots.len(), 10);
        // The free energy trends down.
        let first = series.rows.first().unwrap().free_energy;
        let last = series.rows.last().unwrap().free_energy;
        assert!(last < first, "free energy rose: {first} -> {last}");
    }

    #[test]
    fn binary_friction_closure_drives_a_full_run() {
        use nalgebra::DMatrix;
        let spec =
            MixtureSpec::new(vec![1.0, 1.5, 0.8], vec![1.0, 2.0, 4.0], vec![0.0; 3], 1.0).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        let diff = DMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                0.0
            } else {
                [[0.0, 0.8, 0.5], [0.8, 0.0, 1.2], [0.5, 1.2, 0.0]][i][j]
            }
        });
        let ctx = SolverContext {
            spec,
            frame,
            closure: ClosureModel::maxwell_stefan(diff).unwrap(),
            grid: Grid1D::new(48, 1.0).unwrap(),
            viscosity: 1.0,
            forces: ForceModel::none(),
            reaction: ReactionModel::none(),
            picard: PicardParams::default(),
        };
        let mut state = DiscreteState::uniform(&ctx.grid, 1, 0.5, &[0.1]);
        for i in 0..48 {
            let x = ctx.grid.cell_center(i);
            state.varrho[i] = 0.5 + 0.12 * (std::f64::consts::PI * x).cos();
            state
                .q
                .set(i, 0, 0.1 + 0.2 * (std::f64::consts::PI * x).cos());
        }
        let series = run_with_context(&ctx, state, 1e-3, 0.05, 1, 4.0, 0.25).unwrap();
        assert_eq!(series.termination, Termination::Completed);
        assert!(series.report.mass_drift <= 1e-10);
        assert!(series.report.zeta_mean_max <= 1e-12);
        assert!(series.report.volume_residual_max <= 1e-9);
        let fe: Vec<f64> = series.rows.iter().map(|r| r.free_energy).collect();
        for w in fe.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "free energy rose: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn ternary_forcing_and_reaction_keep_projections() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0, 4.0]).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        let forces = ForceModel::species_sine2(&frame, vec![0.5, -0.25, 0.0], 0.0).unwrap();
        // Direction orthogonal to both the all-ones and the volume vectors.
        let reaction =
            ReactionModel::constant_direction(&spec, &frame, vec![2.0, -3.0, 1.0], 0.05, false)
                .unwrap();
        let ctx = SolverContext {
            spec,
            frame,
            closure: ClosureModel::quasi_diagonal(1.0).unwrap(),
            grid: Grid1D::new(48, 1.0).unwrap(),
            viscosity: 1.0,
            forces,
            reaction,
            picard: PicardParams::default(),
        };
        let mut state = DiscreteState::uniform(&ctx.grid, 1, 0.5, &[0.0]);
        for i in 0..48 {
            let x = ctx.grid.cell_center(i);
            state.varrho[i] = 0.5 + 0.1 * (std::f64::consts::PI * x).cos();
        }
        let series = run_with_context(&ctx, state, 1e-3, 0.05, 1, 4.0, 0.25).unwrap();
        assert_eq!(series.termination, Termination::Completed);
        assert!(series.report.mass_drift <= 1e-10);
        for row in &series.rows {
            assert!(row.zeta_mean.abs() <= 1e-12, "step {}", row.step);
        }
        // The projected drive actually moved the relative field.
        assert!(series.final_state.q.max_abs() > 1e-6);
    }

    #[test]
    fn extension_criteria_closed_form_at_equilibrium() {
        // Uniform ternary state with a nonzero relative field: the first
        // criterion is the plain sup norm, the second reduces to the
        // space-time lp norm of the constant field.
        let spec = MixtureSpec::ideal(vec![1.0, 2.0, 4.0]).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        let ctx = SolverContext {
            spec,
            frame,
            closure: ClosureModel::quasi_diagonal(1.0).unwrap(),
            grid: Grid1D::new(32, 1.0).unwrap(),
            viscosity: 1.0,
            forces: ForceModel::none(),
            reaction: ReactionModel::none(),
            picard: PicardParams::default(),
        };
        let state = DiscreteState::uniform(&ctx.grid, 1, 0.5, &[0.3]);
        let t_final = 0.05;
        let p = 4.0;
        let series = run_with_context(&ctx, state, 1e-3, t_final, 1, p, 0.25).unwrap();
        let last = series.rows.last().unwrap();
        assert!((last.n_crit - 0.3).abs() <= 1e-9, "n_crit {}", last.n_crit);
        let k_expect = 0.3 * t_final.powf(1.0 / p);
        assert!(
            (last.k_crit - k_expect).abs() <= 1e-9,
            "k_crit {} vs {k_expect}",
            last.k_crit
        );
    }

    #[test]
    fn extension_criteria_regression_on_reference_run() {
        // Frozen values recorded from this 32-cell interdiffusion fixture;
        // guards against silent changes in the monitor definitions.
        let ctx = binary_context(32);
        let mut state = DiscreteState::uniform(&ctx.grid, 0, 0.75, &[]);
        for i in 0..32 {
            let x = ctx.grid.cell_center(i);
            state.varrho[i] = 0.75 + 0.15 * (std::f64::consts::PI * x).cos();
        }
        let series = run_with_context(&ctx, state, 1e-3, 0.05, 1, 4.0, 0.25).unwrap();
        let last = series.rows.last().unwrap();
        let n_expect = 8.09894271509447039e-2;
        let k_expect = 3.51708438098214238e0;
        assert!(
            ((last.n_crit - n_expect) / n_expect).abs() <= 1e-6,
            "n_crit {} vs {n_expect}",
            last.n_crit
        );
        assert!(
            ((last.k_crit - k_expect) / k_expect).abs() <= 1e-6,
            "k_crit {} vs {k_expect}",
            last.k_crit
        );
    }

    #[test]
    fn oversized_time_step_reports_divergence() {
        // Strong projected forcing with a large step: the sweep increments
        // grow and the run terminates with the divergence reason instead of
        // looping.
        let spec = MixtureSpec::ideal(vec![1.0, 2.0, 4.0]).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        let forces = ForceModel::species_sine2(&frame, vec![8.0, -6.0, 1.0], 0.0).unwrap();
        let ctx = SolverContext {
            spec,
            frame,
            closure: ClosureModel::quasi_diagonal(1.0).unwrap(),
            grid: Grid1D::new(32, 1.0).unwrap(),
            viscosity: 0.05,
            forces,
            reaction: ReactionModel::none(),
            picard: PicardParams::default(),
        };
        let state = DiscreteState::uniform(&ctx.grid, 1, 0.5, &[0.0]);
        let series = run_with_context(&ctx, state, 0.05, 0.2, 1, 4.0, 0.25).unwrap();
        assert!(matches!(
            series.termination,
            Termination::PicardDivergence { .. }
        ));
        assert_eq!(series.termination.exit_code(), 3);
    }

    #[test]
    fn inward_forcing_breaches_threshold() {
        let mut ctx = binary_context(32);
        ctx.forces = ForceModel::inward(400.0, 0.0);
        ctx.viscosity = 30.0;
        let state = DiscreteState::uniform(&ctx.grid, 0, 0.98, &[]);
        let series = run_with_context(&ctx, state, 1e-3, 2.0, 1, 4.0, 0.25).unwrap();
        match series.termination {
            Termination::ThresholdBreach { value, .. } => {
                // The rejected trial update had entered the guard band.
                assert!(value >= ctx.spec.rho_max() - 1e-10);
            }
            ref other => panic!("expected threshold breach, got {other:?}"),
        }
        // No committed state ever reached the guard band.
        for &r in &series.final_state.varrho {
            assert!(r < ctx.spec.rho_max() - 1e-10);
            assert!(r > ctx.spec.rho_min() + 1e-10);
        }
        // Proximity monitor grows and the rows never lost cells outside the
        // interval.
        let rows = &series.rows;
        assert!(rows.len() >= 10);
        for w in rows.windows(2) {
            assert!(w[1].m_upper >= w[0].m_upper);
        }
        let tail = &rows[rows.len() - 10..];
        for w in tail.windows(2) {
            assert!(w[1].m_upper > w[0].m_upper, "proximity stalled: {tail:?}");
        }
    }
}
