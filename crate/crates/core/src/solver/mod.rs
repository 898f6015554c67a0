//! Time-marching solver for the transformed system on a one-dimensional
//! interval.
//!
//! One time step mirrors the linearized splitting: the continuity equation
//! is advanced first with a frozen velocity, the coupled relative-potential
//! and volume-potential block is solved implicitly, the momentum equation
//! closes the sweep, and the whole sweep is iterated to a fixed point.

mod coeffs;
mod continuity;
mod forcing;
mod momentum;
mod picard;
mod qzeta;
pub mod run;
mod tridiag;

pub use coeffs::CellCoeffs;
pub use continuity::step_continuity;
pub use forcing::{ForceDecomposition, ForceModel, ReactionModel};
pub use momentum::solve_momentum;
pub use picard::{picard_advance, PicardParams, StepPayload};
pub use qzeta::{solve_q_zeta, QZetaCoeffs};
pub use run::{run_simulation, MonitorRow, Termination, TimeSeries};
pub(crate) use tridiag::{solve_block_tridiag, solve_tridiag};

use nalgebra::DVector;

use crate::basis::Frame;
use crate::closure::ClosureModel;
use crate::error::{MixError, Result};
use crate::thermo::MixtureSpec;

/// Absolute guard band around the density thresholds; a run halts before
/// any cell enters it because the transport coefficients are singular at
/// the interval ends.
pub const THRESHOLD_GUARD: f64 = 1e-10;

/// CFL bound for the explicit continuity update.
pub const CFL_LIMIT: f64 = 0.9;

/// Residual tolerance of the implicit linear blocks.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-11;

/// Uniform cell-centered grid on an interval.
#[derive(Debug, Clone)]
pub struct Grid1D {
    n_cells: usize,
    length: f64,
    dx: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, length: f64) -> Result<Self> {
        if n_cells < 8 {
            return Err(MixError::Validation(format!(
                "need at least 8 cells, got {n_cells}"
            )));
        }
        if length <= 0.0 {
            return Err(MixError::Validation(
                "domain length must be positive".into(),
            ));
        }
        Ok(Self {
            n_cells,
            length,
            dx: length / n_cells as f64,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.cell_center(i)).collect()
    }
}

/// Cellwise field with a fixed number of components per cell (the relative
/// block has width N - 2, which is zero for binary mixtures).
#[derive(Debug, Clone, PartialEq)]
pub struct QField {
    n_cells: usize,
    n_comp: usize,
    data: Vec<f64>,
}

impl QField {
    pub fn zeros(n_cells: usize, n_comp: usize) -> Self {
        Self {
            n_cells,
            n_comp,
            data: vec![0.0; n_cells * n_comp],
        }
    }

    pub fn from_fn(n_cells: usize, n_comp: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut q = Self::zeros(n_cells, n_comp);
        for i in 0..n_cells {
            for l in 0..n_comp {
                q.data[i * n_comp + l] = f(i, l);
            }
        }
        q
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_comp..(i + 1) * self.n_comp]
    }

    pub fn cell_vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.cell(i))
    }

    pub fn set_cell(&mut self, i: usize, values: &DVector<f64>) {
        self.data[i * self.n_comp..(i + 1) * self.n_comp].copy_from_slice(values.as_slice());
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.data[i * self.n_comp + l]
    }

    pub fn set(&mut self, i: usize, l: usize, value: f64) {
        self.data[i * self.n_comp + l] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// The grid fields evolved by the solver.
#[derive(Debug, Clone)]
pub struct DiscreteState {
    pub varrho: Vec<f64>,
    pub q: QField,
    pub zeta: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

impl DiscreteState {
    /// Uniform state; the natural equilibrium fixture.
    pub fn uniform(grid: &Grid1D, n_comp: usize, varrho: f64, q: &[f64]) -> Self {
        Self {
            varrho: vec![varrho; grid.n_cells()],
            q: QField::from_fn(grid.n_cells(), n_comp, |_, l| q[l]),
            zeta: vec![0.0; grid.n_cells()],
            v: vec![0.0; grid.n_cells()],
            time: 0.0,
        }
    }

    pub fn zeta_mean(&self) -> f64 {
        self.zeta.iter().sum::<f64>() / self.zeta.len() as f64
    }

    pub fn mass(&self, grid: &Grid1D) -> f64 {
        self.varrho.iter().sum::<f64>() * grid.dx()
    }
}

/// Per-sweep fixed-point record: the weighted increment energies and the
/// convergence flag.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub n_iterations: usize,
    pub final_increment: f64,
    /// Weighted squared increments, one per sweep.
    pub energy_sequence: Vec<f64>,
    /// Successive ratios of the energy sequence (empty with fewer than two
    /// sweeps).
    pub energy_ratios: Vec<f64>,
    pub converged: bool,
}

/// Immutable problem description shared by every step of a run.
#[derive(Debug, Clone)]
pub struct SolverContext {
    pub spec: MixtureSpec,
    pub frame: Frame,
    pub closure: ClosureModel,
    pub grid: Grid1D,
    pub viscosity: f64,
    pub forces: ForceModel,
    pub reaction: ReactionModel,
    pub picard: PicardParams,
}

impl SolverContext {
    pub fn n_relative(&self) -> usize {
        self.spec.n_species() - 2
    }
}

/// Mirror ghost closure (zero-gradient) for cell-centered fields.
pub(crate) fn grad_neumann(field: &[f64], dx: f64, i: usize) -> f64 {
    let n = field.len();
    let left = if i == 0 { field[0] } else { field[i - 1] };
    let right = if i + 1 == n {
        field[n - 1]
    } else {
        field[i + 1]
    };
    (right - left) / (2.0 * dx)
}

/// Antisymmetric ghost closure (zero wall value) for the velocity.
pub(crate) fn grad_dirichlet(field: &[f64], dx: f64, i: usize) -> f64 {
    let n = field.len();
    let left = if i == 0 { -field[0] } else { field[i - 1] };
    let right = if i + 1 == n {
        -field[n - 1]
    } else {
        field[i + 1]
    };
    (right - left) / (2.0 * dx)
}

/// Interior face value by arithmetic average; walls carry zero velocity.
pub(crate) fn face_velocity(v: &[f64], face: usize) -> f64 {
    let n = v.len();
    if face == 0 || face == n {
        0.0
    } else {
        0.5 * (v[face - 1] + v[face])
    }
}
