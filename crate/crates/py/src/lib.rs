//! Python bindings: the mixture thermodynamics, the coordinate change and
//! the scenario runner, exposed as `mixsim_py`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nalgebra::DVector;

use mixsim::basis::{build_frame, Frame};
use mixsim::closure::{reduce_closure, ClosureModel};
use mixsim::config::parse_config;
use mixsim::error::MixError;
use mixsim::output::emit_outputs;
use mixsim::solver::run_simulation;
use mixsim::thermo::{
    dual_solve, free_energy_k, from_physical, grad_k, implicit_m, map_r, pressure_p, to_physical,
    ChemicalState, Composition, MixtureSpec, ReducedCoords,
};

fn to_py_err(e: MixError) -> PyErr {
    match e {
        MixError::Parse(_) | MixError::Validation(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn vec_to_dvector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

/// Mixture description plus its coordinate frame.
#[pyclass]
struct Mixture {
    spec: MixtureSpec,
    frame: Frame,
}

#[pymethods]
impl Mixture {
    #[new]
    #[pyo3(signature = (molar_mass, vbar, mu_ref=None, theta_kb=1.0))]
    fn new(
        molar_mass: Vec<f64>,
        vbar: Vec<f64>,
        mu_ref: Option<Vec<f64>>,
        theta_kb: f64,
    ) -> PyResult<Self> {
        let n = molar_mass.len();
        let mu_ref = mu_ref.unwrap_or_else(|| vec![0.0; n]);
        let spec = MixtureSpec::new(molar_mass, vbar, mu_ref, theta_kb).map_err(to_py_err)?;
        let frame = build_frame(spec.vbar(), n).map_err(to_py_err)?;
        Ok(Self { spec, frame })
    }

    #[getter]
    fn n_species(&self) -> usize {
        self.spec.n_species()
    }

    #[getter]
    fn rho_min(&self) -> f64 {
        self.spec.rho_min()
    }

    #[getter]
    fn rho_max(&self) -> f64 {
        self.spec.rho_max()
    }

    /// Free energy density at strictly positive densities.
    fn free_energy(&self, rho: Vec<f64>) -> PyResult<f64> {
        let comp = Composition::new(vec_to_dvector(rho)).map_err(to_py_err)?;
        free_energy_k(&self.spec, &comp).map_err(to_py_err)
    }

    /// Gradient of the free energy (the chemical potentials at zero
    /// pressure contribution).
    fn grad_free_energy(&self, rho: Vec<f64>) -> PyResult<Vec<f64>> {
        let comp = Composition::new(vec_to_dvector(rho)).map_err(to_py_err)?;
        Ok(grad_k(&self.spec, &comp)
            .map_err(to_py_err)?
            .as_slice()
            .to_vec())
    }

    /// Pressure and maximizing densities of the constrained dual at the
    /// given chemical potentials.
    fn dual_solve(&self, mu: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let sol = dual_solve(&self.spec, &vec_to_dvector(mu)).map_err(to_py_err)?;
        Ok((sol.p, sol.rho.densities().as_slice().to_vec()))
    }

    /// All-ones coordinate of the chemical potential at `(varrho, q)`.
    fn implicit_coordinate(&self, varrho: f64, q: Vec<f64>) -> PyResult<f64> {
        implicit_m(&self.spec, &self.frame, varrho, &vec_to_dvector(q)).map_err(to_py_err)
    }

    /// Densities on the constraint surface at `(varrho, q)`.
    fn densities(&self, varrho: f64, q: Vec<f64>) -> PyResult<Vec<f64>> {
        let (rho, _) =
            map_r(&self.spec, &self.frame, varrho, &vec_to_dvector(q)).map_err(to_py_err)?;
        Ok(rho.densities().as_slice().to_vec())
    }

    /// Zeta-free pressure part at `(varrho, q)`.
    fn pressure(&self, varrho: f64, q: Vec<f64>) -> PyResult<f64> {
        pressure_p(&self.spec, &self.frame, varrho, &vec_to_dvector(q)).map_err(to_py_err)
    }

    /// Physical state `(mu, p, rho)` from the unconstrained coordinates.
    fn to_physical(
        &self,
        varrho: f64,
        q: Vec<f64>,
        zeta: f64,
    ) -> PyResult<(Vec<f64>, f64, Vec<f64>)> {
        let coords = ReducedCoords {
            varrho,
            q: vec_to_dvector(q),
            zeta,
        };
        let state = to_physical(&self.spec, &self.frame, &coords).map_err(to_py_err)?;
        Ok((
            state.mu.as_slice().to_vec(),
            state.p,
            state.rho.densities().as_slice().to_vec(),
        ))
    }

    /// Unconstrained coordinates `(varrho, q, zeta)` of a physical state.
    fn from_physical(&self, mu: Vec<f64>, p: f64, rho: Vec<f64>) -> PyResult<(f64, Vec<f64>, f64)> {
        let state = ChemicalState {
            mu: vec_to_dvector(mu),
            p,
            rho: Composition::new(vec_to_dvector(rho)).map_err(to_py_err)?,
        };
        let coords = from_physical(&self.spec, &self.frame, &state).map_err(to_py_err)?;
        Ok((coords.varrho, coords.q.as_slice().to_vec(), coords.zeta))
    }

    /// Reduced transport coefficients of the quasi-diagonal closure at
    /// `(varrho, q)`: the relative-block mobility, the coupling vector, the
    /// volume coefficient and the Schur core.
    #[pyo3(signature = (varrho, q, mobility_scale=1.0))]
    fn reduced_coefficients(
        &self,
        varrho: f64,
        q: Vec<f64>,
        mobility_scale: f64,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64, Vec<Vec<f64>>)> {
        let closure = ClosureModel::quasi_diagonal(mobility_scale).map_err(to_py_err)?;
        let red = reduce_closure(
            &closure,
            &self.frame,
            &self.spec,
            varrho,
            &vec_to_dvector(q),
        )
        .map_err(to_py_err)?;
        let to_rows = |m: &nalgebra::DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        Ok((
            to_rows(&red.m_tilde),
            red.a_vec.as_slice().to_vec(),
            red.d_scal,
            to_rows(&red.k_core),
        ))
    }
}

/// Validates a scenario document, raising ValueError with the violated
/// rule on failure.
#[pyfunction]
fn check_config(config_toml: &str) -> PyResult<()> {
    parse_config(config_toml).map(|_| ()).map_err(to_py_err)
}

/// Runs a scenario document and writes monitors, snapshots and metadata
/// into `out_dir`. Returns a summary dict.
#[pyfunction]
fn simulate<'py>(
    py: Python<'py>,
    config_toml: &str,
    out_dir: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = parse_config(config_toml).map_err(to_py_err)?;
    config.output.directory = out_dir.to_string();
    let scenario = mixsim::config::build_scenario(&config).map_err(to_py_err)?;
    let x = scenario.context.grid.centers();
    let series = run_simulation(&config).map_err(to_py_err)?;
    emit_outputs(&series, &config, std::path::Path::new(out_dir), &x).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("termination", series.termination.label())?;
    out.set_item("exit_code", series.termination.exit_code())?;
    out.set_item("steps_completed", series.steps_completed)?;
    out.set_item("mass_drift", series.report.mass_drift)?;
    out.set_item("zeta_mean_max", series.report.zeta_mean_max)?;
    out.set_item("volume_residual_max", series.report.volume_residual_max)?;
    out.set_item("final_time", series.final_state.time)?;
    Ok(out)
}

#[pymodule]
fn mixsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mixture>()?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
