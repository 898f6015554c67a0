//! Scenario configuration: parsing, validation and assembly of the solver
//! context.
//!
//! Configs are TOML documents. Every validation failure names the key path
//! and the rule it violates, so a bad scenario is rejected before any
//! numerics run.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::build_frame;
use crate::closure::ClosureModel;
use crate::error::{MixError, Result};
use crate::solver::{
    DiscreteState, ForceModel, Grid1D, PicardParams, QField, ReactionModel, SolverContext,
    THRESHOLD_GUARD,
};
use crate::thermo::MixtureSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub molar_mass: Vec<f64>,
    pub vbar: Vec<f64>,
    #[serde(default)]
    pub mu_ref: Option<Vec<f64>>,
    #[serde(default = "default_one")]
    pub theta_kb: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureConfig {
    #[serde(default = "default_closure_kind")]
    pub kind: String,
    #[serde(default = "default_one")]
    pub mobility_scale: f64,
    #[serde(default)]
    pub diffusivities: Option<Vec<Vec<f64>>>,
}

impl Default for ClosureConfig {
    fn default() -> Self {
        Self {
            kind: default_closure_kind(),
            mobility_scale: 1.0,
            diffusivities: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_cells: usize,
    #[serde(default = "default_one")]
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    #[serde(default = "default_picard_tol")]
    pub tol: f64,
    #[serde(default = "default_picard_sweeps")]
    pub max_sweeps: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: default_picard_tol(),
            max_sweeps: default_picard_sweeps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumConfig {
    #[serde(default = "default_one")]
    pub viscosity: f64,
}

impl Default for MomentumConfig {
    fn default() -> Self {
        Self { viscosity: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: String,
    #[serde(default)]
    pub varrho: Option<f64>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub varrho_base: Option<f64>,
    #[serde(default)]
    pub varrho_amplitude: Option<f64>,
    #[serde(default)]
    pub q_amplitude: Option<Vec<f64>>,
    #[serde(default)]
    pub v_amplitude: Option<f64>,
    #[serde(default)]
    pub varrho_values: Option<Vec<f64>>,
    #[serde(default)]
    pub q_values: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub v_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcesConfig {
    #[serde(default = "default_none_kind")]
    pub kind: String,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default)]
    pub omega: Option<f64>,
}

impl Default for ForcesConfig {
    fn default() -> Self {
        Self {
            kind: default_none_kind(),
            amplitude: None,
            amplitudes: None,
            omega: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionsConfig {
    #[serde(default = "default_none_kind")]
    pub kind: String,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub mass_action: Option<bool>,
}

impl Default for ReactionsConfig {
    fn default() -> Self {
        Self {
            kind: default_none_kind(),
            direction: None,
            rate: None,
            mass_action: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Significant digits of the emitted numbers. Fixed at 17 so repeated
    /// runs diff byte-identically; other values are rejected.
    #[serde(default = "default_precision")]
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_out_dir(),
            cadence: default_cadence(),
            precision: default_precision(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            p: default_p(),
            alpha: default_alpha(),
        }
    }
}

fn default_one() -> f64 {
    1.0
}
fn default_closure_kind() -> String {
    "quasi_diagonal".into()
}
fn default_none_kind() -> String {
    "none".into()
}
fn default_picard_tol() -> f64 {
    1e-9
}
fn default_picard_sweeps() -> usize {
    50
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_cadence() -> usize {
    1
}
fn default_precision() -> usize {
    17
}
fn default_p() -> f64 {
    4.0
}
fn default_alpha() -> f64 {
    0.25
}

/// Full scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub closure: ClosureConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub momentum: MomentumConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub forces: ForcesConfig,
    #[serde(default)]
    pub reactions: ReactionsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub monitors: MonitorConfig,
}

/// Everything a run needs, assembled and validated.
pub struct BuiltScenario {
    pub context: SolverContext,
    pub initial: DiscreteState,
    pub dt: f64,
    pub t_final: f64,
    pub cadence: usize,
    pub out_dir: String,
    pub monitor_p: f64,
    pub monitor_alpha: f64,
}

fn rule<T>(path: &str, r: std::result::Result<T, MixError>) -> Result<T> {
    r.map_err(|e| MixError::Validation(format!("{path}: {e}")))
}

/// Parses and fully validates a scenario document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| MixError::Parse(format!("{e}")))?;
    build_scenario(&config)?;
    Ok(config)
}

/// Assembles the solver context and initial state, applying every
/// validation rule of the downstream modules.
pub fn build_scenario(config: &RunConfig) -> Result<BuiltScenario> {
    let n = config.mixture.molar_mass.len();
    let mu_ref = config
        .mixture
        .mu_ref
        .clone()
        .unwrap_or_else(|| vec![0.0; n]);
    let spec = rule(
        "mixture",
        MixtureSpec::new(
            config.mixture.molar_mass.clone(),
            config.mixture.vbar.clone(),
            mu_ref,
            config.mixture.theta_kb,
        ),
    )?;
    let frame = rule("mixture.vbar", build_frame(spec.vbar(), n))?;
    let m = n - 2;

    let closure = match config.closure.kind.as_str() {
        "quasi_diagonal" => rule(
            "closure.mobility_scale",
            ClosureModel::quasi_diagonal(config.closure.mobility_scale),
        )?,
        "maxwell_stefan" => {
            let table = config.closure.diffusivities.as_ref().ok_or_else(|| {
                MixError::Validation(
                    "closure.diffusivities: required for the maxwell_stefan closure".into(),
                )
            })?;
            if table.len() != n || table.iter().any(|row| row.len() != n) {
                return Err(MixError::Validation(format!(
                    "closure.diffusivities: must be {n}x{n}"
                )));
            }
            let mat = DMatrix::from_fn(n, n, |i, j| table[i][j]);
            rule("closure.diffusivities", ClosureModel::maxwell_stefan(mat))?
        }
        other => {
            return Err(MixError::Validation(format!(
                "closure.kind: unknown closure '{other}'"
            )))
        }
    };

    let grid = rule("grid", Grid1D::new(config.grid.n_cells, config.grid.length))?;

    if config.time.dt <= 0.0 || config.time.t_final <= 0.0 {
        return Err(MixError::Validation(
            "time: dt and t_final must be positive".into(),
        ));
    }
    if config.picard.tol <= 0.0 || config.picard.max_sweeps == 0 {
        return Err(MixError::Validation(
            "picard: tol must be positive and max_sweeps nonzero".into(),
        ));
    }
    if config.momentum.viscosity <= 0.0 {
        return Err(MixError::Validation(
            "momentum.viscosity: must be positive".into(),
        ));
    }

    let forces = match config.forces.kind.as_str() {
        "none" => ForceModel::none(),
        "inward" => ForceModel::inward(
            config.forces.amplitude.unwrap_or(1.0),
            config.forces.omega.unwrap_or(0.0),
        ),
        "uniform" => ForceModel::uniform(
            config.forces.amplitude.unwrap_or(1.0),
            config.forces.omega.unwrap_or(0.0),
        ),
        "species_sine2" => {
            let amps = config.forces.amplitudes.clone().ok_or_else(|| {
                MixError::Validation(
                    "forces.amplitudes: required for the species_sine2 profile".into(),
                )
            })?;
            rule(
                "forces.amplitudes",
                ForceModel::species_sine2(&frame, amps, config.forces.omega.unwrap_or(0.0)),
            )?
        }
        other => {
            return Err(MixError::Validation(format!(
                "forces.kind: unknown force profile '{other}'"
            )))
        }
    };

    let reaction = match config.reactions.kind.as_str() {
        "none" => ReactionModel::none(),
        "constant_direction" => {
            let direction = config
                .reactions
                .direction
                .clone()
                .ok_or_else(|| MixError::Validation("reactions.direction: required".into()))?;
            rule(
                "reactions.direction",
                ReactionModel::constant_direction(
                    &spec,
                    &frame,
                    direction,
                    config.reactions.rate.unwrap_or(0.0),
                    config.reactions.mass_action.unwrap_or(false),
                ),
            )?
        }
        other => {
            return Err(MixError::Validation(format!(
                "reactions.kind: unknown reaction '{other}'"
            )))
        }
    };

    let initial = build_initial(config, &spec, &grid, m)?;

    if config.output.cadence == 0 {
        return Err(MixError::Validation(
            "output.cadence: must be at least 1".into(),
        ));
    }
    if config.output.precision != 17 {
        return Err(MixError::Validation(
            "output.precision: fixed at 17 significant digits for bit-stable diffs".into(),
        ));
    }
    if config.monitors.p <= 3.0 {
        return Err(MixError::Validation(
            "monitors.p: integrability exponent must exceed 3".into(),
        ));
    }
    if !(config.monitors.alpha > 0.0 && config.monitors.alpha <= 1.0) {
        return Err(MixError::Validation(
            "monitors.alpha: must lie in (0, 1]".into(),
        ));
    }

    let context = SolverContext {
        spec,
        frame,
        closure,
        grid,
        viscosity: config.momentum.viscosity,
        forces,
        reaction,
        picard: PicardParams {
            tol: config.picard.tol,
            max_sweeps: config.picard.max_sweeps,
        },
    };
    Ok(BuiltScenario {
        context,
        initial,
        dt: config.time.dt,
        t_final: config.time.t_final,
        cadence: config.output.cadence,
        out_dir: config.output.directory.clone(),
        monitor_p: config.monitors.p,
        monitor_alpha: config.monitors.alpha,
    })
}

fn build_initial(
    config: &RunConfig,
    spec: &MixtureSpec,
    grid: &Grid1D,
    m: usize,
) -> Result<DiscreteState> {
    let n = grid.n_cells();
    let pi = std::f64::consts::PI;
    let l = grid.length();
    let (varrho, mut q, v): (Vec<f64>, QField, Vec<f64>) = match config.initial.kind.as_str() {
        "uniform" => {
            let r0 = config.initial.varrho.ok_or_else(|| {
                MixError::Validation("initial.varrho: required for the uniform profile".into())
            })?;
            let q0 = config.initial.q.clone().unwrap_or_else(|| vec![0.0; m]);
            if q0.len() != m {
                return Err(MixError::Validation(format!(
                    "initial.q: expected {m} components, got {}",
                    q0.len()
                )));
            }
            (
                vec![r0; n],
                QField::from_fn(n, m, |_, li| q0[li]),
                vec![0.0; n],
            )
        }
        "cosine" => {
            let base = config.initial.varrho_base.ok_or_else(|| {
                MixError::Validation("initial.varrho_base: required for the cosine profile".into())
            })?;
            let amp = config.initial.varrho_amplitude.unwrap_or(0.0);
            let q0 = config.initial.q.clone().unwrap_or_else(|| vec![0.0; m]);
            let q_amp = config
                .initial
                .q_amplitude
                .clone()
                .unwrap_or_else(|| vec![0.0; m]);
            if q0.len() != m || q_amp.len() != m {
                return Err(MixError::Validation(format!(
                    "initial.q / initial.q_amplitude: expected {m} components"
                )));
            }
            let v_amp = config.initial.v_amplitude.unwrap_or(0.0);
            let varrho: Vec<f64> = (0..n)
                .map(|i| base + amp * (pi * grid.cell_center(i) / l).cos())
                .collect();
            let q = QField::from_fn(n, m, |i, li| {
                q0[li] + q_amp[li] * (pi * grid.cell_center(i) / l).cos()
            });
            let v: Vec<f64> = (0..n)
                .map(|i| v_amp * (pi * grid.cell_center(i) / l).sin())
                .collect();
            (varrho, q, v)
        }
        "tabulated" => {
            let varrho =
                config.initial.varrho_values.clone().ok_or_else(|| {
                    MixError::Validation("initial.varrho_values: required".into())
                })?;
            if varrho.len() != n {
                return Err(MixError::Validation(format!(
                    "initial.varrho_values: expected {n} cells, got {}",
                    varrho.len()
                )));
            }
            let q_rows = config
                .initial
                .q_values
                .clone()
                .unwrap_or_else(|| vec![vec![0.0; m]; n]);
            if q_rows.len() != n || q_rows.iter().any(|r| r.len() != m) {
                return Err(MixError::Validation(format!(
                    "initial.q_values: expected {n} rows of {m} components"
                )));
            }
            let v = config
                .initial
                .v_values
                .clone()
                .unwrap_or_else(|| vec![0.0; n]);
            if v.len() != n {
                return Err(MixError::Validation(format!(
                    "initial.v_values: expected {n} cells"
                )));
            }
            (varrho, QField::from_fn(n, m, |i, li| q_rows[i][li]), v)
        }
        other => {
            return Err(MixError::Validation(format!(
                "initial.kind: unknown profile '{other}'"
            )))
        }
    };

    // Initial total density must sit strictly inside the admissible
    // interval, clear of the guard band.
    let (lo, hi) = (spec.rho_min(), spec.rho_max());
    for (i, &r) in varrho.iter().enumerate() {
        if r <= lo + 10.0 * THRESHOLD_GUARD || r >= hi - 10.0 * THRESHOLD_GUARD {
            return Err(MixError::Validation(format!(
                "initial: varrho = {r} at cell {i} is not strictly inside ({lo}, {hi})"
            )));
        }
    }
    // Zero-normal-difference compatibility for the relative field: copy the
    // first interior value onto the wall cells.
    if n >= 2 {
        for li in 0..m {
            let inner_lo = q.get(1, li);
            let inner_hi = q.get(n - 2, li);
            q.set(0, li, inner_lo);
            q.set(n - 1, li, inner_hi);
        }
    }

    Ok(DiscreteState {
        varrho,
        q,
        zeta: vec![0.0; n],
        v,
        time: 0.0,
    })
}

/// FNV-1a hash of the canonical serialized config; stable across runs of
/// the same build.
pub fn config_hash(config: &RunConfig) -> String {
    let text = toml::to_string(config).unwrap_or_default();
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BINARY_FIXTURE: &str = r#"
[mixture]
molar_mass = [1.0, 1.0]
vbar = [1.0, 2.0]

[grid]
n_cells = 64
length = 1.0

[time]
dt = 1e-3
t_final = 0.01

[initial]
kind = "cosine"
varrho_base = 0.75
varrho_amplitude = 0.2
"#;

    #[test]
    fn minimal_binary_document_parses_with_defaults() {
        let config = parse_config(BINARY_FIXTURE).unwrap();
        assert_eq!(config.closure.kind, "quasi_diagonal");
        assert_eq!(config.picard.max_sweeps, 50);
        assert!((config.picard.tol - 1e-9).abs() < 1e-24);
        assert_eq!(config.output.cadence, 1);
        let built = build_scenario(&config).unwrap();
        assert_eq!(built.context.grid.n_cells(), 64);
        assert_eq!(built.initial.q.n_comp(), 0);
        // Profile spans (0.55, 0.95).
        let max = built.initial.varrho.iter().cloned().fold(0.0_f64, f64::max);
        let min = built.initial.varrho.iter().cloned().fold(2.0_f64, f64::min);
        assert!(max < 0.95 + 1e-6 && min > 0.55 - 1e-6);
    }

    #[test]
    fn constant_volumes_rejected() {
        let text = BINARY_FIXTURE.replace("vbar = [1.0, 2.0]", "vbar = [2.0, 2.0]");
        let err = parse_config(&text).unwrap_err();
        match err {
            MixError::Validation(msg) => {
                assert!(msg.contains("degenerate partial specific volumes"), "{msg}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn inadmissible_reaction_rejected() {
        let text = format!(
            "{BINARY_FIXTURE}\n[reactions]\nkind = \"constant_direction\"\ndirection = [1.0, 0.0]\nrate = 1.0\n"
        );
        let err = parse_config(&text).unwrap_err();
        match err {
            MixError::Validation(msg) => {
                assert!(msg.contains("orthogonal"), "{msg}");
                assert!(msg.contains("reactions.direction"), "{msg}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn syntax_error_is_parse_error() {
        let err = parse_config("this is not toml = [").unwrap_err();
        assert!(matches!(err, MixError::Parse(_)));
    }

    #[test]
    fn initial_density_outside_interval_rejected() {
        let text = BINARY_FIXTURE.replace("varrho_base = 0.75", "varrho_base = 0.85");
        // amplitude 0.2 pushes the profile over the upper threshold 1.0.
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, MixError::Validation(_)));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_config(BINARY_FIXTURE).unwrap();
        let b = parse_config(BINARY_FIXTURE).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = parse_config(&BINARY_FIXTURE.replace("dt = 1e-3", "dt = 2e-3")).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
