//! Bit-stable output emission: monitor rows, field snapshots and run
//! metadata.
//!
//! Numbers are printed in scientific notation with 17 significant digits
//! and a point separator, so repeated runs of the same config on the same
//! build diff byte-identically.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{config_hash, RunConfig};
use crate::error::Result;
use crate::solver::{MonitorRow, Termination, TimeSeries};

/// 17 significant digits, deterministic.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub const MONITOR_HEADER: &str = "step,time,mass,m_lower,M_upper,zeta_mean,volume_residual,picard_iters,picard_ratio,N_crit,K_crit,free_energy";

fn monitor_line(row: &MonitorRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        row.step,
        fmt17(row.time),
        fmt17(row.mass),
        fmt17(row.m_lower),
        fmt17(row.m_upper),
        fmt17(row.zeta_mean),
        fmt17(row.volume_residual),
        row.picard_iters,
        fmt17(row.picard_ratio),
        fmt17(row.n_crit),
        fmt17(row.k_crit),
        fmt17(row.free_energy),
    )
}

/// Renders `monitors.csv` in memory.
pub fn render_monitors(series: &TimeSeries) -> String {
    let mut out = String::new();
    out.push_str(MONITOR_HEADER);
    out.push('\n');
    for row in &series.rows {
        out.push_str(&monitor_line(row));
        out.push('\n');
    }
    out
}

/// Renders one field snapshot: positions, evolved fields, reconstructed
/// densities and the full pressure.
pub fn render_fields(series: &TimeSeries, snapshot_index: usize, x: &[f64]) -> String {
    let snap = &series.snapshots[snapshot_index];
    let n_comp = snap.state.q.n_comp();
    let n_species = snap.rho.first().map(|r| r.len()).unwrap_or(0);
    let mut header = String::from("x,varrho");
    for l in 0..n_comp {
        let _ = write!(header, ",q_{}", l + 1);
    }
    header.push_str(",zeta,v");
    for s in 0..n_species {
        let _ = write!(header, ",rho_{}", s + 1);
    }
    header.push_str(",pressure");

    let mut out = String::new();
    out.push_str(&header);
    out.push('\n');
    for i in 0..snap.state.varrho.len() {
        let mut line = format!("{},{}", fmt17(x[i]), fmt17(snap.state.varrho[i]));
        for l in 0..n_comp {
            let _ = write!(line, ",{}", fmt17(snap.state.q.get(i, l)));
        }
        let _ = write!(line, ",{}", fmt17(snap.state.zeta[i]));
        let _ = write!(line, ",{}", fmt17(snap.state.v[i]));
        for s in 0..n_species {
            let _ = write!(line, ",{}", fmt17(snap.rho[i][s]));
        }
        let _ = write!(line, ",{}", fmt17(snap.pressure[i]));
        out.push_str(&line);
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct BreachInfo {
    step: usize,
    time: f64,
    cell: usize,
    value: f64,
}

#[derive(Serialize)]
struct DivergenceInfo {
    step: usize,
    sweeps: usize,
    increment: f64,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    termination: &'a str,
    steps_completed: usize,
    config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    breach: Option<BreachInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence: Option<DivergenceInfo>,
    config: &'a RunConfig,
}

/// Renders the run metadata document.
pub fn render_metadata(series: &TimeSeries, config: &RunConfig) -> String {
    let breach = match &series.termination {
        Termination::ThresholdBreach {
            step,
            time,
            cell,
            value,
        } => Some(BreachInfo {
            step: *step,
            time: *time,
            cell: *cell,
            value: *value,
        }),
        _ => None,
    };
    let divergence = match &series.termination {
        Termination::PicardDivergence {
            step,
            sweeps,
            increment,
        } => Some(DivergenceInfo {
            step: *step,
            sweeps: *sweeps,
            increment: *increment,
        }),
        _ => None,
    };
    let meta = RunMetadata {
        termination: series.termination.label(),
        steps_completed: series.steps_completed,
        config_hash: config_hash(config),
        breach,
        divergence,
        config,
    };
    let mut text = serde_json::to_string_pretty(&meta).unwrap_or_else(|_| "{}".into());
    text.push('\n');
    text
}

/// Writes `monitors.csv`, the cadence snapshots `fields_<step>.csv` and
/// `run.json` into the output directory.
pub fn emit_outputs(
    series: &TimeSeries,
    config: &RunConfig,
    out_dir: &Path,
    x: &[f64],
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("monitors.csv"), render_monitors(series))?;
    for (idx, snap) in series.snapshots.iter().enumerate() {
        let name = format!("fields_{}.csv", snap.step);
        fs::write(out_dir.join(name), render_fields(series, idx, x))?;
    }
    fs::write(out_dir.join("run.json"), render_metadata(series, config))?;
    Ok(())
}
