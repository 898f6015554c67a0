//! End-to-end checks of the command-line surface: exit codes, output file
//! contracts and byte-level determinism.

use std::path::Path;
use std::process::Command;

fn mixsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixsim"))
}

const SHORT_RUN: &str = r#"
[mixture]
molar_mass = [1.0, 1.0]
vbar = [1.0, 2.0]

[grid]
n_cells = 32
length = 1.0

[time]
dt = 1e-3
t_final = 3e-3

[initial]
kind = "cosine"
varrho_base = 0.75
varrho_amplitude = 0.1
"#;

fn run_simulate(config: &Path, out: &Path) -> std::process::Output {
    mixsim()
        .arg("simulate")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .unwrap()
}

#[test]
fn three_steps_cadence_one_emits_three_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SHORT_RUN).unwrap();
    let out = dir.path().join("out");
    let result = run_simulate(&config, &out);
    assert_eq!(result.status.code(), Some(0));
    let mut fields: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("fields_"))
        .collect();
    fields.sort();
    assert_eq!(fields, vec!["fields_1.csv", "fields_2.csv", "fields_3.csv"]);
    assert!(out.join("monitors.csv").exists());
    assert!(out.join("run.json").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SHORT_RUN).unwrap();
    let out = dir.path().join("out");
    let names = ["monitors.csv", "fields_2.csv", "run.json"];
    assert_eq!(run_simulate(&config, &out).status.code(), Some(0));
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| std::fs::read(out.join(n)).unwrap())
        .collect();
    assert_eq!(run_simulate(&config, &out).status.code(), Some(0));
    for (name, bytes) in names.iter().zip(first.iter()) {
        let again = std::fs::read(out.join(name)).unwrap();
        assert_eq!(bytes, &again, "{name} differs between identical runs");
    }
}

#[test]
fn fixed_point_divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("diverge.toml");
    std::fs::write(
        &config,
        r#"
[mixture]
molar_mass = [1.0, 1.0, 1.0]
vbar = [1.0, 2.0, 4.0]

[grid]
n_cells = 32
length = 1.0

[time]
dt = 0.05
t_final = 0.2

[momentum]
viscosity = 0.05

[initial]
kind = "uniform"
varrho = 0.5

[forces]
kind = "species_sine2"
amplitudes = [8.0, -6.0, 1.0]
"#,
    )
    .unwrap();
    let result = run_simulate(&config, &dir.path().join("out"));
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn config_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, SHORT_RUN.replace("[1.0, 2.0]", "[2.0, 2.0]")).unwrap();
    let result = run_simulate(&config, &dir.path().join("out"));
    assert_eq!(result.status.code(), Some(64));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("degenerate partial specific volumes"),
        "stderr: {stderr}"
    );

    let missing = dir.path().join("missing.toml");
    let result = run_simulate(&missing, &dir.path().join("out"));
    assert_eq!(result.status.code(), Some(64));
}

#[test]
fn golden_configs_in_repo_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for name in [
        "configs/binary_interdiffusion.toml",
        "configs/ternary_forced.toml",
        "configs/threshold_breach.toml",
    ] {
        let text = std::fs::read_to_string(root.join(name)).unwrap();
        mixsim::config::parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn check_thermo_passes_and_respects_quiet() {
    let result = mixsim()
        .arg("check-thermo")
        .arg("--seed")
        .arg("7")
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(0));
    assert!(result.stdout.is_empty());
}

#[test]
fn sweep_threshold_writes_csv_and_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, SHORT_RUN).unwrap();
    let out = dir.path().join("sweep");
    let result = mixsim()
        .arg("sweep-threshold")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("log-pressure slope"), "stdout: {stdout}");
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn derive_fixtures_prints_oracles() {
    let result = mixsim().arg("derive-fixtures").output().unwrap();
    assert_eq!(result.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("4.8121182505960336e-1"));
    assert!(stdout.contains("scalar_root_x2_plus_x_minus_1"));
}
