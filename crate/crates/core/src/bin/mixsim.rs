//! Command-line driver: scenario simulation, thermodynamic property
//! checks, threshold sweeps and oracle-value printing.
//!
//! Exit codes: 0 completed, 2 threshold breach, 3 fixed-point divergence,
//! 64 config error, 1 any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixsim::basis::{build_frame, decompose_vector};
use mixsim::closure::{degeneration_monitor, matrix_b, onsager_m, reduce_closure, ClosureModel};
use mixsim::config::{build_scenario, parse_config, RunConfig};
use mixsim::error::MixError;
use mixsim::fixtures;
use mixsim::output::{emit_outputs, fmt17};
use mixsim::solver::run_simulation;
use mixsim::thermo::{
    self, dual_solve, from_physical, hessian_f, pressure_p, stationarity_residual, to_physical,
    Composition, MixtureSpec, ReducedCoords,
};

#[derive(Parser)]
#[command(
    name = "mixsim",
    version,
    about = "Incompressible multicomponent mixture simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML); may also be passed via --config.
    config_path: Option<PathBuf>,
    /// Scenario file (TOML).
    #[arg(long = "config")]
    config_flag: Option<PathBuf>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot cadence override (every k-th step).
    #[arg(long)]
    cadence: Option<usize>,
    /// Seed for randomized property suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Suppress progress output.
    #[arg(long, default_value_t = false)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and emit monitors, field snapshots and metadata.
    Simulate(RunArgs),
    /// Run the thermodynamic and closure property suites.
    CheckThermo(RunArgs),
    /// Sweep the total density toward both thresholds and report the
    /// coefficient-degeneration and pressure monitors.
    SweepThreshold(RunArgs),
    /// Print every independently derived oracle value used by the tests.
    DeriveFixtures,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::CheckThermo(args) => check_thermo(&args),
        Command::SweepThreshold(args) => sweep_threshold(&args),
        Command::DeriveFixtures => {
            derive_fixtures();
            ExitCode::SUCCESS
        }
    }
}

fn config_error(e: &MixError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(64)
}

fn load_config(args: &RunArgs) -> Result<(RunConfig, PathBuf), ExitCode> {
    let path = args
        .config_flag
        .clone()
        .or_else(|| args.config_path.clone())
        .ok_or_else(|| {
            eprintln!("config error: no scenario file given");
            ExitCode::from(64)
        })?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        eprintln!("config error: cannot read {}: {e}", path.display());
        ExitCode::from(64)
    })?;
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return Err(config_error(&e)),
    };
    if let Some(out) = &args.out {
        config.output.directory = out.display().to_string();
    }
    if let Some(cadence) = args.cadence {
        if cadence == 0 {
            eprintln!("config error: output.cadence: must be at least 1");
            return Err(ExitCode::from(64));
        }
        config.output.cadence = cadence;
    }
    Ok((config, path))
}

fn simulate(args: &RunArgs) -> ExitCode {
    let (config, path) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let scenario = match build_scenario(&config) {
        Ok(s) => s,
        Err(e) => return config_error(&e),
    };
    let x = scenario.context.grid.centers();
    let out_dir = PathBuf::from(&config.output.directory);
    if !args.quiet {
        println!(
            "simulate {}: {} cells, dt = {}, t_final = {}",
            path.display(),
            scenario.context.grid.n_cells(),
            scenario.dt,
            scenario.t_final
        );
    }
    let series = match run_simulation(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = emit_outputs(&series, &config, &out_dir, &x) {
        eprintln!("output failed: {e}");
        return ExitCode::FAILURE;
    }
    if !args.quiet {
        println!(
            "{}: {} steps, mass drift {:.3e}, outputs in {}",
            series.termination.label(),
            series.steps_completed,
            series.report.mass_drift,
            out_dir.display()
        );
    }
    ExitCode::from(series.termination.exit_code() as u8)
}

struct SuiteRow {
    name: &'static str,
    samples: usize,
    worst: f64,
    tolerance: f64,
}

impl SuiteRow {
    fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn check_thermo(args: &RunArgs) -> ExitCode {
    let mut rows: Vec<SuiteRow> = Vec::new();
    let seed = args.seed;

    for vbar in [
        vec![1.0, 2.0],
        vec![1.0, 2.0, 4.0],
        vec![0.5, 1.0, 2.0, 3.0],
    ] {
        let n = vbar.len();
        let spec = MixtureSpec::ideal(vbar).unwrap();
        let frame = build_frame(spec.vbar(), n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ n as u64);

        let mut stationarity: f64 = 0.0;
        let mut range_law: f64 = 0.0;
        let mut shift_law: f64 = 0.0;
        let mut kernel: f64 = 0.0;
        for _ in 0..600 {
            let mu = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let sol = dual_solve(&spec, &mu).unwrap();
            stationarity = stationarity.max(stationarity_residual(&spec, &mu, &sol));
            range_law = range_law.max((sol.rho.densities().dot(spec.vbar()) - 1.0).abs());
            let s = rng.random_range(-2.0..2.0);
            let shifted = dual_solve(&spec, &(&mu + s * spec.vbar())).unwrap();
            shift_law = shift_law.max((shifted.p - sol.p - s).abs());
            let h = hessian_f(&spec, &mu).unwrap();
            kernel = kernel.max((&h * spec.vbar()).abs().max());
        }
        rows.push(SuiteRow {
            name: match n {
                2 => "duality stationarity (N=2)",
                3 => "duality stationarity (N=3)",
                _ => "duality stationarity (N=4)",
            },
            samples: 600,
            worst: stationarity,
            tolerance: 1e-9,
        });
        rows.push(SuiteRow {
            name: "dual gradient on constraint surface",
            samples: 600,
            worst: range_law,
            tolerance: 1e-10,
        });
        rows.push(SuiteRow {
            name: "volume-shift affinity of the dual value",
            samples: 600,
            worst: shift_law,
            tolerance: 1e-10,
        });
        rows.push(SuiteRow {
            name: "dual Hessian kernel along volumes",
            samples: 600,
            worst: kernel,
            tolerance: 1e-9,
        });

        let (lo, hi) = (spec.rho_min(), spec.rho_max());
        let mut roundtrip: f64 = 0.0;
        for _ in 0..300 {
            let coords = ReducedCoords {
                varrho: lo + (hi - lo) * rng.random_range(0.05..0.95),
                q: DVector::from_fn(n - 2, |_, _| rng.random_range(-2.0..2.0)),
                zeta: rng.random_range(-3.0..3.0),
            };
            let state = to_physical(&spec, &frame, &coords).unwrap();
            let back = from_physical(&spec, &frame, &state).unwrap();
            roundtrip = roundtrip
                .max((back.varrho - coords.varrho).abs())
                .max((&back.q - &coords.q).abs().max())
                .max((back.zeta - coords.zeta).abs());
        }
        rows.push(SuiteRow {
            name: "coordinate-change roundtrip",
            samples: 300,
            worst: roundtrip,
            tolerance: 1e-9,
        });

        let closures = [
            ClosureModel::quasi_diagonal(1.0).unwrap(),
            ClosureModel::maxwell_stefan(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    0.0
                } else {
                    0.6 + 0.2 * (i + j) as f64
                }
            }))
            .unwrap(),
        ];
        let mut kernel_m: f64 = 0.0;
        let mut asym: f64 = 0.0;
        let mut neg_eig: f64 = 0.0;
        for closure in &closures {
            for _ in 0..250 {
                let rho = Composition::new(DVector::from_fn(n, |_, _| rng.random_range(0.05..2.0)))
                    .unwrap();
                let m = onsager_m(closure, &rho).unwrap();
                let ones = DVector::from_element(n, 1.0);
                kernel_m = kernel_m.max((&m * &ones).abs().max());
                asym = asym.max((&m - m.transpose()).abs().max());
                let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
                eig.sort_by(|a, b| a.total_cmp(b));
                neg_eig = neg_eig.max(-eig[0]);
            }
        }
        rows.push(SuiteRow {
            name: "mobility kernel along all-ones",
            samples: 500,
            worst: kernel_m,
            tolerance: 1e-12,
        });
        rows.push(SuiteRow {
            name: "mobility symmetry",
            samples: 500,
            worst: asym,
            tolerance: 1e-12,
        });
        rows.push(SuiteRow {
            name: "mobility positive semidefinite",
            samples: 500,
            worst: neg_eig,
            tolerance: 1e-12,
        });

        if n >= 3 {
            let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
            let mut min_eig = f64::INFINITY;
            for _ in 0..250 {
                let varrho = lo + (hi - lo) * rng.random_range(0.05..0.95);
                let q = DVector::from_fn(n - 2, |_, _| rng.random_range(-1.5..1.5));
                let red = reduce_closure(&closure, &frame, &spec, varrho, &q).unwrap();
                min_eig = min_eig.min(red.k_core.symmetric_eigen().eigenvalues.min());
            }
            rows.push(SuiteRow {
                name: "Schur core positive definite",
                samples: 250,
                worst: -min_eig,
                tolerance: -1e-12,
            });
        }
    }

    // Closed-form checks on the binary fixture.
    {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
        let frame = build_frame(spec.vbar(), 2).unwrap();
        let sol = dual_solve(&spec, &DVector::zeros(2)).unwrap();
        rows.push(SuiteRow {
            name: "dual value anchor at zero potential",
            samples: 1,
            worst: (sol.p - fixtures::binary_dual_value_at_zero()).abs(),
            tolerance: 1e-9,
        });
        let p = pressure_p(&spec, &frame, 0.75, &DVector::zeros(0)).unwrap();
        rows.push(SuiteRow {
            name: "constraint pressure closed form",
            samples: 1,
            worst: (p - 2.0_f64.ln()).abs(),
            tolerance: 1e-10,
        });
        let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
        let rho = Composition::new(DVector::from_vec(vec![0.5, 0.25])).unwrap();
        let (b, bound) = matrix_b(&closure, &rho).unwrap();
        let expect = fixtures::quasi_diagonal_b_matrix(&[0.5, 0.25]);
        let mut berr: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                berr = berr.max((b[(i, j)] - expect[i][j]).abs());
            }
        }
        rows.push(SuiteRow {
            name: "density-normalized mobility closed form",
            samples: 1,
            worst: berr,
            tolerance: 1e-12,
        });
        rows.push(SuiteRow {
            name: "density-normalized mobility bounded",
            samples: 1,
            worst: bound,
            tolerance: 4.0,
        });
        let report = degeneration_monitor(
            &closure,
            &frame,
            &spec,
            &[0.6, 0.75, 0.9, 0.99],
            &DVector::zeros(0),
        )
        .unwrap();
        rows.push(SuiteRow {
            name: "degeneration ratio bounded on sweep",
            samples: 4,
            worst: report.max_ratio / report.median_ratio.max(1e-300),
            tolerance: 2.0,
        });
    }

    let mut all_pass = true;
    if !args.quiet {
        println!(
            "{:<42} {:>8} {:>13} {:>10} {:>6}",
            "check", "samples", "worst", "tolerance", "status"
        );
    }
    for row in &rows {
        let ok = row.passed();
        all_pass &= ok;
        if !args.quiet {
            println!(
                "{:<42} {:>8} {:>13.3e} {:>10.1e} {:>6}",
                row.name,
                row.samples,
                row.worst,
                row.tolerance,
                if ok { "PASS" } else { "FAIL" }
            );
        }
    }
    if all_pass {
        if !args.quiet {
            println!("all {} checks passed (seed {seed})", rows.len());
        }
        ExitCode::SUCCESS
    } else {
        eprintln!("property checks failed (seed {seed})");
        ExitCode::FAILURE
    }
}

fn sweep_threshold(args: &RunArgs) -> ExitCode {
    let (config, _) = match load_config(args) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let scenario = match build_scenario(&config) {
        Ok(s) => s,
        Err(e) => return config_error(&e),
    };
    let spec = &scenario.context.spec;
    let frame = &scenario.context.frame;
    let closure = &scenario.context.closure;
    let (lo, hi) = (spec.rho_min(), spec.rho_max());
    let width = hi - lo;
    let offset = (1e-3_f64).min(0.002 * width);
    let n_points = 50;
    let sweep: Vec<f64> = (0..n_points)
        .map(|k| {
            let a = lo + offset;
            let b = hi - offset;
            a + (b - a) * k as f64 / (n_points - 1) as f64
        })
        .collect();
    let q = DVector::zeros(spec.n_species() - 2);
    let report = match degeneration_monitor(closure, frame, spec, &sweep, &q) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sweep failed: {e}");
            return ExitCode::FAILURE;
        }
    };

    let mut pressures = Vec::with_capacity(sweep.len());
    for &varrho in &sweep {
        match pressure_p(spec, frame, varrho, &q) {
            Ok(p) => pressures.push(p),
            Err(e) => {
                eprintln!("sweep failed at varrho = {varrho}: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    // Log-blowup fit near the upper threshold.
    let fit_lo = hi - 0.05 * width;
    let (mut sx, mut sy, mut sxx, mut sxy, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &varrho) in sweep.iter().enumerate() {
        if varrho >= fit_lo {
            let x = -(hi - varrho).ln();
            let y = pressures[i];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            count += 1.0;
        }
    }
    let slope = if count > 1.0 {
        (count * sxy - sx * sy) / (count * sxx - sx * sx)
    } else {
        f64::NAN
    };

    let out_dir = Path::new(&config.output.directory);
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("output failed: {e}");
        return ExitCode::FAILURE;
    }
    let mut csv =
        String::from("varrho,margin,d,a_norm,degeneration_ratio,radial_derivative,pressure\n");
    for (row, p) in report.rows.iter().zip(pressures.iter()) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt17(row.varrho),
            fmt17(row.margin),
            fmt17(row.d_scal),
            fmt17(row.a_norm),
            fmt17(row.degeneration_ratio),
            fmt17(row.radial_derivative),
            fmt17(*p),
        ));
    }
    if let Err(e) = std::fs::write(out_dir.join("sweep.csv"), csv) {
        eprintln!("output failed: {e}");
        return ExitCode::FAILURE;
    }
    if !args.quiet {
        println!(
            "degeneration ratio: max {:.6e}, median {:.6e} (bounded: {})",
            report.max_ratio,
            report.median_ratio,
            report.max_ratio <= 2.0 * report.median_ratio
        );
        println!(
            "radial derivative bound: max {:.6e}",
            report.max_radial_derivative
        );
        println!("log-pressure slope near upper threshold: {slope:.6}");
        println!("sweep written to {}", out_dir.join("sweep.csv").display());
    }
    ExitCode::SUCCESS
}

fn derive_fixtures() {
    println!(
        "# independently derived oracle values (binary fixture: volumes (1, 2), ideal energy)"
    );
    let x = fixtures::golden_root();
    println!("scalar_root_x2_plus_x_minus_1      = {}", fmt17(x));
    println!(
        "dual_value_at_zero                 = {}",
        fmt17(fixtures::binary_dual_value_at_zero())
    );
    let rho = fixtures::binary_dual_densities_at_zero();
    println!(
        "dual_densities_at_zero             = {}, {}",
        fmt17(rho[0]),
        fmt17(rho[1])
    );
    let r = fixtures::binary_densities(0.75);
    println!(
        "densities_at_varrho_0.75           = {}, {}",
        fmt17(r[0]),
        fmt17(r[1])
    );
    println!(
        "ones_coordinate_at_varrho_0.75     = {}",
        fmt17(fixtures::binary_implicit_m(0.75))
    );
    println!(
        "pressure_at_varrho_0.75            = {}",
        fmt17(fixtures::binary_pressure(0.75))
    );
    println!(
        "pressure_derivative_at_varrho_0.75 = {}",
        fmt17(fixtures::binary_pressure_derivative(0.75))
    );
    println!(
        "free_energy_at_(0.5,0.25)          = {}",
        fmt17(fixtures::ideal_free_energy_unit(&[0.5, 0.25]))
    );
    let g = fixtures::ideal_free_energy_grad_unit(&[0.5, 0.25]);
    println!(
        "free_energy_grad_at_(0.5,0.25)     = {}, {}",
        fmt17(g[0]),
        fmt17(g[1])
    );
    let m = fixtures::quasi_diagonal_mobility(&[0.5, 0.25]);
    println!(
        "mobility_at_(0.5,0.25)             = [[{}, {}], [{}, {}]]",
        fmt17(m[0][0]),
        fmt17(m[0][1]),
        fmt17(m[1][0]),
        fmt17(m[1][1])
    );
    let b = fixtures::quasi_diagonal_b_matrix(&[0.5, 0.25]);
    println!(
        "normalized_mobility_at_(0.5,0.25)  = [[{}, {}], [{}, {}]]",
        fmt17(b[0][0]),
        fmt17(b[0][1]),
        fmt17(b[1][0]),
        fmt17(b[1][1])
    );
    println!(
        "volume_coefficient_at_varrho_0.75  = {}",
        fmt17(fixtures::binary_d_coefficient(0.75))
    );
    println!(
        "degeneration_ratio_at_varrho_0.75  = {}",
        fmt17(fixtures::binary_d_coefficient(0.75) / fixtures::threshold_margin(0.75, 0.5, 1.0))
    );
    println!(
        "threshold_margin_at_varrho_0.75    = {}",
        fmt17(fixtures::threshold_margin(0.75, 0.5, 1.0))
    );
    println!(
        "velocity_exponent_p4, p5, p6       = {}, {}, {}",
        fmt17(fixtures::velocity_exponent(4.0)),
        fmt17(fixtures::velocity_exponent(5.0)),
        fmt17(fixtures::velocity_exponent(6.0))
    );
    let eta = fixtures::binary_dual_basis();
    println!(
        "dual_basis_N2_volumes_(1,2)        = [({}, {}), ({}, {})]",
        fmt17(eta[0][0]),
        fmt17(eta[0][1]),
        fmt17(eta[1][0]),
        fmt17(eta[1][1])
    );

    // Cross-checks against the implementation path, printed for reference.
    let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
    let frame = build_frame(spec.vbar(), 2).unwrap();
    let sol = dual_solve(&spec, &DVector::zeros(2)).unwrap();
    println!("# implementation cross-checks");
    println!("dual_solve_value_at_zero           = {}", fmt17(sol.p));
    let point = thermo::implicit_m(&spec, &frame, 0.75, &DVector::zeros(0)).unwrap();
    println!("implicit_ones_coordinate_0.75      = {}", fmt17(point));
    let (_q_part, vb, on) = decompose_vector(&frame, &DVector::from_vec(vec![1.0, 2.0]));
    println!(
        "decompose_volumes_vector           = vbar {}, ones {}",
        fmt17(vb),
        fmt17(on)
    );
}
