//! Closed-form reference values for the binary mixture with volume weights
//! (1, 2) and the ideal free energy with unit molar masses and unit thermal
//! scale.
//!
//! Everything in this module is computed from elementary formulas that never
//! touch the Newton solvers or the matrix machinery of the library, so the
//! test suite can use these numbers as independent oracles. The same values
//! are printed by `mixsim derive-fixtures`.

/// Positive root of x^2 + x - 1 = 0, found by bisection.
///
/// For the binary fixture the dual value at mu = 0 is -ln(x) with x this
/// root, and the fractions are (x, x^2).
pub fn golden_root() -> f64 {
    let f = |x: f64| x * x + x - 1.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Dual value f(0, 0) for the binary fixture: -ln(x) with x^2 + x - 1 = 0.
pub fn binary_dual_value_at_zero() -> f64 {
    -golden_root().ln()
}

/// Maximizing densities at mu = (0, 0) for the binary fixture.
///
/// With fractions y = (x, x^2) and the volume constraint rho_1 + 2 rho_2 = 1,
/// the total is 1/(2 - x) and rho = (x, 1 - x) / (2 - x).
pub fn binary_dual_densities_at_zero() -> [f64; 2] {
    let x = golden_root();
    [x / (2.0 - x), (1.0 - x) / (2.0 - x)]
}

/// Densities on the constraint surface at total mass `varrho` for the binary
/// fixture: rho = (2 varrho - 1, 1 - varrho).
pub fn binary_densities(varrho: f64) -> [f64; 2] {
    [2.0 * varrho - 1.0, 1.0 - varrho]
}

/// One-N coordinate of the chemical potential at total mass `varrho` for the
/// binary fixture: ln(rho1/rho2) + ln(rho1/varrho).
pub fn binary_implicit_m(varrho: f64) -> f64 {
    let [r1, r2] = binary_densities(varrho);
    (r1 / r2).ln() + (r1 / varrho).ln()
}

/// Constraint pressure at total mass `varrho` for the binary fixture:
/// P = ln((2 varrho - 1)/(1 - varrho)).
pub fn binary_pressure(varrho: f64) -> f64 {
    let [r1, r2] = binary_densities(varrho);
    (r1 / r2).ln()
}

/// Derivative of the constraint pressure: P' = 2/(2 varrho - 1) + 1/(1 - varrho).
pub fn binary_pressure_derivative(varrho: f64) -> f64 {
    let [r1, r2] = binary_densities(varrho);
    2.0 / r1 + 1.0 / r2
}

/// Ideal free energy (unit masses, unit thermal scale, zero reference
/// potentials): sum of rho_i ln(y_i).
pub fn ideal_free_energy_unit(rho: &[f64]) -> f64 {
    let total: f64 = rho.iter().sum();
    rho.iter().map(|&r| r * (r / total).ln()).sum()
}

/// Gradient of the ideal free energy with unit parameters: ln(y_i).
pub fn ideal_free_energy_grad_unit(rho: &[f64]) -> Vec<f64> {
    let total: f64 = rho.iter().sum();
    rho.iter().map(|&r| (r / total).ln()).collect()
}

/// Mobility matrix of the quasi-diagonal closure with unit scale:
/// diag(rho) - rho rho^T / varrho, written out entrywise.
pub fn quasi_diagonal_mobility(rho: &[f64]) -> Vec<Vec<f64>> {
    let n = rho.len();
    let total: f64 = rho.iter().sum();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let diag = if i == j { rho[i] } else { 0.0 };
                    diag - rho[i] * rho[j] / total
                })
                .collect()
        })
        .collect()
}

/// Density-normalized mobility of the quasi-diagonal closure with unit
/// scale: delta_ij - rho_i / varrho.
pub fn quasi_diagonal_b_matrix(rho: &[f64]) -> Vec<Vec<f64>> {
    let n = rho.len();
    let total: f64 = rho.iter().sum();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0 - rho[i] / total
                    } else {
                        -rho[i] / total
                    }
                })
                .collect()
        })
        .collect()
}

/// Volume-direction transport coefficient d = Vbar . M Vbar for the binary
/// fixture with quasi-diagonal closure at unit scale.
pub fn binary_d_coefficient(varrho: f64) -> f64 {
    let m = quasi_diagonal_mobility(&binary_densities(varrho));
    let vbar = [1.0, 2.0];
    let mut d = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            d += vbar[i] * m[i][j] * vbar[j];
        }
    }
    d
}

/// Threshold margin m(varrho) = min{varrho/varrho_min - 1, 1 - varrho/varrho_max}.
pub fn threshold_margin(varrho: f64, varrho_min: f64, varrho_max: f64) -> f64 {
    (varrho / varrho_min - 1.0).min(1.0 - varrho / varrho_max)
}

/// Integrability-to-velocity exponent of the extension criterion:
/// z = 3/(p - 2) for 3 < p < 5, z = 1.01 at p = 5, z = 1 for p > 5.
pub fn velocity_exponent(p: f64) -> f64 {
    if p < 5.0 {
        3.0 / (p - 2.0)
    } else if p == 5.0 {
        1.01
    } else {
        1.0
    }
}

/// Dual basis for N = 2, volumes (1, 2): eta1 = (-1, 1), eta2 = (2, -1).
pub fn binary_dual_basis() -> [[f64; 2]; 2] {
    [[-1.0, 1.0], [2.0, -1.0]]
}
