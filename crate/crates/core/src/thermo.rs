//! Free energy of the mixture, its constrained convex dual, and the change
//! of variables between physical states (densities, chemical potentials,
//! pressure) and the unconstrained coordinates (total density, relative
//! potentials, volume potential).
//!
//! The dual value function assigns to a chemical-potential vector the
//! maximum of `mu . rho - k(rho)` over the volume-constraint surface; its
//! value is the pressure and its gradient returns the densities. All maps
//! here are smooth on the open threshold interval and degenerate at its
//! ends, which is exactly what the runtime monitors track.

use nalgebra::{DMatrix, DVector};

use crate::basis::Frame;
use crate::error::{MixError, Result};

/// Fraction floor below which a composition is rejected instead of clamped;
/// the gradient of the free energy diverges at the simplex boundary, so
/// clamping would silently leave the model.
pub const FRACTION_FLOOR: f64 = 1e-14;

/// Absolute margin used when rejecting total densities at the ends of the
/// admissible interval.
pub const INTERVAL_MARGIN: f64 = 1e-12;

const NEWTON_TARGET: f64 = 1e-12;
const NEWTON_ACCEPT: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;

/// Species count, molar masses, partial specific volumes, reference
/// potentials and thermal scale of the mixture.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    n_species: usize,
    molar_mass: DVector<f64>,
    vbar: DVector<f64>,
    mu_ref: DVector<f64>,
    theta_kb: f64,
}

impl MixtureSpec {
    pub fn new(
        molar_mass: Vec<f64>,
        vbar: Vec<f64>,
        mu_ref: Vec<f64>,
        theta_kb: f64,
    ) -> Result<Self> {
        let n = molar_mass.len();
        if n < 2 {
            return Err(MixError::Validation("need at least two species".into()));
        }
        if vbar.len() != n || mu_ref.len() != n {
            return Err(MixError::Validation(
                "molar_mass, vbar and mu_ref must have equal length".into(),
            ));
        }
        if molar_mass.iter().any(|&m| m <= 0.0) {
            return Err(MixError::Validation("molar masses must be positive".into()));
        }
        if vbar.iter().any(|&v| v <= 0.0) {
            return Err(MixError::Validation(
                "partial specific volumes must be positive".into(),
            ));
        }
        if theta_kb <= 0.0 {
            return Err(MixError::Validation(
                "thermal scale must be positive".into(),
            ));
        }
        let spread = vbar
            .iter()
            .map(|&v| (v / vbar[0] - 1.0).abs())
            .fold(0.0, f64::max);
        if spread <= crate::basis::PARALLEL_TOL {
            return Err(MixError::DegenerateVolumes(format!(
                "volume weights {vbar:?} are constant; the threshold interval is empty"
            )));
        }
        Ok(Self {
            n_species: n,
            molar_mass: DVector::from_vec(molar_mass),
            vbar: DVector::from_vec(vbar),
            mu_ref: DVector::from_vec(mu_ref),
            theta_kb,
        })
    }

    /// Ideal binary/multinary fixture: unit masses, zero reference
    /// potentials, unit thermal scale.
    pub fn ideal(vbar: Vec<f64>) -> Result<Self> {
        let n = vbar.len();
        Self::new(vec![1.0; n], vbar, vec![0.0; n], 1.0)
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn molar_mass(&self) -> &DVector<f64> {
        &self.molar_mass
    }

    pub fn vbar(&self) -> &DVector<f64> {
        &self.vbar
    }

    pub fn mu_ref(&self) -> &DVector<f64> {
        &self.mu_ref
    }

    pub fn theta_kb(&self) -> f64 {
        self.theta_kb
    }

    /// Smallest total density compatible with the volume constraint.
    pub fn rho_min(&self) -> f64 {
        1.0 / self.vbar.max()
    }

    /// Largest total density compatible with the volume constraint.
    pub fn rho_max(&self) -> f64 {
        1.0 / self.vbar.min()
    }

    /// Rejects totals at or beyond the interval ends.
    pub fn check_interior(&self, varrho: f64) -> Result<()> {
        let (lo, hi) = (self.rho_min(), self.rho_max());
        if !(varrho > lo + INTERVAL_MARGIN && varrho < hi - INTERVAL_MARGIN) {
            return Err(MixError::ThresholdViolation {
                value: varrho,
                lo,
                hi,
            });
        }
        Ok(())
    }

    /// Barycenter of the constraint surface, used to seed the dual solve.
    pub fn barycenter(&self) -> DVector<f64> {
        let n = self.n_species as f64;
        DVector::from_fn(self.n_species, |i, _| 1.0 / (n * self.vbar[i]))
    }
}

/// Strictly positive densities.
#[derive(Debug, Clone)]
pub struct Composition {
    rho: DVector<f64>,
}

impl Composition {
    pub fn new(rho: DVector<f64>) -> Result<Self> {
        if rho.iter().any(|&r| r <= 0.0) {
            return Err(MixError::NonpositiveDensity(format!(
                "densities must be positive, got {:?}",
                rho.as_slice()
            )));
        }
        Ok(Self { rho })
    }

    pub fn densities(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn total(&self) -> f64 {
        self.rho.sum()
    }

    /// Signed residual of the volume constraint, rho . vbar - 1.
    pub fn volume_residual(&self, spec: &MixtureSpec) -> f64 {
        self.rho.dot(spec.vbar()) - 1.0
    }
}

/// Chemical potentials, pressure and densities of a physical state on the
/// constraint surface.
#[derive(Debug, Clone)]
pub struct ChemicalState {
    pub mu: DVector<f64>,
    pub p: f64,
    pub rho: Composition,
}

/// Unconstrained coordinates: total density in the open threshold interval,
/// relative potentials, volume potential.
#[derive(Debug, Clone)]
pub struct ReducedCoords {
    pub varrho: f64,
    pub q: DVector<f64>,
    pub zeta: f64,
}

/// Positively homogeneous convex free energy evaluated on strictly positive
/// densities. Implementations may assume positivity; the public wrappers add
/// the fraction floor.
pub trait FreeEnergy {
    fn value(&self, rho: &DVector<f64>) -> f64;
    fn grad(&self, rho: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, rho: &DVector<f64>) -> DMatrix<f64>;
}

/// Ideal mixing free energy: sum of reference terms plus the entropic part
/// built from number fractions.
#[derive(Debug, Clone)]
pub struct IdealMixture<'a> {
    spec: &'a MixtureSpec,
}

impl<'a> IdealMixture<'a> {
    pub fn new(spec: &'a MixtureSpec) -> Self {
        Self { spec }
    }

    fn number_densities(&self, rho: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(rho.len(), |i, _| rho[i] / self.spec.molar_mass[i])
    }
}

impl FreeEnergy for IdealMixture<'_> {
    fn value(&self, rho: &DVector<f64>) -> f64 {
        let n = self.number_densities(rho);
        let total_n = n.sum();
        let mut value = self.spec.mu_ref.dot(rho);
        for i in 0..rho.len() {
            value += self.spec.theta_kb * n[i] * (n[i] / total_n).ln();
        }
        value
    }

    fn grad(&self, rho: &DVector<f64>) -> DVector<f64> {
        let n = self.number_densities(rho);
        let total_n = n.sum();
        DVector::from_fn(rho.len(), |i, _| {
            self.spec.mu_ref[i]
                + self.spec.theta_kb / self.spec.molar_mass[i] * (n[i] / total_n).ln()
        })
    }

    fn hessian(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        let n = self.number_densities(rho);
        let total_n = n.sum();
        let m = &self.spec.molar_mass;
        DMatrix::from_fn(rho.len(), rho.len(), |i, j| {
            let diag = if i == j {
                1.0 / (m[i] * m[i] * n[i])
            } else {
                0.0
            };
            self.spec.theta_kb * (diag - 1.0 / (m[i] * m[j] * total_n))
        })
    }
}

fn check_fraction_floor(spec: &MixtureSpec, rho: &DVector<f64>) -> Result<()> {
    let n = DVector::from_fn(rho.len(), |i, _| rho[i] / spec.molar_mass[i]);
    let total_n = n.sum();
    let min_y = n
        .iter()
        .map(|&ni| ni / total_n)
        .fold(f64::INFINITY, f64::min);
    if min_y < FRACTION_FLOOR {
        return Err(MixError::NonpositiveDensity(format!(
            "minimum number fraction {min_y:.3e} below floor {FRACTION_FLOOR:.0e}"
        )));
    }
    Ok(())
}

/// Free energy value on a strictly positive composition.
pub fn free_energy_k(spec: &MixtureSpec, rho: &Composition) -> Result<f64> {
    check_fraction_floor(spec, rho.densities())?;
    Ok(IdealMixture::new(spec).value(rho.densities()))
}

/// Analytic gradient of the free energy.
pub fn grad_k(spec: &MixtureSpec, rho: &Composition) -> Result<DVector<f64>> {
    check_fraction_floor(spec, rho.densities())?;
    Ok(IdealMixture::new(spec).grad(rho.densities()))
}

/// Dual value and maximizer: the pressure `p` and the densities on the
/// constraint surface that realize the supremum of `mu . rho - k(rho)`.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub p: f64,
    pub rho: Composition,
}

/// Damped Newton on the stationarity system
/// `grad k(rho) + p vbar = mu`, `rho . vbar = 1` with unknowns `(rho, p)`.
/// The step is halved until the densities stay strictly positive; the seed
/// is the barycenter of the constraint surface.
pub fn dual_solve(spec: &MixtureSpec, mu: &DVector<f64>) -> Result<DualSolution> {
    dual_solve_seeded(spec, mu, None)
}

pub(crate) fn dual_solve_seeded(
    spec: &MixtureSpec,
    mu: &DVector<f64>,
    seed: Option<&DVector<f64>>,
) -> Result<DualSolution> {
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(MixError::NewtonDivergence(
            "chemical potential vector is not finite".into(),
        ));
    }
    let energy = IdealMixture::new(spec);
    let vbar = spec.vbar();
    let start = match seed {
        Some(r) if r.iter().all(|&x| x > 0.0) => r.clone(),
        _ => spec.barycenter(),
    };

    // Primary phase: damped Newton in the densities themselves.
    let (mut rho, _p, mut res_norm) = primal_newton(spec, &energy, mu, start);
    // Fallback phase for extreme potentials whose maximizers sit close to
    // the composition boundary: the same stationarity system in
    // log-density coordinates, where positivity is built in and the entropy
    // terms are well conditioned.
    if res_norm > NEWTON_ACCEPT {
        let (rho_log, res_log) = log_newton(spec, &energy, mu, &rho)?;
        if res_log < res_norm {
            rho = rho_log;
            res_norm = res_log;
        }
    }
    if res_norm > NEWTON_ACCEPT {
        return Err(MixError::NewtonDivergence(format!(
            "dual stationarity residual {res_norm:.3e} (|mu|_inf = {:.3e})",
            mu.abs().max()
        )));
    }
    // Final exact projection onto the constraint surface; stationarity moves
    // by O(residual * spread) which stays below the acceptance level.
    let scale = rho.dot(vbar);
    rho /= scale;
    let p_val = mu.dot(&rho) - energy.value(&rho);
    Ok(DualSolution {
        p: p_val,
        rho: Composition::new(rho)?,
    })
}

fn primal_newton(
    spec: &MixtureSpec,
    energy: &IdealMixture,
    mu: &DVector<f64>,
    mut rho: DVector<f64>,
) -> (DVector<f64>, f64, f64) {
    let n = spec.n_species;
    let vbar = spec.vbar();
    let mut p = 0.0_f64;

    let residual = |rho: &DVector<f64>, p: f64| -> DVector<f64> {
        let g = energy.grad(rho);
        let mut res = DVector::zeros(n + 1);
        for i in 0..n {
            res[i] = g[i] + p * vbar[i] - mu[i];
        }
        res[n] = rho.dot(vbar) - 1.0;
        res
    };

    let mut res = residual(&rho, p);
    let mut res_norm = res.abs().max();
    for _ in 0..NEWTON_MAX_ITER {
        if res_norm <= NEWTON_TARGET {
            break;
        }
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n))
            .copy_from(&energy.hessian(&rho));
        for i in 0..n {
            jac[(i, n)] = vbar[i];
            jac[(n, i)] = vbar[i];
        }
        if jac.iter().any(|x| !x.is_finite()) {
            break;
        }
        let lu = jac.lu();
        let delta = match lu.solve(&(-&res)) {
            Some(d) => d,
            None => break,
        };

        // Halve until the densities stay strictly positive, starting from a
        // fraction-to-boundary cap that never lands exactly on zero.
        let mut lambda = 1.0_f64;
        for i in 0..n {
            if delta[i] < 0.0 {
                lambda = lambda.min(0.99 * (-rho[i] / delta[i]));
            }
        }
        if !(lambda > 0.0) {
            break;
        }
        // Backtracking on the squared residual; the Newton direction is a
        // descent direction for it, so sufficient decrease is reachable.
        let sq = |r: &DVector<f64>| r.dot(r);
        let base_sq = sq(&res);
        let mut accepted = false;
        for _ in 0..60 {
            let trial_rho = &rho + lambda * delta.rows(0, n);
            let trial_p = p + lambda * delta[n];
            let trial_res = residual(&trial_rho, trial_p);
            if trial_res.iter().all(|x| x.is_finite())
                && sq(&trial_res) <= (1.0 - 1e-4 * lambda) * base_sq
            {
                rho = trial_rho;
                p = trial_p;
                res = trial_res;
                res_norm = res.abs().max();
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (rho, p, res_norm)
}

fn log_newton(
    spec: &MixtureSpec,
    energy: &IdealMixture,
    mu: &DVector<f64>,
    rho_seed: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = spec.n_species;
    let vbar = spec.vbar();
    let floor = 1e-300_f64;
    let mut z = DVector::from_fn(n, |i, _| rho_seed[i].max(floor).ln());
    let mut p = 0.0_f64;

    let residual = |z: &DVector<f64>, p: f64| -> DVector<f64> {
        let rho = z.map(f64::exp);
        let g = energy.grad(&rho);
        let mut res = DVector::zeros(n + 1);
        for i in 0..n {
            res[i] = g[i] + p * vbar[i] - mu[i];
        }
        res[n] = rho.dot(vbar) - 1.0;
        res
    };

    let mut res = residual(&z, p);
    let mut res_norm = res.abs().max();
    for _ in 0..2 * NEWTON_MAX_ITER {
        if res_norm <= NEWTON_TARGET {
            break;
        }
        let rho = z.map(f64::exp);
        let d2k = energy.hessian(&rho);
        let mut jac = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] = d2k[(i, j)] * rho[j];
            }
            jac[(i, n)] = vbar[i];
            jac[(n, i)] = vbar[i] * rho[i];
        }
        if jac.iter().any(|x| !x.is_finite()) {
            return Err(MixError::NewtonDivergence(
                "log-coordinate Jacobian overflowed".into(),
            ));
        }
        let delta = jac
            .lu()
            .solve(&(-&res))
            .ok_or_else(|| MixError::NewtonDivergence("singular log-coordinate system".into()))?;

        // Step cap against overflow of the exponentials.
        let step_max = delta.rows(0, n).abs().max();
        let mut lambda: f64 = if step_max > 20.0 {
            20.0 / step_max
        } else {
            1.0
        };
        let sq = |r: &DVector<f64>| r.dot(r);
        let base_sq = sq(&res);
        let mut accepted = false;
        for _ in 0..60 {
            let trial_z = &z + lambda * delta.rows(0, n);
            let trial_p = p + lambda * delta[n];
            let trial_res = residual(&trial_z, trial_p);
            if trial_res.iter().all(|x| x.is_finite())
                && sq(&trial_res) <= (1.0 - 1e-4 * lambda) * base_sq
            {
                z = trial_z;
                p = trial_p;
                res = trial_res;
                res_norm = res.abs().max();
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((z.map(f64::exp), res_norm))
}

/// Optimality mismatch of a dual solution:
/// `|mu - p vbar - grad k(rho)|_inf`, evaluated with the raw gradient so
/// that extreme-but-valid maximizers near the composition boundary can be
/// audited.
pub fn stationarity_residual(spec: &MixtureSpec, mu: &DVector<f64>, sol: &DualSolution) -> f64 {
    let g = IdealMixture::new(spec).grad(sol.rho.densities());
    (mu - spec.vbar() * sol.p - g).abs().max()
}

/// Applies the dual Hessian to a set of directions by the implicit-function
/// bordered solve at the maximizer `rho`: solve
/// `[D2k vbar; vbar^T 0] [x; y] = [a; 0]` and read off `x`.
fn dual_hessian_apply(
    spec: &MixtureSpec,
    rho: &DVector<f64>,
    dirs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let energy = IdealMixture::new(spec);
    let n = spec.n_species;
    let mut bordered = DMatrix::zeros(n + 1, n + 1);
    bordered
        .view_mut((0, 0), (n, n))
        .copy_from(&energy.hessian(rho));
    for i in 0..n {
        bordered[(i, n)] = spec.vbar[i];
        bordered[(n, i)] = spec.vbar[i];
    }
    let lu = bordered.lu();
    let mut rhs = DMatrix::zeros(n + 1, dirs.ncols());
    rhs.view_mut((0, 0), (n, dirs.ncols())).copy_from(dirs);
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| MixError::NewtonDivergence("singular bordered Hessian system".into()))?;
    Ok(sol.rows(0, n).into_owned())
}

/// Hessian of the dual value function, computed by the implicit-function
/// linear solve at the maximizer (no finite differences). Symmetric positive
/// semi-definite with kernel spanned by the volume weights.
pub fn hessian_f(spec: &MixtureSpec, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
    let sol = dual_solve(spec, mu)?;
    let n = spec.n_species;
    let eye = DMatrix::identity(n, n);
    let h = dual_hessian_apply(spec, sol.rho.densities(), &eye)?;
    // The bordered inverse is symmetric; wash out LU roundoff.
    Ok(0.5 * (&h + h.transpose()))
}

/// Solution of the scalar fixed point for the all-ones coordinate of the
/// chemical potential, together with the byproducts reused by the maps.
#[derive(Debug, Clone)]
pub(crate) struct MPoint {
    pub m_coord: f64,
    pub rho: DVector<f64>,
    pub pressure: f64,
}

/// Scalar Newton (with bracketing bisection fallback) for the all-ones
/// coordinate: find `m` with `1 . grad f(mu0 + m 1) = varrho`. The map is
/// strictly monotone, so a sign-changing bracket always exists inside the
/// open interval.
pub(crate) fn solve_m_point(
    spec: &MixtureSpec,
    frame: &Frame,
    varrho: f64,
    q: &DVector<f64>,
) -> Result<MPoint> {
    solve_m_point_seeded(spec, frame, varrho, q, None)
}

pub(crate) fn solve_m_point_seeded(
    spec: &MixtureSpec,
    frame: &Frame,
    varrho: f64,
    q: &DVector<f64>,
    seed_m: Option<f64>,
) -> Result<MPoint> {
    spec.check_interior(varrho)?;
    if q.len() != spec.n_species - 2 {
        return Err(MixError::Validation(format!(
            "relative block has length {}, expected {}",
            q.len(),
            spec.n_species - 2
        )));
    }
    let mu_base = frame.assemble_mu(q, 0.0, 0.0);
    let ones = frame.ones();

    let mut warm: Option<DVector<f64>> = None;
    let eval = |m: f64, warm: &mut Option<DVector<f64>>| -> Result<(f64, DualSolution)> {
        let mu = &mu_base + m * ones;
        let sol = dual_solve_seeded(spec, &mu, warm.as_ref())?;
        *warm = Some(sol.rho.densities().clone());
        Ok((varrho - sol.rho.total(), sol))
    };

    // Safeguarded Newton: the residual is strictly decreasing in m, so sign
    // information builds a bracket on the fly, Newton steps are capped to
    // keep the dual solves in a sane range, and bisection takes over
    // whenever a step would leave the bracket.
    let step_cap = 25.0 * spec.theta_kb * (1.0 + q.abs().max());
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut m = seed_m.unwrap_or(0.0);
    let (mut f_m, mut sol) = eval(m, &mut warm)?;
    let mut converged = f_m.abs() <= NEWTON_ACCEPT;
    for _ in 0..220 {
        if f_m.abs() <= NEWTON_TARGET.max(1e-13 * varrho.abs()) {
            converged = true;
            break;
        }
        if f_m > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        // Residual slope is minus the ones-ones contraction of the dual
        // Hessian, strictly negative.
        let h_ones = dual_hessian_apply(
            spec,
            sol.rho.densities(),
            &DMatrix::from_column_slice(spec.n_species, 1, ones.as_slice()),
        )?;
        let slope = -h_ones.column(0).sum();
        let mut next = if slope < 0.0 {
            m - f_m / slope
        } else {
            f64::NAN
        };
        if !next.is_finite() || (next - m).abs() > step_cap {
            next = m + step_cap * f_m.signum();
        }
        if next <= lo || next >= hi {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo + step_cap
            } else {
                hi - step_cap
            };
        }
        m = next;
        let out = eval(m, &mut warm)?;
        f_m = out.0;
        sol = out.1;
        if f_m.abs() <= NEWTON_ACCEPT {
            converged = true;
        }
        if lo.is_finite() && hi.is_finite() && hi - lo <= 1e-15 * (1.0 + m.abs()) {
            break;
        }
    }
    if !converged || f_m.abs() > NEWTON_ACCEPT {
        return Err(MixError::NewtonDivergence(format!(
            "all-ones coordinate residual {f_m:.3e} at varrho = {varrho}"
        )));
    }
    Ok(MPoint {
        m_coord: m,
        rho: sol.rho.densities().clone(),
        pressure: sol.p,
    })
}

/// All-ones coordinate of the chemical potential as a function of the
/// unconstrained variables.
pub fn implicit_m(spec: &MixtureSpec, frame: &Frame, varrho: f64, q: &DVector<f64>) -> Result<f64> {
    Ok(solve_m_point(spec, frame, varrho, q)?.m_coord)
}

/// Densities on the constraint surface and their projection on the relative
/// block.
pub fn map_r(
    spec: &MixtureSpec,
    frame: &Frame,
    varrho: f64,
    q: &DVector<f64>,
) -> Result<(Composition, DVector<f64>)> {
    let point = solve_m_point(spec, frame, varrho, q)?;
    let r = frame.pi_matrix().transpose() * &point.rho;
    Ok((Composition::new(point.rho)?, r))
}

/// Zeta-free part of the pressure; the full pressure is this value plus the
/// volume potential.
pub fn pressure_p(spec: &MixtureSpec, frame: &Frame, varrho: f64, q: &DVector<f64>) -> Result<f64> {
    Ok(solve_m_point(spec, frame, varrho, q)?.pressure)
}

/// Jacobians of the density projection and the pressure with respect to the
/// unconstrained variables.
#[derive(Debug, Clone)]
pub struct StateJacobians {
    pub r_q: DMatrix<f64>,
    pub r_varrho: DVector<f64>,
    pub p_q: DVector<f64>,
    pub p_varrho: f64,
    /// Smallest eigenvalue of the symmetric part of `r_q`, reported so
    /// callers can log positive definiteness.
    pub r_q_min_eigenvalue: f64,
}

/// Full pointwise evaluation used by the PDE solver: densities, pressure
/// and every Jacobian, from a single scalar solve and one bordered
/// factorization.
#[derive(Debug, Clone)]
pub struct ReducedPoint {
    pub m_coord: f64,
    pub rho: DVector<f64>,
    pub pressure: f64,
    pub r_vec: DVector<f64>,
    pub jacobians: StateJacobians,
}

pub fn reduced_point(
    spec: &MixtureSpec,
    frame: &Frame,
    varrho: f64,
    q: &DVector<f64>,
) -> Result<ReducedPoint> {
    reduced_point_seeded(spec, frame, varrho, q, None)
}

/// As [`reduced_point`], warm-starting the scalar solve from a previous
/// all-ones coordinate.
pub fn reduced_point_seeded(
    spec: &MixtureSpec,
    frame: &Frame,
    varrho: f64,
    q: &DVector<f64>,
    seed_m: Option<f64>,
) -> Result<ReducedPoint> {
    let point = solve_m_point_seeded(spec, frame, varrho, q, seed_m)?;
    let n = spec.n_species;
    let m = n - 2;

    // One bordered solve with the directions [xi^1 .. xi^{N-2} | 1].
    let mut dirs = DMatrix::zeros(n, m + 1);
    dirs.view_mut((0, 0), (n, m)).copy_from(frame.pi_matrix());
    dirs.set_column(m, frame.ones());
    let applied = dual_hessian_apply(spec, &point.rho, &dirs)?;
    let h_pi = applied.columns(0, m).into_owned();
    let h_ones = applied.column(m).into_owned();
    let s = h_ones.sum();
    if !(s > 0.0) {
        return Err(MixError::NewtonDivergence(format!(
            "ones-ones contraction of the dual Hessian is {s:.3e}, expected positive"
        )));
    }

    let pi_t_h_pi = frame.pi_matrix().transpose() * &h_pi;
    let pi_t_h_ones = frame.pi_matrix().transpose() * &h_ones;
    let r_q = &pi_t_h_pi - &pi_t_h_ones * pi_t_h_ones.transpose() / s;
    let r_q = 0.5 * (&r_q + r_q.transpose());
    let r_varrho = &pi_t_h_ones / s;

    let r_vec = frame.pi_matrix().transpose() * &point.rho;
    // dP/dq_l = rho . xi^l + dM/dq_l * varrho with dM/dq_l = -(xi^l . H 1)/s.
    let p_q = DVector::from_fn(m, |l, _| r_vec[l] - varrho * pi_t_h_ones[l] / s);
    let p_varrho = varrho / s;

    let r_q_min_eigenvalue = if m > 0 {
        r_q.clone().symmetric_eigen().eigenvalues.min()
    } else {
        f64::INFINITY
    };

    Ok(ReducedPoint {
        m_coord: point.m_coord,
        rho: point.rho,
        pressure: point.pressure,
        r_vec,
        jacobians: StateJacobians {
            r_q,
            r_varrho,
            p_q,
            p_varrho,
            r_q_min_eigenvalue,
        },
    })
}

/// Jacobians alone.
pub fn state_jacobians(
    spec: &MixtureSpec,
    frame: &Frame,
    varrho: f64,
    q: &DVector<f64>,
) -> Result<StateJacobians> {
    Ok(reduced_point(spec, frame, varrho, q)?.jacobians)
}

/// Physical state from unconstrained coordinates.
pub fn to_physical(
    spec: &MixtureSpec,
    frame: &Frame,
    coords: &ReducedCoords,
) -> Result<ChemicalState> {
    let point = solve_m_point(spec, frame, coords.varrho, &coords.q)?;
    let mu = frame.assemble_mu(&coords.q, coords.zeta, point.m_coord);
    Ok(ChemicalState {
        mu,
        p: point.pressure + coords.zeta,
        rho: Composition::new(point.rho)?,
    })
}

/// Unconstrained coordinates from a physical state on the constraint
/// surface.
pub fn from_physical(
    spec: &MixtureSpec,
    frame: &Frame,
    state: &ChemicalState,
) -> Result<ReducedCoords> {
    let residual = state.rho.volume_residual(spec);
    if residual.abs() > 1e-8 {
        return Err(MixError::ConstraintViolation(format!(
            "rho . vbar - 1 = {residual:.3e} exceeds 1e-8"
        )));
    }
    let varrho = state.rho.total();
    spec.check_interior(varrho)?;
    let (q, zeta, _) = crate::basis::decompose_vector(frame, &state.mu);
    Ok(ReducedCoords { varrho, q, zeta })
}
