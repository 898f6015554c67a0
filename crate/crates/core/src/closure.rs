//! Onsager mobility closures and their reduction to the unconstrained
//! coordinates.
//!
//! Every closure produces a symmetric positive semi-definite mobility with
//! kernel spanned by the all-ones vector, so the diffusion fluxes sum to
//! zero. The reduction projects the mobility onto the relative block and the
//! volume direction; the Schur-complement core drives the parabolic part of
//! the solver and degenerates linearly at the density thresholds.

use nalgebra::{DMatrix, DVector};

use crate::basis::Frame;
use crate::error::{MixError, Result};
use crate::thermo::{map_r, Composition, MixtureSpec};

/// Mobility closure family.
#[derive(Debug, Clone)]
pub enum ClosureModel {
    /// `M = D0 (diag(rho) - rho rho^T / varrho)`. Satisfies every structural
    /// hypothesis, with closed-form density-normalized entries
    /// `delta_ij - rho_i / varrho`.
    QuasiDiagonal { mobility_scale: f64 },
    /// Binary-friction closure: the friction operator is the graph Laplacian
    /// with weights `rho_i rho_j / D_ij`, restricted to the complement of
    /// the all-ones direction, inverted there, extended by zero, and
    /// sandwiched between the projections `diag(rho) - rho rho^T / varrho`.
    MaxwellStefan { diffusivities: DMatrix<f64> },
}

impl ClosureModel {
    pub fn quasi_diagonal(mobility_scale: f64) -> Result<Self> {
        if mobility_scale <= 0.0 {
            return Err(MixError::Validation(
                "mobility scale must be positive".into(),
            ));
        }
        Ok(Self::QuasiDiagonal { mobility_scale })
    }

    pub fn maxwell_stefan(diffusivities: DMatrix<f64>) -> Result<Self> {
        let n = diffusivities.nrows();
        if n != diffusivities.ncols() || n < 2 {
            return Err(MixError::Validation(
                "binary diffusivities must form a square matrix".into(),
            ));
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if diffusivities[(i, j)] <= 0.0 {
                    return Err(MixError::Validation(format!(
                        "binary diffusivity ({i},{j}) must be positive"
                    )));
                }
                if (diffusivities[(i, j)] - diffusivities[(j, i)]).abs()
                    > 1e-12 * diffusivities[(i, j)].abs()
                {
                    return Err(MixError::Validation(format!(
                        "binary diffusivities must be symmetric, ({i},{j}) differs"
                    )));
                }
            }
        }
        Ok(Self::MaxwellStefan { diffusivities })
    }
}

/// Reduced transport coefficients at a point of the unconstrained state
/// space.
#[derive(Debug, Clone)]
pub struct ReducedCoefficients {
    /// Relative-block mobility, `Pi^T M Pi`.
    pub m_tilde: DMatrix<f64>,
    /// Coupling vector, `Pi^T M vbar`.
    pub a_vec: DVector<f64>,
    /// Volume-direction coefficient, `vbar . M vbar`.
    pub d_scal: f64,
    /// Schur core `m_tilde - a a^T / d`, symmetric positive definite.
    pub k_core: DMatrix<f64>,
}

fn projection_rho(rho: &DVector<f64>) -> DMatrix<f64> {
    let total = rho.sum();
    DMatrix::from_diagonal(rho) - rho * rho.transpose() / total
}

/// Mobility matrix of the closure at the given composition.
pub fn onsager_m(closure: &ClosureModel, rho: &Composition) -> Result<DMatrix<f64>> {
    onsager_m_raw(closure, rho.densities())
}

pub(crate) fn onsager_m_raw(closure: &ClosureModel, rho: &DVector<f64>) -> Result<DMatrix<f64>> {
    if rho.iter().any(|&r| r <= 0.0) {
        return Err(MixError::NonpositiveDensity(
            "mobility requires strictly positive densities".into(),
        ));
    }
    let n = rho.len();
    match closure {
        ClosureModel::QuasiDiagonal { mobility_scale } => Ok(*mobility_scale * projection_rho(rho)),
        ClosureModel::MaxwellStefan { diffusivities } => {
            if diffusivities.nrows() != n {
                return Err(MixError::Validation(format!(
                    "closure built for {} species, state has {n}",
                    diffusivities.nrows()
                )));
            }
            // Friction Laplacian with weights rho_i rho_j / D_ij.
            let mut friction = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = rho[i] * rho[j] / diffusivities[(i, j)];
                    friction[(i, j)] -= w;
                    friction[(i, i)] += w;
                }
            }
            // Invert on the complement of span{1}: (S + a E)^{-1} differs
            // from the pseudo-inverse by a multiple of E = ones/n, which the
            // outer projections annihilate.
            let scale = friction.trace() / n as f64;
            let regularizer = DMatrix::from_element(n, n, scale / n as f64);
            let inv = (&friction + &regularizer).try_inverse().ok_or_else(|| {
                MixError::DegenerateClosure("friction operator not invertible".into())
            })?;
            let ones_avg = DMatrix::from_element(n, n, 1.0 / n as f64);
            let perp = DMatrix::identity(n, n) - ones_avg;
            let pseudo = &perp * inv * &perp;
            let proj = projection_rho(rho);
            Ok(&proj * pseudo * &proj)
        }
    }
}

/// Reduced coefficients at `(varrho, q)`, with the densities reconstructed
/// through the coordinate-change map.
pub fn reduce_closure(
    closure: &ClosureModel,
    frame: &Frame,
    spec: &MixtureSpec,
    varrho: f64,
    q: &DVector<f64>,
) -> Result<ReducedCoefficients> {
    let (rho, _) = map_r(spec, frame, varrho, q)?;
    reduce_at_composition(closure, frame, &rho)
}

pub(crate) fn reduce_at_composition(
    closure: &ClosureModel,
    frame: &Frame,
    rho: &Composition,
) -> Result<ReducedCoefficients> {
    let m = onsager_m(closure, rho)?;
    let pi = frame.pi_matrix();
    let m_tilde = pi.transpose() * &m * pi;
    let a_vec = pi.transpose() * &m * frame.vbar();
    let d_scal = (frame.vbar().transpose() * &m * frame.vbar())[(0, 0)];
    if d_scal <= 0.0 {
        return Err(MixError::DegenerateClosure(format!(
            "volume-direction coefficient d = {d_scal:.3e} is not positive"
        )));
    }
    let k_core = &m_tilde - &a_vec * a_vec.transpose() / d_scal;
    let k_core = 0.5 * (&k_core + k_core.transpose());
    Ok(ReducedCoefficients {
        m_tilde,
        a_vec,
        d_scal,
        k_core,
    })
}

/// Density-normalized mobility `B_ij = M_ij / rho_j` together with the
/// boundedness number `max_{i,j,k} |B_ij| + rho_k |dB_ij/drho_k|`
/// (derivatives by central differences), used to audit threshold approach.
pub fn matrix_b(closure: &ClosureModel, rho: &Composition) -> Result<(DMatrix<f64>, f64)> {
    let densities = rho.densities();
    let n = densities.len();
    let m = onsager_m(closure, rho)?;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = m[(i, j)] / densities[j];
        }
    }
    let mut bound: f64 = 0.0;
    for k in 0..n {
        let h = 1e-6 * densities[k];
        let mut hi = densities.clone();
        let mut lo = densities.clone();
        hi[k] += h;
        lo[k] -= h;
        let m_hi = onsager_m_raw(closure, &hi)?;
        let m_lo = onsager_m_raw(closure, &lo)?;
        for i in 0..n {
            for j in 0..n {
                let b_hi = m_hi[(i, j)] / hi[j];
                let b_lo = m_lo[(i, j)] / lo[j];
                let deriv = (b_hi - b_lo) / (2.0 * h);
                bound = bound.max(b[(i, j)].abs() + densities[k] * deriv.abs());
            }
        }
    }
    Ok((b, bound))
}

/// One row of the coefficient-degeneration sweep.
#[derive(Debug, Clone)]
pub struct DegenerationRow {
    pub varrho: f64,
    /// Threshold margin m(varrho).
    pub margin: f64,
    pub d_scal: f64,
    pub a_norm: f64,
    /// (|d| + |A| + |d_q| + |A_q|) / m(varrho).
    pub degeneration_ratio: f64,
    /// |d_varrho| + |A_varrho|.
    pub radial_derivative: f64,
}

/// Sweep report for the threshold-degeneration bounds.
#[derive(Debug, Clone)]
pub struct DegenerationReport {
    pub rows: Vec<DegenerationRow>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub max_radial_derivative: f64,
}

/// Evaluates the degeneration ratios along a sweep of total densities at
/// fixed relative coordinates. Derivatives are taken by central differences
/// so the monitor works for any closure.
pub fn degeneration_monitor(
    closure: &ClosureModel,
    frame: &Frame,
    spec: &MixtureSpec,
    sweep: &[f64],
    q: &DVector<f64>,
) -> Result<DegenerationReport> {
    let (lo, hi) = (spec.rho_min(), spec.rho_max());
    let width = hi - lo;
    let mut rows = Vec::with_capacity(sweep.len());
    for &varrho in sweep {
        spec.check_interior(varrho)?;
        let margin = (varrho / lo - 1.0).min(1.0 - varrho / hi);
        let coeffs = reduce_closure(closure, frame, spec, varrho, q)?;

        // Central steps kept inside the interval and off the q origin.
        let dist = (varrho - lo).min(hi - varrho);
        let h_rho = (1e-6 * width).min(0.4 * dist);
        let plus = reduce_closure(closure, frame, spec, varrho + h_rho, q)?;
        let minus = reduce_closure(closure, frame, spec, varrho - h_rho, q)?;
        let d_rho = (plus.d_scal - minus.d_scal) / (2.0 * h_rho);
        let a_rho = (&plus.a_vec - &minus.a_vec) / (2.0 * h_rho);

        let mut dq_norm = 0.0_f64;
        let mut aq_norm = 0.0_f64;
        let h_q = 1e-6 * (1.0 + q.abs().max());
        for l in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[l] += h_q;
            qm[l] -= h_q;
            let cp = reduce_closure(closure, frame, spec, varrho, &qp)?;
            let cm = reduce_closure(closure, frame, spec, varrho, &qm)?;
            dq_norm = dq_norm.max(((cp.d_scal - cm.d_scal) / (2.0 * h_q)).abs());
            aq_norm = aq_norm.max((&cp.a_vec - &cm.a_vec).abs().max() / (2.0 * h_q));
        }

        let a_norm = if coeffs.a_vec.is_empty() {
            0.0
        } else {
            coeffs.a_vec.abs().max()
        };
        let a_rho_norm = if a_rho.is_empty() {
            0.0
        } else {
            a_rho.abs().max()
        };
        rows.push(DegenerationRow {
            varrho,
            margin,
            d_scal: coeffs.d_scal,
            a_norm,
            degeneration_ratio: (coeffs.d_scal.abs() + a_norm + dq_norm + aq_norm) / margin,
            radial_derivative: d_rho.abs() + a_rho_norm,
        });
    }
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.degeneration_ratio).collect();
    ratios.sort_by(|a, b| a.total_cmp(b));
    let max_ratio = *ratios.last().unwrap_or(&0.0);
    let median_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios[ratios.len() / 2]
    };
    let max_radial_derivative = rows.iter().map(|r| r.radial_derivative).fold(0.0, f64::max);
    Ok(DegenerationReport {
        rows,
        max_ratio,
        median_ratio,
        max_radial_derivative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_frame;
    use crate::fixtures;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn comp(v: Vec<f64>) -> Composition {
        Composition::new(DVector::from_vec(v)).unwrap()
    }

    fn random_positive(n: usize, rng: &mut ChaCha8Rng) -> Composition {
        comp((0..n).map(|_| rng.random_range(0.05..2.0)).collect())
    }

    #[test]
    fn quasi_diagonal_matches_closed_form() {
        let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
        let m = onsager_m(&closure, &comp(vec![0.5, 0.25])).unwrap();
        let expect = fixtures::quasi_diagonal_mobility(&[0.5, 0.25]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - expect[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kernel_symmetry_and_rank_both_closures() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for n in [2usize, 3, 4] {
            let mut diff = DMatrix::from_element(n, n, 0.0);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let v = 0.5 + 0.3 * (i + j) as f64;
                        diff[(i, j)] = v;
                    }
                }
            }
            let closures = [
                ClosureModel::quasi_diagonal(1.3).unwrap(),
                ClosureModel::maxwell_stefan(diff).unwrap(),
            ];
            for closure in &closures {
                for _ in 0..200 {
                    let rho = random_positive(n, &mut rng);
                    let m = onsager_m(closure, &rho).unwrap();
                    let ones = DVector::from_element(n, 1.0);
                    assert!((&m * &ones).abs().max() <= 1e-12);
                    assert!((&m - m.transpose()).abs().max() <= 1e-12);
                    let mut eig: Vec<f64> = m
                        .clone()
                        .symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .copied()
                        .collect();
                    eig.sort_by(|a, b| a.total_cmp(b));
                    assert!(eig[0] >= -1e-12);
                    // Exactly one eigenvalue at zero within tolerance.
                    let near_zero = eig.iter().filter(|e| e.abs() <= 1e-10).count();
                    assert_eq!(near_zero, 1, "eigenvalues {eig:?}");
                }
            }
        }
    }

    #[test]
    fn equal_diffusivities_degenerate_to_quasi_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let diff = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.8 });
        let ms = ClosureModel::maxwell_stefan(diff).unwrap();
        let qd = ClosureModel::quasi_diagonal(1.0).unwrap();
        for _ in 0..50 {
            let rho = random_positive(3, &mut rng);
            let m_ms = onsager_m(&ms, &rho).unwrap();
            let m_qd = onsager_m(&qd, &rho).unwrap();
            // Scalar factor D / varrho at each sampled composition.
            let factor = 0.8 / rho.total();
            assert!((&m_ms - factor * &m_qd).abs().max() <= 1e-10 * factor.max(1.0));
        }
    }

    #[test]
    fn reduced_coefficients_binary() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
        let frame = build_frame(spec.vbar(), 2).unwrap();
        let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
        let red = reduce_closure(&closure, &frame, &spec, 0.75, &DVector::zeros(0)).unwrap();
        assert!((red.d_scal - 1.0 / 6.0).abs() < 1e-9);
        assert_eq!(red.m_tilde.nrows(), 0);
        assert_eq!(red.a_vec.len(), 0);
        assert_eq!(red.k_core.nrows(), 0);
        assert!((red.d_scal - fixtures::binary_d_coefficient(0.75)).abs() < 1e-9);
    }

    #[test]
    fn reduction_matches_dense_loop_oracle() {
        // Independent entrywise assembly of the projections.
        let spec = MixtureSpec::ideal(vec![1.0, 2.0, 4.0]).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        let closure = ClosureModel::quasi_diagonal(0.7).unwrap();
        let q = DVector::from_vec(vec![0.4]);
        let varrho = 0.6;
        let red = reduce_closure(&closure, &frame, &spec, varrho, &q).unwrap();

        let (rho, _) = map_r(&spec, &frame, varrho, &q).unwrap();
        let m = onsager_m(&closure, &rho).unwrap();
        let n = 3;
        let width = 1;
        let mut m_tilde = vec![vec![0.0; width]; width];
        let mut a = vec![0.0; width];
        let mut d = 0.0;
        for i in 0..n {
            for j in 0..n {
                d += frame.vbar()[i] * m[(i, j)] * frame.vbar()[j];
                for k in 0..width {
                    a[k] += frame.pi_matrix()[(i, k)] * m[(i, j)] * frame.vbar()[j];
                    for l in 0..width {
                        m_tilde[k][l] +=
                            frame.pi_matrix()[(i, k)] * m[(i, j)] * frame.pi_matrix()[(j, l)];
                    }
                }
            }
        }
        assert!((red.d_scal - d).abs() <= 1e-12);
        assert!((red.a_vec[0] - a[0]).abs() <= 1e-12);
        assert!((red.m_tilde[(0, 0)] - m_tilde[0][0]).abs() <= 1e-12);
        let k_expect = m_tilde[0][0] - a[0] * a[0] / d;
        assert!((red.k_core[(0, 0)] - k_expect).abs() <= 1e-12);
    }

    #[test]
    fn schur_core_positive_definite_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for vbar in [vec![1.0, 2.0, 4.0], vec![0.5, 1.0, 2.0, 3.0]] {
            let spec = MixtureSpec::ideal(vbar).unwrap();
            let n = spec.n_species();
            let frame = build_frame(spec.vbar(), n).unwrap();
            let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
            let (lo, hi) = (spec.rho_min(), spec.rho_max());
            let mut min_eig = f64::INFINITY;
            for _ in 0..150 {
                let varrho = lo + (hi - lo) * rng.random_range(0.05..0.95);
                let q = DVector::from_fn(n - 2, |_, _| rng.random_range(-1.5..1.5));
                let red = reduce_closure(&closure, &frame, &spec, varrho, &q).unwrap();
                let eig = red.k_core.symmetric_eigen().eigenvalues.min();
                min_eig = min_eig.min(eig);
                assert!(eig > 0.0, "core eigenvalue {eig} at varrho {varrho}");
            }
            assert!(min_eig.is_finite());
        }
    }

    #[test]
    fn b_matrix_closed_form_and_sweep() {
        let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
        let rho = comp(vec![0.5, 0.25]);
        let (b, bound) = matrix_b(&closure, &rho).unwrap();
        let expect = fixtures::quasi_diagonal_b_matrix(&[0.5, 0.25]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((b[(i, j)] - expect[i][j]).abs() <= 1e-12);
            }
        }
        // Definition roundtrip M_ij = B_ij rho_j.
        let m = onsager_m(&closure, &rho).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[(i, j)] - b[(i, j)] * rho.densities()[j]).abs() <= 1e-14);
            }
        }
        assert!(bound <= 4.0);

        // One species vanishing: the bound must stay finite and small.
        for k in 1..12 {
            let rho2 = comp(vec![0.5, 0.5 / (k as f64 * 4.0)]);
            let (_, bound) = matrix_b(&closure, &rho2).unwrap();
            assert!(bound <= 4.0, "bound {bound}");
        }
    }

    #[test]
    fn degeneration_sweep_binary() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
        let frame = build_frame(spec.vbar(), 2).unwrap();
        let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
        let report = degeneration_monitor(
            &closure,
            &frame,
            &spec,
            &[0.6, 0.75, 0.9, 0.99],
            &DVector::zeros(0),
        )
        .unwrap();
        let at_075 = report
            .rows
            .iter()
            .find(|r| (r.varrho - 0.75).abs() < 1e-12)
            .unwrap();
        assert!((at_075.degeneration_ratio - 2.0 / 3.0).abs() < 1e-6);
        assert!(report.max_ratio <= 2.0 * report.median_ratio + 1e-12);
        assert!(report.max_radial_derivative < 10.0);
    }

    #[test]
    fn sweep_outside_interval_rejected() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
        let frame = build_frame(spec.vbar(), 2).unwrap();
        let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
        let err =
            degeneration_monitor(&closure, &frame, &spec, &[1.2], &DVector::zeros(0)).unwrap_err();
        assert!(matches!(err, MixError::ThresholdViolation { .. }));
    }

    proptest! {
        #[test]
        fn mobility_kernel_property(seed in 0u64..2048) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 2 + (seed % 3) as usize;
            let rho = DVector::from_fn(n, |_, _| rng.random_range(0.01..3.0));
            let closure = ClosureModel::quasi_diagonal(1.0).unwrap();
            let m = onsager_m_raw(&closure, &rho).unwrap();
            let ones = DVector::from_element(n, 1.0);
            prop_assert!((&m * &ones).abs().max() <= 1e-13);
            prop_assert!((&m - m.transpose()).abs().max() <= 1e-13);
        }
    }
}
