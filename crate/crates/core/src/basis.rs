//! Basis and projection machinery for the change to unconstrained
//! coordinates.
//!
//! The frame fixes the last two basis vectors to the partial specific
//! volumes and the all-ones vector, completes them with an orthonormal basis
//! of the complement, and carries the dual basis together with the
//! projectors that split a vector field into its relative, volume and total
//! components.

use nalgebra::{DMatrix, DVector};

use crate::error::{MixError, Result};

/// Relative tolerance of the parallelism test between the volume weights and
/// the all-ones vector.
pub const PARALLEL_TOL: f64 = 1e-12;

/// Condition-number limit above which the assembled basis is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Basis/dual-basis pair with the projection operators of the coordinate
/// change.
///
/// `xi[N-2] = vbar` and `xi[N-1] = 1` always; `xi[0..N-2]` is an orthonormal
/// basis of the orthogonal complement of span{1, vbar}, chosen
/// deterministically by Gram-Schmidt seeded from the canonical unit vectors.
#[derive(Debug, Clone)]
pub struct Frame {
    n_species: usize,
    xi: Vec<DVector<f64>>,
    eta: Vec<DVector<f64>>,
    pi_matrix: DMatrix<f64>,
    proj_perp_ones: DMatrix<f64>,
    proj_perp_ones_vbar: DMatrix<f64>,
}

impl Frame {
    pub fn n_species(&self) -> usize {
        self.n_species
    }

    /// Width of the relative-potential block, N - 2.
    pub fn n_relative(&self) -> usize {
        self.n_species - 2
    }

    pub fn xi(&self, k: usize) -> &DVector<f64> {
        &self.xi[k]
    }

    pub fn eta(&self, k: usize) -> &DVector<f64> {
        &self.eta[k]
    }

    pub fn vbar(&self) -> &DVector<f64> {
        &self.xi[self.n_species - 2]
    }

    pub fn ones(&self) -> &DVector<f64> {
        &self.xi[self.n_species - 1]
    }

    /// Rectangular matrix with columns `xi[0..N-2]`.
    pub fn pi_matrix(&self) -> &DMatrix<f64> {
        &self.pi_matrix
    }

    pub fn proj_perp_ones(&self) -> &DMatrix<f64> {
        &self.proj_perp_ones
    }

    pub fn proj_perp_ones_vbar(&self) -> &DMatrix<f64> {
        &self.proj_perp_ones_vbar
    }

    /// Assembles mu = sum_l q_l xi^l + zeta vbar + m_coord 1.
    pub fn assemble_mu(&self, q: &DVector<f64>, zeta: f64, m_coord: f64) -> DVector<f64> {
        let mut mu = DVector::zeros(self.n_species);
        for (l, ql) in q.iter().enumerate() {
            mu += *ql * &self.xi[l];
        }
        mu += zeta * self.vbar() + m_coord * self.ones();
        mu
    }
}

/// Builds the frame for the given positive volume weights.
pub fn build_frame(vbar: &DVector<f64>, n_species: usize) -> Result<Frame> {
    if n_species < 2 {
        return Err(MixError::Validation(format!(
            "need at least two species, got {n_species}"
        )));
    }
    if vbar.len() != n_species {
        return Err(MixError::Validation(format!(
            "volume vector has length {}, expected {}",
            vbar.len(),
            n_species
        )));
    }
    if vbar.iter().any(|&v| v <= 0.0) {
        return Err(MixError::Validation(
            "partial specific volumes must be positive".into(),
        ));
    }
    let rel_spread = vbar
        .iter()
        .map(|&v| (v / vbar[0] - 1.0).abs())
        .fold(0.0, f64::max);
    if rel_spread <= PARALLEL_TOL {
        return Err(MixError::DegenerateVolumes(format!(
            "volume weights {:?} are parallel to the all-ones vector (relative spread {rel_spread:.3e})",
            vbar.as_slice()
        )));
    }

    let n = n_species;
    let ones = DVector::from_element(n, 1.0);

    // Orthonormal basis of span{1, vbar} for the projector and for seeding
    // the free directions.
    let u1 = &ones / (n as f64).sqrt();
    let mut u2 = vbar - u1.dot(vbar) * &u1;
    let u2_norm = u2.norm();
    u2 /= u2_norm;

    // Gram-Schmidt over the canonical unit vectors, deterministic ordering.
    let mut free: Vec<DVector<f64>> = Vec::with_capacity(n - 2);
    for k in 0..n {
        if free.len() == n - 2 {
            break;
        }
        let mut w = DVector::zeros(n);
        w[k] = 1.0;
        w -= u1.dot(&w) * &u1 + u2.dot(&w) * &u2;
        for f in &free {
            let proj = f.dot(&w);
            w -= proj * f;
        }
        let norm = w.norm();
        if norm > 1e-8 {
            free.push(w / norm);
        }
    }
    if free.len() != n - 2 {
        return Err(MixError::SingularBasis {
            cond: f64::INFINITY,
            limit: CONDITION_LIMIT,
        });
    }

    let mut xi = free;
    xi.push(vbar.clone());
    xi.push(ones.clone());

    // Dual basis from the inverse of the matrix with rows xi^i.
    let mut xi_rows = DMatrix::zeros(n, n);
    for (i, x) in xi.iter().enumerate() {
        xi_rows.set_row(i, &x.transpose());
    }
    let svd = xi_rows.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(MixError::SingularBasis {
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let inv = xi_rows.try_inverse().ok_or(MixError::SingularBasis {
        cond,
        limit: CONDITION_LIMIT,
    })?;
    let eta: Vec<DVector<f64>> = (0..n).map(|j| inv.column(j).into_owned()).collect();

    let mut pi_matrix = DMatrix::zeros(n, n - 2);
    for l in 0..n - 2 {
        pi_matrix.set_column(l, &xi[l]);
    }

    let proj_perp_ones = DMatrix::identity(n, n) - &ones * ones.transpose() / n as f64;
    let proj_perp_ones_vbar = DMatrix::identity(n, n) - &u1 * u1.transpose() - &u2 * u2.transpose();

    Ok(Frame {
        n_species: n,
        xi,
        eta,
        pi_matrix,
        proj_perp_ones,
        proj_perp_ones_vbar,
    })
}

/// Coordinates of `w` in the frame: the relative block, the volume
/// coefficient and the all-ones coefficient.
pub fn decompose_vector(frame: &Frame, w: &DVector<f64>) -> (DVector<f64>, f64, f64) {
    let n = frame.n_species;
    let q_part = DVector::from_fn(n - 2, |l, _| frame.eta[l].dot(w));
    let vbar_part = frame.eta[n - 2].dot(w);
    let ones_part = frame.eta[n - 1].dot(w);
    (q_part, vbar_part, ones_part)
}
