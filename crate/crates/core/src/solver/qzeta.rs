//! Implicit Euler step of the coupled relative-potential / volume-potential
//! block.
//!
//! The volume potential satisfies a pure Neumann problem whose flux couples
//! to the relative block. On faces the elliptic identity pins the combined
//! flux, so the parabolic step can be written against the reduced
//! Schur core (symmetric positive definite) with the coupling entering as a
//! known source flux; the potential is then recovered by a regularized
//! tridiagonal solve and projected to zero mean.

use nalgebra::{DMatrix, DVector};

use crate::error::{MixError, Result};
use crate::solver::{
    face_velocity, solve_block_tridiag, solve_tridiag, Grid1D, QField, BLOCK_RESIDUAL_TOL,
};

/// Cellwise coefficient fields frozen at the current linearization point.
#[derive(Debug, Clone)]
pub struct QZetaCoeffs {
    /// Time-derivative weight of the relative block, one SPD matrix per cell.
    pub r_q: Vec<DMatrix<f64>>,
    /// Relative-block mobility per cell.
    pub m_tilde: Vec<DMatrix<f64>>,
    /// Coupling vector per cell.
    pub a_vec: Vec<DVector<f64>>,
    /// Volume-direction coefficient per cell, strictly positive.
    pub d_scal: Vec<f64>,
}

impl QZetaCoeffs {
    fn check(&self, n_cells: usize, n_comp: usize) -> Result<()> {
        if self.r_q.len() != n_cells
            || self.m_tilde.len() != n_cells
            || self.a_vec.len() != n_cells
            || self.d_scal.len() != n_cells
        {
            return Err(MixError::Validation(
                "coefficient fields do not match the grid".into(),
            ));
        }
        if self
            .r_q
            .iter()
            .zip(&self.m_tilde)
            .zip(&self.a_vec)
            .any(|((r, m), a)| r.nrows() != n_comp || m.nrows() != n_comp || a.len() != n_comp)
        {
            return Err(MixError::Validation(
                "coefficient blocks do not match the relative width".into(),
            ));
        }
        for (i, &d) in self.d_scal.iter().enumerate() {
            if !(d > 0.0) {
                return Err(MixError::DegenerateClosure(format!(
                    "volume coefficient d = {d:.3e} at cell {i} is not positive"
                )));
            }
        }
        Ok(())
    }
}

struct FaceData {
    k_core: Vec<DMatrix<f64>>,
    a_over_d: Vec<DVector<f64>>,
    d: Vec<f64>,
    a: Vec<DVector<f64>>,
    /// v* + h averaged onto interior faces, zero at the walls.
    drive: Vec<f64>,
}

fn face_data(coeffs: &QZetaCoeffs, v_star: &[f64], rhs_h: &[f64], n: usize, m: usize) -> FaceData {
    let mut k_core = Vec::with_capacity(n + 1);
    let mut a_over_d = Vec::with_capacity(n + 1);
    let mut d = Vec::with_capacity(n + 1);
    let mut a = Vec::with_capacity(n + 1);
    let mut drive = Vec::with_capacity(n + 1);
    for face in 0..=n {
        if face == 0 || face == n {
            k_core.push(DMatrix::zeros(m, m));
            a_over_d.push(DVector::zeros(m));
            d.push(0.0);
            a.push(DVector::zeros(m));
            drive.push(0.0);
            continue;
        }
        let (l, r) = (face - 1, face);
        let mf = 0.5 * (&coeffs.m_tilde[l] + &coeffs.m_tilde[r]);
        let af = 0.5 * (&coeffs.a_vec[l] + &coeffs.a_vec[r]);
        let df = 0.5 * (coeffs.d_scal[l] + coeffs.d_scal[r]);
        let kf = &mf - &af * af.transpose() / df;
        k_core.push(0.5 * (&kf + kf.transpose()));
        a_over_d.push(&af / df);
        d.push(df);
        a.push(af);
        drive.push(face_velocity(v_star, face) + 0.5 * (rhs_h[l] + rhs_h[r]));
    }
    FaceData {
        k_core,
        a_over_d,
        d,
        a,
        drive,
    }
}

/// One implicit Euler step of the coupled block. Returns the relative field
/// and the zero-mean volume potential; the pair satisfies the discrete
/// coupled system to the linear residual tolerance.
pub fn solve_q_zeta(
    grid: &Grid1D,
    coeffs: &QZetaCoeffs,
    rhs_g: &QField,
    rhs_h: &[f64],
    v_star: &[f64],
    q_n: &QField,
    dt: f64,
) -> Result<(QField, Vec<f64>)> {
    let n = grid.n_cells();
    let m = q_n.n_comp();
    let dx = grid.dx();
    coeffs.check(n, m)?;

    let faces = face_data(coeffs, v_star, rhs_h, n, m);

    // Parabolic step against the Schur core. The elliptic identity replaces
    // the coupled flux by the face drive, so the block decouples exactly on
    // the discrete level.
    let q = if m > 0 {
        let mut lower = vec![DMatrix::zeros(m, m); n];
        let mut diag = vec![DMatrix::zeros(m, m); n];
        let mut upper = vec![DMatrix::zeros(m, m); n];
        let mut rhs = vec![DVector::zeros(m); n];
        let inv_dx2 = 1.0 / (dx * dx);
        for i in 0..n {
            let mut d_block = &coeffs.r_q[i] / dt;
            d_block += (&faces.k_core[i] + &faces.k_core[i + 1]) * inv_dx2;
            if i > 0 {
                lower[i] = -&faces.k_core[i] * inv_dx2;
            }
            if i + 1 < n {
                upper[i] = -&faces.k_core[i + 1] * inv_dx2;
            }
            diag[i] = d_block;
            let source_flux = (&faces.a_over_d[i + 1] * faces.drive[i + 1]
                - &faces.a_over_d[i] * faces.drive[i])
                / dx;
            rhs[i] = rhs_g.cell_vector(i) + &coeffs.r_q[i] * q_n.cell_vector(i) / dt + source_flux;
        }
        let sol = solve_block_tridiag(&lower, &diag, &upper, &rhs)?;
        let mut q = QField::zeros(n, m);
        for (i, cell) in sol.iter().enumerate() {
            q.set_cell(i, cell);
        }

        // Residual of the parabolic rows.
        let mut res: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let mut ax = &diag[i] * q.cell_vector(i);
            if i > 0 {
                ax += &lower[i] * q.cell_vector(i - 1);
            }
            if i + 1 < n {
                ax += &upper[i] * q.cell_vector(i + 1);
            }
            res = res.max((ax - &rhs[i]).abs().max());
            scale = scale.max(rhs[i].abs().max());
        }
        if res > BLOCK_RESIDUAL_TOL * (1.0 + scale) {
            return Err(MixError::SingularBlock(format!(
                "parabolic block residual {res:.3e} exceeds tolerance"
            )));
        }
        q
    } else {
        QField::zeros(n, 0)
    };

    let zeta = elliptic_zeta(grid, &faces, &q)?;
    Ok((q, zeta))
}

/// Standalone solve of the weak Neumann problem for the volume potential at
/// frozen relative field and velocity; used by the fixed-point loop for the
/// final consistency pass.
pub fn solve_zeta_given_q(
    grid: &Grid1D,
    coeffs: &QZetaCoeffs,
    q: &QField,
    v: &[f64],
    rhs_h: &[f64],
) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    coeffs.check(n, q.n_comp())?;
    let faces = face_data(coeffs, v, rhs_h, n, q.n_comp());
    elliptic_zeta(grid, &faces, q)
}

/// Weak Neumann problem for the volume potential: the cellwise divergence
/// of `d zeta_x` balances the divergence of `(drive - A . q_x)` on faces.
/// The singular Neumann operator is pinned by a rank-1 regularization and
/// the mean removed afterwards.
fn elliptic_zeta(grid: &Grid1D, faces: &FaceData, q: &QField) -> Result<Vec<f64>> {
    let n = grid.n_cells();
    let dx = grid.dx();
    // Row i of the operator is -div_h(d grad .); the matching right-hand
    // side is -div_h of the known face flux, so the solved potential
    // satisfies d zeta_x = drive - A . q_x on every face.
    let mut rhs_zeta = vec![0.0; n];
    let mut flux_known = vec![0.0; n + 1];
    for face in 1..n {
        let qx = (q.cell_vector(face) - q.cell_vector(face - 1)) / dx;
        flux_known[face] = faces.drive[face] - faces.a[face].dot(&qx);
    }
    for i in 0..n {
        rhs_zeta[i] = -(flux_known[i + 1] - flux_known[i]) / dx;
    }

    let inv_dx2 = 1.0 / (dx * dx);
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let dl = faces.d[i] * inv_dx2;
        let dr = faces.d[i + 1] * inv_dx2;
        diag[i] = dl + dr;
        if i > 0 {
            lower[i] = -dl;
        }
        if i + 1 < n {
            upper[i] = -dr;
        }
    }
    let sigma = diag.iter().fold(0.0_f64, |a, &x| a.max(x)).max(1e-30);
    diag[0] += sigma;
    let mut zeta = solve_tridiag(&lower, &diag, &upper, &rhs_zeta)?;
    diag[0] -= sigma;
    let mean = zeta.iter().sum::<f64>() / n as f64;
    for z in &mut zeta {
        *z -= mean;
    }

    // Residual of the elliptic rows after the mean shift.
    let mut res: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        let mut ax = diag[i] * zeta[i];
        if i > 0 {
            ax += lower[i] * zeta[i - 1];
        }
        if i + 1 < n {
            ax += upper[i] * zeta[i + 1];
        }
        res = res.max((ax - rhs_zeta[i]).abs());
        scale = scale.max(rhs_zeta[i].abs());
    }
    if res > BLOCK_RESIDUAL_TOL * (1.0 + scale) {
        return Err(MixError::SingularBlock(format!(
            "elliptic block residual {res:.3e} exceeds tolerance"
        )));
    }
    Ok(zeta)
}
