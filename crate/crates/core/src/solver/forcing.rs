//! Named body-force and reaction profiles.
//!
//! Forces are specified per species and enter the solver only through their
//! frame coordinates: the relative block, the volume coefficient and the
//! total coefficient. Profiles with a nonzero projected part vanish at the
//! walls so the zero-flux boundary closure stays exact.

use nalgebra::DVector;

use crate::basis::{decompose_vector, Frame};
use crate::error::{MixError, Result};
use crate::thermo::MixtureSpec;

/// Frame coordinates of the body force at one point.
#[derive(Debug, Clone)]
pub struct ForceDecomposition {
    pub tilde: DVector<f64>,
    pub hat: f64,
    pub bar: f64,
}

/// Body-force families. `omega` modulates each profile by `cos(omega t)`.
#[derive(Debug, Clone)]
pub enum ForceModel {
    None,
    /// Species-uniform force along the all-ones direction with spatially
    /// linear inward pull toward the domain center: pure total forcing that
    /// piles mass up at the center.
    Inward {
        amplitude: f64,
        omega: f64,
    },
    /// Species-uniform constant force (gravity-like).
    Uniform {
        amplitude: f64,
        omega: f64,
    },
    /// Per-species amplitudes shaped by `sin^2(pi x / L)`, vanishing at
    /// both walls; exercises the projected components.
    SpeciesSine2 {
        amplitudes: DVector<f64>,
        omega: f64,
        /// Frame coordinates of the amplitude vector, fixed at build time.
        decomposed: ForceDecomposition,
    },
}

impl ForceModel {
    pub fn none() -> Self {
        ForceModel::None
    }

    pub fn inward(amplitude: f64, omega: f64) -> Self {
        ForceModel::Inward { amplitude, omega }
    }

    pub fn uniform(amplitude: f64, omega: f64) -> Self {
        ForceModel::Uniform { amplitude, omega }
    }

    pub fn species_sine2(frame: &Frame, amplitudes: Vec<f64>, omega: f64) -> Result<Self> {
        if amplitudes.len() != frame.n_species() {
            return Err(MixError::Validation(format!(
                "force amplitudes have length {}, expected {}",
                amplitudes.len(),
                frame.n_species()
            )));
        }
        let amp = DVector::from_vec(amplitudes);
        let (tilde, hat, bar) = decompose_vector(frame, &amp);
        Ok(ForceModel::SpeciesSine2 {
            amplitudes: amp,
            omega,
            decomposed: ForceDecomposition { tilde, hat, bar },
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ForceModel::None)
    }

    /// Frame coordinates of the force at position `x` (domain length `l`)
    /// and time `t`.
    pub fn decompose_at(&self, n_relative: usize, l: f64, x: f64, t: f64) -> ForceDecomposition {
        match self {
            ForceModel::None => ForceDecomposition {
                tilde: DVector::zeros(n_relative),
                hat: 0.0,
                bar: 0.0,
            },
            ForceModel::Inward { amplitude, omega } => ForceDecomposition {
                tilde: DVector::zeros(n_relative),
                hat: 0.0,
                bar: amplitude * (0.5 * l - x) * (omega * t).cos(),
            },
            ForceModel::Uniform { amplitude, omega } => ForceDecomposition {
                tilde: DVector::zeros(n_relative),
                hat: 0.0,
                bar: amplitude * (omega * t).cos(),
            },
            ForceModel::SpeciesSine2 {
                decomposed, omega, ..
            } => {
                let shape = (std::f64::consts::PI * x / l).sin().powi(2) * (omega * t).cos();
                ForceDecomposition {
                    tilde: &decomposed.tilde * shape,
                    hat: decomposed.hat * shape,
                    bar: decomposed.bar * shape,
                }
            }
        }
    }
}

/// Reaction families; admissible reactions map into the intersection of the
/// orthogonal complements of the all-ones and volume directions, so they
/// source neither total mass nor volume.
#[derive(Debug, Clone)]
pub enum ReactionModel {
    None,
    /// `r(rho) = rate * phi(rho) * direction` with a fixed admissible
    /// direction; `phi` is 1 or the product of number fractions.
    ConstantDirection {
        direction: DVector<f64>,
        rate: f64,
        mass_action: bool,
    },
}

impl ReactionModel {
    pub fn none() -> Self {
        ReactionModel::None
    }

    pub fn constant_direction(
        spec: &MixtureSpec,
        frame: &Frame,
        direction: Vec<f64>,
        rate: f64,
        mass_action: bool,
    ) -> Result<Self> {
        if direction.len() != frame.n_species() {
            return Err(MixError::Validation(format!(
                "reaction direction has length {}, expected {}",
                direction.len(),
                frame.n_species()
            )));
        }
        let dir = DVector::from_vec(direction);
        let ones_dot = dir.sum();
        let vbar_dot = dir.dot(spec.vbar());
        if ones_dot.abs() > 1e-12 || vbar_dot.abs() > 1e-12 {
            return Err(MixError::Validation(format!(
                "reaction direction must be orthogonal to the all-ones and volume vectors \
                 (r.1 = {ones_dot:.3e}, r.vbar = {vbar_dot:.3e})"
            )));
        }
        Ok(ReactionModel::ConstantDirection {
            direction: dir,
            rate,
            mass_action,
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ReactionModel::None)
    }

    /// Species production rates at the given composition.
    pub fn evaluate(&self, spec: &MixtureSpec, rho: &DVector<f64>) -> DVector<f64> {
        match self {
            ReactionModel::None => DVector::zeros(rho.len()),
            ReactionModel::ConstantDirection {
                direction,
                rate,
                mass_action,
            } => {
                let phi = if *mass_action {
                    let n = DVector::from_fn(rho.len(), |i, _| rho[i] / spec.molar_mass()[i]);
                    let total = n.sum();
                    n.iter().map(|&ni| ni / total).product::<f64>()
                } else {
                    1.0
                };
                direction * (*rate * phi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_frame;

    #[test]
    fn inward_profile_is_pure_total_force() {
        let f = ForceModel::inward(2.0, 0.0);
        let d = f.decompose_at(1, 1.0, 0.25, 0.3);
        assert_eq!(d.tilde.len(), 1);
        assert!(d.tilde[0].abs() < 1e-15 && d.hat.abs() < 1e-15);
        assert!((d.bar - 2.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn species_profile_vanishes_at_walls() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0, 4.0]).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        let f = ForceModel::species_sine2(&frame, vec![0.5, -0.2, 0.1], 0.0).unwrap();
        let d0 = f.decompose_at(1, 1.0, 0.0, 0.0);
        assert!(d0.tilde.abs().max() < 1e-30 && d0.hat.abs() < 1e-30);
        let dm = f.decompose_at(1, 1.0, 0.5, 0.0);
        assert!(dm.tilde.abs().max() > 0.0);
    }

    #[test]
    fn inadmissible_reaction_rejected() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0]).unwrap();
        let frame = build_frame(spec.vbar(), 2).unwrap();
        let err = ReactionModel::constant_direction(&spec, &frame, vec![1.0, 0.0], 1.0, false)
            .unwrap_err();
        assert!(matches!(err, MixError::Validation(_)));
    }

    #[test]
    fn admissible_ternary_reaction() {
        let spec = MixtureSpec::ideal(vec![1.0, 2.0, 4.0]).unwrap();
        let frame = build_frame(spec.vbar(), 3).unwrap();
        // Orthogonal to both 1 and vbar: solve by hand for N=3.
        // dir . (1,1,1) = 0 and dir . (1,2,4) = 0 with dir = (2,-3,1).
        let r = ReactionModel::constant_direction(&spec, &frame, vec![2.0, -3.0, 1.0], 0.5, true)
            .unwrap();
        let rho = DVector::from_vec(vec![0.3, 0.2, 0.1]);
        let val = r.evaluate(&spec, &rho);
        assert!(val.sum().abs() < 1e-12);
        assert!(val.dot(spec.vbar()).abs() < 1e-12);
    }
}
