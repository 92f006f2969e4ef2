//! One-variable inner functions used as an independent numerical reference.
//!
//! Finite Blaschke products carry modulus exactly 1 on the unit circle;
//! singular factors with point atoms have no zeros in the disc yet their
//! radial modulus climbs to 1 almost everywhere on the circle. Both behaviors
//! anchor what "inner" means numerically before anything is built in two
//! variables.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A finite Blaschke product: phase, a vanishing order at the origin, and
/// nonzero zeros inside the disc.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlaschkeSpec {
    /// Zeros inside the punctured disc; each must satisfy `0 < |zero| < 1`.
    pub zeros: Vec<Complex64>,
    /// Order of vanishing at the origin.
    pub vanishing_order: u32,
    /// Overall phase angle.
    pub phase: f64,
}

impl BlaschkeSpec {
    pub fn validate(&self) -> Result<(), Error> {
        for (i, zero) in self.zeros.iter().enumerate() {
            let m = zero.norm();
            if !(m > 0.0 && m < 1.0) {
                return Err(Error::Domain(format!(
                    "zero {i} has modulus {m}; zeros must lie in the punctured open disc \
                     (vanishing at the origin goes through vanishing_order)"
                )));
            }
        }
        if !self.phase.is_finite() {
            return Err(Error::Domain("phase must be finite".into()));
        }
        Ok(())
    }
}

/// Evaluates the Blaschke product at `z` in the closed disc.
///
/// Each factor is `(|a|/a) (a - z) / (1 - conj(a) z)`; evaluation at a
/// reflected zero `1/conj(a)` is a pole and is refused.
pub fn blaschke_eval(spec: &BlaschkeSpec, z: Complex64) -> Result<Complex64, Error> {
    spec.validate()?;
    let mut acc = Complex64::from_polar(1.0, spec.phase) * z.powu(spec.vanishing_order);
    for a in &spec.zeros {
        let denominator = Complex64::new(1.0, 0.0) - a.conj() * z;
        if denominator.norm() < 1e-12 {
            return Err(Error::Pole { re: z.re, im: z.im });
        }
        acc *= (a.norm() / a) * (a - z) / denominator;
    }
    Ok(acc)
}

/// A singular inner factor with finitely many point atoms on the circle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularSpec {
    /// Atoms as `(angle, mass)` pairs; masses must be positive.
    pub atoms: Vec<(f64, f64)>,
}

impl SingularSpec {
    pub fn validate(&self) -> Result<(), Error> {
        for (i, (angle, mass)) in self.atoms.iter().enumerate() {
            if !angle.is_finite() {
                return Err(Error::Domain(format!("atom {i} has non-finite angle")));
            }
            if !(mass.is_finite() && *mass > 0.0) {
                return Err(Error::Domain(format!("atom {i} must carry positive mass, got {mass}")));
            }
        }
        Ok(())
    }
}

/// Evaluates `exp(-sum_j m_j (zeta_j + z)/(zeta_j - z))` for `|z| < 1`.
///
/// The real part of each fraction is `(1 - |z|^2)/|zeta - z|^2 > 0`, so the
/// modulus stays below 1 throughout the open disc.
pub fn singular_eval(spec: &SingularSpec, z: Complex64) -> Result<Complex64, Error> {
    spec.validate()?;
    if z.norm() >= 1.0 {
        return Err(Error::Domain(format!(
            "singular factor evaluated at |z| = {} >= 1; the open disc is required",
            z.norm()
        )));
    }
    let mut exponent = Complex64::new(0.0, 0.0);
    for &(angle, mass) in &spec.atoms {
        let zeta = Complex64::from_polar(1.0, angle);
        exponent += mass * (zeta + z) / (zeta - z);
    }
    Ok((-exponent).exp())
}
