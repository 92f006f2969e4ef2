//! The covered domain family and its boundary geometry.
//!
//! `M_q = { (z1, z2) : |z1|^2 + |z2|^(2q) < 1 }` is mapped onto the unit ball
//! by `f(z1, z2) = (z1, z2^q)`, a proper q-sheeted covering ramified over
//! `{ z2 = 0 }`. The boundary carries the pseudo-metric pulled back from the
//! sphere, `d(z, w) = sqrt(1 - |<f(z), f(w)>|^2)`, which never exceeds 1 and
//! vanishes between points of the same fiber.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Default tolerance for deciding boundary membership.
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Lifts are refused when the base point's second coordinate is smaller than
/// this; below it the q-th root branches are numerically indistinct.
pub const RAMIFICATION_GUARD: f64 = 1e-6;

/// A point of C^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint2 {
    pub z1: Complex64,
    pub z2: Complex64,
}

impl ComplexPoint2 {
    pub fn new(z1: Complex64, z2: Complex64) -> Self {
        Self { z1, z2 }
    }

    pub fn from_parts(re1: f64, im1: f64, re2: f64, im2: f64) -> Self {
        Self::new(Complex64::new(re1, im1), Complex64::new(re2, im2))
    }

    /// Squared Euclidean norm `|z1|^2 + |z2|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.z1.norm_sqr() + self.z2.norm_sqr()
    }

    /// Hermitian inner product `<self, other> = z1 w1* + z2 w2*`.
    pub fn herm_dot(&self, other: &Self) -> Complex64 {
        self.z1 * other.z1.conj() + self.z2 * other.z2.conj()
    }

    pub fn is_finite(&self) -> bool {
        self.z1.re.is_finite()
            && self.z1.im.is_finite()
            && self.z2.re.is_finite()
            && self.z2.im.is_finite()
    }
}

/// Distance on the unit sphere: `sqrt(1 - |<eta, xi>|^2)` for unit vectors.
///
/// The value is clamped at 0 so that rounding in the inner product can never
/// produce a NaN for nearly parallel arguments.
pub fn sphere_distance(eta: &ComplexPoint2, xi: &ComplexPoint2) -> f64 {
    (1.0 - eta.herm_dot(xi).norm_sqr()).max(0.0).sqrt()
}

/// The q-sheeted covering `f(z1, z2) = (z1, z2^q)` of the unit ball by `M_q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringMap {
    q: u32,
    boundary_tolerance: f64,
}

impl CoveringMap {
    pub fn new(q: u32) -> Result<Self, Error> {
        Self::with_tolerance(q, DEFAULT_BOUNDARY_TOLERANCE)
    }

    pub fn with_tolerance(q: u32, boundary_tolerance: f64) -> Result<Self, Error> {
        if q == 0 {
            return Err(Error::Domain("covering exponent q must be at least 1".into()));
        }
        if !(boundary_tolerance > 0.0 && boundary_tolerance.is_finite()) {
            return Err(Error::Domain(format!(
                "boundary tolerance must be positive and finite, got {boundary_tolerance}"
            )));
        }
        Ok(Self { q, boundary_tolerance })
    }

    /// The covering exponent q.
    pub fn exponent(&self) -> u32 {
        self.q
    }

    /// Number of sheets; equals the exponent for this family.
    pub fn sheet_count(&self) -> u32 {
        self.q
    }

    pub fn boundary_tolerance(&self) -> f64 {
        self.boundary_tolerance
    }

    /// Applies the covering: `(z1, z2) -> (z1, z2^q)`.
    pub fn apply(&self, p: &ComplexPoint2) -> ComplexPoint2 {
        ComplexPoint2::new(p.z1, p.z2.powu(self.q))
    }

    /// `| |z1|^2 + |z2|^(2q) - 1 |`, the distance of the defining function
    /// from its boundary value.
    pub fn boundary_defect(&self, p: &ComplexPoint2) -> f64 {
        (p.z1.norm_sqr() + p.z2.norm_sqr().powi(self.q as i32) - 1.0).abs()
    }

    pub fn on_boundary(&self, p: &ComplexPoint2) -> bool {
        self.boundary_defect(p) < self.boundary_tolerance
    }

    pub fn require_boundary(&self, p: &ComplexPoint2) -> Result<(), Error> {
        let defect = self.boundary_defect(p);
        if defect < self.boundary_tolerance {
            Ok(())
        } else {
            Err(Error::OffBoundary { defect, tolerance: self.boundary_tolerance })
        }
    }

    /// Lifts a sphere point through the covering onto the requested sheet.
    ///
    /// Sheet branches differ by q-th roots of unity in the second coordinate;
    /// they collapse on the ramification locus, so lifts within
    /// [`RAMIFICATION_GUARD`] of it are refused.
    pub fn lift(&self, s: &ComplexPoint2, sheet: u32) -> Result<ComplexPoint2, Error> {
        if sheet >= self.q {
            return Err(Error::Domain(format!(
                "sheet index {sheet} out of range for a {}-sheeted covering",
                self.q
            )));
        }
        let modulus = s.z2.norm();
        if modulus < RAMIFICATION_GUARD {
            return Err(Error::Ramification { modulus, guard: RAMIFICATION_GUARD });
        }
        let qf = f64::from(self.q);
        let root_modulus = modulus.powf(1.0 / qf);
        let angle = (s.z2.arg() + 2.0 * std::f64::consts::PI * f64::from(sheet)) / qf;
        Ok(ComplexPoint2::new(s.z1, Complex64::from_polar(root_modulus, angle)))
    }

    /// Boundary distance `sqrt(1 - |<f(z), f(w)>|^2)`; both points must lie on
    /// the boundary of the domain.
    pub fn boundary_distance(&self, z: &ComplexPoint2, w: &ComplexPoint2) -> Result<f64, Error> {
        self.require_boundary(z)?;
        self.require_boundary(w)?;
        Ok(sphere_distance(&self.apply(z), &self.apply(w)))
    }

    /// Whether `query` lies in the boundary ball of the given radius around
    /// `center`. Any radius above 1 contains every boundary point, since the
    /// distance is bounded by 1.
    pub fn boundary_ball_contains(
        &self,
        center: &ComplexPoint2,
        radius: f64,
        query: &ComplexPoint2,
    ) -> Result<bool, Error> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
        }
        Ok(self.boundary_distance(center, query)? < radius)
    }
}

/// The ramification locus `Z = { z2 = 0 }` of the family.
///
/// Its boundary trace is the circle `{ (z1, 0) : |z1| = 1 }`; it carries zero
/// surface measure, which tests confirm by shrinking tubes around it.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RamificationLocus;

impl RamificationLocus {
    /// Whether a domain point lies in the open tube of the given width.
    pub fn tube_contains(&self, p: &ComplexPoint2, width: f64) -> bool {
        p.z2.norm() < width
    }

    /// Whether a sphere point lies in the image tube of the given width; the
    /// image of the locus is again `{ z2 = 0 }`.
    pub fn image_tube_contains(&self, s: &ComplexPoint2, width: f64) -> bool {
        s.z2.norm() < width
    }
}
