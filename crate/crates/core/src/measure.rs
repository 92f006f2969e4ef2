//! Boundary surface measure, seeded sampling, and exact monomial moments.
//!
//! The boundary measure is defined sheet by sheet as the pullback of the
//! spherical measure, so the total mass of the boundary is the sheet count N
//! and every spherical moment pulls back with a factor of N. Monomial moments
//! are computed exactly as rationals and serve as the oracle for every Monte
//! Carlo estimate in the crate.

use num::{BigRational, FromPrimitive, One, ToPrimitive, Zero};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covering::{ComplexPoint2, CoveringMap, RAMIFICATION_GUARD};
use crate::error::Error;

/// Fixed chunk length for all boundary reductions. Totals are accumulated
/// chunk by chunk in index order, which pins the floating-point result no
/// matter how the work is scheduled.
pub const REDUCTION_CHUNK: usize = 1024;

/// A pair of exponents `(a1, a2)` for the two coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    pub a1: u32,
    pub a2: u32,
}

impl MultiIndex {
    pub fn new(a1: u32, a2: u32) -> Self {
        Self { a1, a2 }
    }

    /// Total degree `a1 + a2`.
    pub fn degree(&self) -> u32 {
        self.a1 + self.a2
    }

    /// Componentwise sum.
    pub fn plus(&self, other: &Self) -> Self {
        Self::new(self.a1 + other.a1, self.a2 + other.a2)
    }

    /// Componentwise difference, defined only when `self >= other` holds in
    /// both coordinates.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        if self.a1 >= other.a1 && self.a2 >= other.a2 {
            Some(Self::new(self.a1 - other.a1, self.a2 - other.a2))
        } else {
            None
        }
    }
}

fn big_factorial(n: u32) -> BigRational {
    let mut acc = BigRational::one();
    for i in 2..=u64::from(n) {
        acc *= BigRational::from_u64(i).unwrap();
    }
    acc
}

/// Exact spherical moment of `|z^alpha|^2`:
/// `a1! a2! / (1 + a1 + a2)!`, as a rational.
///
/// Big-integer factorials keep the value exact at any degree.
pub fn monomial_integral(alpha: MultiIndex) -> BigRational {
    big_factorial(alpha.a1) * big_factorial(alpha.a2) / big_factorial(1 + alpha.degree())
}

pub fn monomial_integral_f64(alpha: MultiIndex) -> f64 {
    monomial_integral(alpha).to_f64().expect("moment fits in f64")
}

/// Exact spherical moment of `z^alpha conj(z)^beta`; zero unless the
/// exponents match, by rotation symmetry in each coordinate.
pub fn mixed_monomial_integral(alpha: MultiIndex, beta: MultiIndex) -> BigRational {
    if alpha == beta {
        monomial_integral(alpha)
    } else {
        BigRational::zero()
    }
}

/// Exact boundary moment of the pulled-back monomial
/// `f^alpha conj(f)^beta`: the spherical moment times the sheet count.
pub fn pulled_back_monomial_integral(
    map: &CoveringMap,
    alpha: MultiIndex,
    beta: MultiIndex,
) -> BigRational {
    mixed_monomial_integral(alpha, beta) * BigRational::from_u32(map.sheet_count()).unwrap()
}

pub fn pulled_back_monomial_integral_f64(
    map: &CoveringMap,
    alpha: MultiIndex,
    beta: MultiIndex,
) -> f64 {
    pulled_back_monomial_integral(map, alpha, beta)
        .to_f64()
        .expect("moment fits in f64")
}

/// Measure of the boundary ball of radius `delta`: exactly `delta^2` per
/// sheet. Radii must lie in `(0, 1]`.
pub fn cap_measure(delta: f64) -> Result<f64, Error> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("cap radius must lie in (0, 1], got {delta}")));
    }
    Ok(delta * delta)
}

fn draw_sphere_point(rng: &mut ChaCha8Rng) -> ComplexPoint2 {
    // An isotropic 4-dimensional Gaussian normalized to the sphere; the
    // rejection branch only guards against an astronomically unlikely
    // underflow of the norm.
    loop {
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let g3: f64 = rng.sample(StandardNormal);
        let g4: f64 = rng.sample(StandardNormal);
        let norm = (g1 * g1 + g2 * g2 + g3 * g3 + g4 * g4).sqrt();
        if norm > 1e-12 {
            return ComplexPoint2::from_parts(g1 / norm, g2 / norm, g3 / norm, g4 / norm);
        }
    }
}

/// Draws `count` independent uniform points on the unit sphere of C^2.
pub fn sample_sphere(seed: u64, count: usize) -> Vec<ComplexPoint2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| draw_sphere_point(&mut rng)).collect()
}

/// A seeded uniform sample of the domain boundary.
///
/// Points are drawn by lifting uniform sphere points to uniformly chosen
/// sheets; each point carries weight `N / count`, so the weights sum to the
/// total boundary mass N. Draws landing within the ramification guard are
/// redrawn from the same stream, which keeps regeneration from `(seed, count)`
/// bit-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySampleSet {
    points: Vec<ComplexPoint2>,
    weight: f64,
    seed: u64,
    count: usize,
    q: u32,
    resamples: u64,
}

impl BoundarySampleSet {
    pub fn sample(map: &CoveringMap, seed: u64, count: usize) -> Result<Self, Error> {
        if count == 0 {
            return Err(Error::EmptyInput("sample count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut resamples = 0u64;
        while points.len() < count {
            let s = draw_sphere_point(&mut rng);
            if s.z2.norm() < RAMIFICATION_GUARD {
                resamples += 1;
                continue;
            }
            let sheet = rng.gen_range(0..map.sheet_count());
            points.push(map.lift(&s, sheet)?);
        }
        Ok(Self {
            points,
            weight: f64::from(map.sheet_count()) / count as f64,
            seed,
            count,
            q: map.exponent(),
            resamples,
        })
    }

    /// Rebuilds a set from raw parts; used by the import path. The caller is
    /// responsible for weights consistent with `sheet_count / count`.
    pub(crate) fn from_parts(
        points: Vec<ComplexPoint2>,
        weight: f64,
        seed: u64,
        q: u32,
        resamples: u64,
    ) -> Self {
        let count = points.len();
        Self { points, weight, seed, count, q, resamples }
    }

    pub fn points(&self) -> &[ComplexPoint2] {
        &self.points
    }

    /// Uniform weight `N / count` carried by each point.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn exponent(&self) -> u32 {
        self.q
    }

    /// Number of draws rejected by the ramification guard during sampling.
    pub fn resamples(&self) -> u64 {
        self.resamples
    }

    /// Images of the sample under the covering; all lie on the sphere.
    pub fn sphere_images(&self, map: &CoveringMap) -> Vec<ComplexPoint2> {
        self.points.iter().map(|p| map.apply(p)).collect()
    }

    /// A view containing the first `n` points with their weight rescaled so
    /// the truncated set still integrates to total mass N.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.count);
        Self {
            points: self.points[..n].to_vec(),
            weight: self.weight * self.count as f64 / n as f64,
            seed: self.seed,
            count: n,
            q: self.q,
            resamples: self.resamples,
        }
    }
}

/// A weighted point measure on the boundary, used for measure-adapted
/// searches. Weights are arbitrary nonnegative reals.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    pub points: Vec<ComplexPoint2>,
    pub weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<ComplexPoint2>, weights: Vec<f64>) -> Result<Self, Error> {
        if points.len() != weights.len() {
            return Err(Error::Domain(format!(
                "measure has {} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite { context: "empirical measure weights".into() });
        }
        Ok(Self { points, weights })
    }

    /// Reweights a boundary sample by a pointwise density.
    pub fn from_density<G: Fn(&ComplexPoint2) -> f64>(
        samples: &BoundarySampleSet,
        density: G,
    ) -> Result<Self, Error> {
        let weights: Vec<f64> =
            samples.points().iter().map(|p| samples.weight() * density(p)).collect();
        Self::new(samples.points().to_vec(), weights)
    }

    pub fn total_mass(&self) -> f64 {
        chunked_sum(&self.weights)
    }
}

/// A Monte Carlo integral with its jackknife standard error. Exact values
/// are represented with a zero standard error and zero sample count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: Complex64,
    pub std_error: f64,
    pub sample_count: usize,
}

impl IntegralEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value: Complex64::new(value, 0.0), std_error: 0.0, sample_count: 0 }
    }

    pub fn real(&self) -> f64 {
        self.value.re
    }

    /// Whether `other` lies within `z` standard errors of this estimate, with
    /// a tiny absolute guard for exactly-reproduced values.
    pub fn within_std_errors(&self, expected: Complex64, z: f64) -> bool {
        (self.value - expected).norm() <= z * self.std_error + 1e-12
    }
}

fn chunked_sum(values: &[f64]) -> f64 {
    values.chunks(REDUCTION_CHUNK).map(|c| c.iter().sum::<f64>()).sum()
}

fn jackknife(chunk_sums: &[Complex64], chunk_lens: &[usize], n: usize, mass: f64) -> (Complex64, f64) {
    let total: Complex64 = chunk_sums.iter().sum();
    let value = total * (mass / n as f64);
    let c = chunk_sums.len();
    if c < 2 {
        return (value, 0.0);
    }
    // Leave-one-chunk-out estimates; for the weighted mean this reproduces
    // the classical variance of the mean while respecting the fixed chunking.
    let mut loo = Vec::with_capacity(c);
    for i in 0..c {
        let rest = total - chunk_sums[i];
        let rest_n = n - chunk_lens[i];
        loo.push(rest * (mass / rest_n as f64));
    }
    let mean = loo.iter().sum::<Complex64>() / c as f64;
    let factor = (c - 1) as f64 / c as f64;
    let var: f64 = loo.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() * factor;
    (value, var.sqrt())
}

/// Integrates a complex-valued function against the boundary sample:
/// `N * mean(g)`, with a jackknife standard error over fixed chunks.
pub fn integrate_boundary<G: Fn(&ComplexPoint2) -> Complex64>(
    g: G,
    samples: &BoundarySampleSet,
) -> Result<IntegralEstimate, Error> {
    let values: Vec<Complex64> = samples.points().iter().map(|p| g(p)).collect();
    integrate_values(&values, samples)
}

/// Integrates a real-valued function against the boundary sample.
pub fn integrate_boundary_real<G: Fn(&ComplexPoint2) -> f64>(
    g: G,
    samples: &BoundarySampleSet,
) -> Result<IntegralEstimate, Error> {
    integrate_boundary(|p| Complex64::new(g(p), 0.0), samples)
}

/// Integrates precomputed per-point values against the boundary sample.
pub fn integrate_values(
    values: &[Complex64],
    samples: &BoundarySampleSet,
) -> Result<IntegralEstimate, Error> {
    if values.len() != samples.len() {
        return Err(Error::Domain(format!(
            "{} values supplied for {} sample points",
            values.len(),
            samples.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("cannot integrate over an empty sample".into()));
    }
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite { context: "boundary integrand".into() });
    }
    let mass = f64::from(samples.exponent());
    // Tiny samples fall back to one point per chunk so a variance can still
    // be formed.
    let chunk_size = if values.len() < 2 * REDUCTION_CHUNK { 1 } else { REDUCTION_CHUNK };
    let mut chunk_sums = Vec::new();
    let mut chunk_lens = Vec::new();
    for chunk in values.chunks(chunk_size) {
        chunk_sums.push(chunk.iter().sum::<Complex64>());
        chunk_lens.push(chunk.len());
    }
    let (value, std_error) = jackknife(&chunk_sums, &chunk_lens, values.len(), mass);
    Ok(IntegralEstimate { value, std_error, sample_count: values.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn frozen_monomial_moments() {
        let cases = [
            ((0u32, 0u32), 1.0),
            ((1, 0), 0.5),
            ((1, 1), 1.0 / 6.0),
            ((2, 0), 1.0 / 3.0),
            ((2, 1), 1.0 / 12.0),
            ((4, 4), 24.0 * 24.0 / 362_880.0),
        ];
        for ((a1, a2), expected) in cases {
            assert_relative_eq!(
                monomial_integral_f64(MultiIndex::new(a1, a2)),
                expected,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn high_degree_moments_stay_exact() {
        // 70!/(71)! collapses to 1/71 for alpha = (70, 0); the big-integer
        // path must not overflow on the way there.
        let v = monomial_integral(MultiIndex::new(70, 0));
        let expected = BigRational::new(1.into(), 71.into());
        assert_eq!(v, expected);
    }

    #[test]
    fn mixed_moments_vanish_off_diagonal() {
        assert!(mixed_monomial_integral(MultiIndex::new(2, 0), MultiIndex::new(0, 2)).is_zero());
        assert!(!mixed_monomial_integral(MultiIndex::new(2, 1), MultiIndex::new(2, 1)).is_zero());
    }

    #[test]
    fn pullback_scales_by_sheet_count() {
        let map = CoveringMap::new(3).unwrap();
        let alpha = MultiIndex::new(1, 1);
        assert_relative_eq!(
            pulled_back_monomial_integral_f64(&map, alpha, alpha),
            3.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cap_measure_is_square_law() {
        assert_relative_eq!(cap_measure(0.1).unwrap(), 0.01, epsilon = 1e-15);
        assert_relative_eq!(cap_measure(1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(cap_measure(0.0).is_err());
        assert!(cap_measure(1.5).is_err());
        assert!(cap_measure(-0.2).is_err());
    }

    #[test]
    fn sphere_sample_sits_on_sphere() {
        for p in sample_sphere(5, 500) {
            assert!((p.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_sample_is_reproducible_bitwise() {
        let map = CoveringMap::new(2).unwrap();
        let a = BoundarySampleSet::sample(&map, 42, 2000).unwrap();
        let b = BoundarySampleSet::sample(&map, 42, 2000).unwrap();
        assert_eq!(a.resamples(), b.resamples());
        for (p, q) in a.points().iter().zip(b.points()) {
            assert_eq!(p.z1.re.to_bits(), q.z1.re.to_bits());
            assert_eq!(p.z1.im.to_bits(), q.z1.im.to_bits());
            assert_eq!(p.z2.re.to_bits(), q.z2.re.to_bits());
            assert_eq!(p.z2.im.to_bits(), q.z2.im.to_bits());
        }
    }

    #[test]
    fn boundary_sample_lies_on_boundary_and_off_guard() {
        for q in 1..=3u32 {
            let map = CoveringMap::new(q).unwrap();
            let set = BoundarySampleSet::sample(&map, 9, 1000).unwrap();
            assert_relative_eq!(set.weight(), f64::from(q) / 1000.0, epsilon = 1e-15);
            for p in set.points() {
                assert!(map.boundary_defect(p) < 1e-12);
                assert!(map.apply(p).z2.norm() >= RAMIFICATION_GUARD);
            }
        }
    }

    #[test]
    fn constant_integrates_to_total_mass_exactly() {
        for q in 1..=3u32 {
            let map = CoveringMap::new(q).unwrap();
            let set = BoundarySampleSet::sample(&map, 3, 1500).unwrap();
            let est = integrate_boundary_real(|_| 1.0, &set).unwrap();
            assert_eq!(est.real(), f64::from(q));
            assert!(est.std_error < 1e-12);
        }
    }

    #[test]
    fn ramification_tube_mass_shrinks_with_width() {
        use crate::covering::RamificationLocus;
        let map = CoveringMap::new(2).unwrap();
        let set = BoundarySampleSet::sample(&map, 17, 50_000).unwrap();
        let locus = RamificationLocus;
        let mass = |w: f64| {
            integrate_boundary_real(|p| if locus.tube_contains(p, w) { 1.0 } else { 0.0 }, &set)
                .unwrap()
                .real()
        };
        let coarse = mass(0.5);
        let fine = mass(0.2);
        let finest = mass(0.05);
        assert!(coarse > fine && fine > finest);
        // Tube mass obeys N * w^(2q); at w = 0.05, q = 2 that is ~1e-5, far
        // below one expected sample, so the count collapses to zero.
        assert!(finest < 1e-3);
    }

    #[test]
    fn estimator_matches_exact_moment_within_three_sigma() {
        let map = CoveringMap::new(2).unwrap();
        let set = BoundarySampleSet::sample(&map, 8, 40_000).unwrap();
        let alpha = MultiIndex::new(1, 1);
        let est = integrate_boundary_real(
            |p| {
                let im = map.apply(p);
                im.z1.norm_sqr() * im.z2.norm_sqr()
            },
            &set,
        )
        .unwrap();
        let exact = pulled_back_monomial_integral_f64(&map, alpha, alpha);
        assert!(
            (est.real() - exact).abs() <= 3.0 * est.std_error,
            "estimate {} vs exact {} (se {})",
            est.real(),
            exact,
            est.std_error
        );
    }

    #[test]
    fn std_error_scales_like_inverse_sqrt() {
        let map = CoveringMap::new(1).unwrap();
        let set = BoundarySampleSet::sample(&map, 77, 80_000).unwrap();
        let g = |p: &ComplexPoint2| p.z1.norm_sqr();
        let se_full = integrate_boundary_real(g, &set).unwrap().std_error;
        let se_half = integrate_boundary_real(g, &set.truncated(40_000)).unwrap().std_error;
        let se_quarter = integrate_boundary_real(g, &set.truncated(20_000)).unwrap().std_error;
        let r1 = se_half / se_full;
        let r2 = se_quarter / se_half;
        for r in [r1, r2] {
            assert!((1.15..=1.75).contains(&r), "halving ratio {r} far from sqrt(2)");
        }
    }

    #[test]
    fn non_finite_integrand_is_rejected() {
        let map = CoveringMap::new(1).unwrap();
        let set = BoundarySampleSet::sample(&map, 1, 100).unwrap();
        let est = integrate_boundary_real(|p| 1.0 / (p.z1.norm() - p.z1.norm()), &set);
        assert!(matches!(est, Err(Error::NonFinite { .. })));
    }
}
