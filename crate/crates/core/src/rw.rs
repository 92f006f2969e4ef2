//! Random-sign homogeneous blocks with certified bounds.
//!
//! For a set of boundary centers `w_j` and a degree `k`, the block is
//! `Q(z) = sum_j s_j <f(z), f(w_j)>^k` with signs `s_j = ±1`. Expanding the
//! k-th power leaves at most `k+1` holomorphic monomials, so the block's
//! squared norm is exact. Averaged over all sign vectors the norm is
//! `K N / (1+k)`; a sign search certifies a vector at or above that mean.
//! Dividing by the shell-sum constant bounds the sup by 1 whenever the
//! centers form a `1/sqrt(k)`-separated set.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covering::{ComplexPoint2, CoveringMap};
use crate::error::Error;
use crate::fpoly::FPolynomial;
use crate::measure::{BoundarySampleSet, EmpiricalMeasure, IntegralEstimate, MultiIndex};
use crate::packing::PackingResult;

/// Default tail cutoff for the shell-sum constant.
pub const SIGMA_TAIL_CUTOFF: f64 = 1e-12;

/// When a random sign search misses the mean lower bound, center sets up to
/// this size are searched exhaustively instead.
pub const EXHAUSTIVE_SIGN_LIMIT: usize = 20;

/// Shell-sum constant with an explicit tail cutoff: partial sums of
/// `(m+2)^2 exp(-m^2/2)` until the next term drops below the cutoff.
pub fn shell_sigma_with_cutoff(cutoff: f64) -> f64 {
    let mut sum = 0.0;
    let mut m = 0u32;
    loop {
        let mf = f64::from(m);
        let term = (mf + 2.0).powi(2) * (-mf * mf / 2.0).exp();
        if term < cutoff {
            return sum;
        }
        sum += term;
        m += 1;
    }
}

/// Shell-sum constant at the default cutoff; dominates
/// `sum_m #H_m (1 - m^2 r^2)^(k/2)` for any `1/sqrt(k)`-separated center set.
pub fn shell_sigma_constant() -> f64 {
    shell_sigma_with_cutoff(SIGMA_TAIL_CUTOFF)
}

/// A sign assignment together with the search trial that produced it.
/// Trial 0 is always the all-plus vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignVector {
    pub signs: Vec<i8>,
    pub trial_index: u64,
}

/// A 2x2 unitary matrix acting on ball coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Unitary2 {
    pub rows: [[Complex64; 2]; 2],
}

impl Unitary2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self { rows: [[one, zero], [zero, one]] }
    }

    /// Haar-distributed unitary: two complex Gaussian columns orthonormalized
    /// with real positive normalizations.
    pub fn haar(rng: &mut ChaCha8Rng) -> Self {
        let mut gauss = || {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        };
        loop {
            let g1 = [gauss(), gauss()];
            let g2 = [gauss(), gauss()];
            let n1 = (g1[0].norm_sqr() + g1[1].norm_sqr()).sqrt();
            if n1 < 1e-9 {
                continue;
            }
            let v1 = [g1[0] / n1, g1[1] / n1];
            let overlap = g2[0] * v1[0].conj() + g2[1] * v1[1].conj();
            let w = [g2[0] - overlap * v1[0], g2[1] - overlap * v1[1]];
            let n2 = (w[0].norm_sqr() + w[1].norm_sqr()).sqrt();
            if n2 < 1e-9 {
                continue;
            }
            let v2 = [w[0] / n2, w[1] / n2];
            // Columns v1, v2 become the matrix columns.
            return Self { rows: [[v1[0], v2[0]], [v1[1], v2[1]]] };
        }
    }

    pub fn apply(&self, p: &ComplexPoint2) -> ComplexPoint2 {
        ComplexPoint2::new(
            self.rows[0][0] * p.z1 + self.rows[0][1] * p.z2,
            self.rows[1][0] * p.z1 + self.rows[1][1] * p.z2,
        )
    }

    pub fn unitarity_defect(&self) -> f64 {
        let r = &self.rows;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let dot = r[0][i].conj() * r[0][j] + r[1][i].conj() * r[1][j];
                let expected = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                worst = worst.max((dot - expected).norm());
            }
        }
        worst
    }
}

/// Certificate for a searched block: the chosen signs and rotation together
/// with every measured bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RwCertificate {
    pub k: u32,
    pub r: f64,
    pub center_count: usize,
    pub signs: SignVector,
    /// Shell-sum normalizer applied to obtain the sup-bounded block.
    pub sigma: f64,
    /// Exact squared norm of the unnormalized block.
    pub l2_mass: IntegralEstimate,
    /// Mean of the exact squared norm over all sign vectors.
    pub l2_mean: f64,
    /// Largest `|Q|/sigma` over the probe set; at or below 1 by construction.
    pub sup_bound_check: f64,
    /// Mass of the normalized block against an adapted measure, when one
    /// was supplied.
    pub measure_mass: Option<IntegralEstimate>,
    /// `measure_mass / total mass` of the adapted measure.
    pub measure_ratio: Option<f64>,
    pub rotation: Option<Unitary2>,
    pub seed: u64,
    pub trials: u64,
}

fn binomial_f64(k: u32, i: u32) -> f64 {
    let mut acc = 1.0f64;
    let m = i.min(k - i);
    for step in 1..=m {
        acc = acc * f64::from(k - m + step) / f64::from(step);
    }
    acc
}

/// Per-center contribution table: entry `i` holds
/// `C(k, i) * conj(eta1^i * eta2^(k-i))` for a center image `eta`.
fn center_powers(image: &ComplexPoint2, k: u32) -> Vec<Complex64> {
    let k_us = k as usize;
    let mut pow1 = Vec::with_capacity(k_us + 1);
    let mut pow2 = Vec::with_capacity(k_us + 1);
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..=k_us {
        pow1.push(acc);
        acc *= image.z1;
    }
    acc = Complex64::new(1.0, 0.0);
    for _ in 0..=k_us {
        pow2.push(acc);
        acc *= image.z2;
    }
    (0..=k_us)
        .map(|i| (pow1[i] * pow2[k_us - i]).conj() * binomial_f64(k, i as u32))
        .collect()
}

fn q_from_powers(powers: &[Vec<Complex64>], signs: &[i8], k: u32) -> FPolynomial {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); k as usize + 1];
    for (table, &s) in powers.iter().zip(signs) {
        let sf = f64::from(s);
        for (c, &p) in coeffs.iter_mut().zip(table.iter()) {
            *c += p * sf;
        }
    }
    FPolynomial::from_terms(coeffs.into_iter().enumerate().map(|(i, c)| {
        (MultiIndex::new(i as u32, k - i as u32), MultiIndex::new(0, 0), c)
    }))
}

/// Builds the signed kernel-power block for the packing's centers.
pub fn build_q(
    packing: &PackingResult,
    signs: &[i8],
    k: u32,
    map: &CoveringMap,
) -> Result<FPolynomial, Error> {
    if k == 0 {
        return Err(Error::Degree("block degree k must be at least 1".into()));
    }
    if signs.len() != packing.center_count() {
        return Err(Error::Domain(format!(
            "{} signs supplied for {} centers",
            signs.len(),
            packing.center_count()
        )));
    }
    if signs.iter().any(|s| *s != 1 && *s != -1) {
        return Err(Error::Domain("signs must be +1 or -1".into()));
    }
    let powers: Vec<Vec<Complex64>> = packing
        .center_images(map)
        .iter()
        .map(|im| center_powers(im, k))
        .collect();
    Ok(q_from_powers(&powers, signs, k))
}

/// Exact average of the squared block norm over all `2^K` sign vectors,
/// together with the best vector found. Exhaustive; limited to small center
/// sets.
pub fn enumerate_signs(
    packing: &PackingResult,
    k: u32,
    map: &CoveringMap,
) -> Result<(f64, SignVector, f64), Error> {
    let count = packing.center_count();
    if count == 0 {
        return Err(Error::EmptyInput("no centers to sign".into()));
    }
    if count > EXHAUSTIVE_SIGN_LIMIT {
        return Err(Error::Domain(format!(
            "exhaustive sign search limited to {EXHAUSTIVE_SIGN_LIMIT} centers, got {count}"
        )));
    }
    if k == 0 {
        return Err(Error::Degree("block degree k must be at least 1".into()));
    }
    let powers: Vec<Vec<Complex64>> = packing
        .center_images(map)
        .iter()
        .map(|im| center_powers(im, k))
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_signs = Vec::new();
    let mut best_index = 0u64;
    let mut total = 0.0;
    for mask in 0u64..(1u64 << count) {
        let signs: Vec<i8> = (0..count)
            .map(|j| if mask >> j & 1 == 0 { 1 } else { -1 })
            .collect();
        let q = q_from_powers(&powers, &signs, k);
        let l2 = q.inner_product(&q, map).re;
        total += l2;
        if l2 > best {
            best = l2;
            best_signs = signs;
            best_index = mask;
        }
    }
    let mean = total / (1u64 << count) as f64;
    Ok((mean, SignVector { signs: best_signs, trial_index: best_index }, best))
}

fn sup_over_probes(q: &FPolynomial, probes: &BoundarySampleSet, map: &CoveringMap) -> f64 {
    probes
        .sphere_images(map)
        .iter()
        .map(|im| q.eval_ball(im).norm())
        .fold(0.0, f64::max)
}

/// Searches seeded random sign vectors (plus all-plus) for the block of
/// largest exact squared norm.
///
/// The best vector is guaranteed to reach the all-signs mean `K N / (1+k)`:
/// if the random trials miss it, small center sets fall back to the
/// exhaustive search, whose maximum dominates the mean.
pub fn search_signs(
    packing: &PackingResult,
    k: u32,
    probes: &BoundarySampleSet,
    seed: u64,
    trials: u64,
    map: &CoveringMap,
) -> Result<(RwCertificate, FPolynomial), Error> {
    if k == 0 {
        return Err(Error::Degree("block degree k must be at least 1".into()));
    }
    let count = packing.center_count();
    if count == 0 {
        return Err(Error::EmptyInput("no centers to sign".into()));
    }
    let n = f64::from(map.sheet_count());
    let powers: Vec<Vec<Complex64>> = packing
        .center_images(map)
        .iter()
        .map(|im| center_powers(im, k))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_l2 = f64::NEG_INFINITY;
    let mut best = SignVector { signs: vec![1; count], trial_index: 0 };
    for trial in 0..=trials {
        let signs: Vec<i8> = if trial == 0 {
            vec![1; count]
        } else {
            (0..count).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect()
        };
        let q = q_from_powers(&powers, &signs, k);
        let l2 = q.inner_product(&q, map).re;
        if l2 > best_l2 {
            best_l2 = l2;
            best = SignVector { signs, trial_index: trial };
        }
    }
    let mean = count as f64 * n / f64::from(1 + k);
    if best_l2 < mean - 1e-9 && count <= EXHAUSTIVE_SIGN_LIMIT {
        let (_, exhaustive_best, exhaustive_l2) = enumerate_signs(packing, k, map)?;
        if exhaustive_l2 > best_l2 {
            best_l2 = exhaustive_l2;
            best = SignVector {
                signs: exhaustive_best.signs,
                trial_index: trials + 1 + exhaustive_best.trial_index,
            };
        }
    }
    let q = q_from_powers(&powers, &best.signs, k);
    let sigma = shell_sigma_constant();
    let sup = sup_over_probes(&q, probes, map) / sigma;
    let certificate = RwCertificate {
        k,
        r: packing.radius(),
        center_count: count,
        signs: best,
        sigma,
        l2_mass: IntegralEstimate::exact(best_l2),
        l2_mean: mean,
        sup_bound_check: sup,
        measure_mass: None,
        measure_ratio: None,
        rotation: None,
        seed,
        trials,
    };
    Ok((certificate, q))
}

/// Scales a block by the shell-sum constant, yielding the sup-bounded form.
pub fn normalize_to_w(certificate: &RwCertificate, q: &FPolynomial) -> FPolynomial {
    q.scale(Complex64::new(1.0 / certificate.sigma, 0.0))
}

/// Rotates the block centers through seeded Haar unitaries and keeps the
/// rotation whose normalized block carries the most mass against `mu`.
///
/// Rotating the centers leaves both the exact squared norm and the sup bound
/// intact (the distance and the spherical measure are rotation-invariant), so
/// the returned certificate still witnesses the unrotated bounds.
#[allow(clippy::too_many_arguments)]
pub fn adapt_to_measure(
    packing: &PackingResult,
    k: u32,
    mu: &EmpiricalMeasure,
    probes: &BoundarySampleSet,
    seed: u64,
    sign_trials: u64,
    rotation_trials: u64,
    map: &CoveringMap,
) -> Result<(RwCertificate, FPolynomial), Error> {
    let (base, _) = search_signs(packing, k, probes, seed, sign_trials, map)?;
    let signs = base.signs.signs.clone();
    let center_images = packing.center_images(map);
    let mu_images: Vec<ComplexPoint2> = mu.points.iter().map(|p| map.apply(p)).collect();
    let total_mass = mu.total_mass();
    if total_mass <= 0.0 {
        return Err(Error::Domain("adapted measure has no mass".into()));
    }
    let sigma = base.sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, 0x524F_5441));
    let mut best_mass = f64::NEG_INFINITY;
    let mut best_rotation = Unitary2::identity();
    let mut best_trial = 0u64;
    for trial in 0..=rotation_trials {
        let rotation = if trial == 0 { Unitary2::identity() } else { Unitary2::haar(&mut rng) };
        let rotated: Vec<ComplexPoint2> =
            center_images.iter().map(|im| rotation.apply(im)).collect();
        let powers: Vec<Vec<Complex64>> =
            rotated.iter().map(|im| center_powers(im, k)).collect();
        let q = q_from_powers(&powers, &signs, k);
        let mass: f64 = mu_images
            .iter()
            .zip(mu.weights.iter())
            .map(|(im, w)| w * q.eval_ball(im).norm_sqr())
            .sum::<f64>()
            / (sigma * sigma);
        if mass > best_mass {
            best_mass = mass;
            best_rotation = rotation;
            best_trial = trial;
        }
    }
    let rotated: Vec<ComplexPoint2> =
        center_images.iter().map(|im| best_rotation.apply(im)).collect();
    let powers: Vec<Vec<Complex64>> = rotated.iter().map(|im| center_powers(im, k)).collect();
    let q = q_from_powers(&powers, &signs, k);
    let l2 = q.inner_product(&q, map).re;
    let sup = sup_over_probes(&q, probes, map) / sigma;
    let certificate = RwCertificate {
        k,
        r: packing.radius(),
        center_count: packing.center_count(),
        signs: SignVector { signs, trial_index: best_trial },
        sigma,
        l2_mass: IntegralEstimate::exact(l2),
        l2_mean: base.l2_mean,
        sup_bound_check: sup,
        measure_mass: Some(IntegralEstimate {
            value: Complex64::new(best_mass, 0.0),
            std_error: 0.0,
            sample_count: mu.points.len(),
        }),
        measure_ratio: Some(best_mass / total_mass),
        rotation: Some(best_rotation),
        seed,
        trials: rotation_trials,
    };
    Ok((certificate, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::greedy_packing;
    use approx::assert_relative_eq;

    const FROZEN_SIGMA: f64 = 11.914_125_619_840_14;

    #[test]
    fn shell_sum_matches_frozen_value() {
        assert_relative_eq!(shell_sigma_constant(), FROZEN_SIGMA, epsilon = 1e-9);
        // Independent accumulation in reverse order as a cross-check.
        let terms: Vec<f64> = (0..12u32)
            .map(|m| {
                let mf = f64::from(m);
                (mf + 2.0).powi(2) * (-mf * mf / 2.0).exp()
            })
            .collect();
        let reversed: f64 = terms.iter().rev().filter(|t| **t >= 1e-12).sum();
        assert_relative_eq!(shell_sigma_constant(), reversed, epsilon = 1e-10);
    }

    #[test]
    fn shell_sum_stable_across_cutoffs() {
        let coarse = shell_sigma_with_cutoff(1e-10);
        let fine = shell_sigma_with_cutoff(1e-14);
        assert!((coarse - fine).abs() < 1e-10);
    }

    #[test]
    fn single_center_norm_is_sheets_over_k_plus_one() {
        let map = CoveringMap::new(2).unwrap();
        let candidates = BoundarySampleSet::sample(&map, 3, 1).unwrap();
        let packing = greedy_packing(&candidates, 0.5, &map).unwrap();
        for k in 1..=10u32 {
            let q = build_q(&packing, &[1], k, &map).unwrap();
            let l2 = q.inner_product(&q, &map).re;
            assert_relative_eq!(l2, 2.0 / f64::from(1 + k), epsilon = 1e-10);
        }
    }

    #[test]
    fn block_is_homogeneous_of_degree_k() {
        use crate::fpoly::Homogeneity;
        let map = CoveringMap::new(2).unwrap();
        let candidates = BoundarySampleSet::sample(&map, 5, 64).unwrap();
        let packing = greedy_packing(&candidates, 0.2, &map).unwrap();
        let signs = vec![1i8; packing.center_count()];
        let q = build_q(&packing, &signs, 6, &map).unwrap();
        assert_eq!(q.homogeneity(), Homogeneity::Homogeneous(6));
        assert!(q.num_terms() <= 7);
        assert!(matches!(build_q(&packing, &signs, 0, &map), Err(Error::Degree(_))));
    }

    #[test]
    fn sign_average_equals_mean_law() {
        let map = CoveringMap::new(2).unwrap();
        let candidates = BoundarySampleSet::sample(&map, 7, 6).unwrap();
        let k = 4u32;
        let packing = greedy_packing(&candidates, 1.0 / 2.0, &map).unwrap();
        let count = packing.center_count();
        assert!(count >= 2, "need at least two centers, got {count}");
        let (mean, _, best) = enumerate_signs(&packing, k, &map).unwrap();
        let expected = count as f64 * 2.0 / f64::from(1 + k);
        assert_relative_eq!(mean, expected, epsilon = 1e-10);
        assert!(best >= mean - 1e-12);
    }

    #[test]
    fn search_reaches_the_mean_floor() {
        let map = CoveringMap::new(2).unwrap();
        let candidates = BoundarySampleSet::sample(&map, 13, 4000).unwrap();
        let probes = BoundarySampleSet::sample(&map, 14, 500).unwrap();
        let k = 8u32;
        let packing = greedy_packing(&candidates, 1.0 / (f64::from(k)).sqrt(), &map).unwrap();
        let (cert, q) = search_signs(&packing, k, &probes, 21, 64, &map).unwrap();
        let floor = packing.center_count() as f64 * 2.0 / f64::from(1 + k);
        assert!(
            cert.l2_mass.real() >= floor - 1e-9,
            "l2 {} below floor {floor}",
            cert.l2_mass.real()
        );
        assert_relative_eq!(cert.l2_mass.real(), q.inner_product(&q, &map).re, epsilon = 1e-12);
        assert!(cert.sup_bound_check <= 1.0 + 1e-9);
    }

    #[test]
    fn normalized_block_stays_below_one_everywhere_sampled() {
        let map = CoveringMap::new(1).unwrap();
        let candidates = BoundarySampleSet::sample(&map, 5, 4000).unwrap();
        let probes = BoundarySampleSet::sample(&map, 6, 2000).unwrap();
        for k in [4u32, 8] {
            let packing =
                greedy_packing(&candidates, 1.0 / f64::from(k).sqrt(), &map).unwrap();
            let (cert, q) = search_signs(&packing, k, &probes, 3, 32, &map).unwrap();
            let w = normalize_to_w(&cert, &q);
            let sup = probes
                .sphere_images(&map)
                .iter()
                .map(|im| w.eval_ball(im).norm())
                .fold(0.0f64, f64::max);
            assert!(sup <= 1.0 + 1e-9, "sup {sup} for k = {k}");
        }
    }

    #[test]
    fn haar_rotations_are_unitary_and_isometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let eta = ComplexPoint2::from_parts(0.6, 0.0, 0.64, 0.48);
        let xi = ComplexPoint2::from_parts(0.0, 1.0, 0.0, 0.0);
        for _ in 0..50 {
            let u = Unitary2::haar(&mut rng);
            assert!(u.unitarity_defect() < 1e-12);
            let d_before = crate::covering::sphere_distance(&eta, &xi);
            let d_after =
                crate::covering::sphere_distance(&u.apply(&eta), &u.apply(&xi));
            assert_relative_eq!(d_before, d_after, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_preserves_exact_norm() {
        let map = CoveringMap::new(2).unwrap();
        let candidates = BoundarySampleSet::sample(&map, 19, 2000).unwrap();
        let probes = BoundarySampleSet::sample(&map, 20, 400).unwrap();
        let k = 6u32;
        let packing = greedy_packing(&candidates, 1.0 / f64::from(k).sqrt(), &map).unwrap();
        let mu = EmpiricalMeasure::from_density(&probes, |_| 1.0).unwrap();
        let (cert, _) = adapt_to_measure(&packing, k, &mu, &probes, 31, 32, 16, &map).unwrap();
        let floor = packing.center_count() as f64 * 2.0 / f64::from(1 + k);
        assert!(cert.l2_mass.real() >= floor - 1e-9);
        assert!(cert.sup_bound_check <= 1.0 + 1e-9);
        assert!(cert.rotation.is_some());
        assert!(cert.measure_ratio.unwrap() > 0.0);
    }
}
