//! Separated point sets on the boundary and measured geometry constants.
//!
//! The greedy sweep accepts a candidate iff it keeps distance at least `r`
//! from every accepted center, so the result is maximal over its candidate
//! cloud: every candidate lies within `r` of some center, and a fortiori
//! within `2r`. Working on the covering images keeps every distance a single
//! inner product.

use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::covering::{sphere_distance, ComplexPoint2, CoveringMap};
use crate::error::Error;
use crate::measure::BoundarySampleSet;

/// Pairwise separation may undershoot the declared radius by at most this
/// before a center set is rejected.
pub const SEPARATION_TOLERANCE: f64 = 1e-9;

/// A greedy maximal `r`-separated subset of a candidate cloud.
#[derive(Debug, Clone)]
pub struct PackingResult {
    centers: Vec<ComplexPoint2>,
    radius: f64,
    candidate_count: usize,
    seed: u64,
}

impl PackingResult {
    pub fn centers(&self) -> &[ComplexPoint2] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center_count(&self) -> usize {
        self.centers.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidate_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Covering images of the centers.
    pub fn center_images(&self, map: &CoveringMap) -> Vec<ComplexPoint2> {
        self.centers.iter().map(|c| map.apply(c)).collect()
    }
}

impl Serialize for PackingResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("PackingResult", 4)?;
        s.serialize_field("r", &self.radius)?;
        s.serialize_field("k", &self.center_count())?;
        s.serialize_field("seed", &self.seed)?;
        s.serialize_field("candidate_count", &self.candidate_count)?;
        let quads: Vec<[f64; 4]> = self
            .centers
            .iter()
            .map(|c| [c.z1.re, c.z1.im, c.z2.re, c.z2.im])
            .collect();
        s.serialize_field("centers", &quads)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for PackingResult {
    fn deserialize<D: serde::de::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            r: f64,
            #[allow(dead_code)]
            k: usize,
            seed: u64,
            candidate_count: usize,
            centers: Vec<[f64; 4]>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(PackingResult {
            centers: raw
                .centers
                .into_iter()
                .map(|q| ComplexPoint2::from_parts(q[0], q[1], q[2], q[3]))
                .collect(),
            radius: raw.r,
            candidate_count: raw.candidate_count,
            seed: raw.seed,
        })
    }
}

/// Greedy sweep over the candidate set in generation order.
pub fn greedy_packing(
    candidates: &BoundarySampleSet,
    r: f64,
    map: &CoveringMap,
) -> Result<PackingResult, Error> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("packing needs at least one candidate".into()));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("packing radius must be positive, got {r}")));
    }
    let images: Vec<ComplexPoint2> = candidates.sphere_images(map);
    let mut accepted_points: Vec<ComplexPoint2> = Vec::new();
    let mut accepted_images: Vec<ComplexPoint2> = Vec::new();
    for (point, image) in candidates.points().iter().zip(images.iter()) {
        if accepted_images.iter().all(|c| sphere_distance(c, image) >= r) {
            accepted_points.push(*point);
            accepted_images.push(*image);
        }
    }
    Ok(PackingResult {
        centers: accepted_points,
        radius: r,
        candidate_count: candidates.len(),
        seed: candidates.seed(),
    })
}

/// Whether every candidate lies within `2r` of a center, and the worst
/// distance from a candidate to its nearest center.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoverCheck {
    pub covered: bool,
    pub worst_min_distance: f64,
}

pub fn verify_cover(
    packing: &PackingResult,
    candidates: &BoundarySampleSet,
    map: &CoveringMap,
) -> CoverCheck {
    let centers = packing.center_images(map);
    let mut worst: f64 = 0.0;
    for image in candidates.sphere_images(map) {
        let nearest = centers
            .iter()
            .map(|c| sphere_distance(c, &image))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    CoverCheck { covered: worst < 2.0 * packing.radius(), worst_min_distance: worst }
}

/// Counts centers per distance shell `[m r, (m+1) r)` around a boundary
/// probe. The centers must honor their declared pairwise separation.
pub fn shell_histogram(
    packing: &PackingResult,
    probe: &ComplexPoint2,
    map: &CoveringMap,
) -> Result<Vec<usize>, Error> {
    map.require_boundary(probe)?;
    let r = packing.radius();
    let centers = packing.center_images(map);
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            let d = sphere_distance(&centers[i], &centers[j]);
            if d < r - SEPARATION_TOLERANCE {
                return Err(Error::Separation { i, j, distance: d, required: r });
            }
        }
    }
    // The pullback distance never exceeds 1, so shell indices stop at 1/r.
    let shells = (1.0 / r).floor() as usize + 1;
    let mut histogram = vec![0usize; shells + 1];
    let probe_image = map.apply(probe);
    for c in &centers {
        let m = (sphere_distance(&probe_image, c) / r).floor() as usize;
        histogram[m.min(shells)] += 1;
    }
    Ok(histogram)
}

/// Measured constants of the boundary quasi-metric measure space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoublingReport {
    /// Worst triple ratio `d(z,w) / (d(z,u) + d(u,w))` over sampled triples.
    pub c1_quasi_triangle: f64,
    /// Worst ratio of empirical ball masses at radii `2r` vs `r`.
    pub c2_doubling: f64,
    /// Diagnostic engulfing ratio: smallest factor `c` such that sampled
    /// intersecting balls `E(w, r'), E(z, s), r' <= s` satisfied
    /// `E(w, r') within E(z, c s)`.
    pub c3_engulfing: f64,
    /// Total boundary mass carried by the sample weights.
    pub c4_total_mass: f64,
    pub triple_count: usize,
    pub probe_count: usize,
    pub radius: f64,
}

/// Measures the space-of-homogeneous-type constants on a boundary sample.
///
/// `c2` compares empirical masses of balls of radius `2r` and `r` around the
/// first `probe_count` sample points (skipping probes whose doubled ball
/// exceeds the diameter); `c1` and `c3` are measured over seeded index
/// triples and pairs.
pub fn doubling_report(
    samples: &BoundarySampleSet,
    map: &CoveringMap,
    r: f64,
    probe_count: usize,
    triple_count: usize,
    seed: u64,
) -> Result<DoublingReport, Error> {
    use rand::{Rng, SeedableRng};
    if samples.is_empty() {
        return Err(Error::EmptyInput("doubling report needs samples".into()));
    }
    if !(r > 0.0 && 2.0 * r <= 1.0) {
        return Err(Error::Domain(format!(
            "doubling radius must satisfy 0 < 2r <= 1, got r = {r}"
        )));
    }
    let images = samples.sphere_images(map);
    let n = images.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut c1: f64 = 0.0;
    for _ in 0..triple_count {
        let z = &images[rng.gen_range(0..n)];
        let u = &images[rng.gen_range(0..n)];
        let w = &images[rng.gen_range(0..n)];
        let legs = sphere_distance(z, u) + sphere_distance(u, w);
        if legs > 1e-9 {
            c1 = c1.max(sphere_distance(z, w) / legs);
        }
    }

    let probes = probe_count.min(n);
    let mut c2: f64 = 0.0;
    for center in images.iter().take(probes) {
        let mut inner = 0usize;
        let mut outer = 0usize;
        for p in &images {
            let d = sphere_distance(center, p);
            if d < r {
                inner += 1;
            }
            if d < 2.0 * r {
                outer += 1;
            }
        }
        if inner > 0 {
            c2 = c2.max(outer as f64 / inner as f64);
        }
    }

    // Engulfing diagnostic: how much the bigger radius must inflate so its
    // ball absorbs an intersecting smaller one, measured on sampled pairs.
    let mut c3: f64 = 0.0;
    for _ in 0..triple_count.min(2000) {
        let w = &images[rng.gen_range(0..n)];
        let z = &images[rng.gen_range(0..n)];
        let rp = rng.gen_range(0.05..=r);
        let s = rng.gen_range(rp..=2.0 * r);
        let d = sphere_distance(w, z);
        if d < rp + s {
            // Needed radius bounded by d + r' for a true metric; report the
            // sampled worst over points of the smaller ball.
            let mut needed: f64 = 0.0;
            let mut intersects = false;
            for p in images.iter().take(5000) {
                let dw = sphere_distance(w, p);
                if dw < rp {
                    needed = needed.max(sphere_distance(z, p));
                    if sphere_distance(z, p) < s {
                        intersects = true;
                    }
                }
            }
            if intersects && needed > 0.0 {
                c3 = c3.max(needed / s);
            }
        }
    }

    let c4 = samples.weight() * samples.len() as f64;
    Ok(DoublingReport {
        c1_quasi_triangle: c1,
        c2_doubling: c2,
        c3_engulfing: c3,
        c4_total_mass: c4,
        triple_count,
        probe_count: probes,
        radius: r,
    })
}
