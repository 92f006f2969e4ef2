//! Iterative construction of a holomorphic series whose boundary modulus
//! approaches a prescribed positive target.
//!
//! Each step measures the residual `psi = phi - |Q|` on the boundary, builds
//! a sup-bounded random-sign block `W` adapted to the residual's mass, fits a
//! low-degree surrogate to `psi`, and projects `W * surrogate` back onto the
//! holomorphic span. The projection error is checked pointwise against the
//! allowance `psi / 4`; scaling the passed correction by `4/5` keeps the new
//! partial sum strictly below the target in modulus. Blocks occupy disjoint
//! runs of total degrees drawn from a reservoir of consecutive integers, so
//! partial sums are orthogonal and their energies stack exactly.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covering::{ComplexPoint2, CoveringMap};
use crate::error::Error;
use crate::fpoly::FPolynomial;
use crate::measure::MultiIndex;
use crate::measure::{integrate_values, BoundarySampleSet, EmpiricalMeasure, IntegralEstimate};
use crate::packing::greedy_packing;
use crate::rw::{adapt_to_measure, normalize_to_w, RwCertificate};

/// Pointwise allowance for the projected correction, as a fraction of the
/// residual.
pub const CORRECTION_ALLOWANCE: f64 = 0.25;

/// Scale applied to an accepted correction; combined with the allowance it
/// keeps the partial sum strictly below the target.
pub const CORRECTION_SCALE: f64 = 0.8;

/// Relative ridge added to the surrogate normal equations.
const RIDGE_FACTOR: f64 = 1e-10;

/// Scan horizon when hunting for a degree block.
const BLOCK_SEARCH_HORIZON: u32 = 10_000_000;

/// Membership rule for the degree reservoir.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LIKind {
    /// Every nonnegative integer.
    AllIntegers,
    /// Integers whose residue modulo `modulus` is below `window`; contains
    /// runs up to `window` long.
    ResidueWindow { modulus: u32, window: u32 },
}

/// A reservoir of total degrees containing arbitrarily long runs of
/// consecutive integers (up to the window length for residue rules), minus
/// the degrees already handed out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LISet {
    kind: LIKind,
    excluded: BTreeSet<u32>,
}

impl LISet {
    pub fn all() -> Self {
        Self { kind: LIKind::AllIntegers, excluded: BTreeSet::new() }
    }

    pub fn residue_window(modulus: u32, window: u32) -> Result<Self, Error> {
        if modulus == 0 || window == 0 || window > modulus {
            return Err(Error::Domain(format!(
                "residue window needs 1 <= window <= modulus, got window {window}, modulus {modulus}"
            )));
        }
        Ok(Self { kind: LIKind::ResidueWindow { modulus, window }, excluded: BTreeSet::new() })
    }

    pub fn exclude(&mut self, degree: u32) {
        self.excluded.insert(degree);
    }

    pub fn excluded(&self) -> &BTreeSet<u32> {
        &self.excluded
    }

    fn kind_contains(&self, n: u32) -> bool {
        match self.kind {
            LIKind::AllIntegers => true,
            LIKind::ResidueWindow { modulus, window } => n % modulus < window,
        }
    }

    pub fn is_member(&self, n: u32) -> bool {
        self.kind_contains(n) && !self.excluded.contains(&n)
    }

    /// Hands out (and consumes) the lowest run of `length` consecutive
    /// members.
    pub fn next_block(&mut self, length: u32) -> Result<Vec<u32>, Error> {
        self.next_block_from(length, 0)
    }

    /// Hands out the lowest run of `length` consecutive members starting at
    /// or above `floor`.
    pub fn next_block_from(&mut self, length: u32, floor: u32) -> Result<Vec<u32>, Error> {
        if length == 0 {
            return Err(Error::Domain("block length must be positive".into()));
        }
        if let LIKind::ResidueWindow { window, .. } = self.kind {
            if length > window {
                return Err(Error::Degree(format!(
                    "reservoir runs are at most {window} long, cannot supply a block of {length}"
                )));
            }
        }
        let mut start = floor;
        'scan: while start < floor.saturating_add(BLOCK_SEARCH_HORIZON) {
            for offset in 0..length {
                if !self.is_member(start + offset) {
                    start = start + offset + 1;
                    continue 'scan;
                }
            }
            let block: Vec<u32> = (start..start + length).collect();
            for d in &block {
                self.excluded.insert(*d);
            }
            return Ok(block);
        }
        Err(Error::Degree(format!(
            "no run of {length} consecutive members found above {floor}"
        )))
    }
}

/// A strictly positive boundary target modulus, evaluated on ball images.
#[derive(Clone)]
pub struct TargetModulus {
    eval: Arc<dyn Fn(&ComplexPoint2) -> f64 + Send + Sync>,
    label: String,
}

impl std::fmt::Debug for TargetModulus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TargetModulus({})", self.label)
    }
}

impl TargetModulus {
    pub fn constant(value: f64) -> Result<Self, Error> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Positivity(format!(
                "constant target must be positive and finite, got {value}"
            )));
        }
        Ok(Self {
            eval: Arc::new(move |_| value),
            label: format!("constant {value}"),
        })
    }

    pub fn from_fn<G>(label: &str, g: G) -> Self
    where
        G: Fn(&ComplexPoint2) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(g), label: label.to_string() }
    }

    pub fn eval_image(&self, eta: &ComplexPoint2) -> f64 {
        (self.eval)(eta)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Accumulated state of a series construction.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeriesState {
    /// Accepted orthogonal blocks, in order.
    pub partials: Vec<FPolynomial>,
    /// Their sum.
    pub q_sum: FPolynomial,
    /// Total degrees occupied by accepted blocks.
    pub used_degrees: BTreeSet<u32>,
    /// Boundary defect after each accepted step, starting with the empty sum.
    pub defect_history: Vec<f64>,
    /// Smallest probe margin `phi - |Q|` after each accepted step.
    pub sup_margin_history: Vec<f64>,
}

impl SeriesState {
    pub fn step_count(&self) -> usize {
        self.partials.len()
    }
}

/// Everything measured about one accepted step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub k: u32,
    /// Degrees reserved for this step.
    pub block: Vec<u32>,
    /// Degrees actually carrying coefficients.
    pub degrees: Vec<u32>,
    pub surrogate_degree: u32,
    /// Largest surrogate misfit over the fit points.
    pub fit_residual: f64,
    /// Largest `|F - W psi| / (psi/4)` over probes; below 1 on acceptance.
    pub correction_margin: f64,
    pub p_norm_sqr: f64,
    /// `p_norm_sqr / defect_before`, the fraction of residual energy claimed.
    pub energy_ratio: f64,
    pub defect_after: f64,
    pub min_margin_after: f64,
    pub certificate: RwCertificate,
}

/// Knobs of the series construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    pub seed: u64,
    pub budget: usize,
    /// Stop once the defect drops to this value; `None` means 5% of the
    /// boundary mass.
    pub defect_target: Option<f64>,
    /// Smallest acceptable per-step energy ratio before declaring
    /// stagnation.
    pub epsilon_energy: f64,
    /// Blocks are drawn at or above this degree.
    pub k_floor: u32,
    pub d_psi_initial: u32,
    pub d_psi_max: u32,
    pub sign_trials: u64,
    pub rotation_trials: u64,
    /// At most this many probes enter the surrogate fit.
    pub fit_point_cap: usize,
    /// At most this many samples serve as packing candidates.
    pub candidate_cap: usize,
}

impl BuildConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            budget: 50,
            defect_target: None,
            epsilon_energy: 1e-4,
            k_floor: 16,
            d_psi_initial: 6,
            d_psi_max: 12,
            sign_trials: 256,
            rotation_trials: 64,
            fit_point_cap: 4096,
            candidate_cap: 100_000,
        }
    }
}

/// Borrowed inputs of a construction run.
#[derive(Clone, Copy)]
pub struct StepInput<'a> {
    pub map: &'a CoveringMap,
    pub phi: &'a TargetModulus,
    /// Bulk sample carrying the defect and energy measurements.
    pub samples: &'a BoundarySampleSet,
    /// Dense probe set carrying every pointwise check.
    pub probes: &'a BoundarySampleSet,
    /// Candidate cloud for center packings.
    pub candidates: &'a BoundarySampleSet,
    pub config: &'a BuildConfig,
}

/// Why a construction run stopped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StopReason {
    BudgetExhausted,
    DefectTargetReached,
    Stagnated { detail: String },
    ApproximationFailed { detail: String },
}

/// Energy and orthogonality bookkeeping of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub q: u32,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub defect_history: Vec<f64>,
    pub sup_margin_history: Vec<f64>,
    /// Exact squared norm of the full sum.
    pub q_norm_sqr: f64,
    /// Exact squared norms of the blocks.
    pub partial_norms_sqr: Vec<f64>,
    /// Running total of block energies; matches `q_norm_sqr` by
    /// orthogonality.
    pub energy_total: f64,
    /// Worst disagreement between the two energy accountings.
    pub parseval_divergence: f64,
    /// Squared target mass, the ceiling for the energy total.
    pub phi_sq_mass: IntegralEstimate,
    /// Histogram of `|Q|` over the probes: (bin lower edge, count).
    pub modulus_histogram: Vec<(f64, usize)>,
    pub stop: StopReason,
}

/// A finished (possibly early-stopped) construction: state and report are
/// always returned together, whatever the stop reason.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub state: SeriesState,
    pub report: BuildReport,
    pub stop: StopReason,
}

/// Monte Carlo boundary defect `integral (phi - |Q|)^2` of a state.
pub fn defect(
    state: &SeriesState,
    phi: &TargetModulus,
    samples: &BoundarySampleSet,
    map: &CoveringMap,
) -> Result<IntegralEstimate, Error> {
    let values: Vec<Complex64> = samples
        .points()
        .iter()
        .map(|p| {
            let image = map.apply(p);
            let margin = phi.eval_image(&image) - state.q_sum.eval_ball(&image).norm();
            Complex64::new(margin * margin, 0.0)
        })
        .collect();
    integrate_values(&values, samples)
}

enum BasisFn {
    Diag(MultiIndex),
    Re(MultiIndex, MultiIndex),
    Im(MultiIndex, MultiIndex),
}

fn surrogate_basis(degree: u32) -> Vec<BasisFn> {
    let mut indices: Vec<MultiIndex> = Vec::new();
    for total in 0..=degree {
        for a1 in 0..=total {
            indices.push(MultiIndex::new(a1, total - a1));
        }
    }
    let mut basis = Vec::new();
    for (i, &alpha) in indices.iter().enumerate() {
        for &beta in indices.iter().skip(i) {
            if alpha.degree() + beta.degree() > degree {
                continue;
            }
            if alpha == beta {
                basis.push(BasisFn::Diag(alpha));
            } else {
                basis.push(BasisFn::Re(alpha, beta));
                basis.push(BasisFn::Im(alpha, beta));
            }
        }
    }
    basis
}

fn monomial_at(tables: &(Vec<Complex64>, Vec<Complex64>), a: MultiIndex, b: MultiIndex) -> Complex64 {
    let hol = tables.0[a.a1 as usize] * tables.1[a.a2 as usize];
    let anti = (tables.0[b.a1 as usize] * tables.1[b.a2 as usize]).conj();
    hol * anti
}

/// Picks fit points: every probe from the smallest residuals (where the
/// acceptance test is tightest) plus an even stride over the rest.
fn fit_point_selection(values: &[f64], cap: usize) -> Vec<usize> {
    let n = values.len();
    if n <= cap {
        return (0..n).collect();
    }
    let mut by_value: Vec<usize> = (0..n).collect();
    by_value.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let tight = cap / 4;
    let mut chosen: Vec<usize> = by_value[..tight].to_vec();
    let stride = n.div_ceil(cap - tight);
    chosen.extend((0..n).step_by(stride.max(1)));
    chosen.sort_unstable();
    chosen.dedup();
    chosen
}

/// Weighted least-squares fit of a real boundary function by a
/// conjugate-symmetric polynomial of the given total symbol degree. Returns
/// the surrogate and its worst unweighted misfit over the fit points.
fn fit_surrogate(
    images: &[ComplexPoint2],
    values: &[f64],
    weights: &[f64],
    degree: u32,
    fit_cap: usize,
) -> Result<(FPolynomial, f64), Error> {
    let chosen = fit_point_selection(values, fit_cap);
    let basis = surrogate_basis(degree);
    let rows = chosen.len();
    let cols = basis.len();
    if rows < cols {
        return Err(Error::Domain(format!(
            "surrogate fit needs at least {cols} points, got {rows}"
        )));
    }
    // Rows are scaled by the square roots of the weights, turning the normal
    // equations into the weighted objective.
    let mut design = DMatrix::<f64>::zeros(rows, cols);
    for (row, &idx) in chosen.iter().enumerate() {
        let eta = &images[idx];
        let scale = weights[idx].sqrt();
        let max_pow = degree as usize;
        let mut t1 = Vec::with_capacity(max_pow + 1);
        let mut t2 = Vec::with_capacity(max_pow + 1);
        let mut acc = Complex64::new(1.0, 0.0);
        for _ in 0..=max_pow {
            t1.push(acc);
            acc *= eta.z1;
        }
        acc = Complex64::new(1.0, 0.0);
        for _ in 0..=max_pow {
            t2.push(acc);
            acc *= eta.z2;
        }
        let tables = (t1, t2);
        for (col, b) in basis.iter().enumerate() {
            design[(row, col)] = scale
                * match b {
                    BasisFn::Diag(alpha) => monomial_at(&tables, *alpha, *alpha).re,
                    BasisFn::Re(alpha, beta) => 2.0 * monomial_at(&tables, *alpha, *beta).re,
                    BasisFn::Im(alpha, beta) => -2.0 * monomial_at(&tables, *alpha, *beta).im,
                };
        }
    }
    let target = DVector::<f64>::from_iterator(
        rows,
        chosen.iter().map(|&i| values[i] * weights[i].sqrt()),
    );
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &target;
    // Monomials are linearly dependent on the sphere (the coordinate norms
    // sum to 1), so the normal matrix is singular; a relative ridge picks a
    // stable representative without visibly moving the fit.
    let mut ridge = RIDGE_FACTOR * gram.trace() / cols as f64;
    let solution = loop {
        let mut regularized = gram.clone();
        for i in 0..cols {
            regularized[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(regularized) {
            break chol.solve(&rhs);
        }
        ridge *= 100.0;
        if !ridge.is_finite() {
            return Err(Error::NonFinite { context: "surrogate ridge".into() });
        }
    };
    let mut surrogate = FPolynomial::zero();
    for (col, b) in basis.iter().enumerate() {
        let x = solution[col];
        match b {
            BasisFn::Diag(alpha) => {
                surrogate.add_term(*alpha, *alpha, Complex64::new(x, 0.0));
            }
            BasisFn::Re(alpha, beta) => {
                surrogate.add_term(*alpha, *beta, Complex64::new(x, 0.0));
                surrogate.add_term(*beta, *alpha, Complex64::new(x, 0.0));
            }
            BasisFn::Im(alpha, beta) => {
                surrogate.add_term(*alpha, *beta, Complex64::new(0.0, x));
                surrogate.add_term(*beta, *alpha, Complex64::new(0.0, -x));
            }
        }
    }
    let misfit = chosen
        .iter()
        .enumerate()
        .map(|(row, &idx)| {
            let fitted: f64 = (0..cols).map(|c| design[(row, c)] * solution[c]).sum();
            (fitted / weights[idx].sqrt() - values[idx]).abs()
        })
        .fold(0.0f64, f64::max);
    Ok((surrogate, misfit))
}

struct Workspace {
    sample_images: Vec<ComplexPoint2>,
    probe_images: Vec<ComplexPoint2>,
    phi_samples: Vec<f64>,
    phi_probes: Vec<f64>,
}

impl Workspace {
    fn new(input: &StepInput) -> Self {
        let sample_images = input.samples.sphere_images(input.map);
        let probe_images = input.probes.sphere_images(input.map);
        let phi_samples = sample_images.iter().map(|im| input.phi.eval_image(im)).collect();
        let phi_probes = probe_images.iter().map(|im| input.phi.eval_image(im)).collect();
        Self { sample_images, probe_images, phi_samples, phi_probes }
    }
}

struct StepOutcome {
    p: FPolynomial,
    record: StepRecord,
    sample_q: Vec<Complex64>,
    probe_q: Vec<Complex64>,
}

#[allow(clippy::too_many_arguments)]
fn step_with_caches(
    li: &mut LISet,
    input: &StepInput,
    step_index: usize,
    ws: &Workspace,
    sample_q: &[Complex64],
    probe_q: &[Complex64],
) -> Result<StepOutcome, Error> {
    let cfg = input.config;
    let map = input.map;

    let psi_probes: Vec<f64> = ws
        .phi_probes
        .iter()
        .zip(probe_q.iter())
        .map(|(phi, q)| phi - q.norm())
        .collect();
    let (mut psi_min, mut psi_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &psi_probes {
        psi_min = psi_min.min(v);
        psi_max = psi_max.max(v);
    }
    if psi_min <= 0.0 {
        return Err(Error::Positivity(format!(
            "residual reached {psi_min:.3e} at a probe; the target must dominate the partial sum"
        )));
    }

    let psi_samples: Vec<f64> = ws
        .phi_samples
        .iter()
        .zip(sample_q.iter())
        .map(|(phi, q)| phi - q.norm())
        .collect();
    let defect_before = {
        let sq: Vec<Complex64> =
            psi_samples.iter().map(|v| Complex64::new(v * v, 0.0)).collect();
        integrate_values(&sq, input.samples)?.real()
    };

    // A constant residual needs no surrogate; anything else climbs the
    // degree ladder until the pointwise check passes.
    let ladder: Vec<u32> = if (psi_max - psi_min) <= 1e-12 * psi_max.abs() {
        vec![0]
    } else {
        let mut l: Vec<u32> = (cfg.d_psi_initial..=cfg.d_psi_max).step_by(3).collect();
        if l.is_empty() {
            l.push(cfg.d_psi_max);
        } else if *l.last().unwrap() < cfg.d_psi_max {
            l.push(cfg.d_psi_max);
        }
        l
    };

    let candidates = if input.candidates.len() > cfg.candidate_cap {
        input.candidates.truncated(cfg.candidate_cap)
    } else {
        input.candidates.clone()
    };

    let mu = EmpiricalMeasure::new(
        input.probes.points().to_vec(),
        psi_probes.iter().map(|v| input.probes.weight() * v * v).collect(),
    )?;

    let mut last_failure = String::new();
    for (attempt, &d) in ladder.iter().enumerate() {
        let block = li.next_block_from(2 * d + 1, cfg.k_floor)?;
        let k = block[d as usize];
        let r = 1.0 / f64::from(k).sqrt();
        let packing = greedy_packing(&candidates, r, map)?;
        let step_seed = crate::derive_seed(
            cfg.seed,
            0x5354_4550u64 ^ ((step_index as u64) << 16) ^ attempt as u64,
        );
        let (certificate, q_rot) = adapt_to_measure(
            &packing,
            k,
            &mu,
            input.probes,
            step_seed,
            cfg.sign_trials,
            cfg.rotation_trials,
            map,
        )?;
        let w = normalize_to_w(&certificate, &q_rot);
        let w_vals: Vec<Complex64> =
            ws.probe_images.iter().map(|im| w.eval_ball(im)).collect();

        let (surrogate, fit_residual) = if d == 0 {
            let mean = psi_probes.iter().sum::<f64>() / psi_probes.len() as f64;
            (FPolynomial::constant(Complex64::new(mean, 0.0)), psi_max - psi_min)
        } else {
            // A misfit at probe i enters the acceptance test scaled by
            // |W(eta_i)| / psi_i, so that is the fitting weight (with a floor
            // so sparsely-covered probes keep some say).
            let w_sup = w_vals.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            let weights: Vec<f64> = w_vals
                .iter()
                .zip(psi_probes.iter())
                .map(|(wv, psi)| ((wv.norm() + 0.05 * w_sup) / psi).powi(2))
                .collect();
            fit_surrogate(&ws.probe_images, &psi_probes, &weights, d, cfg.fit_point_cap)?
        };

        let correction = w.multiply(&surrogate)?.szego_project(map);
        let mut margin: f64 = 0.0;
        for (i, im) in ws.probe_images.iter().enumerate() {
            let f_val = correction.eval_ball(im);
            let err = (f_val - w_vals[i] * psi_probes[i]).norm();
            margin = margin.max(err / (CORRECTION_ALLOWANCE * psi_probes[i]));
        }
        if margin >= 1.0 {
            last_failure = format!(
                "surrogate degree {d}: worst pointwise error reached {margin:.3} of allowance"
            );
            continue;
        }

        let p = correction.scale(Complex64::new(CORRECTION_SCALE, 0.0));

        // Acceptance implies the ceiling: |P| < psi pointwise on probes.
        let mut new_probe_q = probe_q.to_vec();
        let mut min_margin = f64::INFINITY;
        let mut ceiling_ok = true;
        for (i, im) in ws.probe_images.iter().enumerate() {
            let p_val = p.eval_ball(im);
            if p_val.norm() >= psi_probes[i] {
                ceiling_ok = false;
                break;
            }
            new_probe_q[i] += p_val;
            min_margin = min_margin.min(ws.phi_probes[i] - new_probe_q[i].norm());
        }
        if !ceiling_ok {
            last_failure =
                format!("surrogate degree {d}: correction modulus reached the residual");
            continue;
        }

        let p_norm_sqr = p.norm_sqr(map);
        let energy_ratio = p_norm_sqr / defect_before;
        if energy_ratio < cfg.epsilon_energy {
            return Err(Error::Stagnation(format!(
                "step {step_index} claimed energy ratio {energy_ratio:.3e}, floor is {:.3e}",
                cfg.epsilon_energy
            )));
        }

        let mut new_sample_q = sample_q.to_vec();
        for (i, im) in ws.sample_images.iter().enumerate() {
            new_sample_q[i] += p.eval_ball(im);
        }
        let defect_after = {
            let sq: Vec<Complex64> = ws
                .phi_samples
                .iter()
                .zip(new_sample_q.iter())
                .map(|(phi, q)| {
                    let m = phi - q.norm();
                    Complex64::new(m * m, 0.0)
                })
                .collect();
            integrate_values(&sq, input.samples)?.real()
        };

        let degrees: Vec<u32> = p
            .holomorphic_degrees()
            .expect("projected correction is holomorphic")
            .into_iter()
            .collect();
        let record = StepRecord {
            index: step_index,
            k,
            block,
            degrees,
            surrogate_degree: d,
            fit_residual,
            correction_margin: margin,
            p_norm_sqr,
            energy_ratio,
            defect_after,
            min_margin_after: min_margin,
            certificate,
        };
        return Ok(StepOutcome { p, record, sample_q: new_sample_q, probe_q: new_probe_q });
    }
    Err(Error::Approximation(format!(
        "step {step_index} exhausted surrogate degrees up to {}: {last_failure}",
        cfg.d_psi_max
    )))
}

/// Runs one construction step against the given state.
///
/// Degree blocks consumed by failed attempts stay consumed, which keeps every
/// returned correction orthogonal to all earlier ones no matter how many
/// retries happened in between.
pub fn generating_step(
    state: &SeriesState,
    li: &mut LISet,
    input: &StepInput,
) -> Result<(FPolynomial, StepRecord), Error> {
    let ws = Workspace::new(input);
    let sample_q: Vec<Complex64> =
        ws.sample_images.iter().map(|im| state.q_sum.eval_ball(im)).collect();
    let probe_q: Vec<Complex64> =
        ws.probe_images.iter().map(|im| state.q_sum.eval_ball(im)).collect();
    let outcome =
        step_with_caches(li, input, state.step_count() + 1, &ws, &sample_q, &probe_q)?;
    Ok((outcome.p, outcome.record))
}

fn modulus_histogram(probe_q: &[Complex64]) -> Vec<(f64, usize)> {
    const BINS: usize = 50;
    let max_modulus = probe_q.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let hi = max_modulus.max(1.0) * (1.0 + 1e-9);
    let mut bins = vec![0usize; BINS];
    for v in probe_q {
        let idx = ((v.norm() / hi) * BINS as f64).floor() as usize;
        bins[idx.min(BINS - 1)] += 1;
    }
    bins.into_iter()
        .enumerate()
        .map(|(i, count)| (hi * i as f64 / BINS as f64, count))
        .collect()
}

/// Builds the series: steps until the budget, the defect target, or a
/// stagnation/approximation stop. Partial state and a full report are
/// returned for every stop reason; only validation failures error out.
pub fn build_series(li: &mut LISet, input: &StepInput) -> Result<BuildOutcome, Error> {
    let cfg = input.config;
    let map = input.map;
    if input.samples.is_empty() || input.probes.is_empty() || input.candidates.is_empty() {
        return Err(Error::EmptyInput("series construction needs nonempty sample sets".into()));
    }
    let ws = Workspace::new(input);
    let phi_floor = ws
        .phi_probes
        .iter()
        .chain(ws.phi_samples.iter())
        .fold(f64::INFINITY, |acc, &v| acc.min(v));
    if !(phi_floor > 0.0) {
        return Err(Error::Positivity(format!(
            "target modulus reaches {phi_floor:.3e}; it must stay strictly positive"
        )));
    }
    let total_mass = f64::from(map.sheet_count());
    let defect_target = cfg.defect_target.unwrap_or(0.05 * total_mass);
    if !(defect_target > 0.0) {
        return Err(Error::Domain(format!(
            "defect target must be positive, got {defect_target}"
        )));
    }

    let phi_sq_mass = {
        let sq: Vec<Complex64> =
            ws.phi_samples.iter().map(|v| Complex64::new(v * v, 0.0)).collect();
        integrate_values(&sq, input.samples)?
    };

    let mut state = SeriesState::default();
    let zero = Complex64::new(0.0, 0.0);
    let mut sample_q = vec![zero; input.samples.len()];
    let mut probe_q = vec![zero; input.probes.len()];
    state.defect_history.push(phi_sq_mass.real());
    state
        .sup_margin_history
        .push(ws.phi_probes.iter().fold(f64::INFINITY, |acc, &v| acc.min(v)));

    let mut steps: Vec<StepRecord> = Vec::new();
    let mut partial_norms: Vec<f64> = Vec::new();
    let mut energy_total = 0.0f64;
    let mut parseval_divergence = 0.0f64;
    let mut stop: Option<StopReason> = None;

    for step_index in 1..=cfg.budget {
        let outcome = match step_with_caches(li, input, step_index, &ws, &sample_q, &probe_q) {
            Ok(outcome) => outcome,
            Err(Error::Stagnation(detail)) => {
                stop = Some(StopReason::Stagnated { detail });
                break;
            }
            Err(Error::Approximation(detail)) => {
                stop = Some(StopReason::ApproximationFailed { detail });
                break;
            }
            Err(other) => return Err(other),
        };
        let StepOutcome { p, record, sample_q: new_sample_q, probe_q: new_probe_q } = outcome;

        let defect_before = *state.defect_history.last().unwrap();
        if record.defect_after >= defect_before {
            stop = Some(StopReason::Stagnated {
                detail: format!(
                    "step {step_index} left the defect at {:.6e} (was {:.6e})",
                    record.defect_after, defect_before
                ),
            });
            break;
        }
        for d in &record.degrees {
            if state.used_degrees.contains(d) {
                return Err(Error::Degree(format!(
                    "degree {d} assigned twice; blocks must stay disjoint"
                )));
            }
        }

        state.q_sum = state.q_sum.add(&p);
        state.used_degrees.extend(record.degrees.iter().copied());
        state.defect_history.push(record.defect_after);
        state.sup_margin_history.push(record.min_margin_after);
        partial_norms.push(record.p_norm_sqr);
        energy_total += record.p_norm_sqr;
        let q_norm = state.q_sum.norm_sqr(map);
        parseval_divergence = parseval_divergence.max((q_norm - energy_total).abs());
        state.partials.push(p);
        steps.push(record);
        sample_q = new_sample_q;
        probe_q = new_probe_q;

        if *state.defect_history.last().unwrap() <= defect_target {
            stop = Some(StopReason::DefectTargetReached);
            break;
        }
    }
    let stop = stop.unwrap_or(StopReason::BudgetExhausted);

    let report = BuildReport {
        q: map.exponent(),
        seed: cfg.seed,
        steps,
        defect_history: state.defect_history.clone(),
        sup_margin_history: state.sup_margin_history.clone(),
        q_norm_sqr: state.q_sum.norm_sqr(map),
        partial_norms_sqr: partial_norms,
        energy_total,
        parseval_divergence,
        phi_sq_mass,
        modulus_histogram: modulus_histogram(&probe_q),
        stop: stop.clone(),
    };
    Ok(BuildOutcome { state, report, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reservoir_hands_out_disjoint_runs() {
        let mut li = LISet::all();
        for d in 0..10 {
            li.exclude(d);
        }
        assert_eq!(li.next_block(3).unwrap(), vec![10, 11, 12]);
        assert_eq!(li.next_block(3).unwrap(), vec![13, 14, 15]);
        let mut window = LISet::residue_window(100, 50).unwrap();
        assert_eq!(window.next_block(5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(window.next_block_from(5, 48).unwrap(), vec![100, 101, 102, 103, 104]);
        assert!(window.next_block(51).is_err());
    }

    #[test]
    fn reservoir_respects_floor_and_membership() {
        let mut li = LISet::residue_window(10, 4).unwrap();
        // Members are 0..3 mod 10; a block of 3 above 2 starts at 10.
        assert_eq!(li.next_block_from(3, 2).unwrap(), vec![10, 11, 12]);
        assert!(!li.is_member(10));
        assert!(li.is_member(13));
    }

    #[test]
    fn target_modulus_validates_positivity() {
        assert!(TargetModulus::constant(1.0).is_ok());
        assert!(TargetModulus::constant(0.0).is_err());
        assert!(TargetModulus::constant(-2.0).is_err());
    }

    #[test]
    fn surrogate_reproduces_a_polynomial_exactly() {
        // Fit data generated by a known conjugate-symmetric polynomial.
        let map = CoveringMap::new(1).unwrap();
        let samples = BoundarySampleSet::sample(&map, 91, 2000).unwrap();
        let images = samples.sphere_images(&map);
        let truth = FPolynomial::from_terms([
            (MultiIndex::new(0, 0), MultiIndex::new(0, 0), Complex64::new(0.9, 0.0)),
            (MultiIndex::new(1, 0), MultiIndex::new(0, 1), Complex64::new(0.1, 0.05)),
            (MultiIndex::new(0, 1), MultiIndex::new(1, 0), Complex64::new(0.1, -0.05)),
        ]);
        let values: Vec<f64> = images.iter().map(|im| truth.eval_ball(im).re).collect();
        let weights = vec![1.0; values.len()];
        let (surrogate, misfit) = fit_surrogate(&images, &values, &weights, 2, 2000).unwrap();
        assert!(misfit < 1e-6, "misfit {misfit}");
        for im in images.iter().take(50) {
            let got = surrogate.eval_ball(im);
            assert!(got.im.abs() < 1e-9);
            assert_relative_eq!(got.re, truth.eval_ball(im).re, epsilon = 1e-6);
        }
    }

    #[test]
    fn first_step_against_constant_target_is_scaled_block() {
        let map = CoveringMap::new(1).unwrap();
        let samples = BoundarySampleSet::sample(&map, 101, 4000).unwrap();
        let probes = BoundarySampleSet::sample(&map, 102, 1000).unwrap();
        let phi = TargetModulus::constant(1.0).unwrap();
        let mut cfg = BuildConfig::new(7);
        cfg.sign_trials = 32;
        cfg.rotation_trials = 8;
        let input = StepInput {
            map: &map,
            phi: &phi,
            samples: &samples,
            probes: &probes,
            candidates: &samples,
            config: &cfg,
        };
        let state = SeriesState::default();
        let mut li = LISet::all();
        let (p, record) = generating_step(&state, &mut li, &input).unwrap();
        // Constant residual: surrogate degree 0, block of one degree, and the
        // correction is (4/5) W exactly, so its norm is (16/25) ||W||^2.
        assert_eq!(record.surrogate_degree, 0);
        assert_eq!(record.block.len(), 1);
        assert_eq!(record.k, record.block[0]);
        let w_norm = record.certificate.l2_mass.real() / record.certificate.sigma.powi(2);
        assert_relative_eq!(record.p_norm_sqr, 0.64 * w_norm, epsilon = 1e-9);
        assert_eq!(p.homogeneity(), crate::fpoly::Homogeneity::Homogeneous(record.k));
        assert!(record.min_margin_after > 0.0);
        assert!(record.defect_after < 1.0);
    }

    #[test]
    fn build_series_makes_strict_progress() {
        let map = CoveringMap::new(1).unwrap();
        let samples = BoundarySampleSet::sample(&map, 111, 8000).unwrap();
        let probes = BoundarySampleSet::sample(&map, 112, 1500).unwrap();
        let phi = TargetModulus::constant(1.0).unwrap();
        let mut cfg = BuildConfig::new(5);
        cfg.budget = 3;
        cfg.sign_trials = 32;
        cfg.rotation_trials = 8;
        cfg.k_floor = 12;
        let input = StepInput {
            map: &map,
            phi: &phi,
            samples: &samples,
            probes: &probes,
            candidates: &samples,
            config: &cfg,
        };
        let mut li = LISet::all();
        let outcome = build_series(&mut li, &input).unwrap();
        assert!(matches!(outcome.stop, StopReason::BudgetExhausted));
        assert_eq!(outcome.state.partials.len(), 3);
        let d = &outcome.state.defect_history;
        assert_eq!(d.len(), 4);
        assert_eq!(d[0], 1.0);
        for w in d.windows(2) {
            assert!(w[1] < w[0], "defect failed to decrease: {:?}", d);
        }
        assert!(outcome.report.parseval_divergence < 1e-10);
        assert!(outcome.report.energy_total <= outcome.report.phi_sq_mass.real() + 1e-9);
        for margin in &outcome.state.sup_margin_history {
            assert!(*margin > 0.0);
        }
        let bins: usize = outcome.report.modulus_histogram.iter().map(|(_, c)| c).sum();
        assert_eq!(bins, probes.len());
    }

    #[test]
    fn zero_target_is_rejected_up_front() {
        let map = CoveringMap::new(1).unwrap();
        let samples = BoundarySampleSet::sample(&map, 1, 200).unwrap();
        let phi = TargetModulus::from_fn("sign-changing", |im| im.z1.norm_sqr() - 0.5);
        let cfg = BuildConfig::new(1);
        let input = StepInput {
            map: &map,
            phi: &phi,
            samples: &samples,
            probes: &samples,
            candidates: &samples,
            config: &cfg,
        };
        let mut li = LISet::all();
        assert!(matches!(build_series(&mut li, &input), Err(Error::Positivity(_))));
    }
}
