//! The five subcommands. Each writes its report files into the output
//! directory, seals a manifest, and maps failures to the exit-code contract.

use serde::Serialize;

use innerfn_core::covering::{sphere_distance, ComplexPoint2, CoveringMap};
use innerfn_core::derive_seed;
use innerfn_core::measure::{
    cap_measure, integrate_values, pulled_back_monomial_integral_f64, sample_sphere,
    BoundarySampleSet, MultiIndex,
};
use innerfn_core::oracle1d::{blaschke_eval, singular_eval, BlaschkeSpec, SingularSpec};
use innerfn_core::packing::{
    doubling_report, greedy_packing, shell_histogram, verify_cover, CoverCheck, DoublingReport,
    PackingResult,
};
use innerfn_core::rw::{
    normalize_to_w, search_signs, shell_sigma_constant, shell_sigma_with_cutoff, RwCertificate,
};
use innerfn_core::series::{
    build_series, BuildConfig, BuildReport, LISet, StepInput, StopReason, TargetModulus,
};
use innerfn_core::{Complex64, FPolynomial};

use crate::config::RunConfig;
use crate::report::{IdentityCheck, OutputSet};
use crate::CmdError;

// Stream tags for the independent random draws of one run.
const TAG_SAMPLES: u64 = 0x5341_4D50;
const TAG_PROBES: u64 = 0x5052_4F42;
const TAG_SPHERE: u64 = 0x5350_4852;
const TAG_SIGNS: u64 = 0x5349_474E;
const TAG_DOUBLING: u64 = 0x4442_4C47;

/// Family-wise statistical gate: wide enough that ~100 simultaneous
/// identities accept with overwhelming probability, tight enough to catch a
/// wrong constant immediately.
const Z_GATE: f64 = 4.5;

fn monomial_value(im: &ComplexPoint2, idx: MultiIndex) -> Complex64 {
    im.z1.powu(idx.a1) * im.z2.powu(idx.a2)
}

fn multi_indices_up_to(degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a1 in 0..=total {
            out.push(MultiIndex::new(a1, total - a1));
        }
    }
    out
}

pub fn cmd_verify_integrals(config: &RunConfig, mut out: OutputSet) -> Result<(), CmdError> {
    let map = CoveringMap::new(config.q)?;
    let seed = config.seed();
    let samples =
        BoundarySampleSet::sample(&map, derive_seed(seed, TAG_SAMPLES), config.sample_count)?;
    let images = samples.sphere_images(&map);
    let mass = f64::from(map.sheet_count());
    let mut checks: Vec<IdentityCheck> = Vec::new();

    let total = integrate_values(&vec![Complex64::new(1.0, 0.0); images.len()], &samples)?;
    checks.push(IdentityCheck::exact(
        "total boundary mass equals the sheet count",
        mass,
        total.real(),
        1e-12,
    ));

    for &alpha in &multi_indices_up_to(3) {
        for &beta in &multi_indices_up_to(3) {
            let expected =
                Complex64::new(pulled_back_monomial_integral_f64(&map, alpha, beta), 0.0);
            let values: Vec<Complex64> = images
                .iter()
                .map(|im| monomial_value(im, alpha) * monomial_value(im, beta).conj())
                .collect();
            let estimate = integrate_values(&values, &samples)?;
            checks.push(IdentityCheck::statistical(
                format!(
                    "covered moment alpha=({},{}) beta=({},{})",
                    alpha.a1, alpha.a2, beta.a1, beta.a2
                ),
                expected,
                &estimate,
                Z_GATE,
            ));
        }
    }

    // The pushforward identity: integrating g of the covering image over the
    // boundary agrees with the sheet count times a direct spherical draw.
    {
        let g = |im: &ComplexPoint2| im.z2.norm_sqr().powi(2);
        let covered = integrate_values(
            &images.iter().map(|im| Complex64::new(g(im), 0.0)).collect::<Vec<_>>(),
            &samples,
        )?;
        let direct_points = sample_sphere(derive_seed(seed, TAG_SPHERE), config.sample_count);
        let direct_mean =
            direct_points.iter().map(&g).sum::<f64>() / direct_points.len() as f64;
        // Crude direct-side error: population spread over the square root of
        // the draw count.
        let direct_var = direct_points
            .iter()
            .map(|p| (g(p) - direct_mean).powi(2))
            .sum::<f64>()
            / (direct_points.len().saturating_sub(1).max(1)) as f64;
        let direct = mass * direct_mean;
        let direct_se = mass * (direct_var / direct_points.len() as f64).sqrt();
        let combined_se = (covered.std_error.powi(2) + direct_se.powi(2)).sqrt();
        let diff = (covered.real() - direct).abs();
        checks.push(IdentityCheck {
            name: "pushforward of |eta2|^4 agrees with a direct spherical draw".into(),
            expected_re: direct,
            expected_im: 0.0,
            estimate_re: covered.real(),
            estimate_im: covered.value.im,
            std_error: combined_se,
            rule: format!("|difference| <= {Z_GATE} combined std errors"),
            passed: diff <= Z_GATE * combined_se + 1e-12,
        });
    }

    // Ball-mass law: the pulled-back mass of a boundary ball of radius delta
    // is delta^2 per sheet.
    let pole = &images[0];
    for tenths in 1..=9u32 {
        let delta = f64::from(tenths) / 10.0;
        let expected = mass * cap_measure(delta)?;
        let values: Vec<Complex64> = images
            .iter()
            .map(|im| {
                if sphere_distance(pole, im) < delta {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let estimate = integrate_values(&values, &samples)?;
        checks.push(IdentityCheck::statistical(
            format!("boundary ball mass at radius {delta}"),
            Complex64::new(expected, 0.0),
            &estimate,
            Z_GATE,
        ));
    }

    let failed: Vec<&str> =
        checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    #[derive(Serialize)]
    struct Report<'a> {
        q: u32,
        seed: u64,
        sample_count: usize,
        z_gate: f64,
        identity_count: usize,
        all_passed: bool,
        identities: &'a [IdentityCheck],
    }
    out.write_json(
        "verify_integrals.json",
        &Report {
            q: config.q,
            seed,
            sample_count: config.sample_count,
            z_gate: Z_GATE,
            identity_count: checks.len(),
            all_passed: failed.is_empty(),
            identities: &checks,
        },
    )?;
    out.seal(config)?;
    if failed.is_empty() {
        println!("verify-integrals: {} identities, all passed", checks.len());
        Ok(())
    } else {
        Err(CmdError::Invariant(format!(
            "{} of {} identities failed: {}",
            failed.len(),
            checks.len(),
            failed.join("; ")
        )))
    }
}

pub fn cmd_pack(config: &RunConfig, mut out: OutputSet) -> Result<(), CmdError> {
    let map = CoveringMap::new(config.q)?;
    let seed = config.seed();
    let r = 1.0 / f64::from(config.k).sqrt();
    let candidates =
        BoundarySampleSet::sample(&map, derive_seed(seed, TAG_SAMPLES), config.sample_count)?;
    let packing = greedy_packing(&candidates, r, &map)?;
    let cover = verify_cover(&packing, &candidates, &map);

    // Shell counts around candidate probes; the histogram call also
    // re-verifies the pairwise separation exactly.
    let probe_count = 100.min(candidates.len());
    let stride = (candidates.len() / probe_count).max(1);
    let mut worst_shell_ratio: f64 = 0.0;
    for i in 0..probe_count {
        let probe = &candidates.points()[i * stride];
        let shells = shell_histogram(&packing, probe, &map)?;
        for (m, &count) in shells.iter().enumerate() {
            let bound = ((m as f64) + 2.0).powi(2);
            worst_shell_ratio = worst_shell_ratio.max(count as f64 / bound);
        }
    }
    let shells_ok = worst_shell_ratio <= 1.0;

    let doubling: Option<DoublingReport> = if 2.0 * r <= 1.0 {
        Some(doubling_report(&candidates, &map, r, 30, 4000, derive_seed(seed, TAG_DOUBLING))?)
    } else {
        None
    };

    let mass = f64::from(map.sheet_count());
    let lower_bound = mass * f64::from(config.k) / 4.0;
    let bound_ok = packing.center_count() as f64 >= lower_bound - 1e-9;

    #[derive(Serialize)]
    struct Report<'a> {
        q: u32,
        seed: u64,
        k: u32,
        r: f64,
        center_count: usize,
        center_lower_bound: f64,
        bound_passed: bool,
        cover: CoverCheck,
        shell_probe_count: usize,
        worst_shell_ratio: f64,
        shells_passed: bool,
        doubling: &'a Option<DoublingReport>,
        packing: &'a PackingResult,
    }
    out.write_json(
        "pack.json",
        &Report {
            q: config.q,
            seed,
            k: config.k,
            r,
            center_count: packing.center_count(),
            center_lower_bound: lower_bound,
            bound_passed: bound_ok,
            cover,
            shell_probe_count: probe_count,
            worst_shell_ratio,
            shells_passed: shells_ok,
            doubling: &doubling,
            packing: &packing,
        },
    )?;
    out.seal(config)?;

    let mut failures = Vec::new();
    if !bound_ok {
        failures.push(format!(
            "center count {} below the lower bound {lower_bound}",
            packing.center_count()
        ));
    }
    if !cover.covered {
        failures.push(format!(
            "candidates not covered at twice the radius (worst gap {})",
            cover.worst_min_distance
        ));
    }
    if !shells_ok {
        failures.push(format!("shell count exceeded its bound (ratio {worst_shell_ratio})"));
    }
    if failures.is_empty() {
        println!(
            "pack: {} centers at separation {r} (bound {lower_bound})",
            packing.center_count()
        );
        Ok(())
    } else {
        Err(CmdError::Invariant(failures.join("; ")))
    }
}

pub fn cmd_rw_search(config: &RunConfig, mut out: OutputSet) -> Result<(), CmdError> {
    let map = CoveringMap::new(config.q)?;
    let seed = config.seed();
    let r = 1.0 / f64::from(config.k).sqrt();
    let candidates =
        BoundarySampleSet::sample(&map, derive_seed(seed, TAG_SAMPLES), config.sample_count)?;
    let probes =
        BoundarySampleSet::sample(&map, derive_seed(seed, TAG_PROBES), config.probe_count)?;
    let packing = greedy_packing(&candidates, r, &map)?;
    let (certificate, block) = search_signs(
        &packing,
        config.k,
        &probes,
        derive_seed(seed, TAG_SIGNS),
        config.sign_trials,
        &map,
    )?;
    let normalized = normalize_to_w(&certificate, &block);

    let mass = f64::from(map.sheet_count());
    let mean_floor =
        packing.center_count() as f64 * mass / (1.0 + f64::from(config.k));
    let mean_exact =
        (certificate.l2_mean - mean_floor).abs() <= 1e-10 * mean_floor.max(1.0);
    let l2_ok = certificate.l2_mass.real() >= certificate.l2_mean - 1e-9;
    let sup_ok = certificate.sup_bound_check <= 1.0 + 1e-12;
    let sigma_drift =
        (shell_sigma_with_cutoff(1e-10) - shell_sigma_with_cutoff(1e-14)).abs();
    let sigma_ok = sigma_drift <= 1e-10;

    #[derive(Serialize)]
    struct Report<'a> {
        q: u32,
        seed: u64,
        k: u32,
        r: f64,
        center_count: usize,
        sigma: f64,
        sigma_tail_drift: f64,
        sigma_stable: bool,
        sign_mean_floor: f64,
        mean_matches_closed_form: bool,
        mass_at_or_above_mean: bool,
        sup_bounded_by_one: bool,
        certificate: &'a RwCertificate,
        normalized_block: &'a FPolynomial,
    }
    out.write_json(
        "rw_search.json",
        &Report {
            q: config.q,
            seed,
            k: config.k,
            r,
            center_count: packing.center_count(),
            sigma: shell_sigma_constant(),
            sigma_tail_drift: sigma_drift,
            sigma_stable: sigma_ok,
            sign_mean_floor: mean_floor,
            mean_matches_closed_form: mean_exact,
            mass_at_or_above_mean: l2_ok,
            sup_bounded_by_one: sup_ok,
            certificate: &certificate,
            normalized_block: &normalized,
        },
    )?;
    out.seal(config)?;

    let mut failures = Vec::new();
    if !mean_exact {
        failures.push(format!(
            "sign-average mass {} drifted from its closed form {mean_floor}",
            certificate.l2_mean
        ));
    }
    if !l2_ok {
        failures.push("selected mass fell below the sign-average floor".into());
    }
    if !sup_ok {
        failures.push(format!(
            "normalized block exceeded 1 on a probe ({})",
            certificate.sup_bound_check
        ));
    }
    if !sigma_ok {
        failures.push(format!("normalizer unstable across tail cutoffs ({sigma_drift})"));
    }
    if failures.is_empty() {
        println!(
            "rw-search: {} centers, mass {:.6} >= floor {:.6}, sup check {:.6}",
            packing.center_count(),
            certificate.l2_mass.real(),
            mean_floor,
            certificate.sup_bound_check
        );
        Ok(())
    } else {
        Err(CmdError::Invariant(failures.join("; ")))
    }
}

fn write_build_files(
    out: &mut OutputSet,
    report: &BuildReport,
) -> Result<(), CmdError> {
    out.write_json("build_report.json", report)?;

    let mut steps = String::from(
        "step,k,degrees,surrogate_degree,p_norm_sqr,defect_after,min_margin,energy_ratio\n",
    );
    for s in &report.steps {
        let degrees: Vec<String> = s.degrees.iter().map(|d| d.to_string()).collect();
        steps.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.index,
            s.k,
            degrees.join(" "),
            s.surrogate_degree,
            s.p_norm_sqr,
            s.defect_after,
            s.min_margin_after,
            s.energy_ratio,
        ));
    }
    out.write_text("build_steps.csv", &steps)?;

    let mut hist = String::from("modulus_bin_lower,count\n");
    for (lower, count) in &report.modulus_histogram {
        hist.push_str(&format!("{lower},{count}\n"));
    }
    out.write_text("build_histogram.csv", &hist)?;
    Ok(())
}

pub fn cmd_build_inner(config: &RunConfig, mut out: OutputSet) -> Result<(), CmdError> {
    let map = CoveringMap::new(config.q)?;
    let seed = config.seed();
    let samples =
        BoundarySampleSet::sample(&map, derive_seed(seed, TAG_SAMPLES), config.sample_count)?;
    let probes =
        BoundarySampleSet::sample(&map, derive_seed(seed, TAG_PROBES), config.probe_count)?;
    let phi = TargetModulus::constant(1.0)?;

    let mut build = BuildConfig::new(seed);
    build.budget = config.budget;
    build.defect_target = config.defect_target;
    build.epsilon_energy = config.epsilon_energy;
    build.k_floor = config.k;
    build.d_psi_max = config.d_psi_max;
    build.d_psi_initial = build.d_psi_initial.min(config.d_psi_max);
    build.sign_trials = config.sign_trials;
    build.rotation_trials = config.rotation_trials;

    let input = StepInput {
        map: &map,
        phi: &phi,
        samples: &samples,
        probes: &probes,
        candidates: &samples,
        config: &build,
    };
    let mut li = LISet::all();
    let outcome = build_series(&mut li, &input)?;

    write_build_files(&mut out, &outcome.report)?;
    out.seal(config)?;

    // Post-run invariants, independent of how the run stopped.
    let d = &outcome.report.defect_history;
    for w in d.windows(2) {
        if !(w[1] < w[0]) {
            return Err(CmdError::Invariant(format!(
                "defect failed to decrease: {} then {}",
                w[0], w[1]
            )));
        }
    }
    let scale = outcome.report.q_norm_sqr.max(1.0);
    if outcome.report.parseval_divergence > 1e-10 * scale {
        return Err(CmdError::Invariant(format!(
            "energy ledger diverged by {}",
            outcome.report.parseval_divergence
        )));
    }
    for margin in &outcome.report.sup_margin_history {
        if !(*margin > 0.0) {
            return Err(CmdError::Invariant(format!(
                "partial sum touched the target (margin {margin})"
            )));
        }
    }

    match &outcome.stop {
        StopReason::Stagnated { detail } => Err(CmdError::Stagnation(detail.clone())),
        StopReason::ApproximationFailed { detail } => {
            Err(CmdError::Stagnation(format!("projection accuracy stalled: {detail}")))
        }
        StopReason::BudgetExhausted | StopReason::DefectTargetReached => {
            println!(
                "build-inner: {} steps, defect {} -> {}",
                outcome.report.steps.len(),
                d.first().unwrap(),
                d.last().unwrap()
            );
            Ok(())
        }
    }
}

pub fn cmd_oracle_1d(config: &RunConfig, mut out: OutputSet) -> Result<(), CmdError> {
    let seed = config.seed();
    // Deterministic zero layout: moduli sweep an annulus, phases wind once.
    let zero_count = 8usize;
    let zeros: Vec<Complex64> = (0..zero_count)
        .map(|j| {
            let t = j as f64 / zero_count as f64;
            let modulus = 0.15 + 0.6 * t;
            let angle = std::f64::consts::TAU * t + (seed % 7) as f64;
            Complex64::from_polar(modulus, angle)
        })
        .collect();
    let blaschke = BlaschkeSpec { zeros: zeros.clone(), vanishing_order: 2, phase: 0.7 };
    blaschke.validate()?;

    let circle_points = 1000usize;
    let mut worst_boundary = 0.0f64;
    for t in 0..circle_points {
        let z = Complex64::from_polar(1.0, std::f64::consts::TAU * t as f64 / circle_points as f64);
        let v = blaschke_eval(&blaschke, z)?;
        worst_boundary = worst_boundary.max((v.norm() - 1.0).abs());
    }
    let boundary_ok = worst_boundary <= 1e-12;

    let mut worst_interior = 0.0f64;
    for t in 0..200 {
        let radius = 0.99 * t as f64 / 200.0;
        let angle = 2.399_963_229_728_653 * t as f64;
        let v = blaschke_eval(&blaschke, Complex64::from_polar(radius, angle))?;
        worst_interior = worst_interior.max(v.norm());
    }
    let contractive_ok = worst_interior <= 1.0;

    let mut worst_zero = 0.0f64;
    for zero in &zeros {
        worst_zero = worst_zero.max(blaschke_eval(&blaschke, *zero)?.norm());
    }
    let zeros_ok = worst_zero <= 1e-12;

    let singular = SingularSpec { atoms: vec![(1.0, 0.5), (4.0, 0.25)] };
    singular.validate()?;
    let radius = 1.0 - 1e-8;
    // Exclusion gap sized so the kernel tail m (1-r^2) / |atom - z|^2 stays
    // below the radial tolerance.
    let exclusion_gap = 0.2;
    let mut worst_radial = 0.0f64;
    for t in 0..100 {
        let angle = std::f64::consts::TAU * t as f64 / 100.0;
        let away = singular
            .atoms
            .iter()
            .all(|(atom, _)| {
                let mut gap = (angle - atom).abs() % std::f64::consts::TAU;
                gap = gap.min(std::f64::consts::TAU - gap);
                gap > exclusion_gap
            });
        if !away {
            continue;
        }
        let v = singular_eval(&singular, Complex64::from_polar(radius, angle))?;
        worst_radial = worst_radial.max((v.norm() - 1.0).abs());
    }
    let radial_ok = worst_radial <= 1e-6;
    let at_atom = singular_eval(&singular, Complex64::from_polar(radius, 1.0))?.norm();
    let atom_ok = at_atom < 0.5;

    #[derive(Serialize)]
    struct Report<'a> {
        seed: u64,
        blaschke: &'a BlaschkeSpec,
        circle_points: usize,
        worst_boundary_modulus_deviation: f64,
        boundary_passed: bool,
        worst_interior_modulus: f64,
        contractive_passed: bool,
        worst_modulus_at_zeros: f64,
        zeros_passed: bool,
        singular: &'a SingularSpec,
        radial_radius: f64,
        atom_exclusion_gap: f64,
        worst_radial_deviation: f64,
        radial_passed: bool,
        modulus_at_atom: f64,
        atom_collapse_passed: bool,
    }
    out.write_json(
        "oracle_1d.json",
        &Report {
            seed,
            blaschke: &blaschke,
            circle_points,
            worst_boundary_modulus_deviation: worst_boundary,
            boundary_passed: boundary_ok,
            worst_interior_modulus: worst_interior,
            contractive_passed: contractive_ok,
            worst_modulus_at_zeros: worst_zero,
            zeros_passed: zeros_ok,
            singular: &singular,
            radial_radius: radius,
            atom_exclusion_gap: exclusion_gap,
            worst_radial_deviation: worst_radial,
            radial_passed: radial_ok,
            modulus_at_atom: at_atom,
            atom_collapse_passed: atom_ok,
        },
    )?;
    out.seal(config)?;

    if boundary_ok && contractive_ok && zeros_ok && radial_ok && atom_ok {
        println!(
            "oracle-1d: boundary deviation {worst_boundary:.2e}, radial deviation {worst_radial:.2e}"
        );
        Ok(())
    } else {
        Err(CmdError::Invariant(format!(
            "disc-model checks failed: boundary {worst_boundary:.3e}, interior {worst_interior}, \
             zeros {worst_zero:.3e}, radial {worst_radial:.3e}, atom {at_atom:.3e}"
        )))
    }
}
