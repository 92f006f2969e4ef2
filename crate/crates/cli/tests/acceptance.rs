//! Acceptance gates for the whole workspace: one test per criterion, each
//! printing a single pass/fail line (visible with `--nocapture`).

use std::time::{Duration, Instant};

use innerfn_core::covering::{sphere_distance, ComplexPoint2, CoveringMap};
use innerfn_core::derive_seed;
use innerfn_core::fpoly::FPolynomial;
use innerfn_core::measure::{
    cap_measure, integrate_values, pulled_back_monomial_integral_f64, BoundarySampleSet,
    MultiIndex,
};
use innerfn_core::oracle1d::{blaschke_eval, singular_eval, BlaschkeSpec, SingularSpec};
use innerfn_core::packing::{greedy_packing, shell_histogram, verify_cover};
use innerfn_core::rw::{
    build_q, enumerate_signs, search_signs, shell_sigma_constant, shell_sigma_with_cutoff,
};
use innerfn_core::series::{build_series, BuildConfig, LISet, StepInput, StopReason, TargetModulus};
use innerfn_core::Complex64;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frozen suite seed: statistical gates are exact reruns, not fresh draws.
const SUITE_SEED: u64 = 9;

fn gate(number: u32, name: &str, failures: &[String]) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {number:02} ({name}): {verdict}");
    assert!(
        failures.is_empty(),
        "criterion {number} ({name}) failed:\n{}",
        failures.join("\n")
    );
}

fn indices_up_to(degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a1 in 0..=total {
            out.push(MultiIndex::new(a1, total - a1));
        }
    }
    out
}

fn power_tables(images: &[ComplexPoint2], max_pow: usize) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
    images
        .iter()
        .map(|im| {
            let mut t1 = Vec::with_capacity(max_pow + 1);
            let mut t2 = Vec::with_capacity(max_pow + 1);
            let mut acc = Complex64::new(1.0, 0.0);
            for _ in 0..=max_pow {
                t1.push(acc);
                acc *= im.z1;
            }
            acc = Complex64::new(1.0, 0.0);
            for _ in 0..=max_pow {
                t2.push(acc);
                acc *= im.z2;
            }
            (t1, t2)
        })
        .collect()
}

#[test]
fn criterion_01_covered_moments_match_exact_values() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let idx = indices_up_to(4);
    for q in [1u32, 2, 3] {
        let map = CoveringMap::new(q).unwrap();
        let samples =
            BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, u64::from(q)), 200_000)
                .unwrap();
        let images = samples.sphere_images(&map);
        let tables = power_tables(&images, 4);
        for &alpha in &idx {
            for &beta in &idx {
                let expected =
                    Complex64::new(pulled_back_monomial_integral_f64(&map, alpha, beta), 0.0);
                let values: Vec<Complex64> = tables
                    .iter()
                    .map(|(t1, t2)| {
                        t1[alpha.a1 as usize]
                            * t2[alpha.a2 as usize]
                            * (t1[beta.a1 as usize] * t2[beta.a2 as usize]).conj()
                    })
                    .collect();
                let est = integrate_values(&values, &samples).unwrap();
                let dev = (est.value - expected).norm();
                if dev > 3.0 * est.std_error + 1e-12 {
                    failures.push(format!(
                        "q={q} alpha=({},{}) beta=({},{}): dev {dev:.3e} > 3 x {:.3e}",
                        alpha.a1, alpha.a2, beta.a1, beta.a2, est.std_error
                    ));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        failures.push(format!("runtime {elapsed:?} exceeded 60 s"));
    }
    gate(1, "covered moments, 675 identities at 3 std errors", &failures);
}

#[test]
fn criterion_02_ball_mass_law() {
    let mut failures = Vec::new();
    let map = CoveringMap::new(2).unwrap();
    let samples =
        BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0xCAB), 200_000).unwrap();
    let images = samples.sphere_images(&map);
    let pole = images[0];
    let mass = f64::from(map.sheet_count());
    for tenths in 1..=9u32 {
        let delta = f64::from(tenths) / 10.0;
        let expected = Complex64::new(mass * cap_measure(delta).unwrap(), 0.0);
        let values: Vec<Complex64> = images
            .iter()
            .map(|im| {
                if sphere_distance(&pole, im) < delta {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let est = integrate_values(&values, &samples).unwrap();
        let dev = (est.value - expected).norm();
        if dev > 3.0 * est.std_error + 1e-12 {
            failures.push(format!(
                "delta={delta}: dev {dev:.3e} > 3 x {:.3e}",
                est.std_error
            ));
        }
    }
    gate(2, "boundary ball mass is delta^2 per sheet", &failures);
}

#[test]
fn criterion_03_kernel_power_norm() {
    let mut failures = Vec::new();
    let map = CoveringMap::new(2).unwrap();
    let mass = f64::from(map.sheet_count());
    for i in 0..20u64 {
        let one_point =
            BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0x0300 + i), 1).unwrap();
        let packing = greedy_packing(&one_point, 2.0, &map).unwrap();
        for k in 1..=10u32 {
            let q_poly = build_q(&packing, &[1], k, &map).unwrap();
            let exact = q_poly.norm_sqr(&map);
            let expected = mass / (1.0 + f64::from(k));
            if (exact - expected).abs() > 1e-10 {
                failures.push(format!(
                    "omega {i}, k={k}: exact {exact} vs {expected}"
                ));
            }
        }
    }
    gate(3, "kernel power mass N/(1+k), 20 points x 10 degrees", &failures);
}

#[test]
fn criterion_04_exhaustive_sign_average() {
    let mut failures = Vec::new();
    let map = CoveringMap::new(2).unwrap();
    let k = 8u32;
    let candidates =
        BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0x0400), 5_000).unwrap();
    let probes =
        BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0x0401), 2_000).unwrap();
    let packing = greedy_packing(&candidates, 0.5, &map).unwrap();
    let count = packing.center_count();
    if count == 0 || count > 10 {
        failures.push(format!("packing produced {count} centers, wanted 1..=10"));
    } else {
        let mass = f64::from(map.sheet_count());
        let expected_mean = count as f64 * mass / (1.0 + f64::from(k));
        let (mean, _, best_l2) = enumerate_signs(&packing, k, &map).unwrap();
        if (mean - expected_mean).abs() > 1e-10 {
            failures.push(format!(
                "exhaustive average {mean} vs closed form {expected_mean}"
            ));
        }
        if best_l2 + 1e-12 < expected_mean {
            failures.push(format!("best mass {best_l2} below the average {expected_mean}"));
        }
        let (certificate, _) = search_signs(
            &packing,
            k,
            &probes,
            derive_seed(SUITE_SEED, 0x0402),
            8,
            &map,
        )
        .unwrap();
        if certificate.l2_mass.real() + 1e-10 < expected_mean {
            failures.push(format!(
                "certificate mass {} below the sign-average floor {expected_mean}",
                certificate.l2_mass.real()
            ));
        }
    }
    gate(4, "sign average KN/(1+k) over all 2^K patterns", &failures);
}

#[test]
fn criterion_05_packing_bound_and_shells() {
    let mut failures = Vec::new();
    let map = CoveringMap::new(2).unwrap();
    let k = 8u32;
    let r = 1.0 / f64::from(k).sqrt();
    let candidates =
        BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0x0500), 100_000).unwrap();
    let packing = greedy_packing(&candidates, r, &map).unwrap();

    let needed = f64::from(map.sheet_count()) * f64::from(k) / 4.0;
    if (packing.center_count() as f64) < needed {
        failures.push(format!(
            "{} centers, lower bound {needed}",
            packing.center_count()
        ));
    }

    let images = packing.center_images(&map);
    for i in 0..images.len() {
        for j in (i + 1)..images.len() {
            let d = sphere_distance(&images[i], &images[j]);
            if d < r - 1e-9 {
                failures.push(format!("centers {i},{j} at distance {d} < {r}"));
            }
        }
    }

    let cover = verify_cover(&packing, &candidates, &map);
    if !cover.covered {
        failures.push(format!(
            "cover gap {} exceeds 2r = {}",
            cover.worst_min_distance,
            2.0 * r
        ));
    }

    for p in 0..100 {
        let probe = &candidates.points()[p * 997];
        let shells = shell_histogram(&packing, probe, &map).unwrap();
        for (m, &count) in shells.iter().enumerate() {
            let bound = ((m as f64) + 2.0).powi(2);
            if count as f64 > bound {
                failures.push(format!(
                    "probe {p}: shell {m} holds {count} > {bound}"
                ));
            }
        }
    }
    gate(5, "packing count, separation, cover, shell growth", &failures);
}

#[test]
fn criterion_06_normalized_block_sup() {
    let mut failures = Vec::new();
    let map = CoveringMap::new(2).unwrap();
    let probes =
        BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0x0600), 10_000).unwrap();
    let candidates =
        BoundarySampleSet::sample(&map, derive_seed(SUITE_SEED, 0x0601), 30_000).unwrap();
    for k in [4u32, 8, 16] {
        let r = 1.0 / f64::from(k).sqrt();
        let packing = greedy_packing(&candidates, r, &map).unwrap();
        let (certificate, _) = search_signs(
            &packing,
            k,
            &probes,
            derive_seed(SUITE_SEED, 0x0602 + u64::from(k)),
            16,
            &map,
        )
        .unwrap();
        if certificate.sup_bound_check > 1.0 {
            failures.push(format!(
                "k={k}: normalized sup {} exceeds 1",
                certificate.sup_bound_check
            ));
        }
    }
    let frozen = 11.914_125_619_840_14;
    if (shell_sigma_constant() - frozen).abs() > 1e-9 {
        failures.push(format!(
            "normalizer {} drifted from its frozen value {frozen}",
            shell_sigma_constant()
        ));
    }
    let drift = (shell_sigma_with_cutoff(1e-10) - shell_sigma_with_cutoff(1e-14)).abs();
    if drift > 1e-10 {
        failures.push(format!("normalizer tail drift {drift} exceeds 1e-10"));
    }
    gate(6, "sup of normalized blocks at k in {4,8,16}", &failures);
}

#[test]
fn criterion_07_projection_oracle() {
    let mut failures = Vec::new();
    let map = CoveringMap::new(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SUITE_SEED, 0x0700));
    let idx5 = indices_up_to(5);

    for case in 0..1000 {
        let mut p = FPolynomial::zero();
        for _ in 0..4 {
            let a = idx5[rng.gen_range(0..idx5.len())];
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            p.add_term(a, MultiIndex::new(0, 0), c);
        }
        let projected = p.szego_project(&map);
        let mut worst = 0.0f64;
        for (&(a, b), &c) in p.terms() {
            worst = worst.max((projected.coefficient(a, b) - c).norm());
        }
        for (&(a, b), &c) in projected.terms() {
            worst = worst.max((p.coefficient(a, b) - c).norm());
        }
        if worst > 1e-12 {
            failures.push(format!("case {case}: holomorphic reproduction off by {worst:.3e}"));
        }
    }

    for b in indices_up_to(5).into_iter().filter(|b| b.degree() > 0) {
        let mut p = FPolynomial::zero();
        p.add_term(MultiIndex::new(0, 0), b, Complex64::new(1.0, 0.0));
        let projected = p.szego_project(&map);
        if projected.terms().count() != 0 {
            failures.push(format!(
                "conjugate monomial ({},{}) survived projection",
                b.a1, b.a2
            ));
        }
    }

    // Degree law: a single mixed term projects onto degree |a| - |b|, or to
    // nothing when the holomorphic part cannot absorb the conjugate part.
    for case in 0..1000 {
        let a = MultiIndex::new(rng.gen_range(0..8), rng.gen_range(0..8));
        let b = MultiIndex::new(rng.gen_range(0..4), rng.gen_range(0..4));
        let mut p = FPolynomial::zero();
        p.add_term(a, b, Complex64::new(1.0, 0.0));
        let projected = p.szego_project(&map);
        let absorbable = a.a1 >= b.a1 && a.a2 >= b.a2;
        if !absorbable {
            if projected.terms().count() != 0 {
                failures.push(format!("case {case}: unabsorbable term survived"));
            }
            continue;
        }
        let t = i64::from(a.degree()) - i64::from(b.degree());
        for (&(ga, gb), _) in projected.terms() {
            if gb.degree() != 0 || i64::from(ga.degree()) != t {
                failures.push(format!(
                    "case {case}: projected degree {} vs shift law {t}",
                    ga.degree()
                ));
            }
        }
    }
    gate(7, "projection reproduces, annihilates, shifts degrees", &failures);
}

#[test]
fn criterion_08_series_build_ten_steps() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for q in [1u32, 2] {
        let map = CoveringMap::new(q).unwrap();
        let seed = derive_seed(SUITE_SEED, 0x0800 + u64::from(q));
        let samples =
            BoundarySampleSet::sample(&map, derive_seed(seed, 1), 200_000).unwrap();
        let probes = BoundarySampleSet::sample(&map, derive_seed(seed, 2), 10_000).unwrap();
        let phi = TargetModulus::constant(1.0).unwrap();
        let mut cfg = BuildConfig::new(seed);
        cfg.budget = 10;
        cfg.k_floor = 8;
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
        if !matches!(outcome.stop, StopReason::BudgetExhausted) {
            failures.push(format!("q={q}: stopped early: {:?}", outcome.stop));
        }
        if outcome.state.partials.len() != 10 {
            failures.push(format!("q={q}: {} steps accepted", outcome.state.partials.len()));
        }
        for w in outcome.state.defect_history.windows(2) {
            if !(w[1] < w[0]) {
                failures.push(format!("q={q}: defect {} then {}", w[0], w[1]));
            }
        }
        let scale = outcome.report.q_norm_sqr.max(1.0);
        if outcome.report.parseval_divergence > 1e-10 * scale {
            failures.push(format!(
                "q={q}: energy ledgers diverge by {}",
                outcome.report.parseval_divergence
            ));
        }
        for (step, margin) in outcome.state.sup_margin_history.iter().enumerate() {
            if !(*margin > 0.0) {
                failures.push(format!("q={q}: step {step} margin {margin}"));
            }
        }
        let budget_mass = outcome.report.phi_sq_mass;
        if outcome.report.energy_total
            > budget_mass.real() + 3.0 * budget_mass.std_error
        {
            failures.push(format!(
                "q={q}: block energy {} above the target mass {}",
                outcome.report.energy_total,
                budget_mass.real()
            ));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(600) {
        failures.push(format!("runtime {elapsed:?} exceeded 10 minutes"));
    }
    gate(8, "ten-step series builds at q=1 and q=2", &failures);
}

#[test]
fn criterion_09_disc_oracles() {
    let mut failures = Vec::new();
    let zeros: Vec<Complex64> = (0..8)
        .map(|j| {
            let t = j as f64 / 8.0;
            Complex64::from_polar(0.15 + 0.6 * t, std::f64::consts::TAU * t + 0.37)
        })
        .collect();
    let blaschke = BlaschkeSpec { zeros, vanishing_order: 1, phase: 1.1 };
    let mut worst = 0.0f64;
    for t in 0..1000 {
        let z = Complex64::from_polar(1.0, std::f64::consts::TAU * t as f64 / 1000.0);
        worst = worst.max((blaschke_eval(&blaschke, z).unwrap().norm() - 1.0).abs());
    }
    if worst > 1e-12 {
        failures.push(format!("boundary modulus deviation {worst:.3e} exceeds 1e-12"));
    }

    let singular = SingularSpec { atoms: vec![(1.0, 0.5), (4.0, 0.25)] };
    let radius = 1.0 - 1e-8;
    let mut worst_radial = 0.0f64;
    for t in 0..100 {
        let angle = std::f64::consts::TAU * t as f64 / 100.0;
        let away = singular.atoms.iter().all(|(atom, _)| {
            let mut gap = (angle - atom).abs() % std::f64::consts::TAU;
            gap = gap.min(std::f64::consts::TAU - gap);
            gap > 0.2
        });
        if away {
            let v = singular_eval(&singular, Complex64::from_polar(radius, angle)).unwrap();
            worst_radial = worst_radial.max((v.norm() - 1.0).abs());
        }
    }
    if worst_radial > 1e-6 {
        failures.push(format!("radial modulus deviation {worst_radial:.3e} exceeds 1e-6"));
    }
    gate(9, "disc factor moduli at the boundary and near atoms", &failures);
}

#[test]
fn criterion_10_byte_identical_reruns() {
    let mut failures = Vec::new();
    let binary = env!("CARGO_BIN_EXE_innerfn");
    let commands: [&[&str]; 5] = [
        &["verify-integrals"],
        &["pack"],
        &["rw-search"],
        &["build-inner", "--budget", "2"],
        &["oracle-1d"],
    ];
    for args in commands {
        let mut dirs = Vec::new();
        for run in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let status = std::process::Command::new(binary)
                .args(args)
                .args([
                    "--seed",
                    "1234",
                    "--q",
                    "2",
                    "--sample-count",
                    "20000",
                    "--probe-count",
                    "2000",
                    "--out",
                ])
                .arg(dir.path())
                .stdout(std::process::Stdio::null())
                .stderr(std::process::Stdio::null())
                .status()
                .unwrap();
            if !status.success() {
                failures.push(format!("{args:?} run {run} exited with {status}"));
            }
            dirs.push(dir);
        }
        let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        if names.is_empty() {
            failures.push(format!("{args:?} wrote no files"));
        }
        for name in names {
            let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
            let b = dirs[1].path().join(&name);
            let b = std::fs::read(&b).unwrap_or_default();
            if a != b {
                failures.push(format!("{args:?}: {name} differs between reruns"));
            }
        }
    }
    gate(10, "reruns reproduce every output byte", &failures);
}
