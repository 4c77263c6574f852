//! Acceptance suite: one test per criterion, full-scale budgets.
//!
//! Criteria 5–8 share Monte Carlo scans through lazy fixtures so the whole
//! suite stays minutes-scale on a single core. Every test prints one
//! PASS line with its measured numbers (visible with `--nocapture`).

use randjac_core::lifshitz::{
    critical_interval, critical_interval_violations, theorem_bounds, verify_bounds, BoundReport,
    VerifyBudget,
};
use randjac_core::normal_form::CalibrationOptions;
use randjac_core::spectral::{BlockSpectrum, EdgeSide};
use randjac_core::{
    build_maps, count_fixed_points, delta_ids_empirical, find_shared_edges, lifshitz_exponent,
    rotation_ids, BandEdgeNormalForm, ClosedFormShift, ModelEnsemble, PeriodicBlock,
};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;
use std::time::Instant;

struct EdgeFixture {
    ensemble: ModelEnsemble,
    spectra: Vec<BlockSpectrum>,
    nf: BandEdgeNormalForm,
}

fn make_fixture(p: [f64; 2]) -> EdgeFixture {
    let ensemble = ModelEnsemble::new(
        vec![
            PeriodicBlock::laplacian(),
            PeriodicBlock::shifted_laplacian("BV", 0.5),
        ],
        p.to_vec(),
    )
    .unwrap();
    let report = find_shared_edges(&ensemble, 1e-8).unwrap();
    let edge = report
        .qualified
        .iter()
        .find(|e| (e.energy + 2.0).abs() < 1e-9)
        .expect("bottom edge qualifies")
        .clone();
    let nf = BandEdgeNormalForm::new(
        &ensemble,
        &report.spectra,
        &edge,
        &CalibrationOptions::default(),
    )
    .unwrap();
    EdgeFixture {
        ensemble,
        spectra: report.spectra,
        nf,
    }
}

fn reference() -> &'static EdgeFixture {
    static CELL: OnceLock<EdgeFixture> = OnceLock::new();
    CELL.get_or_init(|| make_fixture([0.8, 0.2]))
}

fn reference_half() -> &'static EdgeFixture {
    static CELL: OnceLock<EdgeFixture> = OnceLock::new();
    CELL.get_or_init(|| make_fixture([0.5, 0.5]))
}

/// Blocks per replica so the expected rotation count reaches `target`,
/// taking the upper envelope as the δN proxy.
fn budget_m(fix: &EdgeFixture, epsilon: f64, target: f64, cap: u64) -> u64 {
    let nu = fix.nf.edge().block_index;
    let tb = theorem_bounds(
        &fix.spectra[nu],
        fix.nf.edge(),
        fix.ensemble.probabilities[nu],
        epsilon,
    );
    let period = fix.ensemble.period() as f64;
    let m = (target / (period * tb.upper_envelope)).ceil();
    (m as u64).clamp(1_000_000, cap)
}

/// Criterion-5 measurements (reference ensemble, literal grid), shared
/// between criteria 5 and 6.
fn criterion5_reports() -> &'static Vec<BoundReport> {
    static CELL: OnceLock<Vec<BoundReport>> = OnceLock::new();
    CELL.get_or_init(|| {
        let fix = reference();
        let budget = VerifyBudget {
            blocks_m: 10_000_000,
            replicas: 8,
            seed: 2026,
        };
        verify_bounds(
            &fix.ensemble,
            &fix.spectra,
            &fix.nf,
            &[0.02, 0.05, 0.1, 0.15],
            &budget,
        )
        .unwrap()
    })
}

/// Geometric tail scan of the p = 0.8 ensemble, shared between criteria
/// 7 and 8. The literal criterion-5 grid spans only a factor ≈ 26 in δN,
/// mathematically short of the 10² sweep the uniformity check needs, so
/// the wider default geometric grid is used here.
fn geometric_scan_08() -> &'static Vec<BoundReport> {
    static CELL: OnceLock<Vec<BoundReport>> = OnceLock::new();
    CELL.get_or_init(|| {
        let fix = reference();
        let grid: Vec<f64> = (0..7)
            .map(|i| 0.005 * (0.135_f64 / 0.005).powf(i as f64 / 6.0))
            .collect();
        grid.iter()
            .map(|&eps| {
                let budget = VerifyBudget {
                    blocks_m: budget_m(fix, eps, 60.0, 20_000_000),
                    replicas: 8,
                    seed: 2027,
                };
                verify_bounds(&fix.ensemble, &fix.spectra, &fix.nf, &[eps], &budget)
                    .unwrap()
                    .remove(0)
            })
            .collect()
    })
}

fn geometric_scan_05() -> &'static Vec<BoundReport> {
    static CELL: OnceLock<Vec<BoundReport>> = OnceLock::new();
    CELL.get_or_init(|| {
        let fix = reference_half();
        let grid: Vec<f64> = (0..5)
            .map(|i| 0.03 * (0.15_f64 / 0.03).powf(i as f64 / 4.0))
            .collect();
        grid.iter()
            .map(|&eps| {
                let budget = VerifyBudget {
                    blocks_m: budget_m(fix, eps, 60.0, 20_000_000),
                    replicas: 8,
                    seed: 2028,
                };
                verify_bounds(&fix.ensemble, &fix.spectra, &fix.nf, &[eps], &budget)
                    .unwrap()
                    .remove(0)
            })
            .collect()
    })
}

#[test]
fn criterion_01_periodic_ids_closed_form() {
    let start = Instant::now();
    let spectrum = BlockSpectrum::new(PeriodicBlock::laplacian()).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let e = -2.0 + 4.0 * (i as f64 + 0.5) / 1000.0;
        let exact = (-e / 2.0).acos() / PI;
        worst = worst.max((spectrum.ids(e) - exact).abs());
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-10, "max |ids - arccos| = {worst:.3e}");
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion 1: PASS — max closed-form deviation {worst:.3e} over 10³ points in {:.3}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_02_normal_form_exactness() {
    // 5 seeded random ensembles, 100 ε points each, residual ≤ 1e-10.
    let mut worst = 0.0_f64;
    for seed in 0..5u64 {
        let block = random_block(seed);
        let ens = ModelEnsemble::trivial(block.clone());
        let report = find_shared_edges(&ens, 1e-8).unwrap();
        let edge = report.qualified[0].clone();
        let nf = BandEdgeNormalForm::new(
            &ens,
            &report.spectra,
            &edge,
            &CalibrationOptions::default(),
        )
        .unwrap();
        let e0 = nf.epsilon0();
        for i in 0..100 {
            let eps = -e0 + 2.0 * e0 * i as f64 / 99.0;
            worst = worst.max(nf.conjugacy_residual(eps));
        }
    }
    assert!(worst <= 1e-10, "max residual {worst:.3e}");

    // κ_ε = ε for the Laplacian bottom edge, to 1e-12.
    let fix = reference();
    let mut worst_kappa = 0.0_f64;
    for i in 0..100 {
        let eps = -0.2 + 0.4 * i as f64 / 99.0;
        worst_kappa = worst_kappa.max((fix.nf.kappa(eps) - eps).abs());
    }
    assert!(worst_kappa <= 1e-12, "max |kappa - eps| = {worst_kappa:.3e}");
    println!(
        "criterion 2: PASS — residual ≤ {worst:.3e} over 5 ensembles × 100 ε, |κ-ε| ≤ {worst_kappa:.3e}"
    );
}

fn random_block(seed: u64) -> PeriodicBlock {
    // Small LCG; block parameters only need variety, not quality.
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(97);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let period = 1 + (seed % 2) as usize;
    let hoppings = (0..period).map(|_| 0.5 + 1.5 * next()).collect();
    let potentials = (0..period).map(|_| -1.0 + 2.0 * next()).collect();
    PeriodicBlock::new(format!("R{seed}"), hoppings, potentials).unwrap()
}

#[test]
fn criterion_03_phase_map_oracle() {
    let fix = reference();
    let e0 = fix.nf.epsilon0();
    let mut worst = 0.0_f64;
    for i in 0..20 {
        let eps = -e0 + 2.0 * e0 * (i as f64 + 0.5) / 20.0;
        let maps = build_maps(&fix.nf, &fix.ensemble, &fix.spectra, eps).unwrap();
        let cf = ClosedFormShift::new(&fix.nf, eps).unwrap();
        for j in 0..10_000 {
            let theta = -FRAC_PI_2 + PI * j as f64 / 10_000.0;
            worst = worst.max((maps[0].eval(theta) - cf.eval(theta)).abs());
        }
    }
    assert!(worst <= 1e-9, "max |closed form - matrix| = {worst:.3e}");

    let mut counts = Vec::new();
    for (eps, expected) in [(0.08, 0usize), (0.0, 1), (-0.08, 2)] {
        let maps = build_maps(&fix.nf, &fix.ensemble, &fix.spectra, eps).unwrap();
        let count = count_fixed_points(|t| maps[0].eval(t), 8192, 1e-9);
        assert_eq!(
            count,
            expected,
            "kappa = {} should give {expected} fixed points",
            fix.nf.kappa(eps)
        );
        counts.push(count);
    }
    println!(
        "criterion 3: PASS — oracle deviation ≤ {worst:.3e} on 10⁴×20 grid; fixed points {counts:?} for κ>0/κ=0/κ<0"
    );
}

#[test]
fn criterion_04_trivial_ensemble_consistency() {
    let start = Instant::now();
    let ens = ModelEnsemble::trivial(PeriodicBlock::laplacian());
    let report = find_shared_edges(&ens, 1e-8).unwrap();
    let edge = report
        .qualified
        .iter()
        .find(|e| e.side == EdgeSide::Lower)
        .unwrap()
        .clone();
    let nf = BandEdgeNormalForm::new(
        &ens,
        &report.spectra,
        &edge,
        &CalibrationOptions::default(),
    )
    .unwrap();
    let m = 1_000_000u64;
    let eps = 0.1;
    let est = rotation_ids(&ens, &report.spectra, &nf, eps, m, 8, 2030).unwrap();
    let est2 = rotation_ids(&ens, &report.spectra, &nf, eps, m, 8, 2030).unwrap();
    assert_eq!(est.value.to_bits(), est2.value.to_bits(), "not deterministic");
    let exact = report.spectra[0].delta_ids(&edge, eps);
    let err = (est.value - exact).abs();
    assert!(err <= 2.0 / m as f64, "|rotation - periodic| = {err:.3e}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 4: PASS — |δN_rot - δN_ν| = {err:.3e} ≤ 2/m at m = 10⁶, {:.2}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_05_method_cross_validation() {
    let fix = reference();
    let reports = criterion5_reports();
    let mut lines = Vec::new();
    for r in reports.iter() {
        let emp = delta_ids_empirical(
            &fix.ensemble,
            fix.nf.edge(),
            r.epsilon,
            1_000_000,
            16,
            2031,
        )
        .unwrap();
        let sigma = (r.measured.std_error.powi(2) + emp.std_error.powi(2)).sqrt();
        let diff = (r.measured.value - emp.value).abs();
        assert!(
            diff <= 3.0 * sigma,
            "eps {}: rotation {} ± {} vs sturm {} ± {} (diff {diff:.3e} > 3σ)",
            r.epsilon,
            r.measured.value,
            r.measured.std_error,
            emp.value,
            emp.std_error
        );
        lines.push(format!(
            "eps {:.2}: |Δ| = {:.2e} ≤ 3σ = {:.2e}",
            r.epsilon,
            diff,
            3.0 * sigma
        ));
    }
    println!("criterion 5: PASS — {}", lines.join("; "));
}

#[test]
fn criterion_06_theorem_lower_bound() {
    let reports = criterion5_reports();
    for r in reports.iter() {
        assert!(
            r.pass_lower,
            "lower bound fails at eps {} (measured {} + 3σ < {})",
            r.epsilon, r.measured.value, r.lower_bound
        );
    }
    let fix = reference_half();
    let mut halves = Vec::new();
    for &eps in &[0.05, 0.1, 0.15] {
        let budget = VerifyBudget {
            blocks_m: budget_m(fix, eps, 60.0, 20_000_000),
            replicas: 8,
            seed: 2032,
        };
        let r = verify_bounds(&fix.ensemble, &fix.spectra, &fix.nf, &[eps], &budget)
            .unwrap()
            .remove(0);
        assert!(
            r.pass_lower,
            "p = 0.5 lower bound fails at eps {eps} (measured {} < {})",
            r.measured.value, r.lower_bound
        );
        halves.push(format!(
            "eps {:.2}: {:.2e} ≥ {:.2e}",
            eps, r.measured.value, r.lower_bound
        ));
    }
    println!(
        "criterion 6: PASS — p=0.8 grid all pass_lower; p=0.5: {}",
        halves.join("; ")
    );
}

#[test]
fn criterion_07_theorem_upper_bound_uniformity() {
    for (name, reports, ) in [
        ("p=0.8 geometric", geometric_scan_08()),
        ("p=0.5 geometric", geometric_scan_05()),
    ] {
        let ratios: Vec<f64> = reports.iter().map(|r| r.ratio_upper).collect();
        assert!(
            ratios.iter().all(|x| x.is_finite() && *x > 0.0),
            "{name}: non-finite ratio"
        );
        let ratio_max = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let ratio_min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let values: Vec<f64> = reports.iter().map(|r| r.measured.value).collect();
        let span = values.iter().cloned().fold(0.0_f64, f64::max)
            / values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            span >= 100.0,
            "{name}: δN spans only a factor {span:.1}, need ≥ 10²"
        );
        assert!(
            ratio_max / ratio_min < 10.0,
            "{name}: ratio spread {:.2} ≥ 10 (C not uniform)",
            ratio_max / ratio_min
        );
        println!(
            "criterion 7: PASS ({name}) — δN span {span:.0}×, ratio ∈ [{ratio_min:.2}, {ratio_max:.2}], spread {:.2}",
            ratio_max / ratio_min
        );
    }
}

#[test]
fn criterion_08_lifshitz_exponent() {
    // Synthetic curve with a known square-root tail.
    let c = 3.0;
    let synthetic: Vec<(f64, f64)> = (0..30)
        .map(|i| {
            let eps = 1e-4 * (1e-1_f64 / 1e-4).powf(i as f64 / 29.0);
            (eps, (-c / eps.sqrt()).exp())
        })
        .collect();
    let slope = lifshitz_exponent(&synthetic).unwrap();
    assert!(
        (slope - 0.5).abs() <= 0.02,
        "synthetic slope {slope} not 0.5 ± 0.02"
    );

    // Measured curve of the p = 0.8 ensemble.
    let curve: Vec<(f64, f64)> = geometric_scan_08()
        .iter()
        .map(|r| (r.epsilon, r.measured.value))
        .collect();
    let measured = lifshitz_exponent(&curve).unwrap();
    assert!(
        (0.35..=0.65).contains(&measured),
        "measured slope {measured} outside [0.35, 0.65]"
    );
    println!(
        "criterion 8: PASS — synthetic slope {slope:.4}, measured slope {measured:.4} ∈ [0.35, 0.65]"
    );
}

#[test]
fn criterion_09_proof_constant_diagnostics() {
    let fix = reference();
    let ci = critical_interval(&fix.ensemble, &fix.spectra, &fix.nf, fix.nf.epsilon0(), 512)
        .unwrap();
    assert!(ci.a > 0.0, "a = {}", ci.a);
    assert!(ci.m_steps > 0 && ci.m_steps < 1_000_000, "M = {}", ci.m_steps);
    // 10³-point re-verification grid: 40 θ × 25 ε.
    let violations =
        critical_interval_violations(&ci, &fix.ensemble, &fix.spectra, &fix.nf, 40, 25).unwrap();
    assert_eq!(violations, 0, "{violations} grid violations");
    println!(
        "criterion 9: PASS — a = {:.6}, M = {}, 0 violations on the 10³-point grid",
        ci.a, ci.m_steps
    );
}

#[test]
fn criterion_10_deterministic_verify_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("model.json");
    std::fs::write(
        &model_path,
        r#"{"blocks": [{"label": "B0", "t": [1.0], "v": [0.0]},
                       {"label": "BV", "t": [1.0], "v": [0.5]}],
            "p": [0.8, 0.2]}"#,
    )
    .unwrap();
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_randjac"))
            .args([
                "verify",
                "--model",
                model_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--edge",
                "B0:lower",
                "--eps-grid",
                "0.05,0.1,0.15",
                "--m",
                "100000",
                "--replicas",
                "8",
                "--seed",
                "77",
            ])
            .output()
            .unwrap();
        assert!(output.status.success(), "{output:?}");
        let text = std::fs::read_to_string(out_dir.join("verify.csv")).unwrap();
        // strip the timestamp comment line
        text.split_once('\n').unwrap().1.to_string()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b, "verify.csv bodies differ between identical seeds");
    println!(
        "criterion 10: PASS — repeated cmd_verify runs are byte-identical ({} bytes of CSV body)",
        a.len()
    );
}
