//! Randomized invariants over the model and phase-dynamics layers.

use proptest::prelude::*;
use randjac_core::{
    angle_lift_m, build_maps, find_shared_edges, transfer_matrix, BandEdgeNormalForm,
    CalibrationOptions, DisorderWord, Mat2, ModelEnsemble, PeriodicBlock,
};
use std::f64::consts::PI;

fn block_strategy() -> impl Strategy<Value = PeriodicBlock> {
    (1usize..=3).prop_flat_map(|period| {
        (
            proptest::collection::vec(0.1f64..10.0, period),
            proptest::collection::vec(-10.0f64..10.0, period),
        )
            .prop_map(|(t, v)| PeriodicBlock::new("R", t, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_matrices_are_unimodular(block in block_strategy(), energy in -20.0f64..20.0) {
        let t = transfer_matrix(&block, energy);
        let tol = 1e-12 * (1.0 + t.max_norm() * t.max_norm());
        prop_assert!((t.det() - 1.0).abs() < tol);
    }

    #[test]
    fn word_transfer_is_the_ordered_block_product(
        a in block_strategy(),
        mut b in block_strategy(),
        indices in proptest::collection::vec(0u32..2, 1..6),
        energy in -5.0f64..5.0,
    ) {
        // equal periods within an ensemble
        let period = a.period();
        b = PeriodicBlock::new(
            "B",
            b.hoppings.iter().cycle().take(period).cloned().collect(),
            b.potentials.iter().cycle().take(period).cloned().collect(),
        ).unwrap();
        let ens = ModelEnsemble::new(vec![a.clone(), b.clone()], vec![0.5, 0.5]).unwrap();
        let word = DisorderWord { seed: 0, indices: indices.clone() };
        let got = randjac_core::word_transfer_matrix(&ens, &word, energy);
        let mut expect = Mat2::IDENTITY;
        for &i in &indices {
            expect = transfer_matrix(&ens.blocks[i as usize], energy).mul(&expect);
        }
        let tol = 1e-9 * (1.0 + expect.max_norm());
        prop_assert!(expect.sub(&got).max_norm() < tol);
    }

    #[test]
    fn angle_lift_is_monotone_and_equivariant(
        a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0,
        theta in -4.0f64..4.0, delta in 1e-4f64..1.0,
    ) {
        let m = Mat2::new(a, b, c, d);
        prop_assume!(m.det().abs() > 1e-3);
        let sign = m.det().signum();
        let x = angle_lift_m(&m, theta).unwrap();
        let y = angle_lift_m(&m, theta + delta).unwrap();
        prop_assert!(sign * (y - x) > 0.0, "not monotone: {x} -> {y}");
        let shifted = angle_lift_m(&m, theta + PI).unwrap();
        prop_assert!((shifted - x - sign * PI).abs() < 1e-10);
    }
}

proptest! {
    // Map construction is comparatively heavy; fewer cases suffice.
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn phase_shifts_are_monotone_circle_lifts(
        eps_frac in -0.95f64..0.95,
        theta in -2.0f64..2.0,
        delta in 1e-3f64..3.0,
    ) {
        let ens = ModelEnsemble::new(
            vec![PeriodicBlock::laplacian(), PeriodicBlock::shifted_laplacian("BV", 0.5)],
            vec![0.8, 0.2],
        ).unwrap();
        let report = find_shared_edges(&ens, 1e-8).unwrap();
        let edge = report.qualified.iter().find(|e| (e.energy + 2.0).abs() < 1e-9).unwrap();
        let nf = BandEdgeNormalForm::new(&ens, &report.spectra, edge, &CalibrationOptions::default()).unwrap();
        let maps = build_maps(&nf, &ens, &report.spectra, eps_frac * nf.epsilon0()).unwrap();
        prop_assume!(delta < PI);
        for map in &maps {
            let x = map.eval(theta);
            let y = map.eval(theta + delta);
            prop_assert!(y > x, "not increasing");
            prop_assert!(y - x < PI, "jumps by more than a period");
            prop_assert!((map.eval(theta + PI) - x - PI).abs() < 1e-10);
        }
    }
}
