//! Monte Carlo estimators of the integrated density of states.
//!
//! Two independent routes measure `δN(ε)` at a band edge:
//!
//! - **rotation**: the mean rotation number of the composed phase-shift
//!   dynamics, `δN = (1/Lπ) lim (1/m) E[S^m(θ)]`, sampled over i.i.d.
//!   disorder words;
//! - **sturm**: eigenvalue counting on finite tridiagonal truncations via
//!   the LDLᵀ sign-count recurrence, with replica-paired differencing so
//!   realization noise cancels in `δN`.
//!
//! Replicas run on independent seed-derived ChaCha streams and are reduced
//! in replica order with compensated summation, so results are identical
//! for any worker count.

use crate::model::{replica_rng, BlockSampler, DisorderWord, ModelEnsemble, GENERATOR_VERSION};
use crate::normal_form::BandEdgeNormalForm;
use crate::prufer::{build_maps, free_prufer_final, LiftState, PruferError};
use crate::spectral::{BandEdge, BlockSpectrum, EdgeSide};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("{got} replicas requested; the replica error model needs at least 8")]
    TooFewReplicas { got: u32 },
    #[error("epsilon = {epsilon} must satisfy 0 < epsilon <= {epsilon0}")]
    InvalidEpsilon { epsilon: f64, epsilon0: f64 },
    #[error("{sites} sites is not a multiple of the period {period}")]
    SitesNotMultipleOfPeriod { sites: usize, period: usize },
    #[error(transparent)]
    Prufer(#[from] PruferError),
}

/// Estimation route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rotation,
    Sturm,
}

/// A `δN` (or IDS) measurement with its replica statistics.
#[derive(Debug, Clone, Serialize)]
pub struct IdsEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    /// Blocks per replica (rotation) or sites per replica (sturm).
    #[serde(rename = "m")]
    pub iterations: u64,
    pub replicas: u32,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub generator: &'static str,
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
    pub fn value(&self) -> f64 {
        self.sum
    }
}

fn kahan_mean(values: &[f64]) -> f64 {
    let mut acc = KahanSum::default();
    for &v in values {
        acc.add(v);
    }
    acc.value() / values.len() as f64
}

fn replica_estimate(
    values: Vec<f64>,
    method: Method,
    iterations: u64,
    seed: u64,
    warnings: Vec<String>,
) -> IdsEstimate {
    let replicas = values.len() as u32;
    let mean = kahan_mean(&values);
    let mut var = KahanSum::default();
    for &v in &values {
        var.add((v - mean) * (v - mean));
    }
    let std_error = (var.value() / (replicas as f64 - 1.0)).sqrt() / (replicas as f64).sqrt();
    IdsEstimate {
        value: mean,
        std_error,
        method,
        iterations,
        replicas,
        seed,
        warnings,
        generator: GENERATOR_VERSION,
    }
}

/// Fewer completed rotations than this in any replica triggers a budget
/// warning on the estimate.
pub const ROTATION_BUDGET: f64 = 10.0;

/// `δN(ε)` via the mean rotation number of the phase-shift dynamics.
///
/// `epsilon > 0` measures into the spectrum from the edge; the edge side
/// fixes the sign of the underlying energy offset. Deterministic for fixed
/// `(seed, parameters)`.
pub fn rotation_ids(
    ensemble: &ModelEnsemble,
    spectra: &[BlockSpectrum],
    nf: &BandEdgeNormalForm,
    epsilon: f64,
    blocks_m: u64,
    replicas: u32,
    seed: u64,
) -> Result<IdsEstimate, EstimatorError> {
    if epsilon.is_nan() || epsilon <= 0.0 || epsilon > nf.epsilon0() {
        return Err(EstimatorError::InvalidEpsilon {
            epsilon,
            epsilon0: nf.epsilon0(),
        });
    }
    let raw = match nf.edge().side {
        EdgeSide::Lower => epsilon,
        EdgeSide::Upper => -epsilon,
    };
    rotation_ids_signed(ensemble, spectra, nf, raw, blocks_m, replicas, seed)
}

/// Rotation estimate at a signed energy offset (negative = gap side).
pub(crate) fn rotation_ids_signed(
    ensemble: &ModelEnsemble,
    spectra: &[BlockSpectrum],
    nf: &BandEdgeNormalForm,
    raw_epsilon: f64,
    blocks_m: u64,
    replicas: u32,
    seed: u64,
) -> Result<IdsEstimate, EstimatorError> {
    if replicas < 8 {
        return Err(EstimatorError::TooFewReplicas { got: replicas });
    }
    let maps = build_maps(nf, ensemble, spectra, raw_epsilon)?;
    let period = ensemble.period() as f64;
    let advances: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let sampler = BlockSampler::new(ensemble);
            let mut rng = replica_rng(seed, r as u64);
            let start = LiftState::new(0.0);
            let mut state = start;
            for _ in 0..blocks_m {
                let idx = sampler.sample(&mut rng);
                state.apply(&maps[idx as usize]);
            }
            state.advance_since(&start)
        })
        .collect();

    let mut warnings = Vec::new();
    for (r, &adv) in advances.iter().enumerate() {
        let rotations = adv / PI;
        if rotations < ROTATION_BUDGET {
            warnings.push(format!(
                "budget: replica {r} completed {rotations:.2} rotations, below {ROTATION_BUDGET}"
            ));
        }
    }
    let values: Vec<f64> = advances
        .iter()
        .map(|&adv| adv / (period * PI * blocks_m as f64))
        .collect();
    Ok(replica_estimate(
        values,
        Method::Rotation,
        blocks_m,
        seed,
        warnings,
    ))
}

/// Symmetric tridiagonal truncation of a disorder realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    /// `v(1..n)`.
    pub diagonal: Vec<f64>,
    /// Matrix entries `-t(2..n)` coupling consecutive sites.
    pub off_diagonal: Vec<f64>,
}

impl TridiagonalOperator {
    /// Assemble the operator from a word by concatenating its blocks; the
    /// bond into each block's first site carries that block's `t(1)`.
    pub fn from_word(ensemble: &ModelEnsemble, word: &DisorderWord) -> Self {
        let period = ensemble.period();
        let n = word.indices.len() * period;
        let mut diagonal = Vec::with_capacity(n);
        let mut off_diagonal = Vec::with_capacity(n.saturating_sub(1));
        for &idx in &word.indices {
            let block = &ensemble.blocks[idx as usize];
            for k in 0..period {
                if !diagonal.is_empty() {
                    off_diagonal.push(-block.hoppings[k]);
                }
                diagonal.push(block.potentials[k]);
            }
        }
        Self {
            diagonal,
            off_diagonal,
        }
    }

    pub fn size(&self) -> usize {
        self.diagonal.len()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.size();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 {
                self.off_diagonal[i - 1].abs()
            } else {
                0.0
            };
            let right = if i < n - 1 {
                self.off_diagonal[i].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diagonal[i] - left - right);
            hi = hi.max(self.diagonal[i] + left + right);
        }
        (lo, hi)
    }
}

/// Number of eigenvalues strictly below `energy`, by the LDLᵀ sign count.
///
/// Zero pivots are nudged to `±1e-14 · scale`; the number of nudges is
/// reported by [`sturm_count_detailed`].
pub fn sturm_count(op: &TridiagonalOperator, energy: f64) -> usize {
    sturm_count_detailed(op, energy).0
}

pub fn sturm_count_detailed(op: &TridiagonalOperator, energy: f64) -> (usize, usize) {
    let scale = pivot_scale(
        energy,
        op.diagonal.iter().fold(0.0_f64, |m, &v| m.max(v.abs())),
        op.off_diagonal
            .iter()
            .fold(0.0_f64, |m, &t| m.max(t.abs())),
    );
    let mut count = 0;
    let mut perturbed = 0;
    let mut d = 0.0;
    for i in 0..op.size() {
        let mut pivot = if i == 0 {
            op.diagonal[0] - energy
        } else {
            let t = op.off_diagonal[i - 1];
            op.diagonal[i] - energy - t * t / d
        };
        if pivot.abs() < scale {
            perturbed += 1;
            pivot = if pivot < 0.0 { -scale } else { scale };
        }
        if pivot < 0.0 {
            count += 1;
        }
        d = pivot;
    }
    (count, perturbed)
}

fn pivot_scale(energy: f64, v_max: f64, t_max: f64) -> f64 {
    1e-14 * (1.0 + energy.abs() + v_max + t_max * t_max)
}

/// Streaming sign count over the sites of a word, without materializing
/// the operator.
fn sturm_count_stream(
    ensemble: &ModelEnsemble,
    indices: &[u32],
    energy: f64,
) -> (usize, usize) {
    let v_max = ensemble
        .blocks
        .iter()
        .flat_map(|b| b.potentials.iter())
        .fold(0.0_f64, |m, &v| m.max(v.abs()));
    let t_max = ensemble
        .blocks
        .iter()
        .flat_map(|b| b.hoppings.iter())
        .fold(0.0_f64, |m, &t| m.max(t.abs()));
    let scale = pivot_scale(energy, v_max, t_max);
    let mut count = 0;
    let mut perturbed = 0;
    let mut d = 0.0;
    let mut first = true;
    for &idx in indices {
        let block = &ensemble.blocks[idx as usize];
        for k in 0..block.period() {
            let mut pivot = if first {
                first = false;
                block.potentials[k] - energy
            } else {
                let t = block.hoppings[k];
                block.potentials[k] - energy - t * t / d
            };
            if pivot.abs() < scale {
                perturbed += 1;
                pivot = if pivot < 0.0 { -scale } else { scale };
            }
            if pivot < 0.0 {
                count += 1;
            }
            d = pivot;
        }
    }
    (count, perturbed)
}

fn sample_indices(ensemble: &ModelEnsemble, seed: u64, replica: u64, blocks: usize) -> Vec<u32> {
    let sampler = BlockSampler::new(ensemble);
    let mut rng = replica_rng(seed, replica);
    (0..blocks).map(|_| sampler.sample(&mut rng)).collect()
}

/// IDS at `energy` from eigenvalue counting on fresh finite chains with
/// free (truncated) boundaries.
pub fn empirical_ids(
    ensemble: &ModelEnsemble,
    energy: f64,
    sites_n: usize,
    replicas: u32,
    seed: u64,
) -> Result<IdsEstimate, EstimatorError> {
    if replicas < 8 {
        return Err(EstimatorError::TooFewReplicas { got: replicas });
    }
    let period = ensemble.period();
    if sites_n == 0 || !sites_n.is_multiple_of(period) {
        return Err(EstimatorError::SitesNotMultipleOfPeriod {
            sites: sites_n,
            period,
        });
    }
    let blocks = sites_n / period;
    let results: Vec<(f64, usize)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let indices = sample_indices(ensemble, seed, r as u64, blocks);
            let (count, perturbed) = sturm_count_stream(ensemble, &indices, energy);
            (count as f64 / sites_n as f64, perturbed)
        })
        .collect();
    let values: Vec<f64> = results.iter().map(|&(v, _)| v).collect();
    let perturbed: usize = results.iter().map(|&(_, p)| p).sum();
    let mut warnings = Vec::new();
    if perturbed > 0 {
        warnings.push(format!("sturm: {perturbed} zero pivots perturbed"));
    }
    Ok(replica_estimate(
        values,
        Method::Sturm,
        sites_n as u64,
        seed,
        warnings,
    ))
}

/// `δN(ε)` from paired eigenvalue counts: the same chains are counted at
/// the edge energy and at distance `epsilon` into the spectrum, so the
/// per-realization noise cancels in the difference.
pub fn delta_ids_empirical(
    ensemble: &ModelEnsemble,
    edge: &BandEdge,
    epsilon: f64,
    sites_n: usize,
    replicas: u32,
    seed: u64,
) -> Result<IdsEstimate, EstimatorError> {
    if replicas < 8 {
        return Err(EstimatorError::TooFewReplicas { got: replicas });
    }
    let period = ensemble.period();
    if sites_n == 0 || !sites_n.is_multiple_of(period) {
        return Err(EstimatorError::SitesNotMultipleOfPeriod {
            sites: sites_n,
            period,
        });
    }
    let blocks = sites_n / period;
    let e_base = edge.energy;
    let e_in = edge.energy_at(epsilon);
    let results: Vec<(f64, usize)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let indices = sample_indices(ensemble, seed, r as u64, blocks);
            let (c_base, p1) = sturm_count_stream(ensemble, &indices, e_base);
            let (c_in, p2) = sturm_count_stream(ensemble, &indices, e_in);
            let diff = match edge.side {
                EdgeSide::Lower => c_in as f64 - c_base as f64,
                EdgeSide::Upper => c_base as f64 - c_in as f64,
            };
            (diff / sites_n as f64, p1 + p2)
        })
        .collect();
    let values: Vec<f64> = results.iter().map(|&(v, _)| v).collect();
    let perturbed: usize = results.iter().map(|&(_, p)| p).sum();
    let mut warnings = Vec::new();
    if perturbed > 0 {
        warnings.push(format!("sturm: {perturbed} zero pivots perturbed"));
    }
    Ok(replica_estimate(
        values,
        Method::Sturm,
        sites_n as u64,
        seed,
        warnings,
    ))
}

/// Lyapunov exponent estimate from the free Prüfer amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub std_error: f64,
    pub sites: u64,
    pub replicas: u32,
    pub seed: u64,
}

/// Mean amplitude growth rate `E[ln R(n)] / n` over fresh realizations.
pub fn lyapunov_estimate(
    ensemble: &ModelEnsemble,
    energy: f64,
    sites_n: usize,
    replicas: u32,
    seed: u64,
) -> Result<LyapunovEstimate, EstimatorError> {
    if replicas < 2 {
        return Err(EstimatorError::TooFewReplicas { got: replicas });
    }
    let period = ensemble.period();
    if sites_n == 0 || !sites_n.is_multiple_of(period) {
        return Err(EstimatorError::SitesNotMultipleOfPeriod {
            sites: sites_n,
            period,
        });
    }
    let blocks = sites_n / period;
    let values: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let indices = sample_indices(ensemble, seed, r as u64, blocks);
            let coeffs = indices.iter().flat_map(|&idx| {
                let block = &ensemble.blocks[idx as usize];
                block
                    .hoppings
                    .iter()
                    .zip(block.potentials.iter())
                    .map(|(&t, &v)| (t, v))
            });
            let (_, log_amp) = free_prufer_final(coeffs, energy, 0.0, sites_n);
            log_amp / sites_n as f64
        })
        .collect();
    let mean = kahan_mean(&values);
    let mut var = KahanSum::default();
    for &v in &values {
        var.add((v - mean) * (v - mean));
    }
    let std_error =
        (var.value() / (replicas as f64 - 1.0)).sqrt() / (replicas as f64).sqrt();
    Ok(LyapunovEstimate {
        value: mean,
        std_error,
        sites: sites_n as u64,
        replicas,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_word, PeriodicBlock};
    use crate::normal_form::CalibrationOptions;
    use crate::prufer::iterate_dynamics;
    use crate::spectral::find_shared_edges;

    fn reference_ensemble() -> ModelEnsemble {
        ModelEnsemble::new(
            vec![
                PeriodicBlock::laplacian(),
                PeriodicBlock::shifted_laplacian("BV", 0.5),
            ],
            vec![0.8, 0.2],
        )
        .unwrap()
    }

    fn edge_setup(
        ens: &ModelEnsemble,
        energy: f64,
    ) -> (Vec<BlockSpectrum>, BandEdgeNormalForm) {
        let report = find_shared_edges(ens, 1e-8).unwrap();
        let edge = report
            .qualified
            .iter()
            .find(|e| (e.energy - energy).abs() < 1e-9)
            .unwrap()
            .clone();
        let nf =
            BandEdgeNormalForm::new(ens, &report.spectra, &edge, &CalibrationOptions::default())
                .unwrap();
        (report.spectra, nf)
    }

    #[test]
    fn sturm_two_by_two() {
        let op = TridiagonalOperator {
            diagonal: vec![0.0, 0.0],
            off_diagonal: vec![-1.0],
        };
        // eigenvalues ±1
        assert_eq!(sturm_count(&op, -1.5), 0);
        assert_eq!(sturm_count(&op, 0.0), 1);
        assert_eq!(sturm_count(&op, 1.5), 2);
    }

    #[test]
    fn sturm_respects_gershgorin() {
        let ens = reference_ensemble();
        let word = sample_word(&ens, 1, 500);
        let op = TridiagonalOperator::from_word(&ens, &word);
        let (lo, hi) = op.gershgorin();
        assert_eq!(sturm_count(&op, lo - 0.1), 0);
        assert_eq!(sturm_count(&op, hi + 0.1), op.size());
    }

    #[test]
    fn sturm_stream_matches_materialized() {
        let ens = reference_ensemble();
        let word = sample_word(&ens, 2, 300);
        let op = TridiagonalOperator::from_word(&ens, &word);
        for &e in &[-1.9, -0.3, 0.8, 2.2] {
            assert_eq!(
                sturm_count(&op, e),
                sturm_count_stream(&ens, &word.indices, e).0
            );
        }
    }

    #[test]
    fn sturm_count_is_monotone_in_energy() {
        let ens = reference_ensemble();
        let word = sample_word(&ens, 3, 400);
        let op = TridiagonalOperator::from_word(&ens, &word);
        let mut prev = 0;
        for i in 0..60 {
            let e = -2.5 + 5.5 * i as f64 / 60.0;
            let c = sturm_count(&op, e);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn empirical_laplacian_band_center() {
        let ens = ModelEnsemble::trivial(PeriodicBlock::laplacian());
        let est = empirical_ids(&ens, 0.0, 100_000, 8, 7).unwrap();
        assert!((est.value - 0.5).abs() < 1e-3, "ids = {}", est.value);
        let below = empirical_ids(&ens, -3.0, 10_000, 8, 7).unwrap();
        assert_eq!(below.value, 0.0);
        assert_eq!(below.std_error, 0.0);
    }

    #[test]
    fn empirical_is_pinned_in_a_common_gap() {
        // Two period-2 blocks whose spectra both leave a gap around 0.
        let a = PeriodicBlock::new("A", vec![1.0, 1.0], vec![1.5, -1.5]).unwrap();
        let b = PeriodicBlock::new("B", vec![1.0, 1.0], vec![1.8, -1.8]).unwrap();
        let ens = ModelEnsemble::new(vec![a, b], vec![0.6, 0.4]).unwrap();
        let n = 40_000;
        let est = empirical_ids(&ens, 0.0, n, 8, 11).unwrap();
        assert!(
            (est.value - 0.5).abs() <= 2.0 / n as f64,
            "gap ids = {}",
            est.value
        );
        assert!(est.std_error <= 2.0 / n as f64);
    }

    #[test]
    fn paired_delta_at_zero_epsilon_is_exactly_zero() {
        let ens = reference_ensemble();
        let (_, nf) = edge_setup(&ens, -2.0);
        let est = delta_ids_empirical(&ens, nf.edge(), 0.0, 20_000, 8, 3).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn rotation_matches_periodic_closed_form_on_trivial_ensemble() {
        let ens = ModelEnsemble::trivial(PeriodicBlock::laplacian());
        let (spectra, nf) = edge_setup(&ens, -2.0);
        let m = 100_000;
        let est = rotation_ids(&ens, &spectra, &nf, 0.1, m, 8, 5).unwrap();
        let exact = (0.95_f64).acos() / PI; // δN_ν(0.1) for the Laplacian
        assert!(
            (est.value - exact).abs() <= 2.0 / m as f64,
            "value {} vs {exact}",
            est.value
        );
        assert_eq!(est.std_error, 0.0); // all replicas identical
        assert!(est.warnings.is_empty());
        assert_eq!(est.generator, GENERATOR_VERSION);
    }

    #[test]
    fn rotation_near_gap_side_is_zero() {
        let ens = ModelEnsemble::trivial(PeriodicBlock::laplacian());
        let (spectra, nf) = edge_setup(&ens, -2.0);
        let m = 20_000;
        let est =
            rotation_ids_signed(&ens, &spectra, &nf, -0.1, m, 8, 5).unwrap();
        assert!(est.value.abs() <= 2.0 / m as f64, "value {}", est.value);
        assert!(!est.warnings.is_empty(), "gap side cannot complete rotations");
    }

    #[test]
    fn rotation_is_deterministic_and_validates_epsilon() {
        let ens = reference_ensemble();
        let (spectra, nf) = edge_setup(&ens, -2.0);
        let a = rotation_ids(&ens, &spectra, &nf, 0.1, 50_000, 8, 42).unwrap();
        let b = rotation_ids(&ens, &spectra, &nf, 0.1, 50_000, 8, 42).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert!(matches!(
            rotation_ids(&ens, &spectra, &nf, 0.0, 10, 8, 1),
            Err(EstimatorError::InvalidEpsilon { .. })
        ));
        assert!(matches!(
            rotation_ids(&ens, &spectra, &nf, 10.0, 10, 8, 1),
            Err(EstimatorError::InvalidEpsilon { .. })
        ));
        assert!(matches!(
            rotation_ids(&ens, &spectra, &nf, 0.1, 10, 4, 1),
            Err(EstimatorError::TooFewReplicas { got: 4 })
        ));
    }

    #[test]
    fn rotation_value_is_robust_to_initial_phase() {
        let ens = reference_ensemble();
        let (spectra, nf) = edge_setup(&ens, -2.0);
        let maps = crate::prufer::build_maps(&nf, &ens, &spectra, 0.1).unwrap();
        let m = 10_000;
        let word = sample_word(&ens, 17, m);
        let base = iterate_dynamics(&maps, &word.indices, 0.0, m).unwrap();
        for &theta0 in &[std::f64::consts::FRAC_PI_3, -1.0] {
            let other = iterate_dynamics(&maps, &word.indices, theta0, m).unwrap();
            let drift = (other - theta0) - base;
            assert!(drift.abs() <= PI + 1e-9, "drift {drift} for theta0 {theta0}");
        }
    }

    #[test]
    fn rotation_and_sturm_agree_on_two_distinct_ensembles() {
        let make = |p: f64, shift: f64| {
            ModelEnsemble::new(
                vec![
                    PeriodicBlock::laplacian(),
                    PeriodicBlock::shifted_laplacian("BV", shift),
                ],
                vec![p, 1.0 - p],
            )
            .unwrap()
        };
        for ens in [make(0.8, 0.5), make(0.6, 0.8)] {
            let (spectra, nf) = edge_setup(&ens, -2.0);
            for eps in [0.1, 0.15] {
                let rot = rotation_ids(&ens, &spectra, &nf, eps, 300_000, 8, 21).unwrap();
                let n = 40_000;
                let emp = delta_ids_empirical(&ens, nf.edge(), eps, n, 16, 22).unwrap();
                let sigma = (rot.std_error.powi(2) + emp.std_error.powi(2)).sqrt();
                let slack = 2.0 / n as f64 + 2.0 / 300_000.0;
                assert!(
                    (rot.value - emp.value).abs() <= 3.0 * sigma + slack,
                    "eps {eps}: rotation {} ± {} vs sturm {} ± {}",
                    rot.value,
                    rot.std_error,
                    emp.value,
                    emp.std_error
                );
            }
        }
    }

    #[test]
    fn lyapunov_vanishes_in_band_and_matches_gap_eigenvalue() {
        let ens = ModelEnsemble::trivial(PeriodicBlock::laplacian());
        let in_band = lyapunov_estimate(&ens, 0.0, 100_000, 8, 13).unwrap();
        assert!(in_band.value.abs() < 1e-3, "gamma = {}", in_band.value);
        let in_gap = lyapunov_estimate(&ens, -3.0, 100_000, 8, 13).unwrap();
        let expected = ((3.0 + 5.0_f64.sqrt()) / 2.0).ln();
        assert!(
            (in_gap.value - expected).abs() < 1e-3,
            "gamma = {} vs {expected}",
            in_gap.value
        );
        assert!(in_gap.value >= -3.0 * in_gap.std_error - 1e-12);
    }
}
