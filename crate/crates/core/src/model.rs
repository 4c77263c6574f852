//! Periodic Jacobi blocks, ensembles, transfer-matrix algebra and
//! reproducible disorder words.
//!
//! A block of period `L` is given by hoppings `t(1..L) > 0` and potentials
//! `v(1..L)`. The operator acts on square-summable sequences as
//!
//! ```text
//! (H ψ)(n) = -t(n+1) ψ(n+1) + v(n) ψ(n) - t(n) ψ(n-1),
//! ```
//!
//! and the eigenvalue equation `Hψ = Eψ` propagates the state vector
//! `(t(n) ψ(n), ψ(n-1))` by unimodular one-step matrices. Words of blocks
//! are sampled i.i.d. from a seeded, version-pinned generator so that every
//! Monte Carlo run is reproducible bit for bit.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Version tag of the disorder generator, stamped into run metadata.
///
/// `chacha8` with one stream per replica; uniform variates are built from
/// the top 53 bits of `next_u64`. Changing any of this changes sampled
/// words, so the tag must be bumped alongside.
pub const GENERATOR_VERSION: &str = "chacha8-u53/1";

/// Errors from model construction and validation.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("block {block:?}: hopping t({index}) = {value} must be strictly positive")]
    NonPositiveHopping {
        block: String,
        index: usize,
        value: f64,
    },
    #[error("block {block:?}: {hoppings} hoppings vs {potentials} potentials")]
    LengthMismatch {
        block: String,
        hoppings: usize,
        potentials: usize,
    },
    #[error("block {block:?} has period 0")]
    EmptyBlock { block: String },
    #[error("block {block:?} has period {period}, expected {expected}")]
    PeriodMismatch {
        block: String,
        period: usize,
        expected: usize,
    },
    #[error("bad probabilities: {reason}")]
    BadProbabilities { reason: String },
    #[error("ensemble has no blocks")]
    EmptyEnsemble,
    #[error("ensemble has {blocks} blocks but {probabilities} probabilities")]
    ProbabilityCount { blocks: usize, probabilities: usize },
}

/// One `L`-periodic Jacobi block: hoppings `t(1..L)` and potentials `v(1..L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicBlock {
    pub label: String,
    #[serde(rename = "t")]
    pub hoppings: Vec<f64>,
    #[serde(rename = "v")]
    pub potentials: Vec<f64>,
}

impl PeriodicBlock {
    /// Build a block, enforcing equal lengths and strictly positive hoppings.
    ///
    /// Zero hopping would decouple the chain and leave the one-step matrix
    /// undefined (it contains `1/t`), so it is rejected here.
    pub fn new(
        label: impl Into<String>,
        hoppings: Vec<f64>,
        potentials: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let block = Self {
            label: label.into(),
            hoppings,
            potentials,
        };
        block.validate()?;
        Ok(block)
    }

    /// The free Laplacian block: `L = 1`, `t = 1`, `v = 0`.
    pub fn laplacian() -> Self {
        Self::new("B0", vec![1.0], vec![0.0]).expect("valid block")
    }

    /// Constant-potential block of period 1: `t = 1`, `v = shift`.
    pub fn shifted_laplacian(label: impl Into<String>, shift: f64) -> Self {
        Self::new(label, vec![1.0], vec![shift]).expect("valid block")
    }

    pub fn period(&self) -> usize {
        self.hoppings.len()
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.hoppings.len() != self.potentials.len() {
            return Err(ModelError::LengthMismatch {
                block: self.label.clone(),
                hoppings: self.hoppings.len(),
                potentials: self.potentials.len(),
            });
        }
        if self.hoppings.is_empty() {
            return Err(ModelError::EmptyBlock {
                block: self.label.clone(),
            });
        }
        for (i, &t) in self.hoppings.iter().enumerate() {
            if t <= 0.0 || !t.is_finite() {
                return Err(ModelError::NonPositiveHopping {
                    block: self.label.clone(),
                    index: i + 1,
                    value: t,
                });
            }
        }
        Ok(())
    }

    /// Enclosure of the spectrum from Gershgorin row sums.
    pub fn spectral_enclosure(&self) -> (f64, f64) {
        let t_max = self.hoppings.iter().cloned().fold(0.0_f64, f64::max);
        let v_min = self.potentials.iter().cloned().fold(f64::INFINITY, f64::min);
        let v_max = self
            .potentials
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (v_min - 2.0 * t_max, v_max + 2.0 * t_max)
    }
}

/// Finite set of equal-period blocks with selection probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEnsemble {
    pub blocks: Vec<PeriodicBlock>,
    #[serde(rename = "p")]
    pub probabilities: Vec<f64>,
}

const PROBABILITY_SUM_TOL: f64 = 1e-12;

impl ModelEnsemble {
    pub fn new(blocks: Vec<PeriodicBlock>, probabilities: Vec<f64>) -> Result<Self, ModelError> {
        let ensemble = Self {
            blocks,
            probabilities,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    /// Degenerate ensemble supported on a single block.
    pub fn trivial(block: PeriodicBlock) -> Self {
        Self {
            blocks: vec![block],
            probabilities: vec![1.0],
        }
    }

    /// Check all ensemble invariants, naming the offending block or index.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocks.is_empty() {
            return Err(ModelError::EmptyEnsemble);
        }
        for block in &self.blocks {
            block.validate()?;
        }
        let expected = self.blocks[0].period();
        for block in &self.blocks[1..] {
            if block.period() != expected {
                return Err(ModelError::PeriodMismatch {
                    block: block.label.clone(),
                    period: block.period(),
                    expected,
                });
            }
        }
        if self.probabilities.len() != self.blocks.len() {
            return Err(ModelError::ProbabilityCount {
                blocks: self.blocks.len(),
                probabilities: self.probabilities.len(),
            });
        }
        for (i, &p) in self.probabilities.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(ModelError::BadProbabilities {
                    reason: format!("p[{i}] = {p} is not a finite nonnegative number"),
                });
            }
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(ModelError::BadProbabilities {
                reason: format!("probabilities sum to {sum}, expected 1"),
            });
        }
        if !self.probabilities.iter().any(|&p| p > 0.0) {
            return Err(ModelError::BadProbabilities {
                reason: "no probability is strictly positive".to_string(),
            });
        }
        Ok(())
    }

    /// Common period of all blocks.
    pub fn period(&self) -> usize {
        self.blocks[0].period()
    }

    /// Parse and validate a JSON model document.
    ///
    /// Schema errors keep serde's line/column information; semantic errors
    /// name the offending block.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let ensemble: Self =
            serde_json::from_str(text).map_err(|e| format!("model JSON: {e}"))?;
        ensemble.validate().map_err(|e| e.to_string())?;
        Ok(ensemble)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Enclosure of the union of all block spectra.
    pub fn spectral_enclosure(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for block in &self.blocks {
            let (a, b) = block.spectral_enclosure();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }
}

/// Validate an ensemble, returning it unchanged on success.
pub fn validate_ensemble(ensemble: ModelEnsemble) -> Result<ModelEnsemble, ModelError> {
    ensemble.validate()?;
    Ok(ensemble)
}

/// Real 2×2 matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// Column-built matrix `(x | y)`.
    pub fn from_columns(x: [f64; 2], y: [f64; 2]) -> Self {
        Self::new(x[0], y[0], x[1], y[1])
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        Mat2::new(
            self.a * rhs.a + self.b * rhs.c,
            self.a * rhs.b + self.b * rhs.d,
            self.c * rhs.a + self.d * rhs.c,
            self.c * rhs.b + self.d * rhs.d,
        )
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(
            self.d / det,
            -self.b / det,
            -self.c / det,
            self.a / det,
        ))
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn sub(&self, rhs: &Mat2) -> Mat2 {
        Mat2::new(
            self.a - rhs.a,
            self.b - rhs.b,
            self.c - rhs.c,
            self.d - rhs.d,
        )
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.a
            .abs()
            .max(self.b.abs())
            .max(self.c.abs())
            .max(self.d.abs())
    }

    /// Singular values `(σ_max, σ_min)`.
    pub fn singular_values(&self) -> (f64, f64) {
        let g = self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d;
        let det = self.det();
        let h = (g * g - 4.0 * det * det).max(0.0).sqrt();
        let s_max = (0.5 * (g + h)).sqrt();
        let s_min = (0.5 * (g - h)).max(0.0).sqrt();
        (s_max, s_min)
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

/// One-step transfer matrix of `block` at (0-based) site `site`.
///
/// With `t = t(site+1)` and `v = v(site+1)` in 1-based notation, the matrix
///
/// ```text
/// A = [ (v - E)/t   -t ]
///     [ 1/t          0 ]
/// ```
///
/// maps `(t(k) ψ(k), ψ(k-1))` to `(t(k+1) ψ(k+1), ψ(k))`; the hopping of the
/// following bond is carried by the state vector, not by `A`, so `det A = 1`
/// identically and concatenated products never need boundary corrections.
pub fn one_step_matrix(block: &PeriodicBlock, site: usize, energy: f64) -> Mat2 {
    let t = block.hoppings[site];
    let v = block.potentials[site];
    Mat2::new((v - energy) / t, -t, 1.0 / t, 0.0)
}

/// Transfer matrix of one full period: `A_L · A_{L-1} · … · A_1`.
pub fn transfer_matrix(block: &PeriodicBlock, energy: f64) -> Mat2 {
    let mut m = Mat2::IDENTITY;
    for site in 0..block.period() {
        m = one_step_matrix(block, site, energy).mul(&m);
    }
    m
}

/// Energy derivative of the one-period transfer matrix.
///
/// Product rule over the one-step factors; `dA/dE = [[-1/t, 0], [0, 0]]`.
pub fn transfer_matrix_derivative(block: &PeriodicBlock, energy: f64) -> Mat2 {
    let period = block.period();
    let steps: Vec<Mat2> = (0..period)
        .map(|site| one_step_matrix(block, site, energy))
        .collect();
    // prefix[k] = A_k · … · A_1 (prefix[0] = 1), suffix[k] = A_L · … · A_{k+2}
    let mut prefix = vec![Mat2::IDENTITY; period + 1];
    for k in 0..period {
        prefix[k + 1] = steps[k].mul(&prefix[k]);
    }
    let mut suffix = vec![Mat2::IDENTITY; period + 1];
    for k in (0..period).rev() {
        suffix[k] = suffix[k + 1].mul(&steps[k]);
    }
    let mut deriv = Mat2::new(0.0, 0.0, 0.0, 0.0);
    for k in 0..period {
        let da = Mat2::new(-1.0 / block.hoppings[k], 0.0, 0.0, 0.0);
        let term = suffix[k + 1].mul(&da).mul(&prefix[k]);
        deriv = Mat2::new(
            deriv.a + term.a,
            deriv.b + term.b,
            deriv.c + term.c,
            deriv.d + term.d,
        );
    }
    deriv
}

/// A sampled disorder realization: block indices drawn i.i.d. from the
/// ensemble probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderWord {
    pub seed: u64,
    pub indices: Vec<u32>,
}

/// Cumulative-probability sampler over block indices.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    cumulative: Vec<f64>,
}

impl BlockSampler {
    pub fn new(ensemble: &ModelEnsemble) -> Self {
        let mut cumulative = Vec::with_capacity(ensemble.probabilities.len());
        let mut acc = 0.0;
        for &p in &ensemble.probabilities {
            acc += p;
            cumulative.push(acc);
        }
        // Guard against the sum landing a few ulps under 1.
        if let Some(last) = cumulative.last_mut() {
            *last = f64::INFINITY;
        }
        Self { cumulative }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        let x = uniform53(rng);
        self.cumulative.partition_point(|&c| c <= x) as u32
    }
}

/// Uniform variate in `[0, 1)` from the top 53 bits of a `u64` draw.
pub(crate) fn uniform53(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Seeded RNG for a given replica: one ChaCha8 stream per replica index.
pub(crate) fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Draw `length` i.i.d. block indices; identical inputs give identical words.
pub fn sample_word(ensemble: &ModelEnsemble, seed: u64, length: usize) -> DisorderWord {
    let sampler = BlockSampler::new(ensemble);
    let mut rng = replica_rng(seed, 0);
    let indices = (0..length).map(|_| sampler.sample(&mut rng)).collect();
    DisorderWord { seed, indices }
}

/// Transfer matrix across a whole word: ordered product of per-block
/// matrices, rightmost factor first.
pub fn word_transfer_matrix(ensemble: &ModelEnsemble, word: &DisorderWord, energy: f64) -> Mat2 {
    let mut m = Mat2::IDENTITY;
    for &idx in &word.indices {
        m = transfer_matrix(&ensemble.blocks[idx as usize], energy).mul(&m);
    }
    m
}

/// Per-site `(t, v)` coefficients of the operator assembled from a word.
pub fn word_sites<'a>(
    ensemble: &'a ModelEnsemble,
    word: &'a DisorderWord,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    word.indices.iter().flat_map(move |&idx| {
        let block = &ensemble.blocks[idx as usize];
        block
            .hoppings
            .iter()
            .zip(block.potentials.iter())
            .map(|(&t, &v)| (t, v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b0() -> PeriodicBlock {
        PeriodicBlock::laplacian()
    }

    #[test]
    fn validate_accepts_single_block() {
        let ens = ModelEnsemble::new(vec![b0()], vec![1.0]).unwrap();
        assert_eq!(ens.period(), 1);
    }

    #[test]
    fn validate_rejects_zero_hopping() {
        let err = PeriodicBlock::new("B0", vec![0.0], vec![0.0]).unwrap_err();
        assert!(matches!(err, ModelError::NonPositiveHopping { index: 1, .. }));
    }

    #[test]
    fn validate_rejects_bad_probability_sum() {
        let err = ModelEnsemble::new(
            vec![b0(), PeriodicBlock::shifted_laplacian("BV", 0.5)],
            vec![0.6, 0.5],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::BadProbabilities { .. }));
    }

    #[test]
    fn validate_rejects_period_mismatch() {
        let l2 = PeriodicBlock::new("L2", vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let err = ModelEnsemble::new(vec![b0(), l2], vec![0.5, 0.5]).unwrap_err();
        assert!(matches!(err, ModelError::PeriodMismatch { .. }));
    }

    #[test]
    fn one_step_laplacian_at_zero_energy() {
        let a = one_step_matrix(&b0(), 0, 0.0);
        assert_eq!(a, Mat2::new(0.0, -1.0, 1.0, 0.0));
    }

    #[test]
    fn one_step_propagates_explicit_eigen_sequence() {
        // ψ(n) = n + 1 solves -ψ(n+1) - ψ(n-1) = -2 ψ(n), i.e. E = -2.
        let a = one_step_matrix(&b0(), 0, -2.0);
        assert_eq!(a, Mat2::new(2.0, -1.0, 1.0, 0.0));
        let mut state = [1.0, 0.0]; // (t ψ(0), ψ(-1)) with ψ(n) = n + 1
        for n in 0..20 {
            state = a.apply(state);
            assert_eq!(state, [(n + 2) as f64, (n + 1) as f64]);
        }
    }

    #[test]
    fn transfer_matrix_of_laplacian() {
        for &e in &[-2.0, -0.5, 0.0, 1.25, 2.0, 7.0] {
            let t = transfer_matrix(&b0(), e);
            assert_eq!(t, Mat2::new(-e, -1.0, 1.0, 0.0));
        }
        assert_eq!(transfer_matrix(&b0(), -2.0).trace(), 2.0);
    }

    #[test]
    fn word_transfer_equals_ordered_block_product() {
        let bv = PeriodicBlock::new("BV", vec![0.7, 1.3], vec![0.4, -0.2]).unwrap();
        let b2 = PeriodicBlock::new("B2", vec![1.1, 0.9], vec![-0.3, 0.6]).unwrap();
        let ens = ModelEnsemble::new(vec![bv.clone(), b2.clone()], vec![0.5, 0.5]).unwrap();
        let word = DisorderWord {
            seed: 0,
            indices: vec![0, 1],
        };
        let e = 0.37;
        let expected = transfer_matrix(&b2, e).mul(&transfer_matrix(&bv, e));
        let got = word_transfer_matrix(&ens, &word, e);
        assert!(expected.sub(&got).max_norm() < 1e-14);

        // Same product from the flat site stream.
        let mut m = Mat2::IDENTITY;
        let sites: Vec<(f64, f64)> = word_sites(&ens, &word).collect();
        assert_eq!(sites.len(), 4);
        for (t, v) in sites {
            m = Mat2::new((v - e) / t, -t, 1.0 / t, 0.0).mul(&m);
        }
        assert!(expected.sub(&m).max_norm() < 1e-14);
    }

    #[test]
    fn transfer_determinant_is_one_on_random_blocks() {
        let mut rng = replica_rng(7, 0);
        for _ in 0..200 {
            let period = 1 + (rng.next_u64() % 3) as usize;
            let hoppings: Vec<f64> = (0..period)
                .map(|_| 0.1 + 9.9 * uniform53(&mut rng))
                .collect();
            let potentials: Vec<f64> = (0..period)
                .map(|_| -10.0 + 20.0 * uniform53(&mut rng))
                .collect();
            let block = PeriodicBlock::new("R", hoppings, potentials).unwrap();
            let energy = -20.0 + 40.0 * uniform53(&mut rng);
            let t = transfer_matrix(&block, energy);
            // Entries of the product reach (|v| + |E|)/t_min per factor, so
            // the determinant cancellation is judged against that scale.
            let tol = 1e-12 * (1.0 + t.max_norm() * t.max_norm());
            assert!((t.det() - 1.0).abs() < tol, "det = {} ({t})", t.det());
        }
    }

    #[test]
    fn sample_word_degenerate_measure() {
        let ens = ModelEnsemble::trivial(b0());
        let word = sample_word(&ens, 3, 1000);
        assert!(word.indices.iter().all(|&i| i == 0));
    }

    #[test]
    fn sample_word_is_reproducible() {
        let ens = ModelEnsemble::new(
            vec![b0(), PeriodicBlock::shifted_laplacian("BV", 0.5)],
            vec![0.8, 0.2],
        )
        .unwrap();
        let a = sample_word(&ens, 42, 4096);
        let b = sample_word(&ens, 42, 4096);
        assert_eq!(a, b);
        let c = sample_word(&ens, 43, 4096);
        assert_ne!(a.indices, c.indices);
    }

    #[test]
    fn sample_word_matches_probabilities() {
        let ens = ModelEnsemble::new(
            vec![b0(), PeriodicBlock::shifted_laplacian("BV", 0.5)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let n = 1_000_000;
        let word = sample_word(&ens, 11, n);
        let zeros = word.indices.iter().filter(|&&i| i == 0).count();
        let freq = zeros as f64 / n as f64;
        // binomial 3σ ≈ 0.0015
        assert!((freq - 0.5).abs() < 0.002, "freq = {freq}");
    }

    #[test]
    fn model_json_round_trip_and_rejection() {
        let ens = ModelEnsemble::new(
            vec![b0(), PeriodicBlock::shifted_laplacian("BV", 0.5)],
            vec![0.8, 0.2],
        )
        .unwrap();
        let parsed = ModelEnsemble::from_json(&ens.to_json()).unwrap();
        assert_eq!(parsed, ens);

        let bad = r#"{"blocks":[{"label":"B0","t":[1.0],"v":[0.0]}],"p":[0.9]}"#;
        assert!(ModelEnsemble::from_json(bad).is_err());
        let unknown = r#"{"blocks":[{"label":"B0","t":[1.0],"v":[0.0],"x":1}],"p":[1.0]}"#;
        assert!(ModelEnsemble::from_json(unknown).is_err());
    }
}
