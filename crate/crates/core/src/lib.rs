//! Spectral analysis of one-dimensional random Jacobi operators built by
//! juxtaposing periodic blocks.
//!
//! A model is a finite family of `L`-periodic Jacobi blocks together with
//! selection probabilities. Random operators are assembled by drawing an
//! i.i.d. sequence of blocks and concatenating them. The crate provides
//!
//! - exact 2×2 transfer-matrix algebra and reproducible disorder sampling
//!   ([`model`]),
//! - band structure, gap labels and the periodic integrated density of
//!   states ([`spectral`]),
//! - the parabolic normal form of a transfer matrix at a band edge, built
//!   from an energy-dependent basis change ([`normal_form`]),
//! - free and modified Prüfer phase dynamics, including the per-block phase
//!   shift maps and their closed-form oracle ([`prufer`]),
//! - Monte Carlo estimators of the integrated density of states via mean
//!   rotation numbers and via tridiagonal eigenvalue counting
//!   ([`estimators`]),
//! - two-sided band-edge tail bounds, their proof constants, and the
//!   Lifshitz exponent diagnostic ([`lifshitz`]),
//! - deterministic CSV/JSON emission helpers ([`report`]).
//!
//! All types are immutable values and all operations are pure functions;
//! estimator replicas run on independent, seed-derived random streams so
//! results never depend on scheduling.

pub mod estimators;
pub mod lifshitz;
pub mod model;
pub mod normal_form;
pub mod prufer;
pub mod report;
pub mod spectral;

pub use estimators::{
    delta_ids_empirical, empirical_ids, lyapunov_estimate, rotation_ids, sturm_count,
    EstimatorError, IdsEstimate, Method, TridiagonalOperator,
};
pub use lifshitz::{
    critical_interval, lifshitz_exponent, theorem_bounds, verify_bounds, BoundReport,
    CriticalInterval, LifshitzError, TheoremBounds, VerifyBudget,
};
pub use model::{
    one_step_matrix, sample_word, transfer_matrix, word_transfer_matrix, DisorderWord, Mat2,
    ModelEnsemble, ModelError, PeriodicBlock, GENERATOR_VERSION,
};
pub use normal_form::{epsilon0_calibrate, BandEdgeNormalForm, CalibrationOptions, NormalFormError};
pub use prufer::{
    angle_lift_m, build_maps, closed_form_shift, count_fixed_points, free_prufer_evolve,
    iterate_dynamics, iterate_trajectory, ClosedFormShift, LiftState, PhaseShiftMap, PruferError,
    PruferState,
};
pub use spectral::{
    band_structure, classify, find_shared_edges, Band, BandStructure, BlockSpectrum,
    ClassifiedEnergy, EdgeReport, EdgeSide, EnergyClass, SpectralError,
};
