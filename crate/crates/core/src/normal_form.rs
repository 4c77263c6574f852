//! Parabolic normal form of the transfer matrix at a band edge.
//!
//! At a band edge the one-period transfer matrix `T_0` has trace `2λ` with
//! `λ = ±1`, a single eigenvector `v` and a principal vector `w` with
//! `(T_0 - λ) w = v`. For energies `E + ε` near the edge the basis change
//!
//! ```text
//! M_ε = ( (T_ε - λ) w | w )
//! ```
//!
//! conjugates `T_ε` to the near-parabolic normal matrix
//!
//! ```text
//! N(κ_ε) = [ λ(1-κ_ε)  1 ]        κ_ε = 2 - λ tr(T_ε),
//!          [ -κ_ε      λ ]
//! ```
//!
//! identically in ε: writing `τ = tr T_ε = λ(2-κ)` and `det T_ε = 1`,
//! Cayley–Hamilton gives `T_ε² = τ T_ε - 1`, hence
//! `T_ε (T_ε - λ) w = (λ(1-κ) T_ε - 1) w = λ(1-κ) (T_ε - λ) w - κ w`
//! (using `λ² = 1`), which is column by column the identity
//! `T_ε M_ε = M_ε N(κ_ε)`. The construction is therefore exact up to
//! rounding wherever `M_ε` is invertible; `N(κ)` has trace `λ(2-κ)` and
//! determinant 1. The sign of `κ_ε` separates the elliptic side (`κ > 0`,
//! inside the band) from the hyperbolic side (`κ < 0`, inside the gap).
//!
//! `det M_0 = det(v | w)` is negative for these Jacobi transfer matrices
//! (the raw angle action of `N(κ)` runs clockwise while transfer-matrix
//! phases advance counterclockwise), so the phase frame used downstream is
//! `F_ε = M_ε R`, `R = diag(1, -1)`, which restores a positive elliptic
//! rotation. The basis itself is kept un-reflected.

use crate::model::{transfer_matrix, Mat2, ModelEnsemble, PeriodicBlock};
use crate::spectral::{parabolic_direction, principal_angle, BandEdge, BlockSpectrum};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NormalFormError {
    #[error("transfer matrix at {energy} is not parabolic (|tr| - 2 = {deviation})")]
    NotParabolic { energy: f64, deviation: f64 },
    #[error("edge at {energy} is degenerate: T = ±1, no principal vector")]
    DegenerateEdge { energy: f64 },
    #[error("basis degenerates at epsilon = {epsilon}: |det M| = {det} < {threshold}")]
    DegenerateBasis {
        epsilon: f64,
        det: f64,
        threshold: f64,
    },
    #[error("epsilon = {epsilon} outside the validity radius {epsilon0}")]
    EpsilonOutOfRange { epsilon: f64, epsilon0: f64 },
    #[error("no validity radius: {reason}")]
    NoValidRadius { reason: String },
}

/// Tuning of the validity-radius calibration.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationOptions {
    /// Minimum angular separation of competing fixed directions from θ = 0.
    pub direction_margin: f64,
    /// Number of ε samples per candidate interval.
    pub grid: usize,
    /// Multiplicative shrink factor between candidates.
    pub shrink: f64,
    /// Give up below this radius.
    pub floor: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            direction_margin: 0.02,
            grid: 33,
            shrink: 0.85,
            floor: 1e-9,
        }
    }
}

/// Energy-dependent basis change and normal form at one band edge.
#[derive(Debug, Clone)]
pub struct BandEdgeNormalForm {
    edge: BandEdge,
    block: PeriodicBlock,
    lambda: f64,
    /// Unit eigenvector of `T_0` (fixed sign, direction in `[-π/2, π/2)`).
    eigenvector: [f64; 2],
    /// Principal vector: minimum-norm solution of `(T_0 - λ) w = v`.
    principal: [f64; 2],
    orientation: f64,
    det_m0: f64,
    epsilon0: f64,
}

impl BandEdgeNormalForm {
    /// Build the normal form and calibrate its validity radius against the
    /// whole ensemble.
    pub fn new(
        ensemble: &ModelEnsemble,
        spectra: &[BlockSpectrum],
        edge: &BandEdge,
        opts: &CalibrationOptions,
    ) -> Result<Self, NormalFormError> {
        let mut nf = Self::uncalibrated(ensemble.blocks[edge.block_index].clone(), edge.clone())?;
        nf.epsilon0 = calibrate(&nf, ensemble, spectra, opts)?;
        Ok(nf)
    }

    /// Build the normal form primitives without ensemble calibration; the
    /// validity radius must be supplied by the caller.
    pub fn with_epsilon0(
        block: PeriodicBlock,
        edge: BandEdge,
        epsilon0: f64,
    ) -> Result<Self, NormalFormError> {
        let mut nf = Self::uncalibrated(block, edge)?;
        nf.epsilon0 = epsilon0;
        Ok(nf)
    }

    /// Like [`Self::with_epsilon0`] but with an explicit principal vector,
    /// for pinning hand-computed bases in tests.
    pub fn with_principal_vector(
        block: PeriodicBlock,
        edge: BandEdge,
        w: [f64; 2],
        epsilon0: f64,
    ) -> Result<Self, NormalFormError> {
        let mut nf = Self::uncalibrated(block, edge)?;
        let g = nf.shifted_transfer(0.0);
        nf.eigenvector = g.apply(w);
        nf.principal = w;
        nf.det_m0 = Mat2::from_columns(nf.eigenvector, nf.principal).det();
        nf.orientation = if nf.det_m0 < 0.0 { -1.0 } else { 1.0 };
        nf.epsilon0 = epsilon0;
        Ok(nf)
    }

    fn uncalibrated(block: PeriodicBlock, edge: BandEdge) -> Result<Self, NormalFormError> {
        let t0 = transfer_matrix(&block, edge.energy);
        let lambda = edge.lambda;
        let deviation = t0.trace().abs() - 2.0;
        if deviation.abs() > 1e-6 {
            return Err(NormalFormError::NotParabolic {
                energy: edge.energy,
                deviation,
            });
        }
        let g = Mat2::new(t0.a - lambda, t0.b, t0.c, t0.d - lambda);
        let scale = 1.0 + t0.max_norm();
        if g.max_norm() < 1e-9 * scale {
            return Err(NormalFormError::DegenerateEdge {
                energy: edge.energy,
            });
        }
        let dir = parabolic_direction(&t0, lambda);
        let v = [dir.cos(), dir.sin()];
        // Minimum-norm w solves (T_0 - λ) w = v using the larger row of the
        // rank-1 matrix; the other row is proportional.
        let r1 = [g.a, g.b];
        let r2 = [g.c, g.d];
        let (row, rhs) = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) {
            (r1, v[0])
        } else {
            (r2, v[1])
        };
        let norm2 = row[0] * row[0] + row[1] * row[1];
        let w = [row[0] * rhs / norm2, row[1] * rhs / norm2];
        let det_m0 = Mat2::from_columns(g.apply(w), w).det();
        let orientation = if det_m0 < 0.0 { -1.0 } else { 1.0 };
        Ok(Self {
            edge,
            block,
            lambda,
            eigenvector: v,
            principal: w,
            orientation,
            det_m0,
            epsilon0: 0.0,
        })
    }

    pub fn edge(&self) -> &BandEdge {
        &self.edge
    }

    pub fn block(&self) -> &PeriodicBlock {
        &self.block
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn eigenvector(&self) -> [f64; 2] {
        self.eigenvector
    }

    pub fn principal_vector(&self) -> [f64; 2] {
        self.principal
    }

    /// `T_ν` at energy `edge + ε`.
    pub fn transfer_at(&self, epsilon: f64) -> Mat2 {
        transfer_matrix(&self.block, self.edge.energy + epsilon)
    }

    fn shifted_transfer(&self, epsilon: f64) -> Mat2 {
        let t = self.transfer_at(epsilon);
        Mat2::new(t.a - self.lambda, t.b, t.c, t.d - self.lambda)
    }

    /// `κ_ε = 2 - λ tr(T_ε)`; positive on the elliptic side.
    pub fn kappa(&self, epsilon: f64) -> f64 {
        2.0 - self.lambda * self.transfer_at(epsilon).trace()
    }

    /// The target normal matrix `N(κ)`.
    pub fn normal_matrix(&self, kappa: f64) -> Mat2 {
        Mat2::new(self.lambda * (1.0 - kappa), 1.0, -kappa, self.lambda)
    }

    /// Basis change `M_ε = ((T_ε - λ) w | w)`.
    pub fn basis(&self, epsilon: f64) -> Mat2 {
        Mat2::from_columns(self.shifted_transfer(epsilon).apply(self.principal), self.principal)
    }

    /// `‖M_ε⁻¹ T_ε M_ε - N(κ_ε)‖_max`.
    pub fn conjugacy_residual(&self, epsilon: f64) -> f64 {
        let m = self.basis(epsilon);
        let m_inv = match m.inverse() {
            Some(inv) => inv,
            None => return f64::INFINITY,
        };
        let conj = m_inv.mul(&self.transfer_at(epsilon)).mul(&m);
        conj.sub(&self.normal_matrix(self.kappa(epsilon))).max_norm()
    }

    /// Orientation-normalized phase frame `F_ε` (`M_ε` with the second
    /// column sign-flipped when `det M_0 < 0`), checked for degeneracy.
    pub fn frame(&self, epsilon: f64) -> Result<Mat2, NormalFormError> {
        let m = self.basis(epsilon);
        let det = m.det();
        let threshold = 0.5 * self.det_m0.abs();
        if det.abs() < threshold {
            return Err(NormalFormError::DegenerateBasis {
                epsilon,
                det,
                threshold,
            });
        }
        Ok(if self.orientation < 0.0 {
            Mat2::new(m.a, -m.b, m.c, -m.d)
        } else {
            m
        })
    }

    /// `F_ε⁻¹ T_σ(E_ν + ε) F_ε`: the matrix driving the modified phase
    /// dynamics of block `σ` near this edge.
    pub fn conjugated_dynamics(
        &self,
        block: &PeriodicBlock,
        epsilon: f64,
    ) -> Result<Mat2, NormalFormError> {
        let f = self.frame(epsilon)?;
        let f_inv = f.inverse().ok_or(NormalFormError::DegenerateBasis {
            epsilon,
            det: f.det(),
            threshold: 0.5 * self.det_m0.abs(),
        })?;
        let t = transfer_matrix(block, self.edge.energy + epsilon);
        Ok(f_inv.mul(&t).mul(&f))
    }

    /// Check `|ε| ≤ ε₀`.
    pub fn check_epsilon(&self, epsilon: f64) -> Result<(), NormalFormError> {
        if epsilon.abs() > self.epsilon0 {
            return Err(NormalFormError::EpsilonOutOfRange {
                epsilon,
                epsilon0: self.epsilon0,
            });
        }
        Ok(())
    }
}

/// Largest validity radius for the edge against the ensemble.
///
/// The radius is capped at half the distance to the nearest other band edge
/// and then shrunk until, on a sampling grid of `[-ε₀, ε₀]`,
/// (i) every other block stays hyperbolic, (ii) the basis stays
/// nondegenerate, and (iii) the fixed directions of the conjugated
/// dynamics of every other block stay away from θ = 0.
pub fn epsilon0_calibrate(
    ensemble: &ModelEnsemble,
    spectra: &[BlockSpectrum],
    edge: &BandEdge,
    opts: &CalibrationOptions,
) -> Result<f64, NormalFormError> {
    let nf = BandEdgeNormalForm::uncalibrated(
        ensemble.blocks[edge.block_index].clone(),
        edge.clone(),
    )?;
    calibrate(&nf, ensemble, spectra, opts)
}

fn calibrate(
    nf: &BandEdgeNormalForm,
    ensemble: &ModelEnsemble,
    spectra: &[BlockSpectrum],
    opts: &CalibrationOptions,
) -> Result<f64, NormalFormError> {
    let edge = nf.edge();
    let active: Vec<usize> = (0..ensemble.blocks.len())
        .filter(|&i| ensemble.probabilities[i] > 0.0 || i == edge.block_index)
        .collect();

    let mut cap = f64::INFINITY;
    for &i in &active {
        for other in spectra[i].edges() {
            let d = (other.energy - edge.energy).abs();
            if d > 1e-9 {
                cap = cap.min(0.5 * d);
            }
        }
    }
    if !cap.is_finite() {
        return Err(NormalFormError::NoValidRadius {
            reason: "no reference gap: the edge is the only edge energy".to_string(),
        });
    }

    let mut candidate = cap;
    while candidate >= opts.floor {
        if calibration_holds(nf, ensemble, &active, candidate, opts) {
            return Ok(candidate);
        }
        candidate *= opts.shrink;
    }
    Err(NormalFormError::NoValidRadius {
        reason: format!(
            "conditions fail on every radius down to {:.3e} (cap {:.3e})",
            opts.floor, cap
        ),
    })
}

fn calibration_holds(
    nf: &BandEdgeNormalForm,
    ensemble: &ModelEnsemble,
    active: &[usize],
    radius: f64,
    opts: &CalibrationOptions,
) -> bool {
    let nu = nf.edge().block_index;
    let n = opts.grid.max(3);
    for i in 0..n {
        let eps = -radius + 2.0 * radius * i as f64 / (n - 1) as f64;
        let frame = match nf.frame(eps) {
            Ok(f) => f,
            Err(_) => return false,
        };
        let f_inv = match frame.inverse() {
            Some(inv) => inv,
            None => return false,
        };
        for &sigma in active {
            if sigma == nu {
                continue;
            }
            let t = transfer_matrix(&ensemble.blocks[sigma], nf.edge().energy + eps);
            if t.trace().abs() <= 2.0 {
                return false;
            }
            let b = f_inv.mul(&t).mul(&frame);
            for dir in hyperbolic_directions(&b) {
                if dir.abs() < opts.direction_margin {
                    return false;
                }
            }
        }
    }
    true
}

/// Fixed directions (mod π) of the projective action of a hyperbolic
/// unimodular matrix.
pub(crate) fn hyperbolic_directions(b: &Mat2) -> Vec<f64> {
    let trace = b.trace();
    let half = trace.abs() / 2.0;
    if half <= 1.0 {
        return Vec::new();
    }
    let root = (half * half - 1.0).sqrt();
    let lam1 = trace.signum() * (half + root);
    let lam2 = 1.0 / lam1;
    [lam1, lam2]
        .iter()
        .map(|&lam| {
            let g = Mat2::new(b.a - lam, b.b, b.c, b.d - lam);
            let k1 = [g.b, -g.a];
            let k2 = [g.d, -g.c];
            let k = if k1[0].hypot(k1[1]) >= k2[0].hypot(k2[1]) {
                k1
            } else {
                k2
            };
            principal_angle(k[0], k[1])
        })
        .collect()
}
