//! Free and modified Prüfer phase dynamics.
//!
//! The free Prüfer phase tracks the state vector `(t(n) u(n), u(n-1))` of a
//! solution of the eigenvalue equation in polar form; its lift is pinned by
//! keeping every one-site increment inside the open window `(-π/2, 3π/2)`,
//! which is the unique admissible branch for positive hoppings.
//!
//! Near a band edge the phases are transported into the normal-form frame
//! `F_ε` of [`crate::normal_form::BandEdgeNormalForm`]. One block of type σ
//! then acts on the transported phase by the lift of the projective action
//! of `F_ε⁻¹ T_σ F_ε`; subtracting the gap label `L π N_σ(E_ν)` centres the
//! map so that the parabolic fixed point of the edge-owner map sits at
//! θ = 0 and the rotation number of the composed random dynamics is
//! `L π δN(ε)`. The branch of each lift is pinned once per map by running
//! the free phase through a single block and transporting the endpoints,
//! never by guessing a nearest representative.
//!
//! Upper band edges are mirrored (θ ↦ -θ) into the lower-edge picture, so
//! the elliptic rotation is positive for both edge sides and interval
//! arguments can be stated once.

use crate::model::{transfer_matrix, Mat2, ModelEnsemble, PeriodicBlock};
use crate::normal_form::{BandEdgeNormalForm, NormalFormError};
use crate::spectral::{BlockSpectrum, EdgeSide};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PruferError {
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("word of length {word} is shorter than the requested {requested} blocks")]
    WordTooShort { word: usize, requested: usize },
    #[error("block {block}: ids {ids} at the edge energy is not a multiple of 1/L")]
    GapLabelMismatch { block: usize, ids: f64 },
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
}

/// One step of a Prüfer trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruferState {
    /// Continuous lift of the phase.
    pub theta: f64,
    /// `ln R` relative to the starting amplitude.
    pub log_amplitude: f64,
    /// Site counter (0 at the initial condition).
    pub site: usize,
}

/// Tolerance absorbed into window placements so that values within rounding
/// of a window boundary do not wrap by π.
const WINDOW_SLACK: f64 = 1e-12;

/// Representative of `raw` mod π in `[lo - slack, lo + π - slack)`.
fn place_in_window(raw: f64, lo: f64) -> f64 {
    let mut s = raw + ((lo - raw) / PI).ceil() * PI;
    while s < lo - WINDOW_SLACK {
        s += PI;
    }
    while s >= lo + PI - WINDOW_SLACK {
        s -= PI;
    }
    s
}

/// Representative of `raw` mod π in `(hi - π + slack, hi + slack]`.
fn place_below(raw: f64, hi: f64) -> f64 {
    let mut s = raw + ((hi - raw) / PI).floor() * PI;
    while s > hi + WINDOW_SLACK {
        s -= PI;
    }
    while s <= hi - PI + WINDOW_SLACK {
        s += PI;
    }
    s
}

/// Split a lift into `kπ + r` with `r ∈ [0, π)`.
fn reduce_mod_pi(theta: f64) -> (f64, f64) {
    let mut k = (theta / PI).floor();
    let mut r = theta - k * PI;
    if r >= PI {
        r -= PI;
        k += 1.0;
    }
    if r < 0.0 {
        r += PI;
        k -= 1.0;
    }
    (k, r)
}

#[inline]
fn free_step(u: &mut [f64; 2], theta: &mut f64, log_amp: &mut f64, t: f64, v: f64, energy: f64) {
    let w0 = (v - energy) / t * u[0] - t * u[1];
    let w1 = u[0] / t;
    let dot = u[0] * w0 + u[1] * w1;
    let cross = u[0] * w1 - u[1] * w0;
    let mut inc = cross.atan2(dot);
    // one-site increments live in (-π/2, 3π/2) for positive hoppings
    if inc < -FRAC_PI_2 {
        inc += 2.0 * PI;
    }
    debug_assert!(inc > -FRAC_PI_2 - 1e-9 && inc < 3.0 * FRAC_PI_2 + 1e-9);
    *theta += inc;
    let norm = w0.hypot(w1);
    *log_amp += norm.ln();
    u[0] = w0 / norm;
    u[1] = w1 / norm;
}

/// Evolve the free Prüfer phase and log-amplitude through a stream of
/// per-site `(t, v)` coefficients, starting from phase `theta0`.
///
/// Returns the trajectory including the initial state; `steps` sites are
/// consumed from the stream.
pub fn free_prufer_evolve(
    coefficients: impl IntoIterator<Item = (f64, f64)>,
    energy: f64,
    theta0: f64,
    steps: usize,
) -> Vec<PruferState> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut u = [theta0.cos(), theta0.sin()];
    let mut theta = theta0;
    let mut log_amp = 0.0;
    out.push(PruferState {
        theta,
        log_amplitude: log_amp,
        site: 0,
    });
    for (site, (t, v)) in coefficients.into_iter().take(steps).enumerate() {
        free_step(&mut u, &mut theta, &mut log_amp, t, v, energy);
        out.push(PruferState {
            theta,
            log_amplitude: log_amp,
            site: site + 1,
        });
    }
    out
}

/// Final `(theta, log_amplitude)` of a free Prüfer run, without storing the
/// trajectory.
pub(crate) fn free_prufer_final(
    coefficients: impl IntoIterator<Item = (f64, f64)>,
    energy: f64,
    theta0: f64,
    steps: usize,
) -> (f64, f64) {
    let mut u = [theta0.cos(), theta0.sin()];
    let mut theta = theta0;
    let mut log_amp = 0.0;
    for (t, v) in coefficients.into_iter().take(steps) {
        free_step(&mut u, &mut theta, &mut log_amp, t, v, energy);
    }
    (theta, log_amp)
}

/// Anchor `m(0) ∈ [-π, π)` of the angle lift of a matrix.
fn lift_anchor(m: &Mat2) -> f64 {
    let raw = m.c.atan2(m.a);
    if raw >= PI {
        raw - 2.0 * PI
    } else {
        raw
    }
}

/// Continuous lift of `θ ↦ arg(M (cos θ, sin θ))`.
///
/// Pinned by `m(0) ∈ [-π, π)` and `m(θ + π) = m(θ) ± π` (sign of `det M`);
/// strictly monotone with slope of that sign, bounded by the squared
/// singular-value ratio of `M`.
pub fn angle_lift_m(m: &Mat2, theta: f64) -> Result<f64, PruferError> {
    let det = m.det();
    if det == 0.0 || !det.is_finite() {
        return Err(PruferError::SingularMatrix);
    }
    let m0 = lift_anchor(m);
    let (k, r) = reduce_mod_pi(theta);
    let (sn, cs) = r.sin_cos();
    let w = m.apply([cs, sn]);
    let raw = w[1].atan2(w[0]);
    let val = if det > 0.0 {
        place_in_window(raw, m0)
    } else {
        place_below(raw, m0)
    };
    Ok(val + k * det.signum() * PI)
}

/// Lift of the phase-shift action of one block near a band edge.
///
/// Stores the conjugated matrix (mirrored for upper edges) and the pinned
/// lift value at θ = 0; evaluation reduces mod π and places the raw angle
/// in the window `[s0, s0 + π)` fixed by monotonicity.
#[derive(Debug, Clone)]
pub struct PhaseShiftMap {
    pub block_index: usize,
    pub epsilon: f64,
    matrix: Mat2,
    s0: f64,
}

impl PhaseShiftMap {
    /// Build the map for block `sigma` at energy offset `epsilon` from the
    /// edge. `gap_label` is the integer `L · N_σ(E_ν)`.
    pub fn new(
        nf: &BandEdgeNormalForm,
        sigma: &PeriodicBlock,
        sigma_index: usize,
        gap_label: i64,
        epsilon: f64,
    ) -> Result<Self, PruferError> {
        nf.check_epsilon(epsilon)?;
        let frame = nf.frame(epsilon)?;
        let frame_inv = frame.inverse().ok_or(PruferError::SingularMatrix)?;
        let energy = nf.edge().energy + epsilon;
        let t_sigma = transfer_matrix(sigma, energy);
        let b_base = frame_inv.mul(&t_sigma).mul(&frame);
        debug_assert!((b_base.det() - 1.0).abs() < 1e-6);

        // Branch pinning: run the free phase through one block from θ⁰ = 0,
        // transport both endpoints by the frame lift m = m_{F⁻¹}, subtract
        // the gap label. This anchors S at θ* = m(0).
        let m0 = lift_anchor(&frame_inv);
        let period = sigma.period();
        let coeffs = sigma
            .hoppings
            .iter()
            .zip(sigma.potentials.iter())
            .map(|(&t, &v)| (t, v));
        let (phi, _) = free_prufer_final(coeffs, energy, 0.0, period);
        let (k_phi, r_phi) = reduce_mod_pi(phi);
        let (sn, cs) = r_phi.sin_cos();
        let w = frame_inv.apply([cs, sn]);
        let m_phi = place_in_window(w[1].atan2(w[0]), m0) + k_phi * PI;
        let s_at_anchor = m_phi - gap_label as f64 * PI;

        // Transport the anchor value to θ = 0 through the reduced window.
        let (k_star, _r_star) = reduce_mod_pi(m0);
        let s_at_reduced = s_at_anchor - k_star * PI;
        let raw0 = b_base.c.atan2(b_base.a);
        let s0_base = place_below(raw0, s_at_reduced);

        // Mirror upper edges into the lower-edge picture: S ↦ -S(-θ).
        let (matrix, s0) = if nf.edge().side == EdgeSide::Upper {
            (
                Mat2::new(b_base.a, -b_base.b, -b_base.c, b_base.d),
                -s0_base,
            )
        } else {
            (b_base, s0_base)
        };
        Ok(Self {
            block_index: sigma_index,
            epsilon,
            matrix,
            s0,
        })
    }

    /// The conjugated (and possibly mirrored) dynamics matrix.
    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    /// Lift value at θ = 0.
    pub fn s_at_zero(&self) -> f64 {
        self.s0
    }

    /// Evaluate the lift on the reduced fundamental domain `r ∈ [0, π)`.
    #[inline]
    pub fn eval_reduced(&self, r: f64) -> f64 {
        let (sn, cs) = r.sin_cos();
        let x = self.matrix.a * cs + self.matrix.b * sn;
        let y = self.matrix.c * cs + self.matrix.d * sn;
        place_in_window(y.atan2(x), self.s0)
    }

    /// Evaluate the lift at any real θ.
    pub fn eval(&self, theta: f64) -> f64 {
        let (k, r) = reduce_mod_pi(theta);
        k * PI + self.eval_reduced(r)
    }
}

/// Build the phase-shift maps of every ensemble block at offset `epsilon`.
///
/// Gap labels `L N_σ(E_ν)` are read from the block spectra; they are exact
/// integers at a qualified edge (the edge owner sits at its own gap label,
/// every other block is inside a gap).
pub fn build_maps(
    nf: &BandEdgeNormalForm,
    ensemble: &ModelEnsemble,
    spectra: &[BlockSpectrum],
    epsilon: f64,
) -> Result<Vec<PhaseShiftMap>, PruferError> {
    let period = ensemble.period() as f64;
    let energy = nf.edge().energy;
    let mut maps = Vec::with_capacity(ensemble.blocks.len());
    for (idx, block) in ensemble.blocks.iter().enumerate() {
        let ids = spectra[idx].ids(energy) * period;
        let label = ids.round();
        if (ids - label).abs() > 1e-6 {
            return Err(PruferError::GapLabelMismatch { block: idx, ids });
        }
        maps.push(PhaseShiftMap::new(
            nf,
            block,
            idx,
            label as i64,
            epsilon,
        )?);
    }
    Ok(maps)
}

/// Exact-lift accumulator: `θ = half_turns · π + frac`, `frac ∈ [0, π)`.
///
/// The integer part never loses precision, so mean rotation numbers remain
/// resolvable after billions of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftState {
    half_turns: i64,
    frac: f64,
}

impl LiftState {
    pub fn new(theta0: f64) -> Self {
        let (k, r) = reduce_mod_pi(theta0);
        Self {
            half_turns: k as i64,
            frac: r,
        }
    }

    #[inline]
    pub fn apply(&mut self, map: &PhaseShiftMap) {
        let s = map.eval_reduced(self.frac);
        let mut q = (s / PI).floor();
        let mut frac = s - q * PI;
        if frac < 0.0 {
            frac += PI;
            q -= 1.0;
        }
        if frac >= PI {
            frac -= PI;
            q += 1.0;
        }
        self.half_turns += q as i64;
        self.frac = frac;
    }

    pub fn theta(&self) -> f64 {
        self.half_turns as f64 * PI + self.frac
    }

    /// Total lift advance since `start`.
    pub fn advance_since(&self, start: &LiftState) -> f64 {
        (self.half_turns - start.half_turns) as f64 * PI + (self.frac - start.frac)
    }
}

/// Compose the phase-shift maps along a word: `S_{σ_m} ∘ … ∘ S_{σ_1}(θ₀)`.
pub fn iterate_dynamics(
    maps: &[PhaseShiftMap],
    indices: &[u32],
    theta0: f64,
    blocks_m: usize,
) -> Result<f64, PruferError> {
    if indices.len() < blocks_m {
        return Err(PruferError::WordTooShort {
            word: indices.len(),
            requested: blocks_m,
        });
    }
    let start = LiftState::new(theta0);
    let mut state = start;
    for &idx in &indices[..blocks_m] {
        state.apply(&maps[idx as usize]);
    }
    Ok(theta0 + state.advance_since(&start))
}

/// Like [`iterate_dynamics`] but returning the whole trajectory.
pub fn iterate_trajectory(
    maps: &[PhaseShiftMap],
    indices: &[u32],
    theta0: f64,
    blocks_m: usize,
) -> Result<Vec<f64>, PruferError> {
    if indices.len() < blocks_m {
        return Err(PruferError::WordTooShort {
            word: indices.len(),
            requested: blocks_m,
        });
    }
    let start = LiftState::new(theta0);
    let mut state = start;
    let mut out = Vec::with_capacity(blocks_m + 1);
    out.push(theta0);
    for &idx in &indices[..blocks_m] {
        state.apply(&maps[idx as usize]);
        out.push(theta0 + state.advance_since(&start));
    }
    Ok(out)
}

/// Closed-form oracle for the edge-owner phase shift.
///
/// Evaluates `tan S = (±κ cos θ + λ sin θ) / (λ(1-κ) cos θ ∓ sin θ)` (sign
/// by total reflection parity), switching to the cotangent form when the
/// tangent denominator is the smaller of the two, and pins the branch by
/// continuity in κ from the parabolic fixed point `S(0) = 0`.
#[derive(Debug, Clone)]
pub struct ClosedFormShift {
    lambda: f64,
    kappa: f64,
    reflected: bool,
    s0: f64,
}

impl ClosedFormShift {
    pub fn new(nf: &BandEdgeNormalForm, epsilon: f64) -> Result<Self, PruferError> {
        nf.check_epsilon(epsilon)?;
        let lambda = nf.lambda();
        let kappa = nf.kappa(epsilon);
        let reflected = (nf.orientation() < 0.0) ^ (nf.edge().side == EdgeSide::Upper);
        // Continue the angle of the image of (1, 0) along κ' : 0 → κ; at
        // κ' = 0 the image is (λ, 0), i.e. S(0) = 0.
        let start = if lambda > 0.0 { 0.0 } else { PI };
        let mut prev = start;
        let steps = 64;
        for i in 1..=steps {
            let k = kappa * i as f64 / steps as f64;
            let (num, den) = num_den(lambda, k, reflected, 1.0, 0.0);
            let raw = num.atan2(den);
            prev = raw + 2.0 * PI * ((prev - raw) / (2.0 * PI)).round();
        }
        Ok(Self {
            lambda,
            kappa,
            reflected,
            s0: prev - start,
        })
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (k, r) = reduce_mod_pi(theta);
        let (sn, cs) = r.sin_cos();
        let (num, den) = num_den(self.lambda, self.kappa, self.reflected, cs, sn);
        let rep = if den.abs() >= num.abs() {
            (num / den).atan()
        } else {
            FRAC_PI_2 - (den / num).atan()
        };
        k * PI + place_in_window(rep, self.s0)
    }
}

#[inline]
fn num_den(lambda: f64, kappa: f64, reflected: bool, cs: f64, sn: f64) -> (f64, f64) {
    if reflected {
        (
            kappa * cs + lambda * sn,
            lambda * (1.0 - kappa) * cs - sn,
        )
    } else {
        (
            -kappa * cs + lambda * sn,
            lambda * (1.0 - kappa) * cs + sn,
        )
    }
}

/// Closed-form phase shift of the edge owner at one point.
pub fn closed_form_shift(
    nf: &BandEdgeNormalForm,
    epsilon: f64,
    theta: f64,
) -> Result<f64, PruferError> {
    Ok(ClosedFormShift::new(nf, epsilon)?.eval(theta))
}

/// Count fixed points of a lift over one projective period `[-π/2, π/2)`.
///
/// Transversal fixed points show up as sign changes of `S(θ) - θ` on the
/// cyclic grid; a tangential fixed point (the saddle-node collision) is
/// recovered as a near-zero minimum of `|S(θ) - θ|`.
pub fn count_fixed_points(map: impl Fn(f64) -> f64, grid_n: usize, tol: f64) -> usize {
    let n = grid_n.max(8) & !1; // even, so the grid hits θ = 0
    let g: Vec<f64> = (0..n)
        .map(|i| {
            let theta = -FRAC_PI_2 + PI * i as f64 / n as f64;
            map(theta) - theta
        })
        .collect();
    let mut roots = 0;
    for i in 0..n {
        if g[i] == 0.0 {
            roots += 1;
            continue;
        }
        let j = (i + 1) % n;
        if g[j] != 0.0 && (g[i] < 0.0) != (g[j] < 0.0) {
            roots += 1;
        }
    }
    if roots == 0 {
        let min = g.iter().fold(f64::INFINITY, |m, &x| m.min(x.abs()));
        if min < tol {
            roots = 1;
        }
    }
    roots
}
