//! Band structure, trace classification and the periodic integrated density
//! of states.
//!
//! For an `L`-periodic block the spectrum is `{E : |tr T(E)| <= 2}` where
//! `T(E)` is the one-period transfer matrix. The trace is a degree-`L`
//! polynomial in `E`, strictly monotone on each band, so the spectrum
//! consists of exactly `L` closed bands (adjacent ones may touch). Inside
//! band `j` (0-based) the integrated density of states is
//! `N(E) = (j + η̃/π) / L` with `η̃ ∈ [0, π]` the monotone branch of the
//! rotation number; on a gap it is pinned to the gap label `j/L`.

use crate::model::{transfer_matrix, transfer_matrix_derivative, Mat2, ModelEnsemble, PeriodicBlock};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Band-edge location accuracy used by the bisection refinement.
pub const EDGE_TOL: f64 = 1e-12;

/// `||tr| - 2|` below this counts as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;

/// Default bracketing grid density: points per unit energy and per `L²`.
pub const DEFAULT_GRID_DENSITY: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: f64 },
    #[error("search interval endpoint {endpoint} lies in the spectrum (trace {trace})")]
    SearchIntervalTooSmall { endpoint: f64, trace: f64 },
    #[error("found {found} bands for a period-{expected} block; raise the grid density")]
    BandCountMismatch { found: usize, expected: usize },
}

/// Trace regime of a unimodular matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyClass {
    /// `|tr| < 2`: eigenvalues `e^{±iη}`, conjugate to a rotation.
    Elliptic { rotation_eta: f64 },
    /// `|tr| = 2`: single eigenvector, `λ = ±1`.
    Parabolic { lambda: f64 },
    /// `|tr| > 2`: real eigenvalues `λ, 1/λ` with `|λ| > 1`.
    Hyperbolic { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedEnergy {
    pub trace: f64,
    pub kind: EnergyClass,
}

impl ClassifiedEnergy {
    pub fn is_elliptic(&self) -> bool {
        matches!(self.kind, EnergyClass::Elliptic { .. })
    }
    pub fn is_hyperbolic(&self) -> bool {
        matches!(self.kind, EnergyClass::Hyperbolic { .. })
    }
    pub fn is_parabolic(&self) -> bool {
        matches!(self.kind, EnergyClass::Parabolic { .. })
    }
}

/// Classify a unimodular matrix by its trace.
///
/// `tol` is the half-width of the parabolic window around `|tr| = 2`.
pub fn classify(t: &Mat2, tol: f64) -> Result<ClassifiedEnergy, SpectralError> {
    let det = t.det();
    let scale = 1.0 + t.max_norm() * t.max_norm();
    if (det - 1.0).abs() > 1e-9 * scale {
        return Err(SpectralError::NotUnimodular { det });
    }
    let trace = t.trace();
    let kind = if (trace.abs() - 2.0).abs() <= tol {
        EnergyClass::Parabolic {
            lambda: trace.signum(),
        }
    } else if trace.abs() < 2.0 {
        EnergyClass::Elliptic {
            rotation_eta: (trace / 2.0).clamp(-1.0, 1.0).acos(),
        }
    } else {
        let half = trace.abs() / 2.0;
        let lambda = trace.signum() * (half + (half * half - 1.0).sqrt());
        EnergyClass::Hyperbolic { lambda }
    };
    Ok(ClassifiedEnergy { trace, kind })
}

/// Which side of a band an edge bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSide {
    Lower,
    Upper,
}

impl std::fmt::Display for EdgeSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgeSide::Lower => write!(f, "lower"),
            EdgeSide::Upper => write!(f, "upper"),
        }
    }
}

/// One closed band `[lower, upper]` with the parabolic `λ = ±1` at each end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
}

/// Sorted disjoint bands of one block (adjacent bands may share an endpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub bands: Vec<Band>,
}

impl BandStructure {
    /// Energies where two consecutive bands touch.
    pub fn touching_points(&self) -> Vec<f64> {
        self.bands
            .windows(2)
            .filter(|w| w[1].lower - w[0].upper <= EDGE_TOL * 10.0)
            .map(|w| w[0].upper)
            .collect()
    }
}

/// A band edge of one block within an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEdge {
    pub energy: f64,
    /// Index of the owning block within its ensemble.
    pub block_index: usize,
    pub side: EdgeSide,
    /// Parabolic eigenvalue `±1` (sign of the trace at the edge).
    pub lambda: f64,
    /// Direction of the parabolic eigenvector, in `[-π/2, π/2)`.
    pub eigenvector_direction: f64,
    /// Integer `m` with `N(edge) = m / L` (the gap label).
    pub gap_label: usize,
    pub period: usize,
    /// True when a neighbouring band shares this energy.
    pub touching: bool,
}

impl BandEdge {
    pub fn ids_at_edge(&self) -> f64 {
        self.gap_label as f64 / self.period as f64
    }

    /// Signed energy at distance `epsilon` into the spectrum (`epsilon > 0`)
    /// or into the gap (`epsilon < 0`).
    pub fn energy_at(&self, epsilon: f64) -> f64 {
        match self.side {
            EdgeSide::Lower => self.energy + epsilon,
            EdgeSide::Upper => self.energy - epsilon,
        }
    }
}

/// Options for the band scan.
#[derive(Debug, Clone, Copy)]
pub struct BandScanOptions {
    /// Absolute accuracy of edge locations.
    pub edge_tol: f64,
    /// Grid points per unit energy per `L²`.
    pub grid_density: f64,
    /// Explicit search interval; `None` uses a padded Gershgorin enclosure.
    pub interval: Option<(f64, f64)>,
}

impl Default for BandScanOptions {
    fn default() -> Self {
        Self {
            edge_tol: EDGE_TOL,
            grid_density: DEFAULT_GRID_DENSITY,
            interval: None,
        }
    }
}

fn bisect_root(mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < tol {
            return mid;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Locate all bands of a block by sign-change bracketing of `tr ∓ 2`
/// followed by bisection; tangential (band-touching) edges are recovered
/// from the critical points of the trace.
pub fn band_structure(
    block: &PeriodicBlock,
    opts: &BandScanOptions,
) -> Result<BandStructure, SpectralError> {
    let period = block.period();
    let trace_at = |e: f64| transfer_matrix(block, e).trace();
    let trace_deriv_at = |e: f64| transfer_matrix_derivative(block, e).trace();

    let (lo, hi) = match opts.interval {
        Some((lo, hi)) => {
            for &endpoint in &[lo, hi] {
                let tr = trace_at(endpoint);
                if tr.abs() <= 2.0 {
                    return Err(SpectralError::SearchIntervalTooSmall {
                        endpoint,
                        trace: tr,
                    });
                }
            }
            (lo, hi)
        }
        None => {
            let (a, b) = block.spectral_enclosure();
            let pad = 1.0 + 1e-3 * (b - a).abs();
            (a - pad, b + pad)
        }
    };

    let span = hi - lo;
    let n_grid = ((opts.grid_density * (period * period) as f64 * span).ceil() as usize).max(64);
    let step = span / n_grid as f64;
    let grid: Vec<f64> = (0..=n_grid).map(|i| lo + step * i as f64).collect();
    let traces: Vec<f64> = grid.iter().map(|&e| trace_at(e)).collect();

    let mut edges: Vec<f64> = Vec::new();
    for target in [2.0_f64, -2.0] {
        for i in 0..n_grid {
            let f0 = traces[i] - target;
            let f1 = traces[i + 1] - target;
            if f0 == 0.0 {
                edges.push(grid[i]);
            } else if (f0 < 0.0) != (f1 < 0.0) {
                edges.push(bisect_root(grid[i], grid[i + 1], f0, opts.edge_tol, |e| {
                    trace_at(e) - target
                }));
            }
        }
    }

    // Critical points of the trace with |tr| = 2 are tangential band
    // touchings; sign-change bracketing cannot see them.
    if period > 1 {
        for i in 0..n_grid {
            let d0 = trace_deriv_at(grid[i]);
            let d1 = trace_deriv_at(grid[i + 1]);
            if (d0 < 0.0) != (d1 < 0.0) {
                let c = bisect_root(grid[i], grid[i + 1], d0, opts.edge_tol, trace_deriv_at);
                if (trace_at(c).abs() - 2.0).abs() <= PARABOLIC_TOL.max(100.0 * opts.edge_tol) {
                    edges.push(c);
                }
            }
        }
    }

    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 10.0 * opts.edge_tol);

    // Consecutive edge pairs with an elliptic midpoint are bands. A touching
    // point appears once in the list and closes one band while opening the
    // next, so adjacent bands share it as an endpoint.
    let lambda_of = |e: f64| if trace_at(e) > 0.0 { 1.0 } else { -1.0 };
    let mut bands = Vec::new();
    for w in edges.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if trace_at(mid).abs() < 2.0 {
            bands.push(Band {
                lower: w[0],
                upper: w[1],
                lambda_lower: lambda_of(w[0]),
                lambda_upper: lambda_of(w[1]),
            });
        }
    }

    if bands.len() != period {
        return Err(SpectralError::BandCountMismatch {
            found: bands.len(),
            expected: period,
        });
    }
    Ok(BandStructure { bands })
}

/// A block together with its computed band structure.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    pub block: PeriodicBlock,
    pub structure: BandStructure,
    pub block_index: usize,
}

impl BlockSpectrum {
    pub fn new(block: PeriodicBlock) -> Result<Self, SpectralError> {
        Self::with_options(block, 0, &BandScanOptions::default())
    }

    pub fn with_options(
        block: PeriodicBlock,
        block_index: usize,
        opts: &BandScanOptions,
    ) -> Result<Self, SpectralError> {
        let structure = band_structure(&block, opts)?;
        Ok(Self {
            block,
            structure,
            block_index,
        })
    }

    /// Integrated density of states of the periodic operator at `energy`.
    pub fn ids(&self, energy: f64) -> f64 {
        let period = self.block.period() as f64;
        let bands = &self.structure.bands;
        if energy < bands[0].lower {
            return 0.0;
        }
        for (j, band) in bands.iter().enumerate() {
            if energy < band.lower {
                // gap between band j-1 and band j
                return j as f64 / period;
            }
            if energy <= band.upper {
                // Stored endpoints carry the gap label exactly; the in-band
                // branch would otherwise leak the O(√tol) van Hove error of
                // the edge location back into the label.
                if energy == band.lower {
                    return j as f64 / period;
                }
                if energy == band.upper {
                    return (j + 1) as f64 / period;
                }
                let trace = transfer_matrix(&self.block, energy).trace();
                let x = (trace / 2.0).clamp(-1.0, 1.0);
                // Monotone branch: η̃ runs 0 → π from the lower to the upper
                // edge; its direction is set by the trace sign at the lower edge.
                let eta = if band.lambda_lower > 0.0 {
                    x.acos()
                } else {
                    PI - x.acos()
                };
                return (j as f64 + eta / PI) / period;
            }
        }
        1.0
    }

    /// `δN(ε)` of the periodic operator at one of its own band edges.
    pub fn delta_ids(&self, edge: &BandEdge, epsilon: f64) -> f64 {
        match edge.side {
            EdgeSide::Lower => self.ids(edge.energy + epsilon) - self.ids(edge.energy),
            EdgeSide::Upper => self.ids(edge.energy) - self.ids(edge.energy - epsilon),
        }
    }

    /// All band edges of this block, lower and upper per band.
    pub fn edges(&self) -> Vec<BandEdge> {
        let touchings = self.structure.touching_points();
        let is_touching =
            |e: f64| touchings.iter().any(|&t| (t - e).abs() <= 100.0 * EDGE_TOL);
        let mut out = Vec::new();
        for (j, band) in self.structure.bands.iter().enumerate() {
            for (side, energy, lambda, label) in [
                (EdgeSide::Lower, band.lower, band.lambda_lower, j),
                (EdgeSide::Upper, band.upper, band.lambda_upper, j + 1),
            ] {
                let t = transfer_matrix(&self.block, energy);
                out.push(BandEdge {
                    energy,
                    block_index: self.block_index,
                    side,
                    lambda,
                    eigenvector_direction: parabolic_direction(&t, lambda),
                    gap_label: label,
                    period: self.block.period(),
                    touching: is_touching(energy),
                });
            }
        }
        out
    }

    /// The edge nearest to `energy`, if any lies within `tol`.
    pub fn edge_near(&self, energy: f64, tol: f64) -> Option<BandEdge> {
        self.edges()
            .into_iter()
            .filter(|e| (e.energy - energy).abs() <= tol)
            .min_by(|a, b| {
                (a.energy - energy)
                    .abs()
                    .total_cmp(&(b.energy - energy).abs())
            })
    }
}

/// Direction (mod π, in `[-π/2, π/2)`) of the kernel of `T - λ`.
pub(crate) fn parabolic_direction(t: &Mat2, lambda: f64) -> f64 {
    let g = Mat2::new(t.a - lambda, t.b, t.c, t.d - lambda);
    // kernel of a rank-1 [[g11, g12], [g21, g22]] is (g12, -g11) ∝ (g22, -g21)
    let k1 = [g.b, -g.a];
    let k2 = [g.d, -g.c];
    let k = if k1[0].hypot(k1[1]) >= k2[0].hypot(k2[1]) {
        k1
    } else {
        k2
    };
    principal_angle(k[0], k[1])
}

/// Angle of the vector `(x, y)` reduced mod π into `[-π/2, π/2)`.
pub(crate) fn principal_angle(x: f64, y: f64) -> f64 {
    let mut a = y.atan2(x);
    if a >= std::f64::consts::FRAC_PI_2 {
        a -= PI;
    } else if a < -std::f64::consts::FRAC_PI_2 {
        a += PI;
    }
    if a >= std::f64::consts::FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// Why an edge fails the hypotheses for the band-edge tail analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeRejection {
    /// Another block also has a band edge at this energy.
    SharedEdge { other_block: usize },
    /// The energy lies in the interior of the union of spectra.
    InteriorOfUnion { covering_block: usize },
    /// The parabolic eigenvector is (numerically) an eigenvector of another
    /// block's transfer matrix at the edge.
    EigenvectorCollision { other_block: usize, separation: f64 },
    /// Two bands of the owner touch at this energy.
    BandTouching,
}

impl std::fmt::Display for EdgeRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EdgeRejection::SharedEdge { other_block } => {
                write!(f, "edge shared with block {other_block}")
            }
            EdgeRejection::InteriorOfUnion { covering_block } => {
                write!(f, "interior of the spectrum of block {covering_block}")
            }
            EdgeRejection::EigenvectorCollision {
                other_block,
                separation,
            } => write!(
                f,
                "eigenvector collision with block {other_block} (separation {separation:.3e})"
            ),
            EdgeRejection::BandTouching => write!(f, "band touching"),
        }
    }
}

/// Outcome of the edge hypothesis scan over a whole ensemble.
#[derive(Debug, Clone)]
pub struct EdgeReport {
    pub spectra: Vec<BlockSpectrum>,
    pub qualified: Vec<BandEdge>,
    pub rejected: Vec<(BandEdge, EdgeRejection)>,
}

/// Find every band edge of every block that is a boundary point of the
/// union of spectra, belongs to exactly one block, and whose parabolic
/// eigenvector is not an eigenvector of any other block's transfer matrix.
pub fn find_shared_edges(ensemble: &ModelEnsemble, tol: f64) -> Result<EdgeReport, SpectralError> {
    let spectra: Vec<BlockSpectrum> = ensemble
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| BlockSpectrum::with_options(b.clone(), i, &BandScanOptions::default()))
        .collect::<Result<_, _>>()?;
    find_shared_edges_in(ensemble, &spectra, tol)
}

pub fn find_shared_edges_in(
    ensemble: &ModelEnsemble,
    spectra: &[BlockSpectrum],
    tol: f64,
) -> Result<EdgeReport, SpectralError> {
    let active: Vec<usize> = (0..ensemble.blocks.len())
        .filter(|&i| ensemble.probabilities[i] > 0.0)
        .collect();

    // Probe distance for the union-boundary test: safely below the smallest
    // separation between distinct edge energies.
    let mut all_edge_energies: Vec<f64> = Vec::new();
    for &i in &active {
        for edge in spectra[i].edges() {
            all_edge_energies.push(edge.energy);
        }
    }
    all_edge_energies.sort_by(f64::total_cmp);
    let mut min_sep = f64::INFINITY;
    for w in all_edge_energies.windows(2) {
        let d = w[1] - w[0];
        if d > 1e-7 {
            min_sep = min_sep.min(d);
        }
    }
    let probe = if min_sep.is_finite() {
        (0.25 * min_sep).min(1e-3)
    } else {
        1e-3
    };

    let angle_tol = tol.max(1e-9);
    let mut qualified = Vec::new();
    let mut rejected = Vec::new();

    for &nu in &active {
        for edge in spectra[nu].edges() {
            if edge.touching {
                rejected.push((edge, EdgeRejection::BandTouching));
                continue;
            }
            // (b) edge of exactly one block
            let mut shared_with = None;
            for &sigma in &active {
                if sigma == nu {
                    continue;
                }
                if spectra[sigma]
                    .edges()
                    .iter()
                    .any(|e| (e.energy - edge.energy).abs() <= tol.max(100.0 * EDGE_TOL))
                {
                    shared_with = Some(sigma);
                    break;
                }
            }
            if let Some(other) = shared_with {
                rejected.push((edge, EdgeRejection::SharedEdge { other_block: other }));
                continue;
            }
            // (a) boundary point of the union of spectra
            let outside = edge.energy_at(-probe);
            let mut covering = None;
            for &sigma in &active {
                let covered = spectra[sigma]
                    .structure
                    .bands
                    .iter()
                    .any(|b| b.lower < outside && outside < b.upper);
                if covered {
                    covering = Some(sigma);
                    break;
                }
            }
            if let Some(covering_block) = covering {
                rejected.push((edge, EdgeRejection::InteriorOfUnion { covering_block }));
                continue;
            }
            // (c) eigenvector of no other transfer matrix at the edge energy
            let v = [
                edge.eigenvector_direction.cos(),
                edge.eigenvector_direction.sin(),
            ];
            let mut collision = None;
            for &sigma in &active {
                if sigma == nu {
                    continue;
                }
                let image = transfer_matrix(&ensemble.blocks[sigma], edge.energy).apply(v);
                let norm = image[0].hypot(image[1]);
                let separation = (v[0] * image[1] - v[1] * image[0]).abs() / norm;
                if separation <= angle_tol {
                    collision = Some((sigma, separation));
                    break;
                }
            }
            if let Some((other_block, separation)) = collision {
                rejected.push((
                    edge,
                    EdgeRejection::EigenvectorCollision {
                        other_block,
                        separation,
                    },
                ));
                continue;
            }
            qualified.push(edge);
        }
    }

    Ok(EdgeReport {
        spectra: spectra.to_vec(),
        qualified,
        rejected,
    })
}
