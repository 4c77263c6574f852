//! Deterministic CSV and JSON emission.
//!
//! All floats are written with 17 significant digits ('.' decimal,
//! LF-terminated rows, header row first), so re-running a command with the
//! same inputs reproduces byte-identical bodies.

use crate::estimators::IdsEstimate;
use crate::lifshitz::{BoundReport, CriticalInterval};
use crate::model::GENERATOR_VERSION;
use crate::normal_form::BandEdgeNormalForm;
use crate::prufer::PhaseShiftMap;
use crate::spectral::{BandEdge, BlockSpectrum};
use serde::Serialize;

/// 17-significant-digit scientific notation, bit-stable for golden files.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Bands table: one row per band of one block.
pub fn bands_csv(spectrum: &BlockSpectrum) -> String {
    let mut out = String::from("j,e_minus,e_plus,lambda_minus,lambda_plus\n");
    for (j, band) in spectrum.structure.bands.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            j + 1,
            g17(band.lower),
            g17(band.upper),
            band.lambda_lower,
            band.lambda_upper
        ));
    }
    out
}

/// IDS curve rows `(E, N)`.
pub fn ids_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("energy,ids\n");
    for &(e, n) in points {
        out.push_str(&format!("{},{}\n", g17(e), g17(n)));
    }
    out
}

/// IDS curve with replica errors `(E, N, σ)`.
pub fn ids_csv_with_errors(points: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("energy,ids,std_error\n");
    for &(e, n, s) in points {
        out.push_str(&format!("{},{},{}\n", g17(e), g17(n), g17(s)));
    }
    out
}

/// Phase portrait at one ε: θ against the shift of every block.
pub fn portrait_csv(labels: &[&str], thetas: &[f64], maps: &[PhaseShiftMap]) -> String {
    let mut out = String::from("theta");
    for label in labels {
        out.push_str(&format!(",s_{label}"));
    }
    out.push('\n');
    for &theta in thetas {
        out.push_str(&g17(theta));
        for map in maps {
            out.push(',');
            out.push_str(&g17(map.eval(theta)));
        }
        out.push('\n');
    }
    out
}

/// Normal-form diagnostic over an ε grid.
pub fn normal_form_csv(nf: &BandEdgeNormalForm, eps_grid: &[f64]) -> String {
    let mut out = String::from("epsilon,kappa,det_m,residual\n");
    for &eps in eps_grid {
        out.push_str(&format!(
            "{},{},{},{}\n",
            g17(eps),
            g17(nf.kappa(eps)),
            g17(nf.basis(eps).det()),
            g17(nf.conjugacy_residual(eps))
        ));
    }
    out
}

/// Tail-scan rows.
#[derive(Debug, Clone, Serialize)]
pub struct TailPoint {
    pub epsilon: f64,
    pub delta_n_nu: f64,
    pub estimate: IdsEstimate,
}

/// Full JSON records of a tail scan (method, budgets, warnings, generator).
pub fn tail_records_json(points: &[TailPoint]) -> String {
    serde_json::to_string_pretty(points).expect("serializable")
}

/// Full JSON records of a bound verification.
pub fn verify_records_json(reports: &[BoundReport]) -> String {
    serde_json::to_string_pretty(reports).expect("serializable")
}

pub fn tail_csv(points: &[TailPoint]) -> String {
    let mut out = String::from("epsilon,delta_n_nu,value,std_error,iterations,replicas\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            g17(p.epsilon),
            g17(p.delta_n_nu),
            g17(p.estimate.value),
            g17(p.estimate.std_error),
            p.estimate.iterations,
            p.estimate.replicas
        ));
    }
    out
}

/// Bound-verification rows.
pub fn verify_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from(
        "epsilon,delta_n_nu,k,lower,upper_envelope,measured,stderr,ratio_upper,pass_lower,in_domain\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            g17(r.epsilon),
            g17(r.delta_n_nu),
            r.k_lower,
            g17(r.lower_bound),
            g17(r.upper_envelope),
            g17(r.measured.value),
            g17(r.measured.std_error),
            g17(r.ratio_upper),
            r.pass_lower,
            r.in_domain
        ));
    }
    out
}

/// Edge identity carried into summaries.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeSummary {
    pub block_label: String,
    pub block_index: usize,
    pub energy: f64,
    pub side: String,
    pub lambda: f64,
    pub gap_label: usize,
    pub ids_at_edge: f64,
}

impl EdgeSummary {
    pub fn new(edge: &BandEdge, label: &str) -> Self {
        Self {
            block_label: label.to_string(),
            block_index: edge.block_index,
            energy: edge.energy,
            side: edge.side.to_string(),
            lambda: edge.lambda,
            gap_label: edge.gap_label,
            ids_at_edge: edge.ids_at_edge(),
        }
    }
}

/// Verification summary persisted next to the verify CSV.
#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub version: String,
    pub generator: &'static str,
    pub edge: EdgeSummary,
    pub epsilon0: f64,
    pub all_pass_lower: bool,
    /// Supremum of the measured upper-bound ratio over the grid.
    pub fitted_c: f64,
    /// Max/min of the ratio over the grid: the uniformity window.
    pub ratio_spread: f64,
    /// Measured δN span across the grid.
    pub delta_span: f64,
    pub exponent_estimate: Option<f64>,
    pub critical_interval: Option<CriticalInterval>,
}

impl VerifySummary {
    pub fn from_reports(
        edge: EdgeSummary,
        epsilon0: f64,
        reports: &[BoundReport],
        exponent_estimate: Option<f64>,
        critical_interval: Option<CriticalInterval>,
    ) -> Self {
        let in_domain: Vec<&BoundReport> = reports.iter().filter(|r| r.in_domain).collect();
        let all_pass_lower = in_domain.iter().all(|r| r.pass_lower);
        let ratios: Vec<f64> = in_domain
            .iter()
            .map(|r| r.ratio_upper)
            .filter(|x| x.is_finite())
            .collect();
        let fitted_c = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let ratio_min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio_spread = if ratio_min > 0.0 && ratio_min.is_finite() {
            fitted_c / ratio_min
        } else {
            f64::INFINITY
        };
        let values: Vec<f64> = in_domain
            .iter()
            .map(|r| r.measured.value)
            .filter(|&v| v > 0.0)
            .collect();
        let delta_span = if values.is_empty() {
            0.0
        } else {
            values.iter().cloned().fold(0.0_f64, f64::max)
                / values.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            generator: GENERATOR_VERSION,
            edge,
            epsilon0,
            all_pass_lower,
            fitted_c,
            ratio_spread,
            delta_span,
            exponent_estimate,
            critical_interval,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PeriodicBlock;

    #[test]
    fn g17_is_stable_and_full_precision() {
        assert_eq!(g17(1.0), "1.0000000000000000e0");
        let x = std::f64::consts::PI;
        let parsed: f64 = g17(x).parse().unwrap();
        assert_eq!(parsed.to_bits(), x.to_bits());
    }

    #[test]
    fn bands_csv_is_deterministic() {
        let s = BlockSpectrum::new(PeriodicBlock::laplacian()).unwrap();
        let a = bands_csv(&s);
        let b = bands_csv(&s);
        assert_eq!(a, b);
        assert!(a.starts_with("j,e_minus,e_plus"));
        assert_eq!(a.lines().count(), 2);
        assert!(a.ends_with('\n'));
    }

    #[test]
    fn ids_csv_shape() {
        let body = ids_csv(&[(0.0, 0.5), (1.0, 0.75)]);
        assert_eq!(body.lines().count(), 3);
        assert!(body.contains("5.0000000000000000e-1"));
    }
}
