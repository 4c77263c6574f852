//! Command-line front end: model ingestion, band structure, IDS curves,
//! phase portraits, tail scans and bound verification.
//!
//! Every run writes a manifest echoing the resolved configuration and code
//! version next to its outputs. CSV bodies are deterministic for a fixed
//! seed; only the leading `# generated_at_unix` comment line varies.

use clap::{Args, Parser, Subcommand};
use randjac_core::lifshitz::{critical_interval, critical_interval_violations};
use randjac_core::normal_form::CalibrationOptions;
use randjac_core::report::{self, EdgeSummary, TailPoint, VerifySummary};
use randjac_core::spectral::{BandEdge, BandScanOptions, BlockSpectrum, EdgeReport, EdgeSide};
use randjac_core::{
    build_maps, empirical_ids, lifshitz_exponent, rotation_ids, verify_bounds,
    BandEdgeNormalForm, ModelEnsemble, VerifyBudget, GENERATOR_VERSION,
};
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(name = "randjac", version, about = "Spectra and IDS tails of random block Jacobi operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Model JSON file: {"blocks":[{"label","t":[..],"v":[..]},..],"p":[..]}
    #[arg(long, global = true, default_value = "model.json")]
    model: PathBuf,
    /// Output directory (default: $RANDJAC_OUT or ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for all random streams
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Parabolic classification tolerance on ||tr| - 2|
    #[arg(long = "tol-parabolic", global = true, default_value_t = 1e-9)]
    tol_parabolic: f64,
    /// Band-edge location tolerance
    #[arg(long = "tol-edge", global = true, default_value_t = 1e-12)]
    tol_edge: f64,
    /// Shared-edge / eigenvector-collision tolerance
    #[arg(long = "tol-shared", global = true, default_value_t = 1e-8)]
    tol_shared: f64,
    /// Band-scan grid density (points per unit energy per L²)
    #[arg(long = "grid-density", global = true, default_value_t = 8.0)]
    grid_density: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file and report band edges and tail hypotheses.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Band table of one block.
    Bands {
        #[command(flatten)]
        common: CommonArgs,
        /// Block label
        #[arg(long)]
        block: String,
    },
    /// IDS curves on an energy grid (periodic per block and/or empirical).
    Ids {
        #[command(flatten)]
        common: CommonArgs,
        /// Emit the periodic IDS of this block
        #[arg(long)]
        block: Option<String>,
        /// Emit the Monte Carlo IDS of the full ensemble
        #[arg(long, default_value_t = false)]
        empirical: bool,
        #[arg(long = "e-min", allow_hyphen_values = true)]
        e_min: f64,
        #[arg(long = "e-max", allow_hyphen_values = true)]
        e_max: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Sites per replica for the empirical curve
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        replicas: u32,
    },
    /// Phase-shift portraits S_{ε,σ}(θ) over one projective period.
    Portrait {
        #[command(flatten)]
        common: CommonArgs,
        /// Band edge: "label:side[:band]" or an energy value
        #[arg(long, allow_hyphen_values = true)]
        edge: String,
        /// Signed energy offsets from the edge (comma separated)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 721)]
        points: usize,
    },
    /// δN(ε) curve over an ε grid via mean rotation numbers.
    TailScan {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, allow_hyphen_values = true)]
        edge: String,
        /// Explicit ε grid, comma separated
        #[arg(long = "eps-grid", value_delimiter = ',')]
        eps_grid: Vec<f64>,
        /// Geometric grid "min:max:count" (used when --eps-grid is empty)
        #[arg(long = "eps-geom")]
        eps_geom: Option<String>,
        /// Blocks per replica
        #[arg(long, default_value_t = 1_000_000)]
        m: u64,
        #[arg(long, default_value_t = 8)]
        replicas: u32,
    },
    /// Verify the two-sided tail bounds on an ε grid.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, allow_hyphen_values = true)]
        edge: String,
        #[arg(long = "eps-grid", value_delimiter = ',')]
        eps_grid: Vec<f64>,
        #[arg(long = "eps-geom")]
        eps_geom: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        m: u64,
        #[arg(long, default_value_t = 8)]
        replicas: u32,
    },
}

enum CliError {
    /// Exit 2: model, schema or argument resolution failure.
    Validation(String),
    /// Exit 3: a verified lower bound failed.
    BoundFailure(String),
    /// Exit 1: anything else.
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::BoundFailure(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::BoundFailure(m) | CliError::Internal(m) => m,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    generator: &'static str,
    model_path: String,
    out_dir: String,
    seed: u64,
    tolerances: ManifestTolerances,
    parameters: serde_json::Value,
    outputs: Vec<String>,
    generated_at_unix: u64,
}

#[derive(Serialize)]
struct ManifestTolerances {
    parabolic: f64,
    edge: f64,
    shared: f64,
    grid_density: f64,
}

struct Workspace {
    ensemble: ModelEnsemble,
    report: EdgeReport,
    common: CommonArgs,
    out_dir: PathBuf,
    outputs: Vec<String>,
}

impl Workspace {
    fn load(common: CommonArgs) -> Result<Self, CliError> {
        let text = fs::read_to_string(&common.model).map_err(|e| {
            CliError::Validation(format!("cannot read {}: {e}", common.model.display()))
        })?;
        let ensemble = ModelEnsemble::from_json(&text).map_err(CliError::Validation)?;
        let opts = BandScanOptions {
            edge_tol: common.tol_edge,
            grid_density: common.grid_density,
            interval: None,
        };
        let spectra: Vec<BlockSpectrum> = ensemble
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| BlockSpectrum::with_options(b.clone(), i, &opts))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let report =
            randjac_core::spectral::find_shared_edges_in(&ensemble, &spectra, common.tol_shared)
                .map_err(|e| CliError::Validation(e.to_string()))?;
        let out_dir = common
            .out
            .clone()
            .or_else(|| std::env::var_os("RANDJAC_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Self {
            ensemble,
            report,
            common,
            out_dir,
            outputs: Vec::new(),
        })
    }

    fn spectrum(&self, label: &str) -> Result<&BlockSpectrum, CliError> {
        self.ensemble
            .blocks
            .iter()
            .position(|b| b.label == label)
            .map(|i| &self.report.spectra[i])
            .ok_or_else(|| {
                let known: Vec<&str> =
                    self.ensemble.blocks.iter().map(|b| b.label.as_str()).collect();
                CliError::Validation(format!(
                    "unknown block {label:?}; model has {known:?}"
                ))
            })
    }

    /// Resolve "label:side[:band]" or a bare energy to a qualified edge.
    fn resolve_edge(&self, spec: &str) -> Result<BandEdge, CliError> {
        if let Ok(energy) = spec.parse::<f64>() {
            return self
                .report
                .qualified
                .iter()
                .min_by(|a, b| {
                    (a.energy - energy)
                        .abs()
                        .total_cmp(&(b.energy - energy).abs())
                })
                .cloned()
                .ok_or_else(|| self.no_edge_error("no qualified edge in the model"));
        }
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(CliError::Validation(format!(
                "edge spec {spec:?} is neither an energy nor \"label:side[:band]\""
            )));
        }
        let side = match parts[1] {
            "lower" => EdgeSide::Lower,
            "upper" => EdgeSide::Upper,
            other => {
                return Err(CliError::Validation(format!(
                    "edge side {other:?} must be \"lower\" or \"upper\""
                )))
            }
        };
        let block_index = self
            .ensemble
            .blocks
            .iter()
            .position(|b| b.label == parts[0])
            .ok_or_else(|| CliError::Validation(format!("unknown block {:?}", parts[0])))?;
        let band: Option<usize> = match parts.get(2) {
            Some(s) => Some(s.parse().map_err(|_| {
                CliError::Validation(format!("band index {:?} is not an integer", parts[2]))
            })?),
            None => None,
        };
        let matching: Vec<&BandEdge> = self
            .report
            .qualified
            .iter()
            .filter(|e| e.block_index == block_index && e.side == side)
            .filter(|e| match (band, side) {
                (None, _) => true,
                (Some(j), EdgeSide::Lower) => e.gap_label == j,
                (Some(j), EdgeSide::Upper) => e.gap_label == j + 1,
            })
            .collect();
        match matching.len() {
            1 => Ok(matching[0].clone()),
            0 => Err(self.no_edge_error(&format!("no qualified edge matches {spec:?}"))),
            _ => Err(CliError::Validation(format!(
                "{spec:?} is ambiguous: add a band index (\"label:side:band\")"
            ))),
        }
    }

    fn no_edge_error(&self, prefix: &str) -> CliError {
        let mut msg = prefix.to_string();
        if !self.report.rejected.is_empty() {
            msg.push_str("; rejected edges:");
            for (edge, reason) in &self.report.rejected {
                msg.push_str(&format!(
                    "\n  {} {} at {:.6}: {reason}",
                    self.ensemble.blocks[edge.block_index].label, edge.side, edge.energy
                ));
            }
        }
        CliError::Validation(msg)
    }

    fn normal_form(&self, edge: &BandEdge) -> Result<BandEdgeNormalForm, CliError> {
        BandEdgeNormalForm::new(
            &self.ensemble,
            &self.report.spectra,
            edge,
            &CalibrationOptions::default(),
        )
        .map_err(|e| CliError::Validation(e.to_string()))
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let stamped = format!("# generated_at_unix: {}\n{body}", unix_now());
        let path = self.out_dir.join(name);
        fs::write(&path, stamped)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        println!("wrote {}", path.display());
        Ok(())
    }

    fn finish(&self, command: &str, parameters: serde_json::Value) -> Result<(), CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            generator: GENERATOR_VERSION,
            model_path: self.common.model.display().to_string(),
            out_dir: self.out_dir.display().to_string(),
            seed: self.common.seed,
            tolerances: ManifestTolerances {
                parabolic: self.common.tol_parabolic,
                edge: self.common.tol_edge,
                shared: self.common.tol_shared,
                grid_density: self.common.grid_density,
            },
            parameters,
            outputs: self.outputs.clone(),
            generated_at_unix: unix_now(),
        };
        let path = self.out_dir.join(format!("{command}_manifest.json"));
        fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Pre-run budget heuristic: warn when the expected rotation count, with
/// the theorem lower bound standing in for δN, falls below 10.
fn warn_small_budgets(ws: &Workspace, edge: &BandEdge, nf: &BandEdgeNormalForm, grid: &[f64], m: u64) {
    let p_nu = ws.ensemble.probabilities[edge.block_index];
    let period = ws.ensemble.period() as f64;
    for &eps in grid {
        if eps <= 0.0 || eps > nf.epsilon0() {
            continue;
        }
        let tb = randjac_core::theorem_bounds(&ws.report.spectra[edge.block_index], edge, p_nu, eps);
        let expected = period * tb.lower * m as f64;
        if expected < 10.0 {
            eprintln!(
                "warning: eps {eps}: expected rotations {expected:.2} < 10 at m = {m} \
                 (lower-bound proxy); increase --m"
            );
        }
    }
}

fn resolve_eps_grid(explicit: &[f64], geom: &Option<String>) -> Result<Vec<f64>, CliError> {
    if !explicit.is_empty() {
        return Ok(explicit.to_vec());
    }
    let spec = geom.as_deref().ok_or_else(|| {
        CliError::Validation("provide --eps-grid or --eps-geom min:max:count".to_string())
    })?;
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Validation(format!(
            "--eps-geom {spec:?} is not min:max:count"
        )));
    }
    let min: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Validation(format!("bad --eps-geom min {:?}", parts[0])))?;
    let max: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Validation(format!("bad --eps-geom max {:?}", parts[1])))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| CliError::Validation(format!("bad --eps-geom count {:?}", parts[2])))?;
    if min.is_nan() || min <= 0.0 || max <= min || count < 2 {
        return Err(CliError::Validation(
            "--eps-geom needs 0 < min < max and count >= 2".to_string(),
        ));
    }
    Ok((0..count)
        .map(|i| min * (max / min).powf(i as f64 / (count - 1) as f64))
        .collect())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { common } => cmd_validate(common),
        Command::Bands { common, block } => cmd_bands(common, block),
        Command::Ids {
            common,
            block,
            empirical,
            e_min,
            e_max,
            points,
            n,
            replicas,
        } => cmd_ids(common, block, empirical, e_min, e_max, points, n, replicas),
        Command::Portrait {
            common,
            edge,
            eps,
            points,
        } => cmd_portrait(common, edge, eps, points),
        Command::TailScan {
            common,
            edge,
            eps_grid,
            eps_geom,
            m,
            replicas,
        } => cmd_tail_scan(common, edge, eps_grid, eps_geom, m, replicas),
        Command::Verify {
            common,
            edge,
            eps_grid,
            eps_geom,
            m,
            replicas,
        } => cmd_verify(common, edge, eps_grid, eps_geom, m, replicas),
    }
}

fn cmd_validate(common: CommonArgs) -> Result<(), CliError> {
    let ws = Workspace::load(common)?;
    println!(
        "model ok: {} blocks, period {}",
        ws.ensemble.blocks.len(),
        ws.ensemble.period()
    );
    for (block, (spectrum, &p)) in ws.ensemble.blocks.iter().zip(
        ws.report
            .spectra
            .iter()
            .zip(ws.ensemble.probabilities.iter()),
    ) {
        let bands: Vec<String> = spectrum
            .structure
            .bands
            .iter()
            .map(|b| format!("[{:.6}, {:.6}]", b.lower, b.upper))
            .collect();
        println!("  {} (p = {p}): bands {}", block.label, bands.join(" "));
    }
    println!("qualified edges:");
    for edge in &ws.report.qualified {
        println!(
            "  {}:{}:{} at {:.9} (lambda {}, ids {}/{})",
            ws.ensemble.blocks[edge.block_index].label,
            edge.side,
            edge.gap_label,
            edge.energy,
            edge.lambda,
            edge.gap_label,
            edge.period
        );
    }
    for (edge, reason) in &ws.report.rejected {
        println!(
            "  rejected {}:{} at {:.9}: {reason}",
            ws.ensemble.blocks[edge.block_index].label, edge.side, edge.energy
        );
    }
    ws.finish("validate", serde_json::json!({}))
}

fn cmd_bands(common: CommonArgs, block: String) -> Result<(), CliError> {
    let mut ws = Workspace::load(common)?;
    let spectrum = ws.spectrum(&block)?.clone();
    let body = report::bands_csv(&spectrum);
    ws.write(&format!("bands_{block}.csv"), &body)?;
    ws.finish("bands", serde_json::json!({ "block": block }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_ids(
    common: CommonArgs,
    block: Option<String>,
    empirical: bool,
    e_min: f64,
    e_max: f64,
    points: usize,
    n: usize,
    replicas: u32,
) -> Result<(), CliError> {
    if block.is_none() && !empirical {
        return Err(CliError::Validation(
            "nothing to do: pass --block LABEL and/or --empirical".to_string(),
        ));
    }
    if points < 2 || e_max <= e_min {
        return Err(CliError::Validation(
            "need e-min < e-max and at least 2 points".to_string(),
        ));
    }
    let seed = common.seed;
    let mut ws = Workspace::load(common)?;
    let grid: Vec<f64> = (0..points)
        .map(|i| e_min + (e_max - e_min) * i as f64 / (points - 1) as f64)
        .collect();
    if let Some(label) = &block {
        let spectrum = ws.spectrum(label)?.clone();
        let curve: Vec<(f64, f64)> = grid.iter().map(|&e| (e, spectrum.ids(e))).collect();
        ws.write(&format!("ids_periodic_{label}.csv"), &report::ids_csv(&curve))?;
    }
    if empirical {
        let mut curve = Vec::with_capacity(grid.len());
        for &e in &grid {
            let est = empirical_ids(&ws.ensemble, e, n, replicas, seed)
                .map_err(|err| CliError::Validation(err.to_string()))?;
            curve.push((e, est.value, est.std_error));
        }
        ws.write("ids_empirical.csv", &report::ids_csv_with_errors(&curve))?;
    }
    ws.finish(
        "ids",
        serde_json::json!({
            "block": block, "empirical": empirical,
            "e_min": e_min, "e_max": e_max, "points": points,
            "n": n, "replicas": replicas,
        }),
    )
}

fn cmd_portrait(
    common: CommonArgs,
    edge_spec: String,
    eps: Vec<f64>,
    points: usize,
) -> Result<(), CliError> {
    if eps.is_empty() {
        return Err(CliError::Validation("pass at least one --eps".to_string()));
    }
    let mut ws = Workspace::load(common)?;
    let edge = ws.resolve_edge(&edge_spec)?;
    let nf = ws.normal_form(&edge)?;
    let thetas: Vec<f64> = (0..points)
        .map(|i| -FRAC_PI_2 + PI * i as f64 / points as f64)
        .collect();
    let labels_owned: Vec<String> = ws.ensemble.blocks.iter().map(|b| b.label.clone()).collect();
    for (i, &e) in eps.iter().enumerate() {
        let maps = build_maps(&nf, &ws.ensemble, &ws.report.spectra, e)
            .map_err(|err| CliError::Validation(err.to_string()))?;
        let label_refs: Vec<&str> = labels_owned.iter().map(|s| s.as_str()).collect();
        let body = report::portrait_csv(&label_refs, &thetas, &maps);
        ws.write(&format!("portrait_{i:03}.csv"), &body)?;
    }
    // Normal-form diagnostic over the validity interval.
    let diag_grid: Vec<f64> = (0..=100)
        .map(|i| -nf.epsilon0() + 2.0 * nf.epsilon0() * i as f64 / 100.0)
        .collect();
    ws.write("normal_form.csv", &report::normal_form_csv(&nf, &diag_grid))?;
    ws.finish(
        "portrait",
        serde_json::json!({
            "edge": edge_spec, "edge_energy": edge.energy, "eps": eps,
            "points": points, "epsilon0": nf.epsilon0(),
        }),
    )
}

fn cmd_tail_scan(
    common: CommonArgs,
    edge_spec: String,
    eps_grid: Vec<f64>,
    eps_geom: Option<String>,
    m: u64,
    replicas: u32,
) -> Result<(), CliError> {
    let seed = common.seed;
    let mut ws = Workspace::load(common)?;
    let grid = resolve_eps_grid(&eps_grid, &eps_geom)?;
    let edge = ws.resolve_edge(&edge_spec)?;
    let nf = ws.normal_form(&edge)?;
    let owner = &ws.report.spectra[edge.block_index];
    warn_small_budgets(&ws, &edge, &nf, &grid, m);
    let mut pointsv = Vec::with_capacity(grid.len());
    for &eps in &grid {
        let estimate = rotation_ids(
            &ws.ensemble,
            &ws.report.spectra,
            &nf,
            eps,
            m,
            replicas,
            seed,
        )
        .map_err(|err| CliError::Validation(err.to_string()))?;
        for w in &estimate.warnings {
            eprintln!("warning: eps {eps}: {w}");
        }
        pointsv.push(TailPoint {
            epsilon: eps,
            delta_n_nu: owner.delta_ids(&edge, eps),
            estimate,
        });
    }
    pointsv.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let body = report::tail_csv(&pointsv);
    ws.write("tail_scan.csv", &body)?;
    ws.write("tail_scan.json", &report::tail_records_json(&pointsv))?;
    ws.finish(
        "tail-scan",
        serde_json::json!({
            "edge": edge_spec, "edge_energy": edge.energy,
            "eps_grid": grid, "m": m, "replicas": replicas,
            "epsilon0": nf.epsilon0(),
        }),
    )
}

fn cmd_verify(
    common: CommonArgs,
    edge_spec: String,
    eps_grid: Vec<f64>,
    eps_geom: Option<String>,
    m: u64,
    replicas: u32,
) -> Result<(), CliError> {
    let seed = common.seed;
    let mut ws = Workspace::load(common)?;
    let grid = resolve_eps_grid(&eps_grid, &eps_geom)?;
    let edge = ws.resolve_edge(&edge_spec)?;
    let nf = ws.normal_form(&edge)?;
    let budget = VerifyBudget {
        blocks_m: m,
        replicas,
        seed,
    };
    warn_small_budgets(&ws, &edge, &nf, &grid, m);
    let reports = verify_bounds(&ws.ensemble, &ws.report.spectra, &nf, &grid, &budget)
        .map_err(|err| CliError::Validation(err.to_string()))?;
    for r in &reports {
        for w in &r.measured.warnings {
            eprintln!("warning: eps {}: {w}", r.epsilon);
        }
    }
    let curve: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.in_domain)
        .map(|r| (r.epsilon, r.measured.value))
        .collect();
    let exponent = lifshitz_exponent(&curve).ok();
    let ci = critical_interval(&ws.ensemble, &ws.report.spectra, &nf, nf.epsilon0(), 512)
        .ok()
        .filter(|ci| {
            critical_interval_violations(ci, &ws.ensemble, &ws.report.spectra, &nf, 32, 17)
                .map(|v| v == 0)
                .unwrap_or(false)
        });
    let body = report::verify_csv(&reports);
    ws.write("verify.csv", &body)?;
    ws.write("verify_records.json", &report::verify_records_json(&reports))?;
    let label = &ws.ensemble.blocks[edge.block_index].label;
    let summary = VerifySummary::from_reports(
        EdgeSummary::new(&edge, label),
        nf.epsilon0(),
        &reports,
        exponent,
        ci,
    );
    let stamped = summary.to_json();
    let path = ws.out_dir.join("verify_summary.json");
    fs::write(&path, &stamped)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?;
    ws.outputs.push("verify_summary.json".to_string());
    println!("wrote {}", path.display());
    ws.finish(
        "verify",
        serde_json::json!({
            "edge": edge_spec, "edge_energy": edge.energy,
            "eps_grid": grid, "m": m, "replicas": replicas,
            "epsilon0": nf.epsilon0(),
        }),
    )?;
    if !summary.all_pass_lower {
        return Err(CliError::BoundFailure(
            "lower bound failed at one or more grid points (see verify.csv)".to_string(),
        ));
    }
    println!(
        "all lower bounds pass; fitted C = {:.6}, ratio spread = {:.3}",
        summary.fitted_c, summary.ratio_spread
    );
    Ok(())
}
