use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use simplex_obs::discretization::SimplicialMesh;
use simplex_obs::geometry::{SimplexSpec, VolumeEstimate};
use simplex_obs::observability::{remainder_sweep, FemProblem, ObservabilityReport};
use simplex_obs::opalgebra::{parse_expr, random_spd, verify_commutator_lemma};
use simplex_obs::Simplex;

use crate::config::{RunConfig, SimplexChoice, Thresholds};
use crate::error::{CliError, CliResult};

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn encode_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Encode(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Reports as RFC 4180 CSV with a header row.
pub fn reports_csv(reports: &[ObservabilityReport]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).map_err(|e| CliError::Encode(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Encode(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Encode(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

pub fn evaluate_thresholds(t: &Thresholds, reports: &[ObservabilityReport], slope: f64) -> Vec<CheckResult> {
    let mut checks = Vec::new();
    if let Some(band) = t.ratio_band {
        let worst = reports.iter().map(|r| (r.ratio - 1.0).abs()).fold(0.0, f64::max);
        checks.push(CheckResult { name: format!("max |ratio - 1| <= {band}"), value: worst, passed: worst <= band });
    }
    if let (Some(tol), Some(last)) = (t.final_ratio_tol, reports.last()) {
        let dev = (last.ratio - 1.0).abs();
        checks.push(CheckResult { name: format!("|ratio(T={}) - 1| <= {tol}", last.horizon), value: dev, passed: dev <= tol });
    }
    if let Some([lo, hi]) = t.slope_range {
        checks.push(CheckResult {
            name: format!("remainder slope in [{lo}, {hi}]"),
            value: slope,
            passed: slope >= lo && slope <= hi,
        });
    }
    checks
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub simplex: SimplexSpec,
    pub face: usize,
    pub dim: usize,
    pub levels: u32,
    pub dt_factor: f64,
    pub dt: f64,
    pub dt_max: f64,
    pub lambda_max: f64,
    pub seed: u64,
    pub reports: Vec<ObservabilityReport>,
    pub slope: f64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

pub struct VerifyOutcome {
    pub summary: VerifySummary,
    pub csv: String,
    pub json: String,
}

/// Runs the T-sweep, writes the configured CSV/JSON files and reports whether
/// every configured threshold passed.
pub fn verify_theorem(config: &RunConfig) -> CliResult<VerifyOutcome> {
    let run = config.validate(3)?;
    let sweep = remainder_sweep(&run.simplex, run.face, run.u0, run.u1, &run.t_list, &run.settings)?;
    let checks = evaluate_thresholds(&config.thresholds, &sweep.reports, sweep.slope);
    let summary = VerifySummary {
        simplex: run.simplex.to_spec(),
        face: run.face,
        dim: run.simplex.dim(),
        levels: run.settings.levels,
        dt_factor: run.settings.dt_factor,
        dt: sweep.dt,
        dt_max: sweep.dt_max,
        lambda_max: sweep.lambda_max,
        seed: run.seed,
        passed: checks.iter().all(|c| c.passed),
        reports: sweep.reports,
        slope: sweep.slope,
        checks,
    };
    let csv = reports_csv(&summary.reports)?;
    let json = encode_json(&summary)?;
    if let Some(path) = &config.outputs.csv {
        write_file(path, &csv)?;
    }
    if let Some(path) = &config.outputs.json {
        write_file(path, &json)?;
    }
    Ok(VerifyOutcome { summary, csv, json })
}

#[derive(Debug, Clone)]
pub struct CommutatorArgs {
    pub count: usize,
    pub min_dim: usize,
    pub max_dim: usize,
    pub seed: u64,
    pub expr: Option<String>,
}

impl Default for CommutatorArgs {
    fn default() -> Self {
        CommutatorArgs { count: 100, min_dim: 2, max_dim: 5, seed: 7, expr: None }
    }
}

pub struct CommutatorOutcome {
    pub output: String,
    pub passed: bool,
}

/// Either evaluates one operator expression to canonical form, or checks
/// `[P, x·∇] = 2P` exactly for `count` seeded random SPD coefficient matrices.
pub fn check_commutator(args: &CommutatorArgs) -> CliResult<CommutatorOutcome> {
    if let Some(text) = &args.expr {
        let op = parse_expr(text)?;
        return Ok(CommutatorOutcome { output: format!("{op}\n"), passed: true });
    }
    if args.min_dim == 0 || args.max_dim > 6 || args.min_dim > args.max_dim {
        return Err(CliError::Config(format!("dims {}..={} must lie within 1..=6", args.min_dim, args.max_dim)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let span = args.max_dim - args.min_dim + 1;
    let mut output = String::new();
    let mut residual_terms = 0;
    for i in 0..args.count {
        let dim = args.min_dim + i % span;
        let k = random_spd(dim, &mut rng);
        let check = verify_commutator_lemma(&k);
        if !check.holds {
            let _ = writeln!(output, "matrix {i} (dim {dim}): residual {}", check.residual);
        }
        residual_terms += check.residual.len();
    }
    let _ = writeln!(
        output,
        "checked {} matrices (dims {}-{}, seed {}): {} residual terms",
        args.count, args.min_dim, args.max_dim, args.seed, residual_terms
    );
    Ok(CommutatorOutcome { output, passed: residual_terms == 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceRow {
    pub index: usize,
    pub area: f64,
    pub normal: Vec<f64>,
    pub height: f64,
    /// Predicted flux per unit time and unit energy.
    pub flux_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryReport {
    pub dim: usize,
    pub volume: f64,
    pub det: f64,
    pub faces: Vec<FaceRow>,
    pub monte_carlo: Option<VolumeEstimate>,
}

pub fn geometry_report(s: &Simplex, mc: Option<(usize, u64)>) -> CliResult<GeometryReport> {
    let faces = s
        .faces()
        .into_iter()
        .map(|f| {
            Ok(FaceRow {
                index: f.index,
                area: f.area,
                normal: f.normal.iter().copied().collect(),
                height: s.height(f.index)?,
                flux_rate: s.predicted_flux_rate(f.index, 1.0)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let monte_carlo = mc.map(|(samples, seed)| s.monte_carlo_volume(samples, seed)).transpose()?;
    Ok(GeometryReport { dim: s.dim(), volume: s.volume(), det: s.det(), faces, monte_carlo })
}

impl GeometryReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dim     {}", self.dim);
        let _ = writeln!(out, "volume  {}", self.volume);
        let _ = writeln!(out, "det A   {}", self.det);
        let _ = writeln!(out, "{:<5} {:<22} {:<22} {:<22} normal", "face", "area", "height", "flux/energy");
        for f in &self.faces {
            let normal: Vec<String> = f.normal.iter().map(|c| format!("{:.6}", if c.abs() < 5e-7 { 0.0 } else { *c })).collect();
            let _ = writeln!(out, "{:<5} {:<22} {:<22} {:<22} ({})", f.index, f.area, f.height, f.flux_rate, normal.join(", "));
        }
        if let Some(mc) = &self.monte_carlo {
            let z = (mc.estimate - self.volume) / mc.std_error;
            let _ = writeln!(
                out,
                "monte carlo volume {} +/- {} ({} samples, z = {z:.3})",
                mc.estimate, mc.std_error, mc.samples
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub e_h: f64,
    pub e_lf: f64,
    pub flux: f64,
    pub cumulative_flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub horizon: f64,
    pub steps: usize,
    pub dt: f64,
    pub dt_max: f64,
    pub interior_dofs: usize,
    pub continuous_drift: f64,
    pub leapfrog_drift: f64,
    pub report: ObservabilityReport,
}

pub struct SimulateOutcome {
    pub summary: SimulateSummary,
    pub ledger_csv: String,
}

/// A single run to `horizon` (default: the last entry of `t_list`) with the full
/// per-step energy and flux ledger.
pub fn simulate(config: &RunConfig, horizon: Option<f64>, ledger: Option<&PathBuf>) -> CliResult<SimulateOutcome> {
    let run = config.validate(1)?;
    let horizon = horizon.unwrap_or(*run.t_list.last().expect("validated non-empty"));
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::Config(format!("horizon {horizon} must be positive")));
    }
    let problem = FemProblem::new(&run.simplex, run.face, run.u0.as_ref(), run.u1.as_ref(), &run.settings)?;
    let (series, energies, state) = problem.run(horizon)?;
    let measured = series.integral_to(horizon)?;
    let report = simplex_obs::observability::report(
        measured,
        horizon,
        &run.simplex,
        run.face,
        problem.energy,
        run.settings.levels,
        problem.dt,
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for (step, t) in energies.times.iter().enumerate() {
        w.serialize(LedgerRow {
            step,
            t: *t,
            e_h: energies.continuous[step],
            e_lf: energies.leapfrog[step],
            flux: series.samples[step],
            cumulative_flux: series.cumulative[step],
        })
        .map_err(|e| CliError::Encode(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Encode(e.to_string()))?;
    let ledger_csv = String::from_utf8(bytes).map_err(|e| CliError::Encode(e.to_string()))?;
    if let Some(path) = ledger {
        write_file(path, &ledger_csv)?;
    }
    Ok(SimulateOutcome {
        summary: SimulateSummary {
            horizon,
            steps: state.step_index,
            dt: problem.dt,
            dt_max: problem.dt_max,
            interior_dofs: problem.system.len(),
            continuous_drift: energies.continuous_drift(),
            leapfrog_drift: energies.leapfrog_drift(),
            report,
        },
        ledger_csv,
    })
}

pub fn simulate_summary_json(summary: &SimulateSummary) -> CliResult<String> {
    encode_json(summary)
}

/// Mesh of a simplex as JSON.
pub fn mesh_dump(simplex: &SimplexChoice, levels: u32) -> CliResult<String> {
    let s = simplex.build()?;
    if levels.saturating_mul(s.dim() as u32) > crate::config::MAX_CELLS_LOG2 {
        return Err(CliError::Config(format!("levels {levels} too large for dimension {}", s.dim())));
    }
    let mesh = SimplicialMesh::refine(&s, levels)?;
    let mut text = serde_json::to_string(&mesh.to_dump()).map_err(|e| CliError::Encode(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn geometry_json(report: &GeometryReport) -> CliResult<String> {
    encode_json(report)
}
