//! Command-line front end for multitime controllability analysis.
//!
//! Exit codes: 0 success, 1 analytic failure (a requested check fails or a
//! transfer is infeasible), 2 usage/IO/schema errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use multitime::control::{plan_transfer, verify_transfer, TransferPlan};
use multitime::curve::{Multitime, PiecewiseCurve};
use multitime::demos;
use multitime::gramian::{
    curve_gramian, im_gramian_space, reversal_check, FamilyConfig, GramianConfig,
};
use multitime::propagator::{solve_state, ExprControl, Phase, PropagatorConfig};
use multitime::system::{
    check_control, check_ii4, check_ii6, lattice, MultitimeSystem, ResidualReport,
};

#[derive(Parser)]
#[command(
    name = "mtc",
    about = "Controllability analysis of multitime linear PDE systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run integrability residual checks on a system document.
    Check {
        system: PathBuf,
        /// Check the drift compatibility condition.
        #[arg(long)]
        ii4: bool,
        /// Check the gramian path-independence condition.
        #[arg(long)]
        ii6: bool,
        /// Check admissibility of a candidate control family (JSON file
        /// with "u": m matrices of k x 1 expression strings).
        #[arg(long)]
        control: Option<PathBuf>,
        /// Residual threshold override.
        #[arg(long)]
        tol: Option<f64>,
        /// Grid points per axis override.
        #[arg(long)]
        grid: Option<usize>,
        /// Write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the gramian of a curve between two multitimes.
    Gramian {
        system: PathBuf,
        /// Start point, comma-separated reals (e.g. 0,0).
        #[arg(long)]
        from: String,
        /// End point, comma-separated reals.
        #[arg(long)]
        to: String,
        /// Curve shape: "segment" or "staircase".
        #[arg(long, default_value = "segment")]
        curve: String,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the gramian matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        panels: Option<usize>,
    },
    /// Estimate the Im-gramian space over a seeded monotone curve family.
    W {
        system: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Number of randomized curves beyond the straight segment.
        #[arg(long, default_value_t = 8)]
        curves: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan and verify a phase transfer (t0, x0) -> (t, y).
    Transfer {
        system: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        x0: String,
        #[arg(long)]
        to: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the Cauchy solution under an expression control family.
    Simulate {
        system: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        x0: String,
        #[arg(long)]
        to: String,
        /// Control family JSON (same schema as `check --control`).
        #[arg(long)]
        control: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in demonstration scenario.
    Demo {
        /// Scenario id; see --list.
        id: Option<String>,
        /// List the scenario registry.
        #[arg(long)]
        list: bool,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failures that map to exit code 2 (usage, IO, schema, evaluation).
struct CliError(String);

impl From<multitime::Error> for CliError {
    fn from(e: multitime::Error) -> CliError {
        CliError(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError(e.to_string())
    }
}

type CliResult = Result<ExitCode, CliError>;

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MTC_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: MTC_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> CliResult {
    match cmd {
        Cmd::Check {
            system,
            ii4,
            ii6,
            control,
            tol,
            grid,
            out,
        } => cmd_check(system, ii4, ii6, control, tol, grid, out),
        Cmd::Gramian {
            system,
            from,
            to,
            curve,
            out,
            csv,
            steps,
            panels,
        } => cmd_gramian(system, &from, &to, &curve, out, csv, steps, panels),
        Cmd::W {
            system,
            from,
            to,
            curves,
            seed,
            out,
        } => cmd_w(system, &from, &to, curves, seed, out),
        Cmd::Transfer {
            system,
            from,
            x0,
            to,
            y,
            out,
        } => cmd_transfer(system, &from, &x0, &to, &y, out),
        Cmd::Simulate {
            system,
            from,
            x0,
            to,
            control,
            out,
        } => cmd_simulate(system, &from, &x0, &to, control, out),
        Cmd::Demo { id, list, out } => cmd_demo(id, list, out),
    }
}

fn load_sys(path: &PathBuf) -> Result<MultitimeSystem, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    Ok(MultitimeSystem::from_json(&text)?)
}

fn parse_point(text: &str, m: usize, what: &str) -> Result<Multitime, CliError> {
    let comps: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let comps = comps.map_err(|e| CliError(format!("{what} {text:?}: {e}")))?;
    if comps.len() != m {
        return Err(CliError(format!(
            "{what} {text:?} has {} components, expected {m}",
            comps.len()
        )));
    }
    Ok(Multitime::new(comps)?)
}

fn parse_vector(text: &str, n: usize, what: &str) -> Result<DVector<f64>, CliError> {
    let comps: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let comps = comps.map_err(|e| CliError(format!("{what} {text:?}: {e}")))?;
    if comps.len() != n {
        return Err(CliError(format!(
            "{what} {text:?} has {} components, expected {n}",
            comps.len()
        )));
    }
    Ok(DVector::from_vec(comps))
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn write_matrix_csv(path: &PathBuf, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut text = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[derive(Deserialize)]
struct ControlDocument {
    u: Vec<Vec<Vec<String>>>,
}

fn load_control(path: &PathBuf, sys: &MultitimeSystem) -> Result<Vec<multitime::expr::MatrixExpr>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError(format!("{}: {e}", path.display())))?;
    let doc: ControlDocument = serde_json::from_str(&text)?;
    if doc.u.len() != sys.m {
        return Err(CliError(format!(
            "control document has {} components, expected m = {}",
            doc.u.len(),
            sys.m
        )));
    }
    doc.u
        .iter()
        .map(|mat| {
            let entries: Result<Vec<_>, _> = mat
                .iter()
                .flatten()
                .map(|s| multitime::expr::parse_expr(s))
                .collect();
            Ok(multitime::expr::MatrixExpr::new(
                mat.len(),
                mat.first().map_or(0, Vec::len),
                entries?,
            )?)
        })
        .collect()
}

fn print_residual(report: &ResidualReport) {
    println!(
        "{}: {}  max residual {:.16e} (threshold {:.16e}) at t = {:?}, pair ({}, {}), {} samples, {} skipped",
        report.check,
        if report.pass { "pass" } else { "FAIL" },
        report.max_abs_residual,
        report.threshold,
        report.argmax_point,
        report.argmax_indices.0,
        report.argmax_indices.1,
        report.samples,
        report.skipped,
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    system: PathBuf,
    ii4: bool,
    ii6: bool,
    control: Option<PathBuf>,
    tol: Option<f64>,
    grid_per_axis: Option<usize>,
    out: Option<PathBuf>,
) -> CliResult {
    let sys = load_sys(&system)?;
    let threshold = tol.unwrap_or_else(|| sys.residual_tol());
    let grid = match grid_per_axis {
        Some(per_axis) => lattice(&sys.probe_box, per_axis),
        None => sys.default_grid(),
    };
    // With no selection, run the coefficient checks.
    let run_all = !ii4 && !ii6 && control.is_none();
    let mut reports = Vec::new();
    if ii4 || run_all {
        reports.push(check_ii4(&sys, &grid, threshold));
    }
    if ii6 || run_all {
        reports.push(check_ii6(&sys, &grid, threshold));
    }
    if let Some(path) = control {
        let u = load_control(&path, &sys)?;
        reports.push(check_control(&sys, &u, &grid, threshold)?);
    }
    for r in &reports {
        print_residual(r);
    }
    if let Some(path) = out {
        write_json(&path, &reports)?;
    }
    Ok(if reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Serialize)]
struct GramianReportDoc {
    curve: String,
    matrix: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    rank: usize,
    min_eigenvalue: f64,
    symmetry_residual: f64,
    reversal_residual: f64,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_gramian(
    system: PathBuf,
    from: &str,
    to: &str,
    curve_kind: &str,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    steps: Option<usize>,
    panels: Option<usize>,
) -> CliResult {
    let sys = load_sys(&system)?;
    let mut cfg = GramianConfig::from_system(&sys)?;
    if steps.is_some() || panels.is_some() {
        cfg.propagator = PropagatorConfig::new(
            steps.unwrap_or(cfg.propagator.steps_per_segment),
            panels.unwrap_or(cfg.propagator.panels_per_segment),
        )?;
    }
    let t0 = parse_point(from, sys.m, "--from")?;
    let t = parse_point(to, sys.m, "--to")?;
    let curve = match curve_kind {
        "segment" => PiecewiseCurve::segment(t0, t)?,
        "staircase" => PiecewiseCurve::staircase(t0, t)?,
        other => return Err(CliError(format!("unknown curve kind {other:?}"))),
    };
    let g = curve_gramian(&sys, &curve, &cfg)?;
    let rev = reversal_check(&sys, &curve, &cfg)?;
    let doc = GramianReportDoc {
        curve: g.curve_id.clone(),
        matrix: matrix_rows(&g.matrix),
        eigenvalues: g.eigenvalues.clone(),
        rank: g.rank(),
        min_eigenvalue: g.min_eigenvalue,
        symmetry_residual: g.symmetry_residual,
        reversal_residual: rev.residual,
    };
    println!("gramian of {}", doc.curve);
    for row in &doc.matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        println!("  [{}]", cells.join(", "));
    }
    println!(
        "eigenvalues {:?}\nrank {}  min eigenvalue {:.16e}\nsymmetry residual {:.16e}  reversal residual {:.16e}",
        doc.eigenvalues, doc.rank, doc.min_eigenvalue, doc.symmetry_residual, doc.reversal_residual
    );
    if let Some(path) = csv {
        write_matrix_csv(&path, &g.matrix)?;
    }
    if let Some(path) = out {
        write_json(&path, &doc)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct WReportDoc {
    dim: usize,
    basis: Vec<Vec<f64>>,
    per_curve: Vec<(String, usize)>,
    warning: Option<String>,
    seed: u64,
    curves: usize,
}

fn cmd_w(
    system: PathBuf,
    from: &str,
    to: &str,
    curves: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> CliResult {
    let sys = load_sys(&system)?;
    let cfg = GramianConfig::from_system(&sys)?;
    let t0 = parse_point(from, sys.m, "--from")?;
    let t = parse_point(to, sys.m, "--to")?;
    let rep = im_gramian_space(&sys, &t0, &t, &FamilyConfig { count: curves, seed }, &cfg)?;
    let doc = WReportDoc {
        dim: rep.subspace.dim(),
        basis: matrix_rows(rep.subspace.basis()),
        per_curve: rep.per_curve.clone(),
        warning: rep.warning.clone(),
        seed,
        curves,
    };
    println!("Im-gramian estimate: dimension {} of {}", doc.dim, sys.n);
    for row in &doc.basis {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        println!("  [{}]", cells.join(", "));
    }
    for (id, rank) in &doc.per_curve {
        println!("  rank {rank}  {id}");
    }
    if let Some(w) = &doc.warning {
        println!("warning: {w}");
    }
    if let Some(path) = out {
        write_json(&path, &doc)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TransferReportDoc {
    #[serde(flatten)]
    plan: TransferPlan,
    verification_error: f64,
}

fn cmd_transfer(
    system: PathBuf,
    from: &str,
    x0: &str,
    to: &str,
    y: &str,
    out: Option<PathBuf>,
) -> CliResult {
    let sys = load_sys(&system)?;
    let cfg = GramianConfig::from_system(&sys)?;
    let t0 = parse_point(from, sys.m, "--from")?;
    let t = parse_point(to, sys.m, "--to")?;
    let x0 = parse_vector(x0, sys.n, "--x0")?;
    let y = parse_vector(y, sys.n, "--y")?;
    let plan = plan_transfer(&sys, &t0, &x0, &t, &y, &cfg)?;
    let verification_error = if plan.feasible {
        let curve = PiecewiseCurve::segment(t0, t)?;
        verify_transfer(&sys, &plan, &curve, &cfg.propagator)?
    } else {
        f64::NAN
    };
    println!(
        "transfer {:?} -> {:?}: {} (status {:?})",
        plan.x0,
        plan.y,
        if plan.feasible { "feasible" } else { "INFEASIBLE" },
        plan.status,
    );
    println!(
        "w = {:?}\nv = {:?}\nresidual ||Cv - w|| = {:.16e}",
        plan.w, plan.v, plan.residual
    );
    for d in &plan.control_description {
        println!("  {d}");
    }
    for w in &plan.warnings {
        println!("warning: {w}");
    }
    if plan.feasible {
        println!("verified endpoint error {verification_error:.16e}");
    }
    let feasible = plan.feasible;
    if let Some(path) = out {
        write_json(
            &path,
            &TransferReportDoc {
                plan,
                verification_error,
            },
        )?;
    }
    Ok(if feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Serialize)]
struct SimulateReportDoc {
    t0: Vec<f64>,
    t: Vec<f64>,
    x0: Vec<f64>,
    x: Vec<f64>,
}

fn cmd_simulate(
    system: PathBuf,
    from: &str,
    x0: &str,
    to: &str,
    control: PathBuf,
    out: Option<PathBuf>,
) -> CliResult {
    let sys = load_sys(&system)?;
    let cfg = PropagatorConfig::from_system(&sys)?;
    let t0 = parse_point(from, sys.m, "--from")?;
    let t = parse_point(to, sys.m, "--to")?;
    let x0 = parse_vector(x0, sys.n, "--x0")?;
    let u = load_control(&control, &sys)?;
    let phase = Phase {
        t: t0.clone(),
        x: x0.clone(),
    };
    let curve = PiecewiseCurve::segment(t0.clone(), t.clone())?;
    let x = solve_state(&sys, &ExprControl(u), &phase, &curve, &cfg)?;
    let doc = SimulateReportDoc {
        t0: t0.to_vec(),
        t: t.to_vec(),
        x0: x0.iter().copied().collect(),
        x: x.iter().copied().collect(),
    };
    let cells: Vec<String> = doc.x.iter().map(|v| format!("{v:.16e}")).collect();
    println!("x(t) = [{}]", cells.join(", "));
    if let Some(path) = out {
        write_json(&path, &doc)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_demo(id: Option<String>, list: bool, out: Option<PathBuf>) -> CliResult {
    if list {
        for (id, desc) in demos::list_scenarios() {
            println!("{id}: {desc}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let id = id.ok_or_else(|| CliError("demo requires an id or --list".into()))?;
    let report = demos::run_scenario(&id)?;
    println!("scenario {}: {}", report.id, report.description);
    for c in &report.checks {
        println!(
            "  {}: {}  expected {}  actual {}  tol {:.3e}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.expected,
            c.actual,
            c.tolerance
        );
    }
    println!("result: {}", if report.pass { "pass" } else { "FAIL" });
    let pass = report.pass;
    if let Some(path) = out {
        write_json(&path, &report)?;
    }
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
