//! `hypctl`: analyze, simulate and check hyperbolic boundary-control systems.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypctl_core::io::{
    read_control, read_graph, read_state, read_system, write_state_csv, write_trajectory_csv,
};
use hypctl_core::verify::{run_all, Fault};
use hypctl_core::*;
use serde::Serialize;

/// Exit code for malformed input, bad flags and internal errors.
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hypctl",
    version,
    about = "Controllability and exact simulation of 1-D hyperbolic boundary-control systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frequency-domain controllability test of a system spec.
    Analyze(AnalyzeArgs),
    /// Exact trajectory from an initial state and a control.
    Simulate(SimulateArgs),
    /// Controllability of a flow on a directed graph.
    Network(NetworkArgs),
    /// Run the built-in identity checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Io {
    /// System or graph spec (JSON, or TOML by extension).
    #[arg(long)]
    input: PathBuf,
    /// Output file; defaults to a file in the output directory, else stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "HYPCTL_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Norm parameter, overriding the value in the input file.
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args)]
struct Tolerances {
    /// Criterion values above this are a pass.
    #[arg(long, default_value_t = 1e-6)]
    pass_tol: f64,
    /// Criterion values below this are a failure.
    #[arg(long, default_value_t = 1e-10)]
    fail_tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Criterion {
    Approximate,
    Exact,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    tol: Tolerances,
    #[arg(long, value_enum, default_value = "approximate")]
    criterion: Criterion,
    #[arg(long, allow_hyphen_values = true)]
    sigma_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_max: Option<f64>,
    #[arg(long)]
    im_max: Option<f64>,
    /// Grid points per quasi-period along Im p.
    #[arg(long)]
    grid: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    io: Io,
    /// Initial boundary state (JSON, TOML or state CSV); zero when omitted.
    #[arg(long)]
    initial: Option<PathBuf>,
    /// Control signal; zero on `[0, horizon]` when omitted.
    #[arg(long)]
    control: Option<PathBuf>,
    /// Horizon, needed without `--control` and checked against it otherwise.
    #[arg(long)]
    horizon: Option<f64>,
    /// Sample steps per component.
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Write the exact state at the horizon as a state CSV.
    #[arg(long)]
    final_state: Option<PathBuf>,
    /// Times at which to rebuild the PDE profiles.
    #[arg(long, value_delimiter = ',')]
    snapshot: Vec<f64>,
    /// Where the PDE snapshots go; defaults to `snapshots.csv` in the output directory.
    #[arg(long)]
    snapshot_output: Option<PathBuf>,
}

#[derive(Args)]
struct NetworkArgs {
    #[command(flatten)]
    io: Io,
    #[command(flatten)]
    tol: Tolerances,
    #[arg(long, value_enum, default_value = "approximate")]
    criterion: Criterion,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectFault {
    /// Flip the sign of one term of the Ξ recursion.
    XiSign,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, value_enum)]
    inject_fault: Option<InjectFault>,
    /// Also write the results as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError(String);

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(e.to_string())
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn fail<T>(msg: impl Into<String>) -> Res<T> {
    Err(CliError(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let out = match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Network(a) => network(&a),
        Command::Verify(a) => verify(&a),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn check_tolerances(t: &Tolerances) -> Res<()> {
    if !(t.fail_tol > 0.0 && t.pass_tol > 0.0) {
        return fail("tolerances must be positive");
    }
    if t.fail_tol > t.pass_tol {
        return fail(format!(
            "fail tolerance {} exceeds pass tolerance {}",
            t.fail_tol, t.pass_tol
        ));
    }
    Ok(())
}

fn resolve_q(io: &Io, spec_q: f64) -> Res<f64> {
    let q = io.q.unwrap_or(spec_q);
    if !(q.is_finite() && q >= 1.0) {
        return fail(format!("q = {q} must lie in [1, inf)"));
    }
    Ok(q)
}

/// `--output`, else `name` in the output directory, else `None` for stdout.
fn target(output: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    output
        .clone()
        .or_else(|| dir.as_ref().map(|d| d.join(name)))
}

fn emit(path: Option<&Path>, text: &str) -> Res<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text).map_err(|e| CliError(format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    summary: String,
    q: f64,
    #[serde(flatten)]
    report: &'a ControllabilityReport,
}

fn analyze(a: &AnalyzeArgs) -> Res<u8> {
    check_tolerances(&a.tol)?;
    if let Some(g) = a.grid {
        if !(g.is_finite() && g >= 1.0) {
            return fail(format!("grid density {g} must be at least 1"));
        }
    }
    let loaded = read_system(&a.io.input)?;
    let q = resolve_q(&a.io, loaded.q)?;
    let defaults = StripOptions::default();
    let opts = StripOptions {
        sigma_min: a.sigma_min,
        sigma_max: a.sigma_max,
        im_max: a.im_max,
        grid: a.grid.unwrap_or(defaults.grid),
        pass_tol: a.tol.pass_tol,
        fail_tol: a.tol.fail_tol,
        ..defaults
    };
    if let (Some(lo), Some(hi)) = (opts.sigma_min, opts.sigma_max) {
        if lo >= hi {
            return fail(format!("sigma-min {lo} must be below sigma-max {hi}"));
        }
    }
    let report = match a.criterion {
        Criterion::Approximate => approx_controllability_report(&loaded.difference, &opts),
        Criterion::Exact => exact_controllability_report(&loaded.difference, &opts),
    };
    let summary = report.summary_line();
    let path = target(&a.io.output, &a.io.output_dir, "report.json");
    emit(
        path.as_deref(),
        &to_json(&AnalyzeOutput {
            summary: summary.clone(),
            q,
            report: &report,
        }),
    )?;
    if path.is_some() {
        println!("{summary}");
    }
    Ok(report.verdict.exit_code() as u8)
}

fn simulate(a: &SimulateArgs) -> Res<u8> {
    if a.resolution == 0 {
        return fail("resolution must be positive");
    }
    let loaded = read_system(&a.io.input)?;
    let q = resolve_q(&a.io, loaded.q)?;
    let sys = &loaded.difference;
    let initial = match &a.initial {
        Some(p) => read_state(p, sys.delays())?,
        None => BoundaryState::zero(sys.delays()),
    };
    let control = match (&a.control, a.horizon) {
        (Some(p), h) => {
            let u = read_control(p)?;
            if let Some(h) = h {
                if (h - u.horizon()).abs() > 1e-12 * h.abs().max(1.0) {
                    return fail(format!(
                        "horizon {h} does not match the control horizon {}",
                        u.horizon()
                    ));
                }
            }
            u
        }
        (None, Some(h)) => ControlSignal::zero(sys.inputs(), h)?,
        (None, None) => return fail("give --control or --horizon"),
    };
    let traj = Trajectory::new(sys.clone(), initial, control)?;
    let t = traj.horizon();

    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &traj.sample(a.resolution)?)?;
    let path = target(&a.io.output, &a.io.output_dir, "trajectory.csv");
    emit(
        path.as_deref(),
        String::from_utf8(buf).expect("csv is utf-8").trim_end(),
    )?;

    let end = traj.state_at(t)?;
    if let Some(p) = &a.final_state {
        let mut buf = Vec::new();
        write_state_csv(&mut buf, end.components())?;
        std::fs::write(p, buf).map_err(|e| CliError(format!("{}: {e}", p.display())))?;
    }
    if !a.snapshot.is_empty() {
        let Some(hyp) = &loaded.hyperbolic else {
            return fail("PDE snapshots need a hyperbolic system spec");
        };
        let mut csv = String::from("t,component,x,value\n");
        for &s in &a.snapshot {
            let profiles = reconstruct_pde(hyp, &traj, s)?;
            for (i, r) in profiles.iter().enumerate() {
                for k in 0..=a.resolution {
                    let x = k as f64 / a.resolution as f64;
                    writeln!(csv, "{s},{i},{x},{}", r.eval(x)).expect("string write");
                }
            }
        }
        let path = a
            .snapshot_output
            .clone()
            .or_else(|| a.io.output_dir.as_ref().map(|d| d.join("snapshots.csv")));
        match path {
            Some(p) => emit(Some(&p), &csv)?,
            None => return fail("--snapshot needs --snapshot-output or an output directory"),
        }
    }
    if path.is_some() {
        println!("horizon {t}, final state L^{q} norm {:.6e}", end.lq_norm(q));
    }
    Ok(0)
}

#[derive(Serialize)]
struct NetworkOutput<'a> {
    summary: String,
    q: f64,
    #[serde(flatten)]
    report: &'a NetworkReport,
}

fn network(a: &NetworkArgs) -> Res<u8> {
    check_tolerances(&a.tol)?;
    let q = resolve_q(&a.io, 2.0)?;
    let g = read_graph(&a.io.input)?;
    if let Err(v) = validate_graph(&g) {
        for x in &v {
            eprintln!("violation: {x}");
        }
        return fail(format!("graph has {} violation(s)", v.len()));
    }
    let report = match a.criterion {
        Criterion::Approximate => network_approx_test(&g, a.tol.pass_tol, a.tol.fail_tol)?,
        Criterion::Exact => network_exact_test(&g, a.tol.pass_tol, a.tol.fail_tol)?,
    };
    if let Some(ob) = &report.obstruction {
        eprintln!(
            "obstruction: vertex {} has incoming edges {} and {} with proportional columns (angle {:.1e})",
            ob.vertex, ob.columns[0], ob.columns[1], ob.angle
        );
    }
    let summary = report.report.summary_line();
    let path = target(&a.io.output, &a.io.output_dir, "network_report.json");
    emit(
        path.as_deref(),
        &to_json(&NetworkOutput {
            summary: summary.clone(),
            q,
            report: &report,
        }),
    )?;
    if path.is_some() {
        println!("{summary}");
    }
    Ok(report.verdict().exit_code() as u8)
}

fn verify(a: &VerifyArgs) -> Res<u8> {
    let fault = match a.inject_fault {
        Some(InjectFault::XiSign) => Fault::XiSign,
        None => Fault::None,
    };
    let start = std::time::Instant::now();
    let results = run_all(a.seed, fault)?;
    println!(
        "{:<24} {:>8} {:>12}  result",
        "suite", "checks", "worst/tol"
    );
    for r in &results {
        println!(
            "{:<24} {:>8} {:>12.2e}  {}",
            r.name,
            r.checks,
            r.worst_ratio,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let all = results.iter().all(|r| r.passed);
    println!(
        "seed {}, {:.2}s, {}",
        a.seed,
        start.elapsed().as_secs_f64(),
        if all { "all passed" } else { "FAILED" }
    );
    if let Some(p) = &a.output {
        emit(Some(p), &to_json(&results))?;
    }
    Ok(if all { 0 } else { 1 })
}
