//! `neurospike`: run closed-loop scenarios, design certified parameters and
//! check traces against a certificate.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure or jump limit,
//! 4 infeasible design, 5 certification violation, 6 I/O failure.

mod manifest;
mod svg;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use neurospike_core::analysis::{delta_max, sigma_lower_bound};
use neurospike_core::scenario::{self, builtin, load_scenario, BUILTIN_NAMES, DEFAULT_NOISE_SEED};
use neurospike_core::trace_io::{read_trace_csv, write_events_csv, write_trace_csv};
use neurospike_core::{
    certify_trace, design_certificate, solve_rho_for_roa, CertificationReport, ClosedLoopScenario,
    Error, HybridTrace, StabilityCertificate, Termination,
};

use manifest::{RunManifest, ScenarioEntry, Summary};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Design(String),
    #[error("{0}")]
    Certification(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Design(_) => 4,
            CliError::Certification(_) => 5,
            CliError::Io(_) => 6,
        }
    }

    /// Errors while reading user-supplied inputs are all input errors.
    fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    fn io(e: impl std::fmt::Display) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => CliError::Io(e.to_string()),
            Error::NumericalFailure { .. } => CliError::Numerical(e.to_string()),
            Error::Design { .. } => CliError::Design(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "neurospike",
    version,
    about = "Spiking impulsive control: simulate, design, certify"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// RK4 step size
    #[arg(long = "h", global = true)]
    h: Option<f64>,
    /// Simulation horizon in seconds
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Maximum number of jumps
    #[arg(long, global = true)]
    jmax: Option<u64>,
    /// Seed for disturbance and measurement noise
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario file or a built-in scenario
    Simulate(SimulateArgs),
    /// Design certified parameters for a scalar plant
    Design(DesignArgs),
    /// Check a scalar trace against a certificate
    Certify(CertifyArgs),
    /// Run the nominal and noisy reference scenarios
    ReproduceFig3(ReproduceArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario JSON file, or one of: fig3-nominal, fig3-noisy-asym, certified
    scenario: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write state and input SVG plots
    #[arg(long)]
    plot: bool,
    /// Certify the trace against this certificate JSON (scalar plants only)
    #[arg(long, value_name = "CERT")]
    certify: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Desired region-of-attraction radius; rho is solved from it
    #[arg(long, conflicts_with = "rho", allow_negative_numbers = true)]
    psi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Defaults to the midpoint of the admissible interval
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Defaults to the largest admissible threshold
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Also write certificate.json here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    /// Initial state; defaults to the first sample of the trace
    #[arg(long, allow_negative_numbers = true)]
    x0: Option<f64>,
    /// Write report.json here instead of printing it
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args, &cli.global),
        Command::Design(args) => cmd_design(args),
        Command::Certify(args) => cmd_certify(args),
        Command::ReproduceFig3(args) => cmd_reproduce(args, &cli.global),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn apply_overrides(s: &mut ClosedLoopScenario, g: &GlobalOpts) {
    if let Some(h) = g.h {
        s.solver.h = h;
    }
    if let Some(t_end) = g.t_end {
        s.solver.t_end = t_end;
    }
    if let Some(j_max) = g.jmax {
        s.solver.j_max = j_max;
    }
    if let Some(seed) = g.seed {
        for spec in s.disturbance.iter_mut().chain(s.noise.iter_mut()) {
            spec.seed = seed;
        }
    }
}

fn resolve_scenario(arg: &str, g: &GlobalOpts) -> CliResult<ClosedLoopScenario> {
    let path = Path::new(arg);
    let mut s = if path.is_file() {
        load_scenario(path).map_err(CliError::input)?
    } else if let Some(s) = builtin(arg, g.seed) {
        s
    } else {
        return Err(CliError::Input(format!(
            "{arg}: no such file or built-in scenario (built-ins: {})",
            BUILTIN_NAMES.join(", ")
        )));
    };
    apply_overrides(&mut s, g);
    s.validate().map_err(CliError::input)?;
    Ok(s)
}

/// Collects written files, relative to the output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("{}: {e}", parent.display())))?;
        }
        Ok(p)
    }

    fn text(&mut self, rel: &str, content: &str) -> CliResult<()> {
        let p = self.path(rel)?;
        fs::write(&p, content).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
        self.written.push(rel.to_string());
        Ok(())
    }

    fn with_writer<F>(&mut self, rel: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(BufWriter<File>) -> neurospike_core::Result<()>,
    {
        let p = self.path(rel)?;
        let file = File::create(&p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
        f(BufWriter::new(file)).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

/// Run a scenario, keeping the partial trace when the flow blows up.
fn run_scenario(s: &ClosedLoopScenario) -> CliResult<(HybridTrace, Option<String>)> {
    match s.run() {
        Ok(trace) => Ok((trace, None)),
        Err(Error::NumericalFailure {
            t,
            partial: Some(mut trace),
            ..
        }) => {
            trace.meta.scenario_hash = Some(scenario::scenario_hash(s));
            Ok((*trace, Some(format!("non-finite state at t = {t}"))))
        }
        Err(e) => Err(e.into()),
    }
}

/// Trace, events and (optionally) plots for one scenario under `prefix`.
fn write_scenario_outputs(
    out: &mut Outputs,
    prefix: &str,
    trace: &HybridTrace,
    s: &ClosedLoopScenario,
    title: &str,
    plot: bool,
) -> CliResult<()> {
    out.with_writer(&format!("{prefix}trace.csv"), |w| write_trace_csv(trace, w))?;
    out.with_writer(&format!("{prefix}events.csv"), |w| {
        write_events_csv(trace, w)
    })?;
    if plot {
        out.text(
            &format!("{prefix}state.svg"),
            &svg::state_plot(trace, &format!("{title}: state x")),
        )?;
        out.text(
            &format!("{prefix}input.svg"),
            &svg::input_plot(trace, &s.neurons, &format!("{title}: input u")),
        )?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

/// Exit status implied by how the run ended.
fn termination_status(label: &str, trace: &HybridTrace, failure: Option<String>) -> CliResult<()> {
    if let Some(msg) = failure {
        return Err(CliError::Numerical(format!(
            "{label}: terminated: {} ({msg})",
            trace.meta.termination
        )));
    }
    if trace.meta.termination == Termination::JumpLimit {
        return Err(CliError::Numerical(format!(
            "{label}: terminated: {} after {} jumps at t = {}",
            trace.meta.termination,
            trace.jumps.len(),
            trace.t_end()
        )));
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, g: &GlobalOpts) -> CliResult<()> {
    let start = Instant::now();
    let s = resolve_scenario(&args.scenario, g)?;
    let cert = args.certify.as_deref().map(load_certificate).transpose()?;
    let mut out = Outputs::new(&args.out)?;
    let (trace, failure) = run_scenario(&s)?;
    write_scenario_outputs(&mut out, "", &trace, &s, &args.scenario, args.plot)?;

    let mut summary = Summary::of(&trace, s.solver.t_end);
    let mut report = None;
    if let Some(cert) = &cert {
        let x0 = s.q0.x[0];
        let r = certify_trace(&trace, cert, x0).map_err(CliError::input)?;
        summary.certified = Some(r.passed());
        out.text("report.json", &to_json(&r)?)?;
        report = Some(r);
    }
    let mut manifest = RunManifest::new("simulate");
    manifest.scenarios.push(ScenarioEntry {
        label: "scenario".into(),
        source: args.scenario.clone(),
        hash: scenario::scenario_hash(&s),
        solver: s.solver,
        termination: trace.meta.termination,
        summary: summary.clone(),
    });
    manifest.outputs = out.written.clone();
    manifest.runtime_s = start.elapsed().as_secs_f64();
    manifest.write(&out.dir).map_err(CliError::io)?;

    println!(
        "{}: {} jumps, ultimate bound {} (t >= {}), min inter-spike {}, termination {}",
        args.scenario,
        summary.jump_count,
        fmt_opt(summary.ultimate_bound),
        summary.t_cut,
        fmt_opt(summary.min_interspike),
        trace.meta.termination
    );
    termination_status(&args.scenario, &trace, failure)?;
    if let Some(r) = report {
        verdict(&r)?;
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(CliError::io)
}

fn cmd_design(args: &DesignArgs) -> CliResult<()> {
    let missing = |name: &str| CliError::Input(format!("--{name} is required"));
    let alpha = args.alpha.ok_or_else(|| missing("alpha"))?;
    // rho first: an infeasible radius is reported even when the plant is incomplete
    let rho = match (args.psi, args.rho) {
        (Some(psi), _) => solve_rho_for_roa(alpha, psi)?,
        (None, Some(rho)) => rho,
        (None, None) => return Err(CliError::Input("one of --psi or --rho is required".into())),
    };
    let a = args.a.ok_or_else(|| missing("a"))?;
    let mu = args.mu.ok_or_else(|| missing("mu"))?;
    let sigma_min = sigma_lower_bound(rho);
    if rho > 0.0 && rho < 1.0 {
        eprintln!("admissible sigma: [{sigma_min}, 1)");
    }
    let sigma = args.sigma.unwrap_or(0.5 * (sigma_min + 1.0));
    let delta = args.delta.unwrap_or_else(|| delta_max(a, alpha, mu, rho));
    let cert = design_certificate(a, alpha, mu, rho, sigma, delta)?;
    let json = to_json(&cert)?;
    if let Some(dir) = &args.out {
        let mut out = Outputs::new(dir)?;
        out.text("certificate.json", &json)?;
    }
    print!("{json}");
    Ok(())
}

/// Parse a certificate and re-derive it, so hand-edited files cannot carry
/// quantities that do not follow from their parameters.
fn load_certificate(path: &Path) -> CliResult<StabilityCertificate> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let c: StabilityCertificate = serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let fresh = design_certificate(c.a, c.alpha, c.mu, c.rho, c.sigma, c.delta)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let pairs = [
        ("psi", c.psi, fresh.psi),
        ("gamma", c.gamma, fresh.gamma),
        ("tau", c.tau, fresh.tau),
        ("upsilon", c.upsilon, fresh.upsilon),
        ("sigma_min", c.sigma_min, fresh.sigma_min),
        ("delta_max", c.delta_max, fresh.delta_max),
    ];
    for (name, given, derived) in pairs {
        if (given - derived).abs() > 1e-9 * derived.abs().max(1.0) {
            return Err(CliError::Input(format!(
                "{}: {name} = {given} does not match the derived value {derived}",
                path.display()
            )));
        }
    }
    Ok(fresh)
}

fn verdict(report: &CertificationReport) -> CliResult<()> {
    match report.first_violation() {
        None if report.passed() => Ok(()),
        Some(v) => Err(CliError::Certification(format!(
            "certification failed: {:?} at t = {}, j = {}: observed {}, allowed {}",
            v.quantity, v.t, v.j, v.observed, v.allowed
        ))),
        None => Err(CliError::Certification("certification failed".into())),
    }
}

fn cmd_certify(args: &CertifyArgs) -> CliResult<()> {
    let file = File::open(&args.trace)
        .map_err(|e| CliError::input(format!("{}: {e}", args.trace.display())))?;
    let trace = read_trace_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::input(format!("{}: {e}", args.trace.display())))?;
    let cert = load_certificate(&args.cert)?;
    let x0 = match args.x0 {
        Some(x0) => x0,
        None => trace.arcs[0].start().state.x[0],
    };
    let report = certify_trace(&trace, &cert, x0).map_err(CliError::input)?;
    let json = to_json(&report)?;
    match &args.out {
        Some(dir) => Outputs::new(dir)?.text("report.json", &json)?,
        None => print!("{json}"),
    }
    verdict(&report)?;
    eprintln!(
        "certification passed: {} jumps, bound margin {:.6}",
        trace.jumps.len(),
        report.bound_margin
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct Fig3Summary {
    ultimate_bound: Option<f64>,
    min_interspike_all: Option<f64>,
    min_interspike_steady: Option<f64>,
}

fn cmd_reproduce(args: &ReproduceArgs, g: &GlobalOpts) -> CliResult<()> {
    let start = Instant::now();
    let seed = g.seed.unwrap_or(DEFAULT_NOISE_SEED);
    let mut out = Outputs::new(&args.out)?;
    let mut manifest = RunManifest::new("reproduce-fig3");
    let mut table = String::from(
        "scenario,jumps,ultimate_bound,min_interspike_all,min_interspike_steady,termination\n",
    );
    let mut first_failure = Ok(());
    let mut nominal_summary = None;

    let runs = [
        ("nominal", scenario::FIG3_NOMINAL, scenario::fig3_nominal()),
        (
            "noisy",
            scenario::FIG3_NOISY_ASYM,
            scenario::fig3_noisy_asym(seed),
        ),
    ];
    for (label, name, mut s) in runs {
        apply_overrides(&mut s, g);
        s.validate().map_err(CliError::input)?;
        let (trace, failure) = run_scenario(&s)?;
        write_scenario_outputs(&mut out, &format!("{label}/"), &trace, &s, name, true)?;
        let summary = Summary::of(&trace, s.solver.t_end);
        table.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            summary.jump_count,
            fmt_opt(summary.ultimate_bound),
            fmt_opt(summary.min_interspike),
            fmt_opt(summary.min_interspike_steady),
            trace.meta.termination
        ));
        if label == "nominal" {
            nominal_summary = Some(Fig3Summary {
                ultimate_bound: summary.ultimate_bound,
                min_interspike_all: summary.min_interspike,
                min_interspike_steady: summary.min_interspike_steady,
            });
        }
        if first_failure.is_ok() {
            first_failure = termination_status(name, &trace, failure);
        }
        manifest.scenarios.push(ScenarioEntry {
            label: label.into(),
            source: name.into(),
            hash: scenario::scenario_hash(&s),
            solver: s.solver,
            termination: trace.meta.termination,
            summary,
        });
    }
    out.text("comparison.csv", &table)?;
    out.text("summary.json", &to_json(&nominal_summary)?)?;
    manifest.outputs = out.written.clone();
    manifest.runtime_s = start.elapsed().as_secs_f64();
    manifest.write(&out.dir).map_err(CliError::io)?;
    print!("{table}");
    first_failure
}
