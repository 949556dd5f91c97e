//! `autocert`: generate, check and exercise ellipsoid-annotated controller code.
//!
//! Exit status: 0 proven, 1 refuted (or inconclusive), 2 usage or input
//! error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ellipsoid_autocode::checker::{check_artifact, parse_annotated_c, CheckOptions, LmiReport, Overall};
use ellipsoid_autocode::linalg::{render_exact, PsdStatus, DEFAULT_SHIFT};
use ellipsoid_autocode::pipeline::autocode;
use ellipsoid_autocode::spec_model::{load_spec, ControllerSpec};
use ellipsoid_autocode::stability::{check_lmi, simulate, InputMode, StabilityCertificate};

#[derive(Parser)]
#[command(name = "autocert", version, about = "Credible autocoding of linear controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit annotated C for a controller spec and report the final containment.
    Autocode(AutocodeArgs),
    /// Independently re-check an annotated C file.
    Check(CheckArgs),
    /// Check the invariance LMI for the spec's observers.
    Lmi(LmiArgs),
    /// Simulate the controller and write a CSV trace.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct AutocodeArgs {
    /// Controller spec (JSON).
    spec: PathBuf,
    /// Annotated C output [default: <spec stem>.c next to the spec].
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
    /// Generation report (JSON) [default: <output>.report.json].
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Annotated C file produced by `autocode`.
    file: PathBuf,
    /// Verification report (JSON) [default: <file>.check.json].
    #[arg(long)]
    report: Option<PathBuf>,
    /// Shift for the interval cross-check of the final containment.
    #[arg(long, default_value_t = DEFAULT_SHIFT)]
    epsilon: f64,
    /// Count an inconclusive interval cross-check as an inconclusive result.
    #[arg(long)]
    fail_on_unknown: bool,
    /// Also check the invariance LMI of this spec and include it in the report.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct LmiArgs {
    spec: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Zero,
    Constant,
    Uniform,
}

#[derive(Args)]
struct SimulateArgs {
    spec: PathBuf,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input signal: zero, a constant, or uniform inside the declared bound.
    #[arg(long, value_enum, default_value = "uniform")]
    input: InputKind,
    /// Comma-separated values for `--input constant`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    value: Vec<f64>,
    /// CSV trace [default: <spec stem>.trace.csv next to the spec].
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure { code: 3, message: message.into() }
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => usage(format!("{}: file not found", path.display())),
        _ => usage(format!("{}: {e}", path.display())),
    })
}

fn check_output(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(usage(format!("{}: output directory does not exist", path.display())))
        }
        _ if path.is_dir() => Err(usage(format!("{}: is a directory", path.display()))),
        _ => Ok(()),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| internal(format!("{}: {e}", path.display())))
}

fn spec_from(path: &Path) -> Result<ControllerSpec, Failure> {
    load_spec(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| internal(e.to_string()))
}

fn run_autocode(a: &AutocodeArgs) -> Result<u8, Failure> {
    let output = a.output.clone().unwrap_or_else(|| a.spec.with_extension("c"));
    let report = a.report.clone().unwrap_or_else(|| with_extension(&output, ".report.json"));
    check_output(&output)?;
    check_output(&report)?;
    let spec = spec_from(&a.spec)?;
    let generated = autocode(&spec).map_err(|e| usage(format!("{}: {e}", a.spec.display())))?;
    write_output(&output, &generated.emitted.text)?;
    write_output(&report, &json(&generated.report())?)?;
    let status = generated.containment.status;
    eprintln!("final containment: {status:?}");
    Ok(if status == PsdStatus::ProvenPsd { 0 } else { 1 })
}

fn run_check(a: &CheckArgs) -> Result<u8, Failure> {
    if !(a.epsilon.is_finite() && a.epsilon >= 0.0) {
        return Err(usage("--epsilon must be a finite, non-negative number"));
    }
    let report_path = a.report.clone().unwrap_or_else(|| with_extension(&a.file, ".check.json"));
    check_output(&report_path)?;
    let lmi = match &a.spec {
        Some(p) => {
            let spec = spec_from(p)?;
            let cert = StabilityCertificate::from_spec(&spec).map_err(|e| usage(e.to_string()))?;
            let v = check_lmi(&spec, &cert).map_err(|e| usage(e.to_string()))?;
            Some(LmiReport { verdict: v.status, margin: v.margin.as_ref().map(render_exact) })
        }
        None => None,
    };
    let text = read_input(&a.file)?;
    let parsed = parse_annotated_c(&text).map_err(|e| usage(format!("{}: {e}", a.file.display())))?;
    let mut report = check_artifact(&parsed, CheckOptions { epsilon: a.epsilon, fail_on_unknown: a.fail_on_unknown });
    report.lmi_check = lmi;
    write_output(&report_path, &json(&report)?)?;
    for t in report.triples.iter().filter(|t| !t.verdict.is_proven()) {
        eprintln!("{}: {:?}: {}", t.label, t.verdict, t.detail);
    }
    eprintln!("final containment: {:?} ({})", report.final_containment.verdict, report.final_containment.detail);
    eprintln!("overall: {:?}", report.overall);
    Ok(if report.overall == Overall::Proven { 0 } else { 1 })
}

fn run_lmi(a: &LmiArgs) -> Result<u8, Failure> {
    let spec = spec_from(&a.spec)?;
    let cert = StabilityCertificate::from_spec(&spec).map_err(|e| usage(e.to_string()))?;
    let v = check_lmi(&spec, &cert).map_err(|e| usage(e.to_string()))?;
    let margin = v.margin.as_ref().map_or_else(|| "-".to_string(), render_exact);
    println!("alpha: {}", render_exact(&cert.alpha));
    println!("verdict: {:?}", v.status);
    println!("margin: {margin}");
    if let Some(w) = &v.witness {
        println!("witness: [{}]", w.iter().map(render_exact).collect::<Vec<_>>().join(", "));
    }
    Ok(if v.is_psd() { 0 } else { 1 })
}

fn run_simulate(a: &SimulateArgs) -> Result<u8, Failure> {
    let output = a.output.clone().unwrap_or_else(|| a.spec.with_extension("trace.csv"));
    check_output(&output)?;
    let mode = match a.input {
        InputKind::Zero => InputMode::Zero,
        InputKind::Uniform => InputMode::UniformInBound,
        InputKind::Constant if a.value.is_empty() => return Err(usage("--input constant needs --value")),
        InputKind::Constant => InputMode::Constant(a.value.clone()),
    };
    let spec = spec_from(&a.spec)?;
    let cert = StabilityCertificate::from_spec(&spec).map_err(|e| usage(e.to_string()))?;
    let trace = simulate(&spec, &cert, a.steps, a.seed, &mode).map_err(|e| usage(e.to_string()))?;

    let mut w = csv::Writer::from_path(&output).map_err(|e| internal(format!("{}: {e}", output.display())))?;
    let header: Vec<&str> = std::iter::once("step")
        .chain(spec.state_names.iter().map(String::as_str))
        .chain(spec.input_names.iter().map(String::as_str))
        .chain(spec.output_names.iter().map(String::as_str))
        .chain(std::iter::once("level"))
        .collect();
    w.write_record(&header).map_err(|e| internal(e.to_string()))?;
    for r in &trace.rows {
        let fields = std::iter::once(r.step.to_string())
            .chain(r.state.iter().chain(&r.input).chain(&r.output).map(f64::to_string))
            .chain(std::iter::once(r.level.to_string()));
        w.write_record(fields).map_err(|e| internal(e.to_string()))?;
    }
    w.flush().map_err(|e| internal(e.to_string()))?;
    println!("max level: {}", trace.max_level);
    Ok(if trace.max_level <= 1.0 { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Autocode(a) => run_autocode(a),
        Command::Check(a) => run_check(a),
        Command::Lmi(a) => run_lmi(a),
        Command::Simulate(a) => run_simulate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
