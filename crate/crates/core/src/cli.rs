//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 numerical
//! failure, 3 causal violation (or invariant violations found by `stats`).

use crate::conic_wave::WaveError;
use crate::diagram::{render_boosted, DiagramError, DiagramSpec};
use crate::geometry::check_velocity;
use crate::scenarios::{
    builtin, ground_free_flight, monte_carlo, run, BoostedView, RunTrace, Scenario, ScenarioConfig, ScenarioError,
    BUILTIN_NAMES,
};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable overriding the default output directory.
pub const OUT_ENV: &str = "CONIC_COLLAPSE_OUT";

#[derive(Debug, Parser)]
#[command(name = "conic-collapse", version, about = "Collapse along backward light cones in 1+1 dimensions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory
    #[arg(long, env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario once and write its trace
    Run {
        /// Built-in name or path to a config file
        #[arg(long)]
        config: String,
        /// Seed [default: the config's seed]
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
        /// Also render the trace as SVG
        #[arg(long)]
        svg: bool,
        /// Print the timeline and reductions
        #[arg(long, short)]
        verbose: bool,
    },
    /// Monte Carlo statistics over consecutive seeds
    Stats {
        /// Built-in name or path to a config file
        #[arg(long)]
        config: String,
        /// Number of runs [default: the config's runs]
        #[arg(long)]
        runs: Option<usize>,
        /// First seed; run i uses seed + i [default: the config's seed]
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
        /// Also print KS tests and the anti-correlation rate
        #[arg(long, short)]
        verbose: bool,
    },
    /// Render a trace file as SVG
    Diagram {
        /// Trace file written by `run`
        trace: PathBuf,
        /// Observer velocity
        #[arg(long, allow_hyphen_values = true)]
        boost: Option<f64>,
        /// Diagram spec (JSON) replacing the fitted window and style
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Replay a trace in a boosted frame
    Boost {
        /// Trace file written by `run`
        trace: PathBuf,
        /// Observer velocity, |v| < 1
        #[arg(long, allow_hyphen_values = true)]
        boost: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

/// A failure mapped to a process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match &e {
            _ if e.is_causal_violation() => 3,
            ScenarioError::Config(_) => 1,
            ScenarioError::Geometry(crate::geometry::GeometryError::InvalidVelocity(_)) => 1,
            ScenarioError::Invariant(_) => 3,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<WaveError> for Failure {
    fn from(e: WaveError) -> Self {
        Self { code: 2, message: e.to_string() }
    }
}

impl From<DiagramError> for Failure {
    fn from(e: DiagramError) -> Self {
        Self::input(e.to_string())
    }
}

/// Loads a built-in config by name, or a config file by path.
pub fn load_config(name_or_path: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(name_or_path);
    if !path.exists() {
        if let Some(config) = builtin(name_or_path) {
            return Ok(config);
        }
        return Err(Failure::input(format!(
            "config: no file {name_or_path} and no built-in of that name (built-ins: {})",
            BUILTIN_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("config: {e}")))?;
    ScenarioConfig::from_json(&text).map_err(|e| Failure::input(e.to_string()))
}

fn load_trace(path: &Path) -> Result<RunTrace, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    RunTrace::from_json(&text).map_err(|e| Failure::input(format!("{}: malformed trace: {e}", path.display())))
}

/// Writes `contents` to `dir/name` through a temporary file in `dir`.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    let fail = |e: std::io::Error| Failure::input(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(contents.as_bytes()).map_err(fail)?;
    tmp.flush().map_err(fail)?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| fail(e.error))?;
    Ok(path)
}

fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    name.strip_suffix(".trace.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name)
        .to_string()
}

fn velocity_arg(v: f64) -> Result<f64, Failure> {
    check_velocity(v).map_err(|_| Failure::input(format!("boost: |v| = {} must be < 1", v.abs())))?;
    Ok(v)
}

fn config_boost(config: &ScenarioConfig) -> Option<f64> {
    match &config.scenario {
        Scenario::EprBoosted(e) => e.boost,
        _ => None,
    }
}

fn cmd_run(config: &str, seed: Option<u64>, out: &Path, svg: bool, verbose: bool) -> Result<Vec<PathBuf>, Failure> {
    let config = load_config(config)?;
    let seed = seed.unwrap_or(config.seed);
    let flights = ground_free_flight(&config)?;
    let mut trace = run(&config, seed)?;
    for f in &flights {
        trace.annotations.insert(
            format!("free_flight.{}", f.carrier),
            format!(
                "qvalue {:.12} drift {:.6} (v = {}) spread {:.6} over {:.6}",
                f.qvalue, f.measured_velocity, f.velocity, f.spread, f.duration
            ),
        );
    }
    let boost = config_boost(&config);
    if let Some(v) = boost {
        let view = BoostedView::of(&trace, v).map_err(ScenarioError::from)?;
        trace.annotations.insert("boost.velocity".into(), format!("{v}"));
        trace.annotations.insert("boost.lorentz_order".into(), view.lorentz_order.join(","));
        trace.annotations.insert("boost.conic_order".into(), view.conic_order.join(","));
    }
    let problems = crate::scenarios::check_trace(&trace);
    if !problems.is_empty() {
        return Err(ScenarioError::Invariant(problems.join("; ")).into());
    }
    if verbose {
        for snap in &trace.timeline {
            println!("[{:>10.6}] {}", snap.conic_time, snap.stage);
            for c in &snap.components {
                println!("    {:<40} {:?} {:.9}", c.label, c.status, c.qvalue);
            }
        }
        for r in &trace.reductions {
            println!("reduction {} at ({:.6}, {:.6}) -> {}", r.label, r.vertex.x, r.vertex.t, r.component);
        }
    }
    let base = format!("{}-{seed}", config.name);
    let mut written = vec![write_atomic(out, &format!("{base}.trace.json"), &(trace.to_json() + "\n"))?];
    if svg {
        let v = boost.unwrap_or(0.0);
        let spec = DiagramSpec::fit(&trace, v)?;
        written.push(write_atomic(out, &format!("{base}.svg"), &render_boosted(&trace, v, &spec)?)?);
    }
    let outcome: Vec<String> = trace.outcome.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}: {}", config.name, outcome.join(" "));
    Ok(written)
}

fn cmd_stats(config: &str, runs: Option<usize>, seed: Option<u64>, out: &Path, verbose: bool) -> Result<Vec<PathBuf>, Failure> {
    let config = load_config(config)?;
    let runs = runs.unwrap_or(config.runs);
    let seed = seed.unwrap_or(config.seed);
    let report = monte_carlo(&config, runs, seed)?;
    let path = write_atomic(out, &format!("{}.stats.json", config.name), &(report.to_json() + "\n"))?;
    println!("{}: {} runs, {} invariant violations", config.name, report.runs, report.violations);
    for b in &report.branches {
        println!(
            "  {:<40} {:.4} [{:.4}, {:.4}] expected {:.4}",
            b.label, b.frequency, b.interval.lower, b.interval.upper, b.expected
        );
    }
    if verbose {
        for k in &report.ks {
            println!("  KS {} D = {:.5} (critical {:.5})", k.source, k.statistic, k.critical);
        }
        if let Some(a) = report.anticorrelation {
            println!("  anti-correlation {a}");
        }
    }
    if report.violations > 0 {
        for e in &report.violation_examples {
            eprintln!("{e}");
        }
        return Err(Failure { code: 3, message: format!("{} runs violated invariants", report.violations) });
    }
    Ok(vec![path])
}

fn cmd_diagram(trace_path: &Path, boost: Option<f64>, spec: Option<&Path>, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    let trace = load_trace(trace_path)?;
    let v = velocity_arg(boost.unwrap_or(0.0))?;
    let spec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: invalid spec: {e}", p.display())))?
        }
        None => DiagramSpec::fit(&trace, v)?,
    };
    let svg = render_boosted(&trace, v, &spec)?;
    let name = match boost {
        Some(b) => format!("{}-boost{b}.svg", stem(trace_path)),
        None => format!("{}.svg", stem(trace_path)),
    };
    Ok(vec![write_atomic(out, &name, &svg)?])
}

fn cmd_boost(trace_path: &Path, boost: f64, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    let trace = load_trace(trace_path)?;
    let v = velocity_arg(boost)?;
    let view = BoostedView::of(&trace, v).map_err(ScenarioError::from)?;
    println!("lorentz order: {}", view.lorentz_order.join(" "));
    println!("conic order:   {}", view.conic_order.join(" "));
    let json = serde_json::to_string_pretty(&view).expect("view serializes") + "\n";
    Ok(vec![write_atomic(out, &format!("{}-boost{v}.json", stem(trace_path)), &json)?])
}

/// Parses `args` and executes the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run { config, seed, out, svg, verbose } => cmd_run(config, *seed, &out.out, *svg, *verbose),
        Command::Stats { config, runs, seed, out, verbose } => cmd_stats(config, *runs, *seed, &out.out, *verbose),
        Command::Diagram { trace, boost, spec, out } => cmd_diagram(trace, *boost, spec.as_deref(), &out.out),
        Command::Boost { trace, boost, out } => cmd_boost(trace, *boost, &out.out),
    };
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
