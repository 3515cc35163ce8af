//! Command-line front end behind the `ccpp` binary.
//!
//! Every flag can also be given as an environment variable with the `CCPP_`
//! prefix (`CCPP_TIMEOUT=5`); flags win. Errors go to stderr as
//! `error[<category>]: <message>`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::bench::{aggregate, aggregates_csv, records_csv, run_suite, BenchRecord, BenchSuite};
use crate::io::{
    load_map, parse_artifact, read_text, write_text, Artifact, IoError, LoadedScenario, PlanDocument, ScenarioSpec,
    Stage1Dump,
};
use crate::plan::validate_plan;
use crate::render::{render_plan, render_stage1, RenderOptions};
use crate::solver::{solve, SolverConfig};
use crate::stage2::{Stage2Params, DEFAULT_NODE_BUDGET};
use crate::timing::StepTimings;

/// Exit status when the plan is invalid.
pub const EXIT_INVALID: i32 = 1;
/// Exit status when the solver or benchmark fails.
pub const EXIT_SOLVE: i32 = 2;
/// Exit status for unreadable or malformed input.
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ccpp", version, about = "Communication-constrained multi-agent path planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a scenario and write the plan file.
    Solve(SolveArgs),
    /// Check a plan file against a scenario.
    Validate(ValidateArgs),
    /// Run a benchmark suite.
    Bench(BenchArgs),
    /// Draw a plan or a first-stage dump as SVG.
    Render(RenderArgs),
}

/// Overrides for fields of the scenario file.
#[derive(Debug, Clone, Args, Default)]
pub struct ScenarioOverrides {
    /// Map file (relative to the working directory).
    #[arg(long, env = "CCPP_MAP")]
    pub map: Option<PathBuf>,
    #[arg(long, env = "CCPP_SCALE")]
    pub scale: Option<f64>,
    /// Communication limit.
    #[arg(long, env = "CCPP_LAMBDA")]
    pub lambda: Option<f64>,
    /// Heuristic exponent.
    #[arg(long, env = "CCPP_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, env = "CCPP_AGENTS")]
    pub agents: Option<usize>,
    #[arg(long, env = "CCPP_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub scenario: PathBuf,
    /// Plan output path.
    #[arg(short, long, env = "CCPP_OUTPUT")]
    pub output: PathBuf,
    /// Also write the first-stage search dump here.
    #[arg(long, env = "CCPP_STAGE1_DUMP")]
    pub stage1_dump: Option<PathBuf>,
    /// Seconds before giving up.
    #[arg(long, env = "CCPP_TIMEOUT")]
    pub timeout: Option<f64>,
    #[arg(long, env = "CCPP_NODE_BUDGET", default_value_t = DEFAULT_NODE_BUDGET)]
    pub node_budget: usize,
    #[command(flatten)]
    pub overrides: ScenarioOverrides,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub scenario: PathBuf,
    pub plan: PathBuf,
    #[command(flatten)]
    pub overrides: ScenarioOverrides,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub suite: PathBuf,
    /// Record table; stdout when absent.
    #[arg(short, long, env = "CCPP_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Aggregate table (medians, failure percentages).
    #[arg(long, env = "CCPP_AGGREGATES")]
    pub aggregates: Option<PathBuf>,
    /// Leave out wall-time columns so output is byte-stable.
    #[arg(long, env = "CCPP_NO_TIMING")]
    pub no_timing: bool,
    #[arg(long, env = "CCPP_TIMEOUT")]
    pub timeout: Option<f64>,
    #[arg(long, env = "CCPP_NODE_BUDGET")]
    pub node_budget: Option<usize>,
    #[arg(long, env = "CCPP_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub scenario: PathBuf,
    /// Plan file or first-stage dump.
    pub artifact: PathBuf,
    #[arg(short, long, env = "CCPP_OUTPUT")]
    pub output: PathBuf,
    /// Epoch shown for first-stage dumps.
    #[arg(long, env = "CCPP_EPOCH", default_value_t = 0)]
    pub epoch: usize,
    #[arg(long, env = "CCPP_CELL_PX", default_value_t = 16)]
    pub cell_px: u32,
    #[arg(long, env = "CCPP_SNAPSHOTS", default_value_t = 8)]
    pub snapshots: usize,
    #[arg(long, env = "CCPP_MAX_PIXELS", default_value_t = 16_000_000)]
    pub max_pixels: u64,
    #[command(flatten)]
    pub overrides: ScenarioOverrides,
}

struct Failure {
    code: i32,
    category: String,
    message: String,
}

impl Failure {
    fn new(code: i32, category: &str, message: impl ToString) -> Self {
        Failure {
            code,
            category: category.to_string(),
            message: message.to_string(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Scenario(_) => EXIT_SOLVE,
            _ => EXIT_INPUT,
        };
        Failure::new(code, e.category(), e)
    }
}

/// Loads a scenario file with command-line overrides applied.
pub fn load_with_overrides(path: &Path, ov: &ScenarioOverrides) -> Result<LoadedScenario, IoError> {
    let mut spec = ScenarioSpec::parse(&read_text(path)?)?;
    let map_path = match &ov.map {
        Some(m) => m.clone(),
        None => path.parent().unwrap_or(Path::new(".")).join(&spec.map),
    };
    if let Some(m) = &ov.map {
        spec.map = m.clone();
    }
    if let Some(v) = ov.scale {
        spec.scale = v;
    }
    if let Some(v) = ov.lambda {
        spec.lambda = v;
    }
    if let Some(v) = ov.alpha {
        spec.alpha = v;
    }
    if let Some(v) = ov.seed {
        spec.seed = v;
    }
    if ov.agents.is_some() {
        spec.agents = ov.agents;
    }
    let grid = load_map(&map_path, spec.scale)?;
    spec.build(grid)
}

fn summary(out: &mut dyn Write, makespan: f64, t: &StepTimings) {
    let _ = writeln!(out, "makespan {makespan}");
    for (name, d) in StepTimings::NAMES.iter().zip(t.values()) {
        let _ = writeln!(out, "{name} {:.3} ms", d.as_secs_f64() * 1e3);
    }
    let _ = writeln!(out, "total {:.3} ms", t.total().as_secs_f64() * 1e3);
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let loaded = load_with_overrides(&a.scenario, &a.overrides)?;
    let config = SolverConfig {
        timeout: a.timeout.map(Duration::from_secs_f64),
        stage2: Stage2Params {
            node_budget: a.node_budget,
        },
        ..SolverConfig::default()
    };
    let sol = solve(&loaded.scenario, &config).map_err(|e| Failure::new(EXIT_SOLVE, e.category(), &e))?;
    let doc = PlanDocument::new(&loaded, &sol.plan, Some(sol.makespan), sol.goal_visit_times.clone());
    write_text(&a.output, &doc.to_json())?;
    if let Some(p) = &a.stage1_dump {
        write_text(p, &Stage1Dump::new(&loaded, &sol.stage1).to_json())?;
    }
    summary(out, sol.makespan, &sol.timings);
    Ok(())
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let loaded = load_with_overrides(&a.scenario, &a.overrides)?;
    let doc = PlanDocument::parse(&read_text(&a.plan)?)?;
    let plan = doc.to_plan(&loaded)?;
    let report = validate_plan(&loaded.scenario, &plan);
    if report.ok {
        let _ = writeln!(out, "ok makespan {}", report.makespan.unwrap_or(f64::NAN));
        return Ok(());
    }
    for v in &report.violations {
        let _ = writeln!(out, "{v}");
    }
    Err(Failure::new(
        EXIT_INVALID,
        "invalid plan",
        format!("{} violation(s)", report.violations.len()),
    ))
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (mut suite, base): (BenchSuite, PathBuf) = BenchSuite::load(&a.suite)?;
    if a.timeout.is_some() {
        suite.timeout = a.timeout;
    }
    if let Some(b) = a.node_budget {
        suite.node_budget = b;
    }
    if let Some(w) = a.workers {
        suite.workers = w;
    }
    let runs = run_suite(&suite, &base)?;
    let records: Vec<BenchRecord> = runs.into_iter().map(|r| r.record).collect();
    let table = records_csv(&records, !a.no_timing);
    match &a.output {
        Some(p) => write_text(p, &table)?,
        None => {
            let _ = out.write_all(table.as_bytes());
        }
    }
    if let Some(p) = &a.aggregates {
        write_text(p, &aggregates_csv(&aggregate(&records), !a.no_timing))?;
    }
    Ok(())
}

fn cmd_render(a: &RenderArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let loaded = load_with_overrides(&a.scenario, &a.overrides)?;
    let opts = RenderOptions {
        cell_px: a.cell_px,
        snapshots: a.snapshots,
        max_pixels: a.max_pixels,
        epoch: a.epoch,
    };
    let svg = match parse_artifact(&read_text(&a.artifact)?)? {
        Artifact::Plan(doc) => render_plan(&loaded, &doc.to_plan(&loaded)?, &opts),
        Artifact::Stage1(dump) => render_stage1(&loaded, &dump, &opts),
    }
    .map_err(|e| Failure::new(EXIT_INPUT, "render error", e))?;
    write_text(&a.output, &svg)?;
    let _ = writeln!(out, "wrote {}", a.output.display());
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Render(a) => cmd_render(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error[{}]: {}", f.category, f.message);
            f.code
        }
    }
}
