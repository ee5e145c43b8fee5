//! `paygsim`: simulate, verify and sweep scenarios from the command line.

mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paygsim_core::engine::with_threads;
use paygsim_core::scenario::{load, ValidatedScenario};
use paygsim_core::verify::{Suite, SuiteOptions};

#[derive(Parser, Debug)]
#[command(name = "paygsim", version, about = "Pension fund management under dynamic preferences: simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the optimally managed fund and write path CSV plus summary JSON.
    Simulate(Common),
    /// Run verification suites and write a JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated suite names (default: all).
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
    },
    /// Re-run the simulation for each value of one numeric parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter as `section.key`, e.g. `zu.theta`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Time step `2^-K`.
    #[arg(long)]
    dt_exponent: Option<u32>,
    /// Output directory (default: `outputs.directory` of the scenario).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override")]
    overrides: Vec<String>,
}

/// Outcome classes mapped onto exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Validation(Vec<String>),
    Io(String),
    SuiteFailed,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
            Failure::SuiteFailed => 3,
        }
    }
}

pub fn io_err(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> Failure {
    move |e| Failure::Io(format!("{context}: {e}"))
}

/// Scenario text plus the override list implied by the flags.
pub struct Loaded {
    pub text: String,
    pub overrides: Vec<String>,
    pub scenario: ValidatedScenario,
}

impl Loaded {
    pub fn with(&self, extra: &[String]) -> Result<ValidatedScenario, Failure> {
        let mut all = self.overrides.clone();
        all.extend_from_slice(extra);
        validate(&self.text, &all)
    }
}

fn validate(text: &str, overrides: &[String]) -> Result<ValidatedScenario, Failure> {
    load(text, overrides).map_err(|errs| Failure::Validation(errs.iter().map(|e| e.to_string()).collect()))
}

fn load_common(c: &Common) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&c.scenario).map_err(io_err(c.scenario.display()))?;
    let mut overrides = c.overrides.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("mc.seed={seed}"));
    }
    if let Some(p) = c.paths {
        overrides.push(format!("mc.paths={p}"));
    }
    if let Some(k) = c.dt_exponent {
        let base = validate(&text, &overrides)?;
        let span = base.config.time.t1 - base.config.time.t0;
        let steps = span * 2f64.powi(k as i32);
        if (steps - steps.round()).abs() > 1e-9 || steps < 1.0 {
            return Err(Failure::Validation(vec![format!("time.steps: horizon {span} is not a multiple of dt = 2^-{k}")]));
        }
        overrides.push(format!("time.steps={}", steps.round() as u64));
    }
    let scenario = validate(&text, &overrides)?;
    Ok(Loaded { text, overrides, scenario })
}

fn out_dir(c: &Common, scn: &ValidatedScenario) -> Result<PathBuf, Failure> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from(&scn.config.outputs.directory));
    std::fs::create_dir_all(&dir).map_err(io_err(dir.display()))?;
    Ok(dir)
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var("PAYGSIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Failure::Validation(vec![format!("PAYGSIM_THREADS: expected a positive integer, got '{v}'")])),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = threads()?;
    let exec = |f: Box<dyn FnOnce() -> Result<(), Failure> + Send>| -> Result<(), Failure> {
        with_threads(threads, f).map_err(|e| Failure::Io(e.to_string()))?
    };
    match cli.command {
        Command::Simulate(c) => {
            let loaded = load_common(&c)?;
            let dir = out_dir(&c, &loaded.scenario)?;
            exec(Box::new(move || output::simulate(&loaded.scenario, &dir)))
        }
        Command::Verify { common, suite } => {
            let suites = parse_suites(&suite)?;
            let loaded = load_common(&common)?;
            let dir = out_dir(&common, &loaded.scenario)?;
            let opts = SuiteOptions::default();
            exec(Box::new(move || output::verify(&loaded.scenario, &suites, &opts, &dir)))
        }
        Command::Sweep { common, param, values } => {
            let loaded = load_common(&common)?;
            let dir = out_dir(&common, &loaded.scenario)?;
            exec(Box::new(move || sweep::sweep(&loaded, &param, &values, &dir)))
        }
    }
}

fn parse_suites(names: &[String]) -> Result<Vec<Suite>, Failure> {
    if names.is_empty() {
        return Ok(Suite::ALL.to_vec());
    }
    let mut out = Vec::new();
    let mut errs = Vec::new();
    for n in names.iter().filter(|n| !n.trim().is_empty()) {
        match n.parse::<Suite>() {
            Ok(s) if !out.contains(&s) => out.push(s),
            Ok(_) => {}
            Err(e) => errs.push(format!("--suite: {e}")),
        }
    }
    if errs.is_empty() { Ok(out) } else { Err(Failure::Validation(errs)) }
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(io_err(path.display()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(lines) => {
                    for l in lines {
                        eprintln!("{l}");
                    }
                }
                Failure::Io(msg) => eprintln!("{msg}"),
                Failure::SuiteFailed => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
