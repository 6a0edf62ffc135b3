use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nsb_avoid::{Error, ScenarioFile};

mod output;
mod overrides;

use output::{write_outputs, RunOutput};
use overrides::{ControllerSpec, RunOverrides};

/// Exit code for an invalid scenario document, override or argument.
const EXIT_SCHEMA: u8 = 2;
/// Exit code when a run produces a non-finite state.
const EXIT_NON_FINITE: u8 = 3;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(
    name = "nsb-avoid",
    version,
    about = "Sensor-based obstacle avoidance simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv, metrics.json and plot.gp.
    Run(RunArgs),
    /// Run one scenario under several controllers and tabulate their metrics.
    Compare(CompareArgs),
}

#[derive(Args, Clone, Debug)]
struct CommonArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the integration step, seconds.
    #[arg(long)]
    ts: Option<f64>,
    /// Override the run length, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Reserved; scenarios are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    supervisor: Option<SupervisorArg>,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated list, e.g. `nsb-arctan,nsb-crisp,apf`.
    #[arg(long, value_delimiter = ',', required = true)]
    controllers: Vec<ControllerSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SupervisorArg {
    Arctan,
    Piecewise,
    Crisp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ControllerArg {
    Nsb,
    Apf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => EXIT_SCHEMA,
        Failure::Core(Error::Schema { .. }) => EXIT_SCHEMA,
        Failure::Core(Error::NonFinite { .. }) => EXIT_NON_FINITE,
        Failure::Core(_) => EXIT_OTHER,
    }
}

fn describe(f: &Failure) -> String {
    match f {
        Failure::Usage(msg) => msg.clone(),
        Failure::Core(Error::Schema { path, message }) => {
            format!("schema error at `{path}`: {message}")
        }
        Failure::Core(e) => e.to_string(),
    }
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Core(Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read scenario {}: {e}", path.display()),
        )))
    })?;
    Ok(ScenarioFile::from_json(&text)?)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let c = &args.common;
    let file = load(&c.scenario)?;
    let ov = RunOverrides {
        supervisor: args.supervisor,
        controller: args.controller,
        ts: c.ts,
        duration: c.duration,
        seed: c.seed,
    };
    let out = RunOutput::compute(&file, &ov, &c.scenario)?;
    write_outputs(&c.out, std::slice::from_ref(&out), None)?;
    if !c.quiet {
        println!("{}", out.summary_line());
        println!("wrote {}", c.out.display());
    }
    Ok(())
}

/// Controller labels, with `-2`, `-3`, ... appended to repeats so that each
/// run gets its own output directory.
fn unique_labels(specs: &[ControllerSpec]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for spec in specs {
        let base = spec.label();
        let mut label = base.clone();
        let mut n = 1;
        while seen.contains(&label) {
            n += 1;
            label = format!("{base}-{n}");
        }
        seen.push(label);
    }
    seen
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let c = &args.common;
    if args.controllers.len() < 2 {
        return Err(Failure::Usage(
            "compare needs at least two controllers".into(),
        ));
    }
    let file = load(&c.scenario)?;
    let runs: Vec<RunOverrides> = args
        .controllers
        .iter()
        .map(|spec| RunOverrides {
            supervisor: spec.supervisor,
            controller: Some(spec.controller),
            ts: c.ts,
            duration: c.duration,
            seed: c.seed,
        })
        .collect();
    // validate every selection before spending time on runs
    for ov in &runs {
        ov.apply(&file)?.build()?;
    }
    let labels = unique_labels(&args.controllers);
    let results: Vec<Result<RunOutput, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .zip(labels)
            .map(|(ov, label)| {
                let file = &file;
                s.spawn(move || {
                    info!("running {label}");
                    RunOutput::compute(file, ov, &c.scenario).map(|o| o.labelled(label))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let outputs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let table = output::comparison_table(&outputs);
    write_outputs(&c.out, &outputs, Some(&table))?;
    if !c.quiet {
        print!("{table}");
        println!("wrote {}", c.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap reports usage errors with exit code 2, the same as schema errors
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f));
            ExitCode::from(exit_code(&f))
        }
    }
}
