use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aodv_sim::node::SECONDS;
use aodv_sim::report::{report, ReportFormat};
use aodv_sim::scenario::load_scenario;
use aodv_sim::sim::run;

#[derive(Parser)]
#[command(
    name = "aodv-sim",
    about = "Deterministic AODV / secured-AODV network simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print (or write) a report.
    Run(RunArgs),
    /// Parse and validate a scenario without running it.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file to run.
    #[arg(long)]
    scenario: PathBuf,
    /// Seed override (defaults to the scenario's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Duration override in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Write the event trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value_t = ReportArg::Table)]
    report: ReportArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed sweep: run seeds seed..seed+N independently.
    #[arg(long, default_value_t = 1)]
    runs: u64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportArg {
    Table,
    Structured,
}

impl From<ReportArg> for ReportFormat {
    fn from(arg: ReportArg) -> Self {
        match arg {
            ReportArg::Table => ReportFormat::Table,
            ReportArg::Structured => ReportFormat::Structured,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run_command(args),
        Command::Validate(args) => validate_command(args),
    }
}

fn validate_command(args: ValidateArgs) -> ExitCode {
    match load_scenario(&args.scenario) {
        Ok(scn) => {
            println!(
                "OK: {} ({} nodes, {} flows, {} malicious, {} s)",
                scn.name,
                scn.nodes.len(),
                scn.flows.len(),
                scn.malicious.len(),
                scn.duration / SECONDS
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_command(args: RunArgs) -> ExitCode {
    let mut scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(seconds) = args.duration {
        scenario.duration = (seconds * SECONDS as f64).round() as u64;
    }
    let base_seed = args.seed.unwrap_or(scenario.seed);
    let seeds: Vec<u64> = (0..args.runs.max(1)).map(|i| base_seed + i).collect();

    // Independent runs; fan out across threads for sweeps.
    let outputs: Vec<_> = std::thread::scope(|scope| {
        let scenario = &scenario;
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || run(scenario, seed)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let multi = seeds.len() > 1;
    for (seed, result) in seeds.iter().zip(outputs) {
        let output = match result {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        };
        let rendered = report(&scenario, &output, args.report.into());
        match &args.out {
            Some(path) => {
                let path = if multi {
                    suffixed(path, *seed)
                } else {
                    path.clone()
                };
                if let Err(e) = std::fs::write(&path, rendered) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            None => print!("{rendered}"),
        }
        if let Some(path) = &args.trace {
            let path = if multi {
                suffixed(path, *seed)
            } else {
                path.clone()
            };
            if let Err(e) = std::fs::write(&path, output.render_trace()) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
    }
    ExitCode::SUCCESS
}

fn suffixed(path: &PathBuf, seed: u64) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(format!(".seed{seed}"));
    PathBuf::from(name)
}
