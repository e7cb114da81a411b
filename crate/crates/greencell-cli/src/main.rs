//! Command-line experiments over the greencell library: scenario
//! generation, end-to-end simulation with carbon attribution, dispatch
//! solving, sleep controllers, regional extrapolation, PV sweeps, run
//! comparison, and artifact validation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "greencell", version, about = "Mobile-network energy and carbon simulator")]
struct Cli {
    /// Master seed; recorded in every artifact manifest.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scenario tools.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
    /// End-to-end run: scenario, controller, energy, dispatch, carbon.
    Simulate(commands::simulate::SimulateArgs),
    /// Unit-commitment tools.
    Dispatch {
        #[command(subcommand)]
        cmd: DispatchCmd,
    },
    /// Sleep controllers.
    Control {
        #[command(subcommand)]
        cmd: ControlCmd,
    },
    /// Regional extrapolation.
    Regions {
        #[command(subcommand)]
        cmd: RegionsCmd,
    },
    /// Solar PV analysis.
    Solar {
        #[command(subcommand)]
        cmd: SolarCmd,
    },
    /// Align several simulate runs into one comparison table.
    Compare(commands::compare_cmd::CompareArgs),
    /// Re-verify the internal consistency of a simulate run.
    Validate(commands::validate_cmd::ValidateArgs),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Generate a synthetic city scenario.
    Gen(commands::scenario_cmd::GenArgs),
}

#[derive(Subcommand)]
enum DispatchCmd {
    /// Solve a day-ahead unit-commitment instance.
    Solve(commands::dispatch_cmd::SolveArgs),
}

#[derive(Subcommand)]
enum ControlCmd {
    /// Run a controller over a scenario and evaluate the schedule.
    Run(commands::control_cmd::RunArgs),
    /// Train the multi-agent Q-learning controller.
    Train(commands::control_cmd::TrainArgs),
}

#[derive(Subcommand)]
enum RegionsCmd {
    /// Extrapolate energy and carbon to a table of regions.
    Estimate(commands::regions_cmd::EstimateArgs),
}

#[derive(Subcommand)]
enum SolarCmd {
    /// Sweep PV panel sizes and investments.
    Sweep(commands::solar_cmd::SweepArgs),
}

fn configure_threads() {
    if let Ok(raw) = std::env::var("GREENCELL_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Scenario { cmd: ScenarioCmd::Gen(args) } => {
            commands::scenario_cmd::run(args, cli.seed, cli.out)
        }
        Cmd::Simulate(args) => commands::simulate::run(args, cli.seed, cli.out),
        Cmd::Dispatch { cmd: DispatchCmd::Solve(args) } => {
            commands::dispatch_cmd::run(args, cli.seed, cli.out)
        }
        Cmd::Control { cmd: ControlCmd::Run(args) } => {
            commands::control_cmd::run_controller(args, cli.seed, cli.out)
        }
        Cmd::Control { cmd: ControlCmd::Train(args) } => {
            commands::control_cmd::train(args, cli.seed, cli.out)
        }
        Cmd::Regions { cmd: RegionsCmd::Estimate(args) } => {
            commands::regions_cmd::run(args, cli.seed, cli.out)
        }
        Cmd::Solar { cmd: SolarCmd::Sweep(args) } => {
            commands::solar_cmd::run(args, cli.seed, cli.out)
        }
        Cmd::Compare(args) => commands::compare_cmd::run(args, cli.seed, cli.out),
        Cmd::Validate(args) => commands::validate_cmd::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
