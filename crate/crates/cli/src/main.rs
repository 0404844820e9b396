use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prefgame::harness::acceptance::Thresholds;
use prefgame::harness::commands::{
    accept_command, collect_command, experiment_command, solve_nash_command, CollectArgs, CommandOutput, ExperimentKind,
    Overrides,
};

/// Solver and simulation lab for KL-regularized preference games.
///
/// The worker count for replicate runs is read from PREFGAME_WORKERS.
#[derive(Parser, Debug)]
#[command(name = "prefgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the game defined by an instance file's preference table.
    SolveNash {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Draw a labeled preference dataset.
    Collect {
        #[arg(long)]
        instance: PathBuf,
        /// instance | cyclic:W | bt:R,R;R,R | class:I | table:PATH
        #[arg(long, default_value = "instance")]
        oracle: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Class file, needed for class:I oracles.
        #[arg(long)]
        class: Option<PathBuf>,
        /// Policies drawing the first and second action of each pair: reference or uniform.
        #[arg(long, num_args = 2, value_names = ["FIRST", "SECOND"], default_values = ["reference", "reference"])]
        behavior: Vec<String>,
    },
    /// Run an offline experiment config.
    Offline(ExperimentArgs),
    /// Run an online experiment config.
    Online(ExperimentArgs),
    /// Run a config once per value of its [sweep] block.
    Sweep(ExperimentArgs),
    /// Run the acceptance suite.
    Accept,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

impl ExperimentArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            replicates: self.replicates,
            seed: self.seed,
            output: self.output.clone(),
            eta: self.eta,
            n: self.n,
            iterations: self.iterations,
            batch_size: self.batch_size,
            beta: self.beta,
            lambda: self.lambda,
        }
    }
}

fn dispatch(command: Command) -> prefgame::Result<CommandOutput> {
    match command {
        Command::SolveNash {
            instance,
            eta,
            tol,
            max_iter,
        } => solve_nash_command(&instance, eta, tol, max_iter),
        Command::Collect {
            instance,
            oracle,
            n,
            seed,
            class,
            behavior,
        } => collect_command(&CollectArgs {
            instance,
            oracle,
            n,
            seed,
            class,
            behavior: [behavior[0].clone(), behavior[1].clone()],
        }),
        Command::Offline(a) => experiment_command(&a.config, ExperimentKind::Offline, &a.overrides()),
        Command::Online(a) => experiment_command(&a.config, ExperimentKind::Online, &a.overrides()),
        Command::Sweep(a) => experiment_command(&a.config, ExperimentKind::Sweep, &a.overrides()),
        Command::Accept => Ok(accept_command(&Thresholds::default())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(out) => {
            print!("{}", out.stdout);
            if out.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
