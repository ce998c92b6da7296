use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use weakhom::Bc;
use weakhom_cli::{with_threads, Command, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "weakhom", version, about = "Homogenized tensors of weakly random perturbed periodic materials")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Builtin material (material1, material2, checkerboard, oned) or a TOML material file
    #[arg(long, global = true)]
    material: Option<String>,

    #[arg(long, global = true)]
    eta: Option<f64>,

    /// Supercell width (odd)
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Comma-separated supercell widths
    #[arg(long, global = true, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,

    /// Mesh cells per unit edge
    #[arg(long, global = true)]
    density: Option<usize>,

    #[arg(long, global = true, value_enum)]
    bc: Option<BcArg>,

    #[arg(long, global = true)]
    realizations: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Expansion order (1 or 2)
    #[arg(long, global = true)]
    order: Option<u8>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Maximum number of two-defect solves
    #[arg(long, global = true)]
    budget: Option<usize>,

    /// Run the two-defect sum even when it exceeds the budget
    #[arg(long, global = true)]
    budget_override: bool,

    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Record wall times in the outputs
    #[arg(long, global = true)]
    record_time: bool,

    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Periodic homogenized tensor
    Cell,
    /// First- and second-order defect coefficients
    Correct,
    /// Monte-Carlo estimates over random supercells
    Mc,
    /// Convergence rate of the first-order coefficient in N
    Convergence,
    /// Exact one-dimensional oracle
    Oned,
    /// Expansion tensor at eta, optionally against Monte-Carlo
    Expand,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BcArg {
    Periodic,
    Dirichlet,
}

fn run(cli: &Cli) -> Result<(), weakhom_cli::CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        material: cli.material.clone(),
        eta: cli.eta,
        n: cli.n,
        n_list: cli.n_list.clone(),
        density: cli.density,
        bc: cli.bc.map(|b| match b {
            BcArg::Periodic => Bc::Periodic,
            BcArg::Dirichlet => Bc::Dirichlet,
        }),
        realizations: cli.realizations,
        seed: cli.seed,
        order: cli.order,
        out: cli.out.clone(),
        budget: cli.budget,
        budget_override: cli.budget_override,
        threads: cli.threads,
        record_time: cli.record_time,
    })?;
    config.validate()?;
    let command = match cli.command {
        Cmd::Cell => Command::Cell,
        Cmd::Correct => Command::Correct,
        Cmd::Mc => Command::Mc,
        Cmd::Convergence => Command::Convergence,
        Cmd::Oned => Command::Oned,
        Cmd::Expand => Command::Expand,
    };
    log::info!("{} with config {}", command.name(), config.hash());
    with_threads(config.threads, || command.run(&config))?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, weakhom_cli::CliError::Config(_)) {
                eprintln!("run `weakhom --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
