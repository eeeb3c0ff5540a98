use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use landscape_lab::config::{Experiment, Overrides, RunConfig};
use landscape_lab::runner::{emit_plotdata, run, PLOTTABLE};
use landscape_lab::table::Format;
use landscape_lab::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "landscape-lab", version, about = "Energy-landscape experiments across abstraction levels")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config with global keys and the experiment's parameters
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed (env: LANDSCAPE_LAB_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (env: LANDSCAPE_LAB_OUT_DIR)
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Worker threads; results do not depend on this
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Basin census across abstraction levels
    Census,
    /// Hessian, Lipschitz and decoder-Jacobian estimates per level
    Smoothness,
    /// Majority-vote coarsening of random two-class grids
    Grid,
    /// Soft vs hard k-NN vs basin class per query
    Knn,
    /// Pure-outcome odds of merged minima
    Odds,
    /// Bootstrap bias and variance per level
    Biasvar,
    /// Nearest-memory distance and diversity per level
    Privacy,
    /// Rebuild plot data from tables already in --out-dir
    Plotdata {
        /// Grid side, for the grid share standard errors
        #[arg(long)]
        grid_side: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn experiment(c: &Command) -> Option<Experiment> {
    Some(match c {
        Command::Census => Experiment::Census,
        Command::Smoothness => Experiment::Smoothness,
        Command::Grid => Experiment::Grid,
        Command::Knn => Experiment::Knn,
        Command::Odds => Experiment::Odds,
        Command::Biasvar => Experiment::Biasvar,
        Command::Privacy => Experiment::Privacy,
        Command::Plotdata { .. } => return None,
    })
}

fn main_inner(cli: Cli) -> Result<(), Error> {
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out_dir,
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        workers: cli.workers,
    }
    .with_env()?;

    let Some(exp) = experiment(&cli.command) else {
        let Command::Plotdata { grid_side } = cli.command else { unreachable!() };
        let dir = overrides.out_dir.unwrap_or_else(|| PathBuf::from("out"));
        let present: Vec<&str> = PLOTTABLE
            .into_iter()
            .filter(|n| dir.join(format!("{n}.csv")).is_file())
            .collect();
        if present.is_empty() {
            return Err(Error::Input(format!("no census, grid or smoothness table in {}", dir.display())));
        }
        for p in emit_plotdata(&dir, &present, grid_side)? {
            println!("{}", p.display());
        }
        return Ok(());
    };

    let config = match &cli.config {
        Some(path) => RunConfig::load(path, Some(exp))?,
        None => RunConfig::defaults(exp),
    }
    .apply(&overrides)?;

    let out = run(&config)?;
    for p in out.tables.iter().chain(&out.plot_data).chain(&out.extra) {
        println!("{}", p.display());
    }
    println!("{}", out.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL })
        }
    }
}
