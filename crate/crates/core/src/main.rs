use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use lift3d::boxlang::ParseMode;
use lift3d::pipeline::{run_eval, run_lift, run_qagen, run_selfcheck, Config, PipelineError};

#[derive(Parser)]
#[command(
    name = "lift3d",
    version,
    about = "Lift 2D annotations into metric 3D boxes, generate spatial QA, and evaluate predictions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Force strict parsing regardless of the config.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Lift a COCO-annotated dataset plus depth rasters into repository JSONL.
    Lift(CommonArgs),
    /// Generate detection/grounding/reasoning QA JSONL from a repository.
    Qagen(CommonArgs),
    /// Evaluate predictions JSONL against references; writes a JSON report.
    Eval(CommonArgs),
    /// Run the numeric and oracle property suites; nonzero exit on failure.
    Selfcheck,
}

fn load_config(args: &CommonArgs) -> Result<Config, PipelineError> {
    let mut config = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if args.strict {
        config.parse_mode = ParseMode::Strict;
    }
    Ok(config)
}

fn report(lines: &[String], started: Instant) {
    for line in lines {
        eprintln!("{line}");
    }
    eprintln!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
}

fn run() -> Result<(), PipelineError> {
    let cli = Cli::parse();
    let started = Instant::now();
    match cli.command {
        Command::Lift(args) => {
            let config = load_config(&args)?;
            let summary = run_lift(&config, &args.out)?;
            report(&summary.lines(), started);
        }
        Command::Qagen(args) => {
            let config = load_config(&args)?;
            let summary = run_qagen(&config, &args.out)?;
            report(&summary.lines(), started);
        }
        Command::Eval(args) => {
            let config = load_config(&args)?;
            let outcome = run_eval(&config, &args.out)?;
            print!("{}", outcome.table);
            report(&outcome.lines, started);
        }
        Command::Selfcheck => {
            let lines = run_selfcheck()?;
            for line in &lines {
                println!("{line}");
            }
            report(&[], started);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
