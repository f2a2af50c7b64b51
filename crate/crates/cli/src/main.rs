use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lossmesh::config::{load_config, Mode};
use lossmesh::{run_experiment, verify, CliError};

#[derive(Parser)]
#[command(name = "lossmesh", version, about = "Power-of-d loss systems: mean-field models and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to output.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    #[command(name = "fixedpoint")]
    Fixedpoint(RunArgs),
    #[command(name = "ode_exp")]
    OdeExp(RunArgs),
    #[command(name = "ode_phase")]
    OdePhase(RunArgs),
    #[command(name = "ode_hetero")]
    OdeHetero(RunArgs),
    #[command(name = "simulate")]
    Simulate(RunArgs),
    #[command(name = "insensitivity")]
    Insensitivity(RunArgs),
    #[command(name = "transient")]
    Transient(RunArgs),
    /// Run every acceptance criterion.
    #[command(name = "verify")]
    Verify(VerifyArgs),
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn run_mode(mode: Mode, args: RunArgs) -> Result<(), CliError> {
    set_threads(args.threads)?;
    let mut cfg = load_config(&args.config)?;
    if cfg.mode != mode {
        return Err(CliError::Config(format!(
            "mode: config is for {} but the {mode} subcommand was given",
            cfg.mode
        )));
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    for table in run_experiment(&cfg, Some(&out))? {
        println!("wrote {}", out.join(format!("{}.csv", table.name)).display());
    }
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<(), CliError> {
    set_threads(args.threads)?;
    let out = args.out.unwrap_or_else(verify::default_out_dir);
    let results = verify::run_all(&out);
    for c in &results {
        println!("{}", c.line());
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} criteria failed", results.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fixedpoint(a) => run_mode(Mode::Fixedpoint, a),
        Command::OdeExp(a) => run_mode(Mode::OdeExp, a),
        Command::OdePhase(a) => run_mode(Mode::OdePhase, a),
        Command::OdeHetero(a) => run_mode(Mode::OdeHetero, a),
        Command::Simulate(a) => run_mode(Mode::Simulate, a),
        Command::Insensitivity(a) => run_mode(Mode::Insensitivity, a),
        Command::Transient(a) => run_mode(Mode::Transient, a),
        Command::Verify(a) => run_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lossmesh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
