use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlinv::commands::{
    cmd_check, cmd_manufacture, cmd_residual, cmd_solve_forward, cmd_solve_inverse, Common, Outcome,
};
use nlinv::{exit, CliError};
use nonlocal_inverse::spectral::CouplingMode;

/// Inverse coefficient solver for a hyperbolic equation with nonlocal
/// time conditions.
#[derive(Debug, Parser)]
#[command(name = "nlinv", version)]
struct Cli {
    /// Worker threads for the per-mode solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Problem configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for reports and CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coupling of the even modes and sign of the coefficient formula.
    #[arg(long)]
    mode: Option<CouplingMode>,
}

impl ConfigArgs {
    fn common(&self) -> Common {
        Common { config: self.config.clone(), out: self.out.clone(), mode: self.mode }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Audit the data hypotheses and the contraction constants.
    Check {
        #[command(flatten)]
        args: ConfigArgs,
        /// Also find the largest T for which the contraction inequality holds.
        #[arg(long = "max-T")]
        max_t: bool,
    },
    /// Recover a(t) and u(x, t) from the data and the observation.
    SolveInverse {
        #[command(flatten)]
        args: ConfigArgs,
        /// Solve even when the data hypotheses fail.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Solve the direct problem for the coefficient in `functions.a`.
    SolveForward {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Write a built-in manufactured problem and its exact solution.
    Manufacture {
        /// single-odd, odd-even or three-mode.
        preset: String,
        #[arg(long)]
        out: PathBuf,
        /// Horizon; defaults to the largest T satisfying the contraction inequality.
        #[arg(long = "T")]
        horizon: Option<f64>,
    },
    /// Residuals of a supplied solution (`t,a` and `x,t,u` CSV files).
    Residual {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        u: PathBuf,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Check { args, max_t } => cmd_check(&args.common(), max_t),
        Command::SolveInverse { args, force, max_iter } => cmd_solve_inverse(&args.common(), force, max_iter),
        Command::SolveForward { args, max_iter } => cmd_solve_forward(&args.common(), max_iter),
        Command::Manufacture { preset, out, horizon } => cmd_manufacture(&preset, horizon, &out),
        Command::Residual { args, a, u } => cmd_residual(&args.common(), &a, &u),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { exit::INVALID_INPUT } else { exit::OK };
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            if let Ok(s) = serde_json::to_string_pretty(&outcome.summary) {
                // a closed stdout must not turn a finished run into a failure
                let _ = writeln!(std::io::stdout().lock(), "{s}");
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
