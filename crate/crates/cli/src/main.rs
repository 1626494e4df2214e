//! `mstat`: certify stationarity of linear MPCCs and inverse optimal control
//! problems from TOML problem files, and run the built-in scenario batteries.
//!
//! Exit codes: 0 verdict true, 2 refuted or failed, 3 invalid input.

mod commands;
mod problem;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mstat_core::ioc::NostrongVariant;
use mstat_core::regularization::Schedule;
use mstat_core::stationarity::CertificateKind;

use commands::{Outcome, Settings};
use report::RunReport;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input.
    Invalid(String),
    /// A solver or certification step failed.
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 3,
            CliError::Failed(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

impl From<mstat_core::Error> for CliError {
    fn from(e: mstat_core::Error) -> Self {
        use mstat_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::Io(_) | E::InvalidPoint(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "mstat", version, about = "Stationarity certificates for complementarity-constrained problems")]
struct Cli {
    /// Residual tolerance of every certificate.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Largest biactive set for which the A_β family is enumerated.
    #[arg(long, global = true, default_value_t = 12)]
    cap: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report the feasibility of every sign pattern.
    #[arg(long, global = true)]
    all_patterns: bool,
    /// Omit clock fields so reports are byte-reproducible.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Write the command's CSV trace here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Weak,
    Abeta,
    Aforall,
    M,
    S,
}

impl From<Kind> for CertificateKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Weak => CertificateKind::Weak,
            Kind::Abeta => CertificateKind::Abeta,
            Kind::Aforall => CertificateKind::Aforall,
            Kind::M => CertificateKind::M,
            Kind::S => CertificateKind::S,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Averaging,
    NonnegMatrix,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a point of a linear or inverse problem.
    Certify {
        #[arg(long)]
        problem: PathBuf,
        /// Upper-level point (`midpoint,value` CSV), needed for [ioc] problems.
        #[arg(long)]
        w: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "m")]
        kind: Kind,
        /// Comma-separated cell indices of β.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        beta: Option<Vec<usize>>,
    },
    /// Solve the A_β multiplier system and its primal LP.
    KktBeta {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        beta: Vec<usize>,
    },
    /// Enumerate the A_β family and synthesize M-multipliers.
    Synthesize {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        w: Option<PathBuf>,
    },
    /// Solve the lower-level obstacle problem at `w`.
    LowerSolve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        w: PathBuf,
    },
    /// Follow the penalty path γ → ∞ at fixed `w`.
    Regpath {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        w: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma0: f64,
        #[arg(long, default_value_t = 10.0)]
        factor: f64,
        #[arg(long, default_value_t = 9)]
        steps: usize,
    },
    /// Run a built-in scenario battery: `ex48` or `nostrong`.
    Scenario {
        name: String,
        /// Grid sizes (ex48 default 64,128,256,512; nostrong default 64).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "both")]
        variant: Variant,
        #[arg(long, default_value_t = 3)]
        bands: usize,
    },
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let s = Settings {
        tol: cli.tol,
        cap: cli.cap,
        all_patterns: cli.all_patterns,
    };
    if !(cli.tol > 0.0 && cli.tol.is_finite()) {
        return Err(CliError::Invalid(format!("--tol must be positive, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Certify { problem, w, kind, beta } => {
            commands::certify(problem, w.as_deref(), (*kind).into(), beta.as_deref(), &s)
        }
        Command::KktBeta { problem, beta } => commands::kkt_beta(problem, beta, &s),
        Command::Synthesize { problem, w } => commands::synthesize_cmd(problem, w.as_deref(), &s),
        Command::LowerSolve { problem, w } => commands::lower_solve(problem, w, &s),
        Command::Regpath { problem, w, gamma0, factor, steps } => commands::regpath(
            problem,
            w,
            Schedule {
                gamma0: *gamma0,
                factor: *factor,
                steps: *steps,
            },
        ),
        Command::Scenario { name, n, alpha, variant, bands } => match name.as_str() {
            "ex48" => {
                let ns = if n.is_empty() { vec![64, 128, 256, 512] } else { n.clone() };
                commands::ex48_battery(&ns, *bands)
            }
            "nostrong" => {
                let n = match n.as_slice() {
                    [] => 64,
                    [k] => *k,
                    _ => return Err(CliError::Invalid("nostrong takes a single --n".into())),
                };
                let variants = match variant {
                    Variant::Averaging => vec![NostrongVariant::Averaging],
                    Variant::NonnegMatrix => vec![NostrongVariant::NonnegMatrix],
                    Variant::Both => vec![NostrongVariant::NonnegMatrix, NostrongVariant::Averaging],
                };
                commands::nostrong_battery(n, *alpha, &variants, &s)
            }
            other => Err(CliError::Invalid(format!("unknown scenario `{other}`"))),
        },
    }
}

fn write_csv(path: Option<&Path>, csv: Option<&str>) -> Result<(), CliError> {
    if let (Some(p), Some(text)) = (path, csv) {
        std::fs::write(p, text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    let start = Instant::now();
    let outcome = run(&cli).and_then(|o| {
        write_csv(cli.csv.as_deref(), o.csv.as_deref())?;
        let mut r = RunReport::new(std::env::args().skip(1).collect(), o.input_sha256, o.verdict, o.result);
        if !cli.no_timestamp {
            r.stamp(start.elapsed());
        }
        r.write(cli.out.as_deref())?;
        Ok(r.verdict)
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("mstat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
