//! `vwlab` — command-line front end.
//!
//! Each subcommand pins the run mode; the optional config file supplies
//! everything else. Exit codes: 0 success, 2 configuration error,
//! 3 violated model hypothesis, 4 solver abort.

use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use vwlab::config::{parse_config_str, Mode, RunConfig};
use vwlab::runner;

#[derive(Parser)]
#[command(
    name = "vwlab",
    about = "Numerical laboratory for a kinetic equation coupled to a wave bath",
    version
)]
struct Cli {
    /// Configuration file (flat `section.key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for run artifacts
    #[arg(long, global = true, default_value = "vwlab-run")]
    out: PathBuf,

    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// RNG seed override (particle sampling)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate the memory kernel and its limit constants
    Kernels,
    /// March the self-consistent dynamics (memory or direct-wave config)
    Simulate,
    /// Solve the fixed point by iteration and report contraction gaps
    Picard,
    /// Compare rescaled runs against the limit dynamics over a scale ladder
    Sweep,
    /// Quantify the mollified-Coulomb kernel convergence rates
    Vpkernel,
    /// Run every hypothesis and structural check, then exit
    Validate,
    /// Advance a sampled particle cloud under the mean-field force
    Nparticle,
}

/// Rebuilds the config text with the command-line mode/seed pinned, so the
/// stored hash and echo describe exactly what ran and stay re-runnable.
fn effective_config_text(base: &str, mode: Option<&str>, seed: Option<u64>) -> String {
    let mut out = String::new();
    for line in base.lines() {
        let stripped = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }
        .trim_start();
        let drop = (mode.is_some() && stripped.starts_with("run.mode"))
            || (seed.is_some() && stripped.starts_with("run.seed"));
        if !drop {
            out.push_str(line);
            out.push('\n');
        }
    }
    if let Some(m) = mode {
        let _ = writeln!(out, "run.mode = {m}");
    }
    if let Some(s) = seed {
        let _ = writeln!(out, "run.seed = {s}");
    }
    out
}

fn load(cli: &Cli) -> vwlab::Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    // the subcommand pins the mode; `simulate` keeps a direct-wave config's
    // choice and otherwise means the memory formulation
    let mode = match cli.command {
        Command::Kernels => Some("kernels"),
        Command::Picard => Some("picard"),
        Command::Sweep => Some("sweep"),
        Command::Vpkernel => Some("vpkernel"),
        Command::Validate => Some("validate"),
        Command::Nparticle => Some("nparticle"),
        Command::Simulate => {
            let probe = parse_config_str(&base)?;
            match probe.mode {
                Mode::DirectWave => Some("direct-wave"),
                _ => Some("memory"),
            }
        }
    };
    parse_config_str(&effective_config_text(&base, mode, cli.seed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // a failure here only means a pool was already installed
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match runner::run(&cfg, &cli.out) {
        Ok(artifacts) => {
            print!("{}", artifacts.summary);
            println!("artifacts: {}", artifacts.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
