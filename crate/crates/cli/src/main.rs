//! `mframe`: config-driven simulation, convergence and verification runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mframe::batch::Execution;
use mframe::experiment::{run_converge, run_simulate, run_verify, ExperimentConfig, Suite, VerifyReport};
use mframe::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;

#[derive(Parser)]
#[command(name = "mframe", version, about = "Jump-diffusion SDE and mild SPDE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seeds with 0..N.
    #[arg(long)]
    seed_count: Option<usize>,
    /// Overrides the config time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Run seeds sequentially.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every seed and write trajectories plus a manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: config output.directory, else ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strong error at the horizon along a step-size ladder.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step sizes (default: config converge.ladder).
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<f64>>,
        /// Writes convergence.csv and convergence.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs verification suites and prints a JSON verdict.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
    /// The dilation suite alone.
    DilationCheck {
        #[command(flatten)]
        common: Common,
    },
    /// The conditions suite alone.
    ConditionsCheck {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Dilation,
    Uniqueness,
    Interlace,
    Residual,
    Conditions,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Dilation => Suite::Dilation,
            SuiteArg::Uniqueness => Suite::Uniqueness,
            SuiteArg::Interlace => Suite::Interlace,
            SuiteArg::Residual => Suite::Residual,
            SuiteArg::Conditions => Suite::Conditions,
            SuiteArg::All => Suite::All,
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(n) = common.seed_count {
        cfg.run.seeds = None;
        cfg.run.seed_count = Some(n);
    }
    if let Some(dt) = common.dt {
        cfg.noise.dt = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execution(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_numerical() {
        ExitCode::from(EXIT_NUMERICAL)
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn print_report(report: &VerifyReport) -> ExitCode {
    for suite in &report.suites {
        for c in &suite.checks {
            let measured = c.measured.map_or(String::new(), |m| format!(" measured={m:e}"));
            let tol = c.tol.map_or(String::new(), |t| format!(" tol={t:e}"));
            eprintln!(
                "{:<5} {:?}/{}{measured}{tol} {}",
                if c.pass { "PASS" } else { "FAIL" },
                suite.suite,
                c.invariant,
                c.detail
            );
        }
    }
    println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFICATION)
    }
}

fn verify(common: &Common, suite: Suite) -> ExitCode {
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match run_verify(suite, &cfg, execution(common)) {
        Ok(report) => print_report(&report),
        Err(e) => fail(&e),
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn simulate(common: &Common, out: Option<&Path>) -> ExitCode {
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match run_simulate(&cfg, &dir, execution(common), &command_line()) {
        Ok(summary) => {
            for o in &summary.outcomes {
                match (&o.lifetime, &o.error) {
                    (Some(l), _) => println!("seed {}: lifetime {} ({:?})", o.seed, l.time, l.reason),
                    (_, Some(e)) => eprintln!("seed {}: {e}", o.seed),
                    _ => {}
                }
            }
            println!("manifest: {}", dir.join("manifest.json").display());
            if summary.any_numerical_failure() {
                ExitCode::from(EXIT_NUMERICAL)
            } else if summary.any_failure() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(&e),
    }
}

fn converge(common: &Common, ladder: Option<&[f64]>, out: Option<&Path>) -> ExitCode {
    let cfg = match load(common) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let ladder = ladder.map(<[f64]>::to_vec).unwrap_or_else(|| cfg.converge.ladder.clone());
    let table = match run_converge(&cfg, &ladder, execution(common)) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    println!("oracle: {:?}", table.oracle);
    println!("{:>12} {:>14} {:>14} {:>8}", "dt", "error", "std_error", "paths");
    for r in &table.rows {
        println!("{:>12} {:>14.6e} {:>14.6e} {:>8}", r.dt, r.error, r.std_error, r.paths);
    }
    println!("slope: {}", table.slope_display());
    if let Some(dir) = out {
        let written = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(dir.join("convergence.csv"), table.to_csv()))
            .and_then(|_| {
                let json = serde_json::to_string_pretty(&table).expect("table serializes");
                std::fs::write(dir.join("convergence.json"), json)
            });
        if let Err(e) = written {
            return fail(&Error::from(e));
        }
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("MF_THREADS must be a positive integer, got {raw:?}"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match &cli.command {
        Command::Simulate { common, out } => simulate(common, out.as_deref()),
        Command::Converge { common, ladder, out } => converge(common, ladder.as_deref(), out.as_deref()),
        Command::Verify { common, suite } => verify(common, (*suite).into()),
        Command::DilationCheck { common } => verify(common, Suite::Dilation),
        Command::ConditionsCheck { common } => verify(common, Suite::Conditions),
    }
}
