//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::emit::{self, Format};
use crate::runner::{self, exit, RunError, RunOptions, RunResult};
use crate::scenario::{parse_scenario, Scenario};

#[derive(Debug, Parser)]
#[command(
    name = "bearform",
    version,
    about = "Bearing-based formation control and localization under bounded disturbances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank test of the framework given by the agents' positions.
    CheckRigidity { file: String },
    /// Positive definiteness of B_ff with the scenario's leaders as anchors.
    CheckLocalizability { file: String },
    /// Integrate the scenario, evaluate its bound and judge containment.
    Simulate {
        scenario: String,
        #[command(flatten)]
        run: RunArgs,
        /// Directory for CSV traces and reports.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
    /// Evaluate the bound without simulating.
    Bounds {
        scenario: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Least-squares follower estimates of a localization scenario.
    LocalizeOracle { scenario: String },
    /// Names of the bundled scenarios.
    ListScenarios,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Disturbance seed; repeat to run several seeds concurrently.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
}

impl RunArgs {
    fn options(&self) -> Vec<RunOptions> {
        let base = RunOptions {
            seed: None,
            dt: self.dt,
            duration: self.duration,
        };
        if self.seed.is_empty() {
            vec![base]
        } else {
            self.seed
                .iter()
                .map(|&s| RunOptions {
                    seed: Some(s),
                    ..base
                })
                .collect()
        }
    }
}

/// Reads a scenario from a path, or from the bundled set via `bundled:NAME`.
pub fn load(path: &str) -> Result<Scenario, (i32, String)> {
    let text = match path.strip_prefix("bundled:") {
        Some(name) => crate::bundled(name)
            .ok_or_else(|| (exit::IO, format!("no bundled scenario named {name}")))?
            .to_string(),
        None => fs::read_to_string(path).map_err(|e| (exit::IO, format!("{path}: {e}")))?,
    };
    parse_scenario(&text).map_err(|e| (exit::VALIDATION, format!("{path}: invalid scenario:\n{e}")))
}

fn fail(e: &RunError) -> i32 {
    eprintln!("error: {e}");
    if let RunError::PreCheck { check: Some(c), .. } = e {
        eprintln!("{c:?}");
    }
    e.exit_code()
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit::VALIDATION
            } else {
                exit::OK
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn dispatch(command: Command) -> Result<i32, (i32, String)> {
    let mut stdout = std::io::stdout().lock();
    let io = |e: std::io::Error| (exit::IO, e.to_string());
    match command {
        Command::ListScenarios => {
            for (name, _) in crate::BUNDLED {
                writeln!(stdout, "{name}").map_err(io)?;
            }
            Ok(exit::OK)
        }
        Command::CheckRigidity { file } => {
            let s = load(&file)?;
            match runner::check_rigidity(&s) {
                Ok(c) => {
                    writeln!(
                        stdout,
                        "rank(R_b) = {} (rigid needs {})",
                        c.rank, c.expected_rank
                    )
                    .map_err(io)?;
                    writeln!(stdout, "null space dimension = {}", c.null_dim).map_err(io)?;
                    writeln!(stdout, "infinitesimally bearing rigid = {}", c.rigid).map_err(io)?;
                    Ok(if c.rigid { exit::OK } else { exit::PRECHECK })
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Command::CheckLocalizability { file } => {
            let s = load(&file)?;
            match runner::check_localizability(&s) {
                Ok(c) => {
                    writeln!(stdout, "lambda_min(B_ff) = {}", emit::num(c.lambda_min))
                        .map_err(io)?;
                    writeln!(stdout, "bearing localizable = {}", c.localizable).map_err(io)?;
                    Ok(if c.localizable {
                        exit::OK
                    } else {
                        exit::PRECHECK
                    })
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Command::LocalizeOracle { scenario } => {
            let s = load(&scenario)?;
            match runner::localize_oracle(&s) {
                Ok(o) => {
                    write!(stdout, "{}", emit::oracle_string(&o)).map_err(io)?;
                    Ok(exit::OK)
                }
                Err(e) => Ok(fail(&e)),
            }
        }
        Command::Bounds { scenario, run } => {
            let s = load(&scenario)?;
            let mut code = exit::OK;
            for opts in run.options() {
                match runner::bounds_only(&s, &opts) {
                    Ok(b) => write!(stdout, "{}", emit::bounds_report_string(&b)).map_err(io)?,
                    Err(e) => code = code.max(fail(&e)),
                }
            }
            Ok(code)
        }
        Command::Simulate {
            scenario,
            run,
            out_dir,
            format,
        } => {
            let s = load(&scenario)?;
            let options = run.options();
            let results: Vec<Result<RunResult, RunError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = options
                    .iter()
                    .map(|o| scope.spawn(|| runner::run(&s, o)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("simulation thread panicked"))
                    .collect()
            });
            let mut code = exit::OK;
            for r in results {
                match r {
                    Ok(result) => {
                        let files = emit::write_outputs(&result, &out_dir, format).map_err(io)?;
                        write!(stdout, "{}", emit::report_string(&result)).map_err(io)?;
                        for f in files {
                            writeln!(stdout, "wrote {}", f.display()).map_err(io)?;
                        }
                        code = code.max(result.exit_code());
                    }
                    Err(e) => code = code.max(fail(&e)),
                }
            }
            Ok(code)
        }
    }
}
