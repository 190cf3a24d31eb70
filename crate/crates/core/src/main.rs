use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use critwave::lab::plots::emit_plots;
use critwave::lab::reports::{constants_report, spectral_report};
use critwave::lab::runner::{
    batch_exit_code, exit_code_for, run_batch, workers_from_env, RunOptions, EXIT_NUMERICAL, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "critwave", version, about = "Damped energy-critical wave lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files (in parallel, CRITWAVE_WORKERS threads).
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Directory for cached spectral packs.
        #[arg(long, env = "CRITWAVE_CACHE")]
        cache_dir: Option<PathBuf>,
        /// Output directory; only with a single config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form constants against quadrature.
    VerifyConstants {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        json: bool,
    },
    /// Negative mode, κ convergence and pairing checks.
    Spectral {
        #[arg(long)]
        dim: usize,
        /// Reuse or store the spectral pack in the cache directory.
        #[arg(long)]
        cache: bool,
        #[arg(long, env = "CRITWAVE_CACHE", default_value = ".critwave-cache")]
        cache_dir: PathBuf,
    },
    /// Re-render the SVG plots of a run directory.
    Plots { run_dir: PathBuf },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            configs,
            cache_dir,
            out,
        } => {
            if out.is_some() && configs.len() > 1 {
                eprintln!("error: --out needs a single config");
                return code(1);
            }
            let opts = RunOptions {
                cache_dir,
                output_dir: out,
            };
            let results = run_batch(&configs, &opts, workers_from_env());
            for (path, r) in configs.iter().zip(&results) {
                match r {
                    Ok(rep) => {
                        println!(
                            "{}: {:?} (exit {}) -> {}",
                            rep.name,
                            rep.status,
                            rep.exit_code,
                            rep.dir.display()
                        );
                        for c in &rep.checks {
                            println!(
                                "  {:<20} {:>12.4e} <= {:<10.1e} {}",
                                c.name,
                                c.value,
                                c.limit,
                                if c.passed { "ok" } else { "FAILED" }
                            );
                        }
                    }
                    Err(e) => eprintln!("{}: error: {e}", path.display()),
                }
            }
            code(batch_exit_code(&results))
        }
        Command::VerifyConstants { dim, json } => match constants_report(dim) {
            Ok(rep) => {
                if json {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&rep).expect("report serializes")
                    );
                } else {
                    print!("{rep}");
                }
                code(if rep.passed() { EXIT_OK } else { EXIT_NUMERICAL })
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit_code_for(&e))
            }
        },
        Command::Spectral {
            dim,
            cache,
            cache_dir,
        } => match spectral_report(dim, cache.then_some(cache_dir.as_path())) {
            Ok(s) => {
                print!("{}", s.report);
                println!("kappa by N: {:?}", s.kappas);
                println!("Z profile: {:?}", s.pack.z);
                code(if s.report.passed() {
                    EXIT_OK
                } else {
                    EXIT_NUMERICAL
                })
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit_code_for(&e))
            }
        },
        Command::Plots { run_dir } => match emit_plots(&run_dir) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                code(EXIT_OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(exit_code_for(&e))
            }
        },
    }
}
