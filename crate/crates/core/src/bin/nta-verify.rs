use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use nta_core::config::parse_config;
use nta_core::experiment::{run, write_artifacts, Experiment};

#[derive(Parser)]
#[command(name = "nta-verify", version, about = "Numerical checks of boundary estimates on Lipschitz graph domains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its artifacts.
    Run {
        experiment: String,
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `run.output` or `out/<experiment>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `sweep.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 means one per core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and validate a config file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { config } => match parse_config(&config) {
            Ok(cfg) => {
                println!("ok {}", cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Cmd::Run {
            experiment,
            config,
            out,
            seed,
            jobs,
        } => {
            let exp = match Experiment::parse(&experiment) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let dir = out
                .or_else(|| cfg.output.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(exp.name()));
            let seed = seed.unwrap_or(cfg.sweep.seed);
            let threads = jobs.unwrap_or(cfg.jobs);
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = std::fs::create_dir_all(&dir) {
                eprintln!("error: {}: {e}", dir.display());
                return ExitCode::from(2);
            }
            let start = SystemTime::now();
            let clock = Instant::now();
            let result = pool.install(|| run(&cfg, exp, seed));
            // timestamps live outside the manifest so reruns stay byte-identical
            let info = format!(
                "started_unix = {}\nelapsed_seconds = {:.3}\n",
                start.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                clock.elapsed().as_secs_f64()
            );
            let _ = std::fs::write(dir.join("run-info.txt"), info);
            match result {
                Ok(output) => {
                    let _ = std::fs::remove_file(dir.join("FAILED"));
                    if let Err(e) = write_artifacts(&dir, &output.artifacts) {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                    for c in &output.manifest.checks {
                        let verdict = if c.vacuous {
                            "vacuous"
                        } else if c.pass {
                            "pass"
                        } else {
                            "FAIL"
                        };
                        let gate = if c.gating { "" } else { " (info)" };
                        println!("{:<40} {:>12.5e} / {:<10} {verdict}{gate}", c.id, c.ratio, c.budget);
                    }
                    let pass = output.manifest.pass;
                    println!("{}: {}", exp.name(), if pass { "pass" } else { "FAIL" });
                    if pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    let _ = std::fs::write(dir.join("FAILED"), format!("{e}\n"));
                    ExitCode::from(2)
                }
            }
        }
    }
}
