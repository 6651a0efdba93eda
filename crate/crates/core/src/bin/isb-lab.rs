use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use isb_lab::error::{Error, Result};
use isb_lab::harness::{buffer_file, compare_runs, run_experiment, ExperimentConfig, BUFFER_DIR};
use isb_lab::isb::Strategy;

#[derive(Parser)]
#[command(
    name = "isb-lab",
    version,
    about = "Train and compare initial-state-buffer strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded experiment.
    Run {
        /// TOML or JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides isb.strategy (vanilla, random, obs, cl, terminal, value).
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Output directory; defaults to runs/<method>-s<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize finished runs into a CSV, one row per method.
    Compare {
        /// Glob matching run directories or metrics.jsonl files.
        #[arg(long)]
        inputs: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a buffer dump of a run as JSON lines.
    DumpBuffer {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        phase: u64,
        #[arg(long, value_enum, default_value_t = BufferKind::Isb)]
        kind: BufferKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BufferKind {
    Isb,
    Visited,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Toml(_) => 2,
                Error::Io { .. } => 3,
                _ => 1,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            strategy,
            out,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(strategy) = strategy {
                cfg.isb.strategy = strategy;
            }
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-s{}", cfg.method_name(), cfg.seed)));
            let outcome = run_experiment(&cfg, &out)?;
            if let Some(last) = outcome.rows.iter().rev().find_map(|r| r.validation_return) {
                log::info!("final validation return {last:.4}");
            }
            println!("{}", outcome.metrics_path.display());
            Ok(())
        }
        Command::Compare { inputs, out } => {
            let paths = glob::glob(&inputs)
                .map_err(|e| Error::Config(format!("bad glob {inputs:?}: {e}")))?
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::io(e.path().to_path_buf(), e.into()))?;
            if paths.is_empty() {
                return Err(Error::Config(format!("{inputs:?} matched nothing")));
            }
            let summaries = compare_runs(&paths, &out)?;
            for s in &summaries {
                println!(
                    "{:<16} n={:<3} final {:.4} ± {:.4}  success {:.3} ± {:.3}",
                    s.method, s.runs, s.final_validation.0, s.final_validation.1, s.success_rate.0, s.success_rate.1
                );
            }
            Ok(())
        }
        Command::DumpBuffer { run, phase, kind } => {
            let kind = match kind {
                BufferKind::Isb => "isb",
                BufferKind::Visited => "visited",
            };
            dump_buffer(&run, kind, phase)
        }
    }
}

fn dump_buffer(run: &Path, kind: &str, phase: u64) -> Result<()> {
    let path = run.join(BUFFER_DIR).join(buffer_file(kind, phase));
    if !path.exists() {
        let pattern = run.join(BUFFER_DIR).join(format!("{kind}-*.jsonl"));
        let available: Vec<String> = glob::glob(&pattern.to_string_lossy())
            .map(|paths| {
                paths
                    .flatten()
                    .filter_map(|p| {
                        p.file_stem()?
                            .to_str()?
                            .strip_prefix(kind)?
                            .trim_start_matches('-')
                            .parse::<u64>()
                            .ok()
                    })
                    .map(|i| i.to_string())
                    .collect()
            })
            .unwrap_or_default();
        return Err(Error::Config(format!(
            "no {kind} dump for phase {phase} in {}; available phases: [{}]",
            run.display(),
            available.join(", ")
        )));
    }
    // Validates the file before echoing it.
    let records = isb_lab::isb::read_records(&path)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for rec in &records {
        let line = serde_json::to_string(rec)?;
        match writeln!(out, "{line}") {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
            Err(e) => return Err(Error::io("<stdout>", e)),
        }
    }
    Ok(())
}
