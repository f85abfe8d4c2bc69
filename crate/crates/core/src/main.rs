// `!(x > 0.0)` checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use cert_nmpc::qp_file::BoxQpInstance;
use cert_nmpc::sim::{run_closed_loop, SimConfig, SimOptions, SimSummary};
use cert_nmpc::{BackendKind, Error};

#[derive(Parser)]
#[command(version, about = "Certified real-time-iteration NMPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop (or open-loop) simulation and write a CSV trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Apply zero input instead of running the controller.
        #[arg(long)]
        open_loop: bool,
        #[arg(long, default_value = "riccati")]
        backend: BackendKind,
        /// Write zeros in the wall-time columns so reruns are byte-identical.
        #[arg(long)]
        no_wall_times: bool,
    },
    /// Print the flop certificate for a config.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Processing rate; overrides the config value.
        #[arg(long)]
        flops_per_sec: Option<f64>,
    },
    /// Solve one box-constrained QP given as JSON `{"H", "h", "eps"}`.
    SolveQp {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn init_logging() {
    let level = std::env::var("CERT_NMPC_LOG").unwrap_or_else(|_| "error".into());
    let filter = match level.as_str() {
        "error" | "info" | "debug" => level.as_str(),
        _ => "error",
    };
    env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .init();
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            open_loop,
            backend,
            no_wall_times,
        } => {
            let scenario = SimConfig::from_path(&config)?.validate()?;
            let opts = SimOptions {
                open_loop,
                backend,
                record_wall_times: !no_wall_times,
            };
            let trace = run_closed_loop(&scenario, opts)?;
            let file = File::create(&out)?;
            trace.write_csv(BufWriter::new(file))?;
            print_json(&SimSummary::new(&scenario, &trace, opts))
        }
        Command::Certify {
            config,
            flops_per_sec,
        } => {
            let mut cfg = SimConfig::from_path(&config)?;
            if let Some(rate) = flops_per_sec {
                if !(rate > 0.0) {
                    return Err(Error::Config {
                        path: "--flops-per-sec".into(),
                        message: "must be positive".into(),
                    });
                }
                cfg.flops_per_sec = rate;
            }
            let cert = cfg.validate()?.certificate();
            print_json(&json!({
                "iterations": cert.iterations,
                "prep_flops": cert.prep_flops,
                "feedback_flops": cert.feedback_flops,
                "total_flops": cert.total_flops(),
                "flops_per_sec": cert.flops_per_sec,
                "estimated_time_s": cert.estimated_time_s,
                "prep_steps": cert.prep_steps,
                "feedback_steps": cert.feedback_steps,
                "dims": cert.dims,
            }))
        }
        Command::SolveQp { input } => {
            let report = BoxQpInstance::from_path(&input)?.solve()?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
