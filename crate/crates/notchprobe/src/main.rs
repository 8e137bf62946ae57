use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use notchprobe::commands::{cmd_import, resolve_out, run_scenario, ImportOptions, Overrides, OUT_ENV};
use notchprobe::error::{CliError, Result};
use notchprobe::scenario::ScenarioKind;

/// Notch-perturbation characterization of transceiver noise.
#[derive(Debug, Parser)]
#[command(name = "notchprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stitch a notch sweep into a noise floor and SNDR profile.
    Stitch(ScenarioArgs),
    /// Estimate IQ skew from a trial-compensation sweep.
    Skew(ScenarioArgs),
    /// Compare single- and dual-notch SNDR to expose IQ crosstalk.
    Xtalk(ScenarioArgs),
    /// Capture one spectrum, optionally through a notch.
    Psd(ScenarioArgs),
    /// Read external trace files and stitch them when possible.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the waveform and noise seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sweep repeats (skew only).
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Trace CSV files; sidecars are found next to them.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resampling step in Hz (default: mean spacing of each file).
    #[arg(long)]
    step_hz: Option<f64>,
    /// Guard bins used when stitching.
    #[arg(long)]
    guard_bins: Option<usize>,
}

fn run(cli: Cli) -> Result<PathBuf> {
    let (kind, a) = match cli.command {
        Command::Stitch(a) => (ScenarioKind::Stitch, a),
        Command::Skew(a) => (ScenarioKind::Skew, a),
        Command::Xtalk(a) => (ScenarioKind::Xtalk, a),
        Command::Psd(a) => (ScenarioKind::Psd, a),
        Command::Import(a) => {
            let env = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
            let out = resolve_out(a.out.as_deref(), None, env.as_deref(), "import");
            let opts = ImportOptions {
                step_hz: a.step_hz,
                guard_bins: a.guard_bins,
            };
            cmd_import(&a.traces, &opts, &out)?;
            return Ok(out);
        }
    };
    let ov = Overrides {
        out: a.out,
        seed: a.seed,
        repeats: a.repeats,
    };
    let (_, out) = run_scenario(&a.scenario, kind, &ov)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
