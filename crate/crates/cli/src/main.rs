//! `cohrx` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohrx::commands::{self, Common};
use cohrx::error::CliError;

#[derive(Parser)]
#[command(name = "cohrx", version, about = "Coherent receiver and Costas loop simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML scenario configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario used as the base configuration.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $COHRX_OUT_DIR, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated output formats: csv, json, svg.
    #[arg(long)]
    emit: Option<String>,
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common { config: a.config, scenario: a.scenario, seed: a.seed, out: a.out, emit: a.emit }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the phase-shifter heater through an interferometer.
    CharacterizePs(CommonArgs),
    /// Measure the phase-detector characteristic.
    CharacterizePd(CommonArgs),
    /// Run the optical link, open or closed loop.
    RunLink(CommonArgs),
    /// Run the link once per value of one configuration parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dotted parameter path, e.g. `laser.linewidth`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        values: Vec<String>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print the resolved configuration as TOML.
    DumpConfig(CommonArgs),
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::CharacterizePs(a) => {
            let r = commands::cmd_characterize_ps(&a.into())?;
            println!("argmin_voltage={:.4} V", r.argmin_voltage);
            println!("power_at_3v={:.6}", r.power_at_3v);
            println!("half_power_voltage={:.4} V", r.half_power_voltage);
        }
        Command::CharacterizePd(a) => {
            let r = commands::cmd_characterize_pd(&a.into())?;
            println!("slope={:.5} V/rad", r.slope);
            println!("period={:.5} rad", r.period);
            println!("odd_residual={:.3e} V", r.odd_residual);
        }
        Command::RunLink(a) => {
            let r = commands::cmd_run_link(&a.into())?;
            let m = &r.metrics;
            println!("status={}", serde_json::to_value(m.status).unwrap_or_default().as_str().unwrap_or("?"));
            if let Some(t) = m.lock_time_symbols {
                println!("lock_time_symbols={t:.0}");
            }
            println!("evm_rms={:.3}%", m.record.evm_rms);
            println!("ber={:.3e}", m.record.ber);
            println!("eye_vertical={:.3}", m.record.eye_vertical);
            println!("eye_horizontal={:.3}", m.record.eye_horizontal);
            println!("residual_phase_rms={:.4} rad", m.residual_phase_rms);
        }
        Command::Sweep { common, param, values } => {
            let values: Vec<String> = values.into_iter().filter(|v| !v.trim().is_empty()).collect();
            let rows = commands::cmd_sweep(&common.into(), &param, &values)?;
            for r in rows {
                println!("{param}={} evm_rms={:.3}% residual_phase_rms={:.4} rad", r.value, r.evm_rms, r.residual_phase_rms);
            }
        }
        Command::ListScenarios => print!("{}", commands::cmd_list_scenarios()),
        Command::DumpConfig(a) => print!("{}", commands::cmd_dump_config(&a.into())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
