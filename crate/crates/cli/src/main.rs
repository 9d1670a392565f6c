use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_noma::channel::build_channel_set;
use ris_noma::config::{load_config, BandName, ExperimentConfig};
use ris_noma::game::{nash_verify, run_stackelberg, write_trace_csv};
use ris_noma::presets::{run_preset, Preset};
use ris_noma::scenario::{build_scenario, export_scenario};
use ris_noma::Error;

#[derive(Parser)]
#[command(
    name = "ris-noma",
    version,
    about = "RIS-assisted UAV NOMA uplink simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (or file, for export-scenario).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset campaign: fig6, fig7, fig8, fig9, tables3and4, v2x_highway.
    Run {
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write the emulator scenario file for one topology.
    ExportScenario {
        #[command(flatten)]
        common: Common,
        /// sub6 or mmwave; the configured band by default.
        #[arg(long)]
        band: Option<String>,
        #[arg(long, default_value_t = 100)]
        ris_elements: usize,
    },
    /// Solve the game for every band, element count and seed and check the
    /// Nash condition on each result.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        grid_points: usize,
    },
}

fn load(common: &Common) -> ris_noma::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
        cfg.slice.seeds = vec![s];
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> ris_noma::Result<bool> {
    match cli.command {
        Command::Run { preset, common } => {
            let preset: Preset = preset.parse()?;
            let cfg = load(&common)?;
            for p in run_preset(preset, &cfg, &out_dir(&common, &cfg))? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::ExportScenario {
            common,
            band,
            ris_elements,
        } => {
            let cfg = load(&common)?;
            let band = match band {
                Some(b) => BandName::parse(&b)?,
                None => cfg.band,
            };
            let seed = cfg.seeds[0];
            let topology = cfg.topology(band, ris_elements, seed)?;
            let channels = build_channel_set(&topology, &cfg.channel, seed)?;
            let outcome = run_stackelberg(&channels, &cfg.game, seed)?;
            let scenario = build_scenario(
                &topology,
                &channels,
                &outcome.phases,
                &cfg.channel,
                band.as_str(),
                seed,
            )?;
            let path = match &common.out {
                Some(p) if p.extension().is_some() => p.clone(),
                _ => out_dir(&common, &cfg).join(format!(
                    "scenario_{}_{ris_elements}_{seed}.txt",
                    band.as_str()
                )),
            };
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            }
            export_scenario(&scenario, &path)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Verify {
            common,
            grid_points,
        } => {
            let cfg = load(&common)?;
            let mut elements = vec![0];
            elements.extend(cfg.ris_elements.iter().copied().filter(|&m| m != 0));
            let mut all_ok = true;
            for band in BandName::ALL {
                for &m in &elements {
                    for &seed in &cfg.seeds {
                        let topology = cfg.topology(band, m, seed)?;
                        let channels = build_channel_set(&topology, &cfg.channel, seed)?;
                        let outcome = run_stackelberg(&channels, &cfg.game, seed)?;
                        let report = nash_verify(
                            &outcome.state,
                            &outcome.gains,
                            &cfg.game,
                            topology.band.bandwidth_hz,
                            grid_points,
                        )?;
                        let worst = report
                            .entries
                            .iter()
                            .map(|e| e.relative_gain)
                            .fold(f64::NEG_INFINITY, f64::max);
                        let ok = report.passed() && outcome.converged;
                        all_ok &= ok;
                        println!(
                            "{} band={} ris_elements={m} seed={seed} rounds={} worst_rel_gain={worst:.3e}{}",
                            if ok { "PASS" } else { "FAIL" },
                            band.as_str(),
                            outcome.trace.len(),
                            if outcome.sic_infeasible.is_empty() { "" } else { " sic_clipped" },
                        );
                        if let Some(dir) = &common.out {
                            std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                            let path = dir.join(format!("trace_{}_{m}_{seed}.csv", band.as_str()));
                            let file =
                                std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
                            write_trace_csv(&outcome.trace, file)?;
                        }
                    }
                }
            }
            Ok(all_ok)
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "usage" => 2,
        "parse" | "schema" => 3,
        "io" => 4,
        "convergence" => 5,
        _ => 6,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
