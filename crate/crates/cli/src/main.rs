use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eisdrt_cli::config::{self, CalibrateConfig, DrtConfig, PipelineConfig, ResultSample, SimulateConfig};
use eisdrt_cli::{cmd_calibrate, cmd_drt, cmd_pipeline, cmd_simulate, CliError, Result, RunOptions};

#[derive(Parser)]
#[command(name = "eisdrt", version, about = "Multisine impedance spectroscopy and DRT concentration sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults reproduce the reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Noise seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write SVG figures.
    #[arg(long)]
    plot: bool,
}

impl Common {
    fn run_options(&self) -> RunOptions {
        RunOptions { out: self.out.clone(), seed: self.seed, plot: self.plot }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a multisine measurement and write the estimated spectrum.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Invert a spectrum CSV to a distribution of relaxation times.
    Drt {
        #[command(flatten)]
        common: Common,
        /// Spectrum CSV (freq_hz,z_re_ohm,z_im_ohm).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit the linear concentration calibration.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// CSV with tau_s,kappa_wtpct[,sample] columns.
        #[arg(long)]
        input: Option<PathBuf>,
        /// DRT result and its concentration, as PATH=KAPPA; repeatable.
        #[arg(long = "result", value_name = "PATH=KAPPA")]
        results: Vec<String>,
    },
    /// Run simulate, drt and calibrate over a series of samples.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_result_arg(arg: &str) -> Result<ResultSample> {
    let (path, kappa) =
        arg.rsplit_once('=').ok_or_else(|| CliError::Config(format!("--result expects PATH=KAPPA, got {arg:?}")))?;
    let kappa = kappa.trim().parse().map_err(|_| CliError::Config(format!("--result {arg:?}: bad concentration")))?;
    Ok(ResultSample { name: None, result: PathBuf::from(path), kappa })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg: SimulateConfig = config::load(common.config.as_deref())?;
            let out = cmd_simulate(&cfg, &common.run_options())?;
            println!("wrote {} ({} frequencies)", out.spectrum_path.display(), out.spectrum.len());
            if let Some(p) = out.records_path {
                println!("wrote {}", p.display());
            }
        }
        Command::Drt { common, input } => {
            let cfg: DrtConfig = config::load(common.config.as_deref())?;
            let file = cmd_drt(&cfg, input.as_deref(), &common.run_options())?;
            println!("r_inf = {:.6} Ω, residual_rms = {:.3e} Ω", file.r_inf, file.residual_rms);
            for p in &file.peaks {
                println!(
                    "peak at τ = {:.4e} s, area {:.4} Ω, prominence {:.4} Ω",
                    p.tau_s, p.area_ohm, p.prominence_ohm
                );
            }
        }
        Command::Calibrate { common, input, results } => {
            let mut cfg: CalibrateConfig = config::load(common.config.as_deref())?;
            for r in &results {
                cfg.samples.push(parse_result_arg(r)?);
            }
            let file = cmd_calibrate(&cfg, input.as_deref(), &common.run_options())?;
            println!(
                "κ = {:.4} wt.%/µs · τ + {:.4} wt.%, r² = {:.4} ({} points)",
                file.slope_wtpct_per_us,
                file.intercept_wtpct,
                file.r_squared,
                file.points.len()
            );
        }
        Command::Pipeline { common } => {
            let cfg: PipelineConfig = config::load(common.config.as_deref())?;
            let out = cmd_pipeline(&cfg, &common.run_options())?;
            println!("{:<10} {:>12} {:>10}", "sample", "κ (wt.%)", "τ (µs)");
            for r in &out.summary {
                println!("{:<10} {:>12.3} {:>10.4}", r.sample, r.kappa_wtpct, r.tau_us);
            }
            if let Some(c) = out.calibration {
                println!(
                    "slope {:.4} wt.%/µs, intercept {:.4} wt.%, r² {:.4}",
                    c.slope_wtpct_per_us, c.intercept_wtpct, c.r_squared
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
