use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ionfringe::commands;
use ionfringe::config::RunConfig;
use ionfringe::render::Colormap;
use ionfringe::CliError;

/// Batch simulator and estimator for single-emitter spatial
/// interferograms.
///
/// Exit codes: 0 success, 1 internal/oracle failure, 2 configuration,
/// 3 I/O, 4 sampling, 5 convergence. The output directory from the
/// config can be overridden with IONFRINGE_OUT_DIR.
#[derive(Parser)]
#[command(name = "ionfringe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one interferogram per (detuning, defocus) pair and write
    /// IFG1 files plus a content-hash manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Calibration report supplying the pupil width and aberration;
        /// without it the config must carry system.rho0_mm.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Search the pupil width for the target resolution, optionally fit
    /// shared aberration parameters against a calibration series, and
    /// write the calibration report.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Target in-focus spot FWHM in nanometres (overrides the config).
        #[arg(long)]
        target_nm: Option<f64>,
        /// Keep the configured aberration coefficient, marking it pinned.
        #[arg(long)]
        pin_aberration: bool,
        /// IFG1 files of one series used to fit aberration and pupil width.
        #[arg(long, num_args = 1..)]
        series: Vec<PathBuf>,
    },
    /// Fit interferogram series to the forward model per detuning, then
    /// fit the phase curve; writes a report and sampled curve data.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Calibration report from `calibrate`; without it the config
        /// must carry system.rho0_mm.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// IFG1 files; empty means "everything in the manifest of the
        /// output directory", verified against its hashes.
        files: Vec<PathBuf>,
    },
    /// Render IFG1 files to PNG and portable pixmap with a bounds sidecar.
    Render {
        #[arg(long, default_value = "diverging")]
        colormap: Colormap,
        /// Presentation smoothing width in nanometres; the raw file is
        /// left untouched.
        #[arg(long)]
        smooth_nm: Option<f64>,
        /// Directory for rasters (default: next to each input).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run the direct-summation oracle suites and print the worst
    /// relative error of each fast/slow pair.
    OracleCheck,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            calibration,
        } => {
            let cfg = RunConfig::from_file(&config)?;
            let out = commands::simulate::run_with_calibration(&cfg, calibration.as_deref())?;
            if let Some(warning) = &out.saturation_warning {
                eprintln!("warning: {warning}");
            }
            println!(
                "simulate: wrote {} images and {} to {}",
                out.files.len(),
                ionfringe::manifest::MANIFEST_NAME,
                out.dir.display()
            );
            Ok(())
        }
        Command::Calibrate {
            config,
            target_nm,
            pin_aberration,
            series,
        } => {
            let cfg = RunConfig::from_file(&config)?;
            let out = commands::calibrate::run(&cfg, target_nm, pin_aberration, &series)?;
            println!(
                "calibrate: rho0 = {:.6} mm, resolution = {:.2} nm, aberration {} \
                 ({:.3e} rad/m^4); report at {}",
                out.rho0 * 1e3,
                out.achieved_resolution * 1e9,
                out.aberration_source,
                out.aberration_a,
                out.report_path.display()
            );
            Ok(())
        }
        Command::Fit {
            config,
            calibration,
            files,
        } => {
            let cfg = RunConfig::from_file(&config)?;
            let out = commands::fit::run(&cfg, calibration.as_deref(), &files)?;
            println!(
                "fit: gamma = {:.3} +/- {:.3} MHz, delta0 = {:.3} +/- {:.3} MHz, \
                 chi2 = {:.3e} over {} series; report at {}",
                out.line_fit.gamma / 1e6,
                out.line_fit.gamma_sigma / 1e6,
                out.line_fit.delta0 / 1e6,
                out.line_fit.delta0_sigma / 1e6,
                out.line_fit.chi2,
                out.series.len(),
                out.report_path.display()
            );
            Ok(())
        }
        Command::Render {
            colormap,
            smooth_nm,
            out_dir,
            files,
        } => {
            let rendered = commands::render_cmd::run(
                &files,
                colormap,
                smooth_nm.map(|v| v * 1e-9),
                out_dir.as_deref(),
            )?;
            println!("render: wrote {} raster pairs", rendered.len());
            Ok(())
        }
        Command::OracleCheck => {
            let rows = commands::oracle_check::run()?;
            let mut all_ok = true;
            for row in &rows {
                let status = if row.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status}  {:<55} max rel error {:.3e} (threshold {:.0e})",
                    row.name, row.max_rel_error, row.threshold
                );
                all_ok &= row.passed();
            }
            if all_ok {
                Ok(())
            } else {
                Err(CliError::Internal("oracle equivalence failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
