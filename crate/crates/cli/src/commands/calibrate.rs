//! `calibrate`: finds the pupil width reproducing the target resolution,
//! optionally fits the shared aberration parameters against a designated
//! calibration series, and writes the report the fit command consumes.

use std::path::{Path, PathBuf};

use ionfringe_core::estimator::{fit_series, FitOptions, SeriesObservation};
use ionfringe_core::imaging::calibrate_rho0;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ifg1;

pub const REPORT_NAME: &str = "calibration.txt";

pub struct CalibrateOutcome {
    pub report_path: PathBuf,
    pub rho0: f64,
    pub aberration_a: f64,
    pub aberration_source: &'static str,
    pub achieved_resolution: f64,
}

pub fn run(
    cfg: &RunConfig,
    target_nm: Option<f64>,
    pin_aberration: bool,
    series_files: &[PathBuf],
) -> Result<CalibrateOutcome> {
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)?;
    let target = match target_nm.map(|v| v * 1e-9).or(cfg.target_resolution) {
        Some(t) => t,
        None => {
            return Err(CliError::Config(
                "no resolution target: set [calibration] target_resolution_nm or pass \
                 --target-nm"
                    .into(),
            ))
        }
    };
    let grid = cfg.grid()?;
    let base_sys = cfg.system_with_rho0(cfg.rho0.unwrap_or(1e-3))?;
    let cal = calibrate_rho0(&base_sys, target, &grid)?;

    let mut rho0 = cal.rho0;
    let mut aberration_a = cfg.aberration_a;
    let mut source: &'static str = "config";
    if pin_aberration {
        source = "pinned";
    } else if !series_files.is_empty() {
        let images = series_files
            .iter()
            .map(|p| ifg1::read_file(p))
            .collect::<Result<Vec<_>>>()?;
        let obs = SeriesObservation::new(images, cfg.noise_sigma)
            .map_err(|e| CliError::Config(format!("calibration series: {e}")))?;
        let opts = FitOptions {
            fit_aberration: true,
            fit_rho0: true,
            ..FitOptions::default()
        };
        let fit = fit_series(&obs, &cfg.system_with_rho0(rho0)?.with_aberration(aberration_a)
            .map_err(|e| CliError::Config(e.to_string()))?, &opts)?;
        aberration_a = fit.shared.aberration_a;
        rho0 = fit.shared.rho0;
        source = "fitted";
    }

    let report_path = dir.join(REPORT_NAME);
    let text = format!(
        "[calibration]\n\
         rho0_mm = {}\n\
         aberration_rad_per_m4 = {}\n\
         aberration_source = {}\n\
         target_resolution_nm = {}\n\
         achieved_resolution_nm = {}\n\
         min_achievable_resolution_nm = {}\n\
         max_achievable_resolution_nm = {}\n",
        rho0 * 1e3,
        aberration_a,
        source,
        target * 1e9,
        cal.achieved_fwhm * 1e9,
        cal.min_achievable_fwhm * 1e9,
        cal.max_achievable_fwhm * 1e9,
    );
    std::fs::write(&report_path, text)?;
    Ok(CalibrateOutcome {
        report_path,
        rho0,
        aberration_a,
        aberration_source: source,
        achieved_resolution: cal.achieved_fwhm,
    })
}

/// Loads (rho0, aberration) from a calibration report.
pub fn load_report(path: &Path) -> Result<(f64, f64)> {
    let map = super::read_report(path)?;
    let rho0 = super::report_f64(&map, "calibration.rho0_mm", path)? * 1e-3;
    let aberration = super::report_f64(&map, "calibration.aberration_rad_per_m4", path)?;
    Ok((rho0, aberration))
}
