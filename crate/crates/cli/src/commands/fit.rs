//! `fit`: groups interferogram files into per-detuning series, fits each
//! series to the forward model, then fits the phase-versus-detuning curve
//! and writes a structured report plus sampled curve data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use ionfringe_core::atom::scatter_phase;
use ionfringe_core::estimator::{
    fit_phase_curve, fit_series, FitOptions, PhaseCurveFit, PhasePoint, SeriesObservation,
};
use ionfringe_core::imaging::Interferogram;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ifg1;
use crate::manifest;

pub const REPORT_NAME: &str = "fit_report.txt";
pub const CURVE_NAME: &str = "phase_curve.tsv";

/// Phase uncertainties are floored here before weighting the curve fit;
/// noiseless closed-loop data would otherwise produce zero sigmas.
pub const PHASE_SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SeriesRow {
    pub detuning: f64,
    pub phase: f64,
    pub phase_sigma: f64,
    pub amplitude: f64,
    pub amplitude_sigma: f64,
    pub residual_rms: f64,
    pub iterations: usize,
}

pub struct FitOutcome {
    pub report_path: PathBuf,
    pub curve_path: PathBuf,
    pub line_fit: PhaseCurveFit,
    pub series: Vec<SeriesRow>,
}

fn collect_files(cfg: &RunConfig, files: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if !files.is_empty() {
        return Ok(files.to_vec());
    }
    // No explicit files: take the manifest in the output directory and
    // verify every hash before trusting the data.
    let dir = cfg.resolved_output_dir();
    let names = manifest::verify_manifest(&dir)?;
    Ok(names
        .into_iter()
        .filter(|n| n.ends_with(".ifg1"))
        .map(|n| dir.join(n))
        .collect())
}

pub fn run(cfg: &RunConfig, calibration: Option<&Path>, files: &[PathBuf]) -> Result<FitOutcome> {
    let sys = match calibration {
        Some(path) => {
            let (rho0, aberration) = super::calibrate::load_report(path)?;
            cfg.system_with_rho0(rho0)?
                .with_aberration(aberration)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        None => cfg.system().map_err(|_| {
            CliError::Config(
                "missing calibration: pass --calibration <report> (from `ionfringe \
                 calibrate`) or set system.rho0_mm in the config"
                    .into(),
            )
        })?,
    };

    let paths = collect_files(cfg, files)?;
    if paths.is_empty() {
        return Err(CliError::Config("no interferogram files to fit".into()));
    }
    let mut groups: BTreeMap<u64, Vec<Interferogram>> = BTreeMap::new();
    for path in &paths {
        let img = ifg1::read_file(path)?;
        groups.entry(img.detuning().to_bits()).or_default().push(img);
    }

    let mut series_inputs: Vec<(f64, SeriesObservation)> = Vec::new();
    for (bits, mut images) in groups {
        let detuning = f64::from_bits(bits);
        images.sort_by(|a, b| a.defocus_object().total_cmp(&b.defocus_object()));
        let obs = SeriesObservation::new(images, cfg.noise_sigma).map_err(|e| {
            CliError::Config(format!(
                "series at detuning {:.3} MHz: {e}",
                detuning / 1e6
            ))
        })?;
        series_inputs.push((detuning, obs));
    }
    series_inputs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let opts = FitOptions::default();
    let rows: Vec<SeriesRow> = series_inputs
        .par_iter()
        .map(|(detuning, obs)| -> Result<SeriesRow> {
            let fit = fit_series(obs, &sys, &opts).map_err(|e| {
                CliError::from(e)
            })?;
            Ok(SeriesRow {
                detuning: *detuning,
                phase: fit.phase,
                phase_sigma: fit.phase_sigma,
                amplitude: fit.amplitude,
                amplitude_sigma: fit.amplitude_sigma,
                residual_rms: fit.residual_rms,
                iterations: fit.convergence.iterations,
            })
        })
        .collect::<Result<_>>()?;

    let points: Vec<PhasePoint> = rows
        .iter()
        .map(|r| PhasePoint {
            detuning: r.detuning,
            phase: r.phase,
            sigma: r.phase_sigma.max(PHASE_SIGMA_FLOOR),
        })
        .collect();
    let line_fit = fit_phase_curve(&points)?;

    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)?;
    let report_path = dir.join(REPORT_NAME);
    let curve_path = dir.join(CURVE_NAME);
    std::fs::write(&report_path, render_report(&line_fit, &rows))?;
    std::fs::write(&curve_path, render_curve(&line_fit, &rows))?;

    Ok(FitOutcome {
        report_path,
        curve_path,
        line_fit,
        series: rows,
    })
}

fn render_report(line: &PhaseCurveFit, rows: &[SeriesRow]) -> String {
    let mut text = format!(
        "[line_fit]\n\
         gamma_mhz = {}\n\
         gamma_sigma_mhz = {}\n\
         delta0_mhz = {}\n\
         delta0_sigma_mhz = {}\n\
         chi2 = {}\n\
         n_series = {}\n\n\
         [series]\n\
         # detuning_mhz\tphase_rad\tphase_sigma_rad\tamplitude\tamplitude_sigma\t\
         residual_rms\titerations\n",
        line.gamma / 1e6,
        line.gamma_sigma / 1e6,
        line.delta0 / 1e6,
        line.delta0_sigma / 1e6,
        line.chi2,
        rows.len(),
    );
    for r in rows {
        text.push_str(&format!(
            "{:.6}\t{:.9}\t{:.3e}\t{:.9e}\t{:.3e}\t{:.3e}\t{}\n",
            r.detuning / 1e6,
            r.phase,
            r.phase_sigma,
            r.amplitude,
            r.amplitude_sigma,
            r.residual_rms,
            r.iterations
        ));
    }
    text
}

/// Model curve sampled densely across the sweep, for plotting against the
/// fitted points: phase and the normalised scattering probability
/// `sin^2(phase)` implied by the fit.
fn render_curve(line: &PhaseCurveFit, rows: &[SeriesRow]) -> String {
    let lo = rows.iter().map(|r| r.detuning).fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.detuning)
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.2 * (hi - lo).max(line.gamma);
    let (lo, hi) = (lo - pad, hi + pad);
    let params = ionfringe_core::atom::LineParams::new(line.gamma, line.delta0, 1.0)
        .expect("fitted line parameters are valid");
    let mut text = String::from("# detuning_mhz\tphase_model_rad\tprobability_model\n");
    let n = 200;
    for i in 0..=n {
        let d = lo + (hi - lo) * i as f64 / n as f64;
        let phi = scatter_phase(d, &params);
        text.push_str(&format!(
            "{:.6}\t{:.9}\t{:.9}\n",
            d / 1e6,
            phi,
            phi.sin().powi(2)
        ));
    }
    text
}
