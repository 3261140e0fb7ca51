//! `simulate`: one interferogram per (detuning, defocus) pair, written as
//! IFG1 files plus a content-hash manifest. Deterministic for a given
//! configuration and seed, independent of worker-thread count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use ionfringe_core::atom::{saturation_guard, SaturationCheck, ScatterResponse};
use ionfringe_core::estimator::inject_noise;
use ionfringe_core::imaging::interferogram;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ifg1;
use crate::manifest::{self, ManifestEntry};

pub struct SimulateOutcome {
    pub dir: PathBuf,
    /// File names in manifest (sorted) order.
    pub files: Vec<String>,
    pub saturation_warning: Option<String>,
}

pub fn file_name(detuning_hz: f64, defocus_m: f64) -> String {
    format!(
        "ifg_d{:+09.3}MHz_z{:+08.3}um.ifg1",
        detuning_hz / 1e6,
        defocus_m * 1e6
    )
}

/// Per-image noise stream: decorrelates images while keeping every image
/// a pure function of (config seed, image index).
fn image_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run(cfg: &RunConfig) -> Result<SimulateOutcome> {
    run_with_calibration(cfg, None)
}

pub fn run_with_calibration(
    cfg: &RunConfig,
    calibration: Option<&Path>,
) -> Result<SimulateOutcome> {
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)?;
    let sys = match calibration {
        Some(path) => {
            let (rho0, aberration) = super::calibrate::load_report(path)?;
            cfg.system_with_rho0(rho0)?
                .with_aberration(aberration)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        None => cfg.system()?,
    };
    let line = cfg.line()?;
    let grid = cfg.grid()?;

    let saturation_warning = match cfg.illumination_w_cm2 {
        Some(i) => match saturation_guard(i)? {
            SaturationCheck::Ok => None,
            SaturationCheck::Warning(msg) => Some(msg),
        },
        None => None,
    };

    let tasks: Vec<(usize, f64, f64)> = cfg
        .detunings
        .iter()
        .flat_map(|d| cfg.defocus.iter().map(move |z| (*d, *z)))
        .enumerate()
        .map(|(i, (d, z))| (i, d, z))
        .collect();

    let rendered: Vec<(String, Vec<u8>)> = tasks
        .par_iter()
        .map(|&(index, detuning, defocus)| -> Result<(String, Vec<u8>)> {
            let resp = ScatterResponse::at(detuning, &line);
            let mut img = interferogram(&resp, &sys, defocus, &grid)?;
            if cfg.noise_sigma > 0.0 {
                img = inject_noise(&img, cfg.noise_sigma, image_seed(cfg.seed, index))?;
            }
            Ok((file_name(detuning, defocus), ifg1::encode(&img)?))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(rendered.len());
    for (name, bytes) in &rendered {
        std::fs::write(dir.join(name), bytes)?;
        entries.push(ManifestEntry {
            name: name.clone(),
            sha256: manifest::sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }

    let mut params = cfg.parameter_lines();
    if let Some(i) = cfg.illumination_w_cm2 {
        params.push(format!("system.illumination_w_cm2 = {i}"));
    }
    manifest::write_manifest(&dir, &params, entries)?;

    let mut files: Vec<String> = rendered.into_iter().map(|(n, _)| n).collect();
    files.sort();
    Ok(SimulateOutcome {
        dir,
        files,
        saturation_warning,
    })
}
