//! Run configuration: flat key-value text with `[section]` headers and
//! `#` comments. Every physical key carries its unit in the suffix and is
//! converted to SI here, at the boundary.
//!
//! ```text
//! [grid]
//! n = 256
//! pitch_nm = 13.28125
//!
//! [system]
//! wavelength_nm = 369.5
//! f_fresnel_mm = 3.0
//! magnification = 585
//! na = 0.64
//! rho0_mm = 2.2            # optional; calibration can supply it
//! aberration_rad_per_m4 = 0.0
//! illumination_w_cm2 = 10  # optional; checked against saturation
//!
//! [line]
//! gamma_mhz = 34
//! delta0_mhz = 5
//! a0 = 0.1
//!
//! [sweep]
//! detunings_mhz = -30,-20,-13,-5,0,5,9,15,25
//! defocus_um = 0,1.7,3.3
//!
//! [noise]            # optional; defaults sigma = 0, seed = 1
//! sigma = 0.0
//! seed = 1
//!
//! [calibration]      # optional; used by the calibrate command
//! target_resolution_nm = 370
//!
//! [output]           # optional; defaults dir = out
//! dir = out
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ionfringe_core::atom::LineParams;
use ionfringe_core::imaging::ImagingSystem;
use ionfringe_core::Grid;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    /// Object-space pitch, metres.
    pub pitch: f64,
    pub wavelength: f64,
    pub f_fresnel: f64,
    pub magnification: f64,
    pub na: f64,
    /// Pupil width, metres; absent until calibrated.
    pub rho0: Option<f64>,
    pub aberration_a: f64,
    pub illumination_w_cm2: Option<f64>,
    pub gamma: f64,
    pub delta0: f64,
    pub a0: f64,
    pub detunings: Vec<f64>,
    pub defocus: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub target_resolution: Option<f64>,
    pub output_dir: PathBuf,
}

struct Raw {
    values: BTreeMap<(String, String), (usize, String)>,
    consumed: std::cell::RefCell<Vec<(String, String)>>,
}

impl Raw {
    fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    CliError::Config(format!("line {line_no}: unterminated section header"))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {line_no}: expected `key = value`, got `{line}`"
                )));
            };
            if section.is_empty() {
                return Err(CliError::Config(format!(
                    "line {line_no}: key `{}` appears before any [section]",
                    key.trim()
                )));
            }
            let k = (section.clone(), key.trim().to_string());
            if values
                .insert(k.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(CliError::Config(format!(
                    "line {line_no}: duplicate key `{}.{}`",
                    k.0, k.1
                )));
            }
        }
        Ok(Self {
            values,
            consumed: std::cell::RefCell::new(Vec::new()),
        })
    }

    fn get(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        let k = (section.to_string(), key.to_string());
        self.consumed.borrow_mut().push(k.clone());
        self.values.get(&k)
    }

    fn require(&self, section: &str, key: &str) -> Result<&(usize, String)> {
        self.get(section, key).ok_or_else(|| {
            CliError::Config(format!("missing required key `{key}` in section [{section}]"))
        })
    }

    fn f64(&self, section: &str, key: &str) -> Result<f64> {
        let (line, v) = self.require(section, key)?;
        v.parse::<f64>().map_err(|_| {
            CliError::Config(format!("line {line}: `{section}.{key}` is not a number: `{v}`"))
        })
    }

    fn f64_opt(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<f64>().map(Some).map_err(|_| {
                CliError::Config(format!("line {line}: `{section}.{key}` is not a number: `{v}`"))
            }),
        }
    }

    fn f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        let (line, v) = self.require(section, key)?;
        let mut out = Vec::new();
        for part in v.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            out.push(part.parse::<f64>().map_err(|_| {
                CliError::Config(format!(
                    "line {line}: `{section}.{key}` has a non-numeric entry: `{part}`"
                ))
            })?);
        }
        if out.is_empty() {
            return Err(CliError::Config(format!(
                "line {line}: `{section}.{key}` must list at least one value"
            )));
        }
        Ok(out)
    }

    fn unknown_keys(&self) -> Vec<String> {
        let consumed = self.consumed.borrow();
        self.values
            .keys()
            .filter(|k| !consumed.contains(k))
            .map(|(s, k)| format!("{s}.{k}"))
            .collect()
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = Raw::parse(text)?;

        let n = {
            let (line, v) = raw.require("grid", "n")?;
            v.parse::<usize>().map_err(|_| {
                CliError::Config(format!("line {line}: `grid.n` is not an integer: `{v}`"))
            })?
        };
        let pitch = raw.f64("grid", "pitch_nm")? * 1e-9;

        let wavelength = raw.f64("system", "wavelength_nm")? * 1e-9;
        let f_fresnel = raw.f64("system", "f_fresnel_mm")? * 1e-3;
        let magnification = raw.f64("system", "magnification")?;
        let na = raw.f64("system", "na")?;
        let rho0 = raw.f64_opt("system", "rho0_mm")?.map(|v| v * 1e-3);
        let aberration_a = raw.f64("system", "aberration_rad_per_m4")?;
        let illumination_w_cm2 = raw.f64_opt("system", "illumination_w_cm2")?;

        let gamma = raw.f64("line", "gamma_mhz")? * 1e6;
        let delta0 = raw.f64("line", "delta0_mhz")? * 1e6;
        let a0 = raw.f64("line", "a0")?;

        let detunings: Vec<f64> = raw
            .f64_list("sweep", "detunings_mhz")?
            .iter()
            .map(|v| v * 1e6)
            .collect();
        let defocus: Vec<f64> = raw
            .f64_list("sweep", "defocus_um")?
            .iter()
            .map(|v| v * 1e-6)
            .collect();

        let noise_sigma = raw.f64_opt("noise", "sigma")?.unwrap_or(0.0);
        let seed = match raw.get("noise", "seed") {
            None => 1,
            Some((line, v)) => v.parse::<u64>().map_err(|_| {
                CliError::Config(format!(
                    "line {line}: `noise.seed` is not an unsigned integer: `{v}`"
                ))
            })?,
        };

        let target_resolution = raw
            .f64_opt("calibration", "target_resolution_nm")?
            .map(|v| v * 1e-9);

        let output_dir = match raw.get("output", "dir") {
            Some((_, v)) => PathBuf::from(v),
            None => PathBuf::from("out"),
        };

        let unknown = raw.unknown_keys();
        if !unknown.is_empty() {
            return Err(CliError::Config(format!(
                "unknown key(s): {}",
                unknown.join(", ")
            )));
        }

        let cfg = Self {
            n,
            pitch,
            wavelength,
            f_fresnel,
            magnification,
            na,
            rho0,
            aberration_a,
            illumination_w_cm2,
            gamma,
            delta0,
            a0,
            detunings,
            defocus,
            noise_sigma,
            seed,
            target_resolution,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        // Constructing the typed values surfaces field-level problems.
        self.grid()?;
        self.line()?;
        self.system_with_rho0(self.rho0.unwrap_or(1e-3))?;
        if !(self.noise_sigma >= 0.0) {
            return Err(CliError::Config(format!(
                "noise.sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::centered(self.n, self.pitch).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn line(&self) -> Result<LineParams> {
        LineParams::new(self.gamma, self.delta0, self.a0)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The imaging system; errors when no pupil width is configured.
    pub fn system(&self) -> Result<ImagingSystem> {
        let rho0 = self.rho0.ok_or_else(|| {
            CliError::Config(
                "no pupil width available: set `system.rho0_mm` or pass a calibration report"
                    .into(),
            )
        })?;
        self.system_with_rho0(rho0)
    }

    pub fn system_with_rho0(&self, rho0: f64) -> Result<ImagingSystem> {
        ImagingSystem::new(
            self.f_fresnel,
            self.magnification,
            self.na,
            rho0,
            self.aberration_a,
            self.wavelength,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(crate::OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    /// Key-value rendering of the physical parameters for manifests and
    /// reports; stable order and formatting.
    pub fn parameter_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("grid.n = {}", self.n),
            format!("grid.pitch_nm = {}", self.pitch * 1e9),
            format!("system.wavelength_nm = {}", self.wavelength * 1e9),
            format!("system.f_fresnel_mm = {}", self.f_fresnel * 1e3),
            format!("system.magnification = {}", self.magnification),
            format!("system.na = {}", self.na),
            format!("system.aberration_rad_per_m4 = {}", self.aberration_a),
            format!("line.gamma_mhz = {}", self.gamma / 1e6),
            format!("line.delta0_mhz = {}", self.delta0 / 1e6),
            format!("line.a0 = {}", self.a0),
            format!(
                "sweep.detunings_mhz = {}",
                self.detunings
                    .iter()
                    .map(|d| (d / 1e6).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!(
                "sweep.defocus_um = {}",
                self.defocus
                    .iter()
                    .map(|z| (z * 1e6).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            format!("noise.sigma = {}", self.noise_sigma),
            format!("noise.seed = {}", self.seed),
        ];
        if let Some(r) = self.rho0 {
            lines.push(format!("system.rho0_mm = {}", r * 1e3));
        }
        lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = "\
[grid]
n = 64
pitch_nm = 53.125

[system]
wavelength_nm = 369.5
f_fresnel_mm = 3.0
magnification = 585
na = 0.64
rho0_mm = 2.2
aberration_rad_per_m4 = 0.0

[line]
gamma_mhz = 34
delta0_mhz = 5
a0 = 0.1

[sweep]
detunings_mhz = -13, 9
defocus_um = 0, 1.7, 3.3

[noise]
sigma = 0.0
seed = 7

[output]
dir = run_out
";

    #[test]
    fn parses_units_to_si() {
        let cfg = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.n, 64);
        assert!((cfg.pitch - 53.125e-9).abs() < 1e-18);
        assert!((cfg.gamma - 34e6).abs() < 1e-6);
        assert!((cfg.defocus[1] - 1.7e-6).abs() < 1e-15);
        assert_eq!(cfg.detunings, vec![-13e6, 9e6]);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.output_dir, PathBuf::from("run_out"));
        assert!(cfg.system().is_ok());
    }

    #[test]
    fn missing_key_names_section_and_key() {
        let broken = EXAMPLE.replace("gamma_mhz = 34\n", "");
        let err = RunConfig::parse(&broken).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma_mhz") && msg.contains("[line]"), "{msg}");
    }

    #[test]
    fn unknown_key_is_refused() {
        let broken = EXAMPLE.replace("a0 = 0.1", "a0 = 0.1\ntypo_key = 3");
        let err = RunConfig::parse(&broken).unwrap_err();
        assert!(err.to_string().contains("typo_key"));
    }

    #[test]
    fn empty_sweep_is_refused() {
        let broken = EXAMPLE.replace("detunings_mhz = -13, 9", "detunings_mhz = ");
        let err = RunConfig::parse(&broken).unwrap_err();
        assert!(err.to_string().contains("at least one"), "{err}");
    }

    #[test]
    fn bad_number_reports_line() {
        let broken = EXAMPLE.replace("na = 0.64", "na = zero point six");
        let err = RunConfig::parse(&broken).unwrap_err();
        assert!(err.to_string().contains("system.na"), "{err}");
    }

    #[test]
    fn rho0_is_optional_until_needed() {
        let no_rho = EXAMPLE.replace("rho0_mm = 2.2\n", "");
        let cfg = RunConfig::parse(&no_rho).unwrap();
        assert!(cfg.rho0.is_none());
        let err = cfg.system().unwrap_err();
        assert!(err.to_string().contains("rho0_mm"), "{err}");
    }
}
