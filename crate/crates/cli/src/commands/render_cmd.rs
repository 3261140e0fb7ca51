//! `render`: IFG1 files to PNG and portable pixmap rasters with a bounds
//! sidecar. Optional presentation smoothing renders a filtered copy; the
//! raw input file is never modified.

use std::path::{Path, PathBuf};

use ionfringe_core::imaging::render_smoothed;

use crate::error::{CliError, Result};
use crate::ifg1;
use crate::render::{write_bounds_sidecar, write_png, write_ppm, Colormap};

pub struct RenderedImage {
    pub png: PathBuf,
    pub ppm: PathBuf,
    pub bounds: PathBuf,
}

pub fn run(
    files: &[PathBuf],
    colormap: Colormap,
    smooth_sigma: Option<f64>,
    out_dir: Option<&Path>,
) -> Result<Vec<RenderedImage>> {
    if files.is_empty() {
        return Err(CliError::Config("no files to render".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut outputs = Vec::with_capacity(files.len());
    for path in files {
        let raw = ifg1::read_file(path)?;
        let img = match smooth_sigma {
            Some(sigma) if sigma > 0.0 => render_smoothed(&raw, sigma)?,
            _ => raw,
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Io(format!("unusable file name: {}", path.display())))?;
        // Stems contain dots (unit-bearing names), so suffixes are
        // appended rather than spliced with with_extension.
        let named = |suffix: &str| match out_dir {
            Some(dir) => dir.join(format!("{stem}.{suffix}")),
            None => path.with_file_name(format!("{stem}.{suffix}")),
        };
        let png = named("png");
        let ppm = named("ppm");
        let bounds = named("bounds.txt");
        write_png(&png, &img, colormap)?;
        write_ppm(&ppm, &img, colormap)?;
        write_bounds_sidecar(&bounds, &img)?;
        outputs.push(RenderedImage { png, ppm, bounds });
    }
    Ok(outputs)
}
