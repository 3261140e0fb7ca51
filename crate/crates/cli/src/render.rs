//! Raster output: portable pixmap and PNG with a symmetric diverging
//! colormap about zero signal (or plain grayscale), plus a sidecar text
//! file recording each image's exact signal bounds.

use std::path::Path;

use ionfringe_core::imaging::Interferogram;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    /// Blue through white to red, symmetric about signal zero.
    Diverging,
    /// Linear gray from min to max.
    Gray,
}

impl std::str::FromStr for Colormap {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "diverging" => Ok(Colormap::Diverging),
            "gray" | "grey" => Ok(Colormap::Gray),
            other => Err(format!("unknown colormap `{other}` (diverging, gray)")),
        }
    }
}

fn diverging_rgb(t: f64) -> [u8; 3] {
    // t in [-1, 1]; negative blue, positive red, white at zero.
    let t = t.clamp(-1.0, 1.0);
    let to_byte = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    if t < 0.0 {
        let s = -t;
        [to_byte(1.0 - s), to_byte(1.0 - 0.6 * s), 255]
    } else {
        [255, to_byte(1.0 - 0.6 * t), to_byte(1.0 - t)]
    }
}

/// 8-bit RGB pixels for the signal, row-major.
pub fn rgb_pixels(img: &Interferogram, colormap: Colormap) -> Vec<u8> {
    let n = img.grid().n();
    let mut out = Vec::with_capacity(3 * n * n);
    match colormap {
        Colormap::Diverging => {
            let vmax = img.max_abs_signal();
            for v in img.signal() {
                let t = if vmax > 0.0 { v / vmax } else { 0.0 };
                out.extend_from_slice(&diverging_rgb(t));
            }
        }
        Colormap::Gray => {
            let min = img.signal().iter().cloned().fold(f64::INFINITY, f64::min);
            let max = img.signal().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let span = max - min;
            for v in img.signal() {
                let t = if span > 0.0 { (v - min) / span } else { 0.5 };
                let g = (t * 255.0).round().clamp(0.0, 255.0) as u8;
                out.extend_from_slice(&[g, g, g]);
            }
        }
    }
    out
}

pub fn write_ppm(path: &Path, img: &Interferogram, colormap: Colormap) -> Result<()> {
    let n = img.grid().n();
    let mut bytes = format!("P6\n{n} {n}\n255\n").into_bytes();
    bytes.extend_from_slice(&rgb_pixels(img, colormap));
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn write_png(path: &Path, img: &Interferogram, colormap: Colormap) -> Result<()> {
    let n = img.grid().n() as u32;
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), n, n);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| CliError::Io(format!("png header: {e}")))?;
    writer
        .write_image_data(&rgb_pixels(img, colormap))
        .map_err(|e| CliError::Io(format!("png payload: {e}")))?;
    Ok(())
}

/// Sidecar with the exact signal bounds (the colorbar limits).
pub fn write_bounds_sidecar(path: &Path, img: &Interferogram) -> Result<()> {
    let min = img.signal().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = img.signal().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let text = format!("signal_min = {min:e}\nsignal_max = {max:e}\n");
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ionfringe_core::Grid;

    #[test]
    fn all_zero_signal_is_uniform_midscale() {
        let grid = Grid::centered(16, 1e-8).unwrap();
        let img = Interferogram::new(grid, vec![0.0; 256], 0.0, 0.0, 0.0).unwrap();
        let px = rgb_pixels(&img, Colormap::Diverging);
        assert!(px.chunks(3).all(|c| c == [255, 255, 255]));
        let gray = rgb_pixels(&img, Colormap::Gray);
        assert!(gray.chunks(3).all(|c| c == [128, 128, 128]));
    }

    #[test]
    fn diverging_map_is_symmetric_about_zero() {
        let grid = Grid::centered(16, 1e-8).unwrap();
        let mut signal = vec![0.0; 256];
        signal[0] = -0.5;
        signal[1] = 0.5;
        let img = Interferogram::new(grid, signal, 0.0, 0.0, 0.0).unwrap();
        let px = rgb_pixels(&img, Colormap::Diverging);
        // Negative extreme is saturated blue, positive saturated red.
        assert_eq!(&px[0..3], &[0, 102, 255]);
        assert_eq!(&px[3..6], &[255, 102, 0]);
    }
}
