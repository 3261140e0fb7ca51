//! IFG1: a minimal binary container for one interferogram.
//!
//! Little-endian layout:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `IFG1`                  |
//! | 4      | 2    | version, u16 (currently 1)    |
//! | 6      | 2    | width, u16                    |
//! | 8      | 2    | height, u16                   |
//! | 10     | 8    | pitch, f64, metres            |
//! | 18     | 8    | detuning, f64, Hz             |
//! | 26     | 8    | defocus (object space), f64, m|
//! | 34     | 8    | smoothing width, f64, m (0 = raw) |
//! | 42     | 4wh  | signal, row-major f32         |
//!
//! Write-read-write is byte-identical; the f64 signal is quantised to f32
//! exactly once, on the first write.

use std::path::Path;

use ionfringe_core::imaging::Interferogram;
use ionfringe_core::Grid;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"IFG1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 42;

pub fn encode(img: &Interferogram) -> Result<Vec<u8>> {
    let n = img.grid().n();
    if n > u16::MAX as usize {
        return Err(CliError::Config(format!(
            "grid side {n} exceeds the u16 limit of the IFG1 header"
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    out.extend_from_slice(&(n as u16).to_le_bytes());
    out.extend_from_slice(&img.grid().pitch().to_le_bytes());
    out.extend_from_slice(&img.detuning().to_le_bytes());
    out.extend_from_slice(&img.defocus_object().to_le_bytes());
    out.extend_from_slice(&img.smoothed_with().to_le_bytes());
    for v in img.signal() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Interferogram> {
    if bytes.len() < HEADER_LEN {
        return Err(CliError::Io(format!(
            "IFG1 data truncated: {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CliError::Io("not an IFG1 file (bad magic)".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(CliError::Io(format!(
            "unsupported IFG1 version {version}, expected {VERSION}"
        )));
    }
    let width = u16_at(6) as usize;
    let height = u16_at(8) as usize;
    if width != height || !width.is_power_of_two() || width < Grid::MIN_N {
        return Err(CliError::Io(format!(
            "unsupported IFG1 geometry {width}x{height}: this pipeline uses square \
             power-of-two grids of at least {}",
            Grid::MIN_N
        )));
    }
    let expected = HEADER_LEN + 4 * width * height;
    if bytes.len() != expected {
        return Err(CliError::Io(format!(
            "IFG1 payload length mismatch: file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let pitch = f64_at(10);
    let detuning = f64_at(18);
    let defocus = f64_at(26);
    let smoothed = f64_at(34);

    let grid = Grid::centered(width, pitch).map_err(|e| CliError::Io(e.to_string()))?;
    let mut signal = Vec::with_capacity(width * height);
    for chunk in bytes[HEADER_LEN..].chunks_exact(4) {
        signal.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Interferogram::new(grid, signal, detuning, defocus, smoothed)
        .map_err(|e| CliError::Io(format!("IFG1 contents invalid: {e}")))
}

pub fn write_file(path: &Path, img: &Interferogram) -> Result<()> {
    let bytes = encode(img)?;
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> Result<Interferogram> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> Interferogram {
        let grid = Grid::centered(16, 13.28125e-9).unwrap();
        let signal: Vec<f64> = (0..256).map(|i| (i as f64 * 0.731).sin() * 0.01).collect();
        Interferogram::new(grid, signal, -13e6, 1.7e-6, 0.0).unwrap()
    }

    #[test]
    fn header_layout_is_stable() {
        let bytes = encode(&sample_image()).unwrap();
        assert_eq!(&bytes[0..4], b"IFG1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 16);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 16);
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 256);
        let detuning = f64::from_le_bytes(bytes[18..26].try_into().unwrap());
        assert_eq!(detuning, -13e6);
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let bytes1 = encode(&sample_image()).unwrap();
        let decoded = decode(&bytes1).unwrap();
        let bytes2 = encode(&decoded).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn rejects_corruption() {
        let good = encode(&sample_image()).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        let truncated = &good[..good.len() - 4];
        assert!(decode(truncated).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(decode(&bad_version).is_err());
    }
}
