use crate::error::{CoreError, Result};

/// Uniform square sampling grid with a physical pitch.
///
/// Sample `j` along an axis sits at `(j - n/2) * pitch + offset`, so the
/// grid is centred on the optic axis when `center_offset` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    pitch: f64,
    center_offset: (f64, f64),
}

impl Grid {
    /// Minimum side length accepted by [`Grid::new`].
    pub const MIN_N: usize = 16;

    pub fn new(n: usize, pitch: f64, center_offset: (f64, f64)) -> Result<Self> {
        if n < Self::MIN_N || !n.is_power_of_two() {
            return Err(CoreError::Config(format!(
                "grid side must be a power of two >= {}, got {n}",
                Self::MIN_N
            )));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(CoreError::Config(format!(
                "grid pitch must be positive and finite, got {pitch}"
            )));
        }
        if !center_offset.0.is_finite() || !center_offset.1.is_finite() {
            return Err(CoreError::Config("grid offset must be finite".into()));
        }
        Ok(Self {
            n,
            pitch,
            center_offset,
        })
    }

    /// Centred grid without transverse offset.
    pub fn centered(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, pitch, (0.0, 0.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn center_offset(&self) -> (f64, f64) {
        self.center_offset
    }

    /// Physical side length `n * pitch`.
    pub fn side(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    /// Physical coordinate of sample index `j` along one axis (x uses the
    /// first offset component, y the second).
    pub fn coord(&self, j: usize, axis_offset: f64) -> f64 {
        (j as f64 - (self.n / 2) as f64) * self.pitch + axis_offset
    }

    /// (x, y) coordinates of the sample at row `iy`, column `ix`.
    pub fn xy(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.coord(ix, self.center_offset.0),
            self.coord(iy, self.center_offset.1),
        )
    }

    /// Same grid rescaled by a positive factor (used to map between
    /// object-space and image-space descriptions of the same samples).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.n,
            self.pitch * factor,
            (self.center_offset.0 * factor, self.center_offset.1 * factor),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::centered(8, 1e-9).is_err());
        assert!(Grid::centered(48, 1e-9).is_err());
        assert!(Grid::centered(16, 0.0).is_err());
        assert!(Grid::centered(16, -1.0).is_err());
        assert!(Grid::centered(16, f64::NAN).is_err());
        assert!(Grid::centered(16, 1e-9).is_ok());
    }

    #[test]
    fn coordinates_are_centred() {
        let g = Grid::centered(16, 2.0).unwrap();
        assert_eq!(g.coord(8, 0.0), 0.0);
        assert_eq!(g.coord(0, 0.0), -16.0);
        assert_eq!(g.side(), 32.0);
        let off = Grid::new(16, 2.0, (1.0, -1.0)).unwrap();
        assert_eq!(off.xy(8, 8), (1.0, -1.0));
    }
}
