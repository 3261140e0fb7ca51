use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::Complex64;

/// Complex scalar optical amplitude sampled on a [`Grid`].
///
/// `|amplitude|^2` is proportional to intensity; total power is the
/// pitch-weighted sum of `|amplitude|^2` over the grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    amplitude: Vec<Complex64>,
    wavelength: f64,
    /// Plane location along the optic axis, metres.
    z: f64,
}

impl Field {
    pub fn new(grid: Grid, amplitude: Vec<Complex64>, wavelength: f64, z: f64) -> Result<Self> {
        if amplitude.len() != grid.n() * grid.n() {
            return Err(CoreError::Config(format!(
                "amplitude length {} does not match grid {}x{}",
                amplitude.len(),
                grid.n(),
                grid.n()
            )));
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(CoreError::Config(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !z.is_finite() {
            return Err(CoreError::Config("plane location must be finite".into()));
        }
        if let Some(bad) = amplitude.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(CoreError::Config(format!(
                "non-finite amplitude at sample {bad}"
            )));
        }
        Ok(Self {
            grid,
            amplitude,
            wavelength,
            z,
        })
    }

    /// Zero field on the given grid.
    pub fn zeros(grid: Grid, wavelength: f64, z: f64) -> Result<Self> {
        Self::new(
            grid,
            vec![Complex64::new(0.0, 0.0); grid.n() * grid.n()],
            wavelength,
            z,
        )
    }

    pub fn grid(&self) -> &Grid {
        self.grid_ref()
    }

    fn grid_ref(&self) -> &Grid {
        &self.grid
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Row-major samples, `amplitude[iy * n + ix]`.
    pub fn amplitude(&self) -> &[Complex64] {
        &self.amplitude
    }

    pub fn sample(&self, ix: usize, iy: usize) -> Complex64 {
        self.amplitude[iy * self.grid.n() + ix]
    }

    /// Total power `sum |a|^2 * pitch^2`.
    pub fn power(&self) -> f64 {
        let cell = self.grid.pitch() * self.grid.pitch();
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * cell
    }

    /// Internal constructor for values produced by trusted kernels.
    pub(crate) fn from_parts(grid: Grid, amplitude: Vec<Complex64>, wavelength: f64, z: f64) -> Self {
        debug_assert_eq!(amplitude.len(), grid.n() * grid.n());
        Self {
            grid,
            amplitude,
            wavelength,
            z,
        }
    }

}

/// Collimated Gaussian beam at its waist plane: flat phase, intensity
/// full-width-at-half-maximum `fwhm`, peak amplitude `power_scale`.
///
/// Intensity falls as `2^-(2 r / fwhm)^2`, so `|a(r)| = power_scale *
/// 2^-(2 r / fwhm)^2 / 2` and the on-axis intensity is `power_scale^2`.
pub fn gaussian_beam(grid: Grid, fwhm: f64, wavelength: f64, power_scale: f64) -> Result<Field> {
    if !(fwhm > 0.0) {
        return Err(CoreError::Config(format!(
            "beam fwhm must be positive, got {fwhm}"
        )));
    }
    if fwhm < 4.0 * grid.pitch() {
        return Err(CoreError::Config(format!(
            "beam fwhm {fwhm:.3e} m is not resolvable: fwhm/pitch = {:.2} but must be >= 4",
            fwhm / grid.pitch()
        )));
    }
    let n = grid.n();
    let ln2 = std::f64::consts::LN_2;
    let mut amplitude = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = grid.xy(ix, iy);
            let r2 = x * x + y * y;
            // |a| = p * exp(-2 ln2 r^2 / fwhm^2) so that |a|^2 halves at r = fwhm/2.
            let a = power_scale * (-2.0 * ln2 * r2 / (fwhm * fwhm)).exp();
            amplitude.push(Complex64::new(a, 0.0));
        }
    }
    Field::new(grid, amplitude, wavelength, 0.0)
}
