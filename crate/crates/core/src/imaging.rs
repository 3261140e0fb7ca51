//! Image formation of the scattered wave and synthesis of normalised
//! interferograms.
//!
//! The scattered wave is a scalar spherical wave collected by a high-NA
//! lens modelled as a thin complex transmittance: a super-Gaussian pupil
//! amplitude `exp(-rho^4/rho0^4)` with a residual quartic aberration phase
//! `A rho^4`, hard-clipped at the aperture radius set by the numerical
//! aperture. Reimaging onto the viewing plane is paraxial, so a viewing
//! plane displaced from focus contributes a quadratic pupil phase. The
//! image-plane field is the two-dimensional Fourier transform of the pupil
//! field evaluated at spatial frequency `xi / (lambda f_R)`.
//!
//! Conventions baked into this module:
//!
//! * The illumination reference is uniform over the image area, real and
//!   positive; every propagation phase common to the scattered and
//!   reference beams cancels in the homodyne product. The residual
//!   constant phase is fixed so that the on-axis in-focus interference is
//!   destructive at every detuning, which is the weak-scatterer
//!   prediction this instrument geometry realises.
//! * The camera gain is absorbed into the signal normalisation: the
//!   returned scattered field is scaled so that an aberration-free,
//!   in-focus system has on-axis response exactly `amplitude`, making the
//!   in-focus fractional-transmission dip depth `2 * amplitude`.
//! * Defocus is quoted in object space at the user surface. The viewing
//!   plane moves by the longitudinal magnification `M^2` times as much.

mod calibrate;
mod kernel;

pub use calibrate::{calibrate_rho0, in_focus_fwhm, ResolutionCalibration};
pub use kernel::{scattered_image_direct, KernelEngine};

use crate::atom::ScatterResponse;
use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::Complex64;

/// Fraction of the Fresnel-lens focal length accepted as object-space
/// defocus before the quadratic viewing-plane expansion is refused.
pub const DEFOCUS_WINDOW_FRACTION: f64 = 0.05;

/// Pupil amplitudes below this value are treated as fully contained.
pub const PUPIL_CONTAINMENT_AMPLITUDE: f64 = 1e-6;

/// The optical train: collection lens, reimaging lens, pupil apodization
/// and residual spherical aberration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagingSystem {
    f_fresnel: f64,
    f_reimaging: f64,
    na: f64,
    magnification: f64,
    rho0: f64,
    aberration_a: f64,
    wavelength: f64,
}

impl ImagingSystem {
    /// Builds a system from the collection focal length and the
    /// transverse magnification; the reimaging focal length follows as
    /// `magnification * f_fresnel`.
    pub fn new(
        f_fresnel: f64,
        magnification: f64,
        na: f64,
        rho0: f64,
        aberration_a: f64,
        wavelength: f64,
    ) -> Result<Self> {
        Self::from_focal_lengths(
            f_fresnel,
            magnification * f_fresnel,
            na,
            rho0,
            aberration_a,
            wavelength,
        )
    }

    pub fn from_focal_lengths(
        f_fresnel: f64,
        f_reimaging: f64,
        na: f64,
        rho0: f64,
        aberration_a: f64,
        wavelength: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("f_fresnel", f_fresnel),
            ("f_reimaging", f_reimaging),
            ("rho0", rho0),
            ("wavelength", wavelength),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(na > 0.0 && na < 1.0) {
            return Err(CoreError::Config(format!(
                "numerical aperture must lie in (0, 1), got {na}"
            )));
        }
        if !aberration_a.is_finite() {
            return Err(CoreError::Config("aberration coefficient must be finite".into()));
        }
        Ok(Self {
            f_fresnel,
            f_reimaging,
            na,
            magnification: f_reimaging / f_fresnel,
            rho0,
            aberration_a,
            wavelength,
        })
    }

    pub fn f_fresnel(&self) -> f64 {
        self.f_fresnel
    }

    pub fn f_reimaging(&self) -> f64 {
        self.f_reimaging
    }

    pub fn na(&self) -> f64 {
        self.na
    }

    pub fn magnification(&self) -> f64 {
        self.magnification
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn aberration_a(&self) -> f64 {
        self.aberration_a
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn with_rho0(&self, rho0: f64) -> Result<Self> {
        Self::from_focal_lengths(
            self.f_fresnel,
            self.f_reimaging,
            self.na,
            rho0,
            self.aberration_a,
            self.wavelength,
        )
    }

    pub fn with_aberration(&self, aberration_a: f64) -> Result<Self> {
        Self::from_focal_lengths(
            self.f_fresnel,
            self.f_reimaging,
            self.na,
            self.rho0,
            aberration_a,
            self.wavelength,
        )
    }

    /// Physical aperture radius in the pupil plane,
    /// `f_fresnel * tan(asin(na))`.
    pub fn pupil_radius_na(&self) -> f64 {
        self.f_fresnel * self.na.asin().tan()
    }

    /// Radius beyond which the pupil amplitude is negligible: the smaller
    /// of the aperture radius and the super-Gaussian containment radius.
    pub fn pupil_containment_radius(&self) -> f64 {
        let contain = self.rho0 * (-PUPIL_CONTAINMENT_AMPLITUDE.ln()).powf(0.25);
        contain.min(self.pupil_radius_na())
    }

    /// Longitudinal magnification `M^2` for small defocus.
    pub fn longitudinal_magnification(&self) -> f64 {
        self.magnification * self.magnification
    }

    /// Viewing-plane displacement equivalent to an object-space defocus.
    pub fn defocus_image_from_object(&self, zeta_object: f64) -> f64 {
        zeta_object * self.longitudinal_magnification()
    }

    /// Object-space defocus equivalent to a viewing-plane displacement.
    pub fn defocus_object_from_image(&self, zeta_image: f64) -> f64 {
        zeta_image / self.longitudinal_magnification()
    }

    /// Largest object-space defocus inside the quadratic expansion's
    /// validity window.
    pub fn max_defocus_object(&self) -> f64 {
        DEFOCUS_WINDOW_FRACTION * self.f_fresnel
    }
}

/// Complex pupil transmittance at radius `rho` from the optic axis:
/// `exp(-rho^4/rho0^4) * exp(i A rho^4)`. Modulus is at most one.
pub fn pupil_transmittance(rho: f64, sys: &ImagingSystem) -> Result<Complex64> {
    if !(rho >= 0.0) {
        return Err(CoreError::Config(format!(
            "pupil radius must be >= 0, got {rho}"
        )));
    }
    let r4 = rho.powi(4);
    let modulus = (-r4 / sys.rho0.powi(4)).exp();
    Ok(Complex64::from_polar(modulus, sys.aberration_a * r4))
}

/// Normalised fractional-transmission-change image at one detuning and
/// one viewing plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    grid: Grid,
    signal: Vec<f64>,
    detuning: f64,
    defocus_object: f64,
    smoothed_with: f64,
}

impl Interferogram {
    pub fn new(
        grid: Grid,
        signal: Vec<f64>,
        detuning: f64,
        defocus_object: f64,
        smoothed_with: f64,
    ) -> Result<Self> {
        if signal.len() != grid.n() * grid.n() {
            return Err(CoreError::Config(format!(
                "signal length {} does not match grid {}^2",
                signal.len(),
                grid.n()
            )));
        }
        if signal.iter().any(|s| !s.is_finite()) {
            return Err(CoreError::Config("signal contains non-finite values".into()));
        }
        if !detuning.is_finite() || !defocus_object.is_finite() || !(smoothed_with >= 0.0) {
            return Err(CoreError::Config("interferogram metadata invalid".into()));
        }
        Ok(Self {
            grid,
            signal,
            detuning,
            defocus_object,
            smoothed_with,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Row-major signal samples, `signal[iy * n + ix]`.
    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn sample(&self, ix: usize, iy: usize) -> f64 {
        self.signal[iy * self.grid.n() + ix]
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn defocus_object(&self) -> f64 {
        self.defocus_object
    }

    /// Width of the presentation smoothing applied to this copy; zero for
    /// raw data.
    pub fn smoothed_with(&self) -> f64 {
        self.smoothed_with
    }

    pub fn is_raw(&self) -> bool {
        self.smoothed_with == 0.0
    }

    pub fn max_abs_signal(&self) -> f64 {
        self.signal.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub(crate) fn with_signal(&self, signal: Vec<f64>, smoothed_with: f64) -> Self {
        debug_assert_eq!(signal.len(), self.signal.len());
        Self {
            grid: self.grid,
            signal,
            detuning: self.detuning,
            defocus_object: self.defocus_object,
            smoothed_with,
        }
    }
}

/// Scattered field in the viewing plane.
///
/// `zeta` is the viewing-plane displacement from the in-focus image plane
/// (image space); `grid` is the viewing-plane grid in image coordinates.
/// The returned amplitudes are relative to the uniform illumination
/// reference, normalised as described in the module docs, so the full
/// homodyne signal is `2 Re[amplitude]`.
pub fn scattered_image_field(
    resp: &ScatterResponse,
    sys: &ImagingSystem,
    zeta: f64,
    grid: &Grid,
) -> Result<Field> {
    let mut engine = KernelEngine::for_image_grid(sys, grid, None)?;
    scattered_image_field_on(&mut engine, resp, sys, zeta, grid)
}

/// Same as [`scattered_image_field`] with an explicit pupil transform
/// size, used for cross-validation against the direct-sum reference.
pub fn scattered_image_field_with_pupil(
    resp: &ScatterResponse,
    sys: &ImagingSystem,
    zeta: f64,
    grid: &Grid,
    pupil_n: usize,
) -> Result<Field> {
    let mut engine = KernelEngine::for_image_grid(sys, grid, Some(pupil_n))?;
    scattered_image_field_on(&mut engine, resp, sys, zeta, grid)
}

fn scattered_image_field_on(
    engine: &mut KernelEngine,
    resp: &ScatterResponse,
    sys: &ImagingSystem,
    zeta: f64,
    grid: &Grid,
) -> Result<Field> {
    let zeta_object = sys.defocus_object_from_image(zeta);
    let m = sys.magnification();
    let shift = (
        -grid.center_offset().0 / m,
        -grid.center_offset().1 / m,
    );
    let kernel = engine.kernel(zeta_object, shift, sys.aberration_a(), sys.rho0())?;
    // i * a * exp(i phi): the constant quarter-turn makes the in-focus
    // on-axis response -2 a sin(phi), destructive for every phase in (0, pi).
    let prefactor = Complex64::i() * Complex64::from_polar(resp.amplitude, resp.phase);
    let amplitude = kernel.into_iter().map(|k| prefactor * k).collect();
    Ok(Field::from_parts(
        *grid,
        amplitude,
        sys.wavelength(),
        zeta,
    ))
}

/// Synthesises the normalised interferogram `S = 2 Re[U_sc / U_0]` on an
/// object-space grid, `zeta_object` metres upstream of the in-focus plane
/// (positive = upstream of the scatterer).
pub fn interferogram(
    resp: &ScatterResponse,
    sys: &ImagingSystem,
    zeta_object: f64,
    grid: &Grid,
) -> Result<Interferogram> {
    let image_grid = grid.scaled(sys.magnification())?;
    let zeta_image = sys.defocus_image_from_object(zeta_object);
    let field = scattered_image_field(resp, sys, zeta_image, &image_grid)?;
    let signal = field.amplitude().iter().map(|a| 2.0 * a.re).collect();
    Interferogram::new(*grid, signal, resp.detuning, zeta_object, 0.0)
}

/// Circular Gaussian convolution of the signal; `sigma_px` in samples.
/// The kernel is normalised, so the total signal sum is preserved.
fn gaussian_blur_signal(signal: &[f64], n: usize, sigma_px: f64) -> Vec<f64> {
    if sigma_px == 0.0 {
        return signal.to_vec();
    }
    let radius = ((8.0 * sigma_px).ceil() as usize).min(n / 2 - 1).max(1);
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for k in -(radius as isize)..=(radius as isize) {
        kernel.push((-0.5 * (k as f64 / sigma_px).powi(2)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }

    let mut tmp = vec![0.0; n * n];
    // Rows.
    for iy in 0..n {
        let row = &signal[iy * n..(iy + 1) * n];
        for ix in 0..n {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let sx = (ix + n + ki).wrapping_sub(radius) % n;
                acc += w * row[sx];
            }
            tmp[iy * n + ix] = acc;
        }
    }
    // Columns.
    let mut out = vec![0.0; n * n];
    for ix in 0..n {
        for iy in 0..n {
            let mut acc = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let sy = (iy + n + ki).wrapping_sub(radius) % n;
                acc += w * tmp[sy * n + ix];
            }
            out[iy * n + ix] = acc;
        }
    }
    out
}

/// Presentation smoothing: returns a Gaussian-filtered copy tagged with
/// the filter width. The raw interferogram is left untouched and remains
/// the only input the estimator accepts.
pub fn render_smoothed(img: &Interferogram, sigma: f64) -> Result<Interferogram> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(CoreError::Config(format!(
            "smoothing width must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let sigma_px = sigma / img.grid().pitch();
    let blurred = gaussian_blur_signal(img.signal(), img.grid().n(), sigma_px);
    Ok(img.with_signal(blurred, sigma))
}

/// Phenomenological thermal-motion blur of the scattered image,
/// implemented as a Gaussian convolution of the signal. Off by default
/// (`sigma_thermal = 0`). This models physics, not presentation, so the
/// `smoothed_with` tag is left unchanged.
pub fn motional_blur(img: &Interferogram, sigma_thermal: f64) -> Result<Interferogram> {
    if !(sigma_thermal >= 0.0) || !sigma_thermal.is_finite() {
        return Err(CoreError::Config(format!(
            "thermal blur width must be >= 0, got {sigma_thermal}"
        )));
    }
    if sigma_thermal == 0.0 {
        return Ok(img.clone());
    }
    let sigma_px = sigma_thermal / img.grid().pitch();
    let blurred = gaussian_blur_signal(img.signal(), img.grid().n(), sigma_px);
    Ok(img.with_signal(blurred, img.smoothed_with()))
}

/// Azimuthally averaged radial profile of the signal about the grid
/// centre. Returns (bin centre radii, mean signal per bin); bins are one
/// pitch wide.
pub fn radial_profile(img: &Interferogram) -> (Vec<f64>, Vec<f64>) {
    let grid = img.grid();
    let n = grid.n();
    let pitch = grid.pitch();
    let n_bins = n / 2;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for iy in 0..n {
        for ix in 0..n {
            let x = (ix as f64 - (n / 2) as f64) * pitch;
            let y = (iy as f64 - (n / 2) as f64) * pitch;
            let r = (x * x + y * y).sqrt();
            let bin = (r / pitch).floor() as usize;
            if bin < n_bins {
                sums[bin] += img.sample(ix, iy);
                counts[bin] += 1;
            }
        }
    }
    let radii = (0..n_bins).map(|b| (b as f64 + 0.5) * pitch).collect();
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    (radii, means)
}

/// Radius of the outermost interference ring: the largest radius at which
/// the azimuthal profile has a local extremum of magnitude at least
/// `rel_threshold` times the profile's peak magnitude.
pub fn outermost_ring_radius(img: &Interferogram, rel_threshold: f64) -> Option<f64> {
    let (radii, profile) = radial_profile(img);
    let peak = profile.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return None;
    }
    let threshold = rel_threshold * peak;
    for b in (1..profile.len() - 1).rev() {
        let v = profile[b];
        if v.abs() >= threshold
            && ((v >= profile[b - 1] && v >= profile[b + 1] && v > 0.0)
                || (v <= profile[b - 1] && v <= profile[b + 1] && v < 0.0))
        {
            return Some(radii[b]);
        }
    }
    None
}
