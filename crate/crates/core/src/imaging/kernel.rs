//! Pupil-plane transform engine shared by the fast image-formation path
//! and the direct-summation reference.
//!
//! Everything is computed in object-space coordinates: the viewing-plane
//! field at image point `xi` equals the pupil transform evaluated at
//! spatial frequency `xi / (lambda f_R) = x / (lambda f_F)` with
//! `x = xi / M`, so an object-space grid of pitch `dx` fixes the pupil
//! window to `W = lambda f_F / dx` and the transform lands exactly on the
//! grid's frequency samples. The pupil occupies only a small central
//! block of that window; the block is the only part ever filled in.

use std::f64::consts::PI;

use crate::atom::ScatterResponse;
use crate::error::{CoreError, Result};
use crate::fft::fft2_raw_forward_inplace;
use crate::field::Field;
use crate::grid::Grid;
use crate::Complex64;

use super::ImagingSystem;

/// Hard floor for pupil resolution: at least this many samples across the
/// super-Gaussian width parameter.
pub const MIN_SAMPLES_PER_RHO0: f64 = 8.0;

/// Auto-sizing targets; finer than the hard floor for quadrature margin.
const TARGET_SAMPLES_PER_RHO0: f64 = 12.0;
const TARGET_SAMPLES_PER_NA_RADIUS: f64 = 30.0;

/// Largest transform the auto-sizer will pick.
pub const MAX_PUPIL_N: usize = 4096;

struct StaticBlock {
    rho0: f64,
    /// Real pupil weight `p_S(rho) * clip(rho <= rho_NA) / sqrt(f_F^2 + rho^2)`
    /// on the central `(2 he + 1)^2` block.
    amp: Vec<f64>,
    /// Sum of `amp`: the in-focus aberration-free axial response used to
    /// normalise the kernel.
    sum00: f64,
}

/// Reusable transform context for one (system geometry, grid) pair.
///
/// Building the engine validates containment and sampling once; repeated
/// kernel evaluations (as in iterative fits) then reuse the cached pupil
/// weights and the work buffer.
pub struct KernelEngine {
    n_img: usize,
    pupil_n: usize,
    d_rho: f64,
    half_extent: usize,
    f_fresnel: f64,
    lambda: f64,
    na_radius: f64,
    window: f64,
    statics: Option<StaticBlock>,
    work: Vec<Complex64>,
}

impl KernelEngine {
    /// Engine for an image-plane grid (viewing-plane coordinates).
    pub fn for_image_grid(
        sys: &ImagingSystem,
        image_grid: &Grid,
        pupil_n: Option<usize>,
    ) -> Result<Self> {
        Self::build(
            sys,
            image_grid.n(),
            image_grid.pitch() / sys.magnification(),
            pupil_n,
            None,
        )
    }

    /// Engine for an object-space grid, optionally sized for defocus
    /// magnitudes up to `max_zeta_object`.
    pub fn for_object_grid(
        sys: &ImagingSystem,
        object_grid: &Grid,
        pupil_n: Option<usize>,
        max_zeta_object: Option<f64>,
    ) -> Result<Self> {
        Self::build(
            sys,
            object_grid.n(),
            object_grid.pitch(),
            pupil_n,
            max_zeta_object,
        )
    }

    fn build(
        sys: &ImagingSystem,
        n_img: usize,
        object_pitch: f64,
        pupil_n: Option<usize>,
        max_zeta_object: Option<f64>,
    ) -> Result<Self> {
        let lambda = sys.wavelength();
        let f_fresnel = sys.f_fresnel();
        let window = lambda * f_fresnel / object_pitch;
        let contain = sys.pupil_containment_radius();
        if window / 2.0 < contain {
            return Err(CoreError::Sampling(format!(
                "grid pitch too coarse to contain the pupil: the transform window is \
                 {:.3e} m but the pupil extends to {:.3e} m; object-space pitch must be \
                 at most {:.3e} m",
                window / 2.0,
                contain,
                lambda * f_fresnel / (2.0 * contain)
            )));
        }

        let na_radius = sys.pupil_radius_na();
        let n = match pupil_n {
            Some(n) => {
                if !n.is_power_of_two() || n < n_img {
                    return Err(CoreError::Config(format!(
                        "pupil transform size must be a power of two >= the image grid \
                         ({n_img}), got {n}"
                    )));
                }
                n
            }
            None => {
                let mut d_target = (sys.rho0() / TARGET_SAMPLES_PER_RHO0)
                    .min(na_radius / TARGET_SAMPLES_PER_NA_RADIUS);
                if let Some(zeta) = max_zeta_object {
                    if zeta.abs() > 0.0 {
                        // Keep the defocus phase step under pi/2 at the pupil edge.
                        d_target =
                            d_target.min(lambda * f_fresnel * f_fresnel / (4.0 * zeta.abs() * contain));
                    }
                }
                let needed = (window / d_target).ceil() as usize;
                needed.max(n_img).next_power_of_two().min(MAX_PUPIL_N)
            }
        };
        let d_rho = window / n as f64;

        let samples_per_rho0 = sys.rho0() / d_rho;
        if samples_per_rho0 < MIN_SAMPLES_PER_RHO0 {
            return Err(CoreError::Sampling(format!(
                "pupil undersampled: {samples_per_rho0:.1} samples across rho0, need >= \
                 {MIN_SAMPLES_PER_RHO0}; use a larger pupil transform or a coarser image grid"
            )));
        }

        let half_extent = ((na_radius / d_rho).floor() as usize + 1).min(n / 2 - 1);
        Ok(Self {
            n_img,
            pupil_n: n,
            d_rho,
            half_extent,
            f_fresnel,
            lambda,
            na_radius,
            window,
            statics: None,
            work: Vec::new(),
        })
    }

    pub fn pupil_n(&self) -> usize {
        self.pupil_n
    }

    pub fn d_rho(&self) -> f64 {
        self.d_rho
    }

    /// Largest |zeta_object| whose quadratic pupil phase stays Nyquist
    /// sampled on this engine's pupil grid.
    pub fn max_sampled_defocus_object(&self, rho0: f64) -> f64 {
        let contain = (rho0 * (-super::PUPIL_CONTAINMENT_AMPLITUDE.ln()).powf(0.25))
            .min(self.na_radius);
        self.lambda * self.f_fresnel * self.f_fresnel / (2.0 * self.d_rho * contain)
    }

    fn static_block(&mut self, rho0: f64) -> &StaticBlock {
        let stale = match &self.statics {
            Some(b) => b.rho0 != rho0,
            None => true,
        };
        if stale {
            let he = self.half_extent as isize;
            let side = (2 * he + 1) as usize;
            let mut amp = vec![0.0; side * side];
            let mut sum00 = 0.0;
            let inv_rho0_4 = 1.0 / rho0.powi(4);
            let ff2 = self.f_fresnel * self.f_fresnel;
            for oy in -he..=he {
                let ry = oy as f64 * self.d_rho;
                for ox in -he..=he {
                    let rx = ox as f64 * self.d_rho;
                    let r2 = rx * rx + ry * ry;
                    if r2.sqrt() > self.na_radius {
                        continue;
                    }
                    let w = (-(r2 * r2) * inv_rho0_4).exp() / (ff2 + r2).sqrt();
                    amp[((oy + he) * (2 * he + 1) + (ox + he)) as usize] = w;
                    sum00 += w;
                }
            }
            self.statics = Some(StaticBlock { rho0, amp, sum00 });
        }
        self.statics.as_ref().unwrap()
    }

    fn check_zeta(&self, zeta_object: f64, rho0: f64, f_fresnel: f64) -> Result<()> {
        let max_window = super::DEFOCUS_WINDOW_FRACTION * f_fresnel;
        if zeta_object.abs() > max_window {
            return Err(CoreError::Range(format!(
                "defocus {zeta_object:.3e} m (object space) is outside the quadratic \
                 viewing-plane expansion window |zeta| <= {max_window:.3e} m"
            )));
        }
        let max_sampled = self.max_sampled_defocus_object(rho0);
        if zeta_object.abs() > max_sampled {
            return Err(CoreError::Sampling(format!(
                "defocus phase aliases on the pupil grid at zeta = {zeta_object:.3e} m \
                 (object space); maximum sampled |zeta| here is {max_sampled:.3e} m"
            )));
        }
        Ok(())
    }

    /// Normalised complex image kernel on the engine's grid.
    ///
    /// `zeta_object`: object-space defocus; `shift`: object-space position
    /// of the pattern centre; `aberration_a`: quartic pupil phase
    /// coefficient; `rho0`: super-Gaussian pupil width. The kernel equals
    /// exactly one at the origin for an in-focus, aberration-free,
    /// centred system.
    pub fn kernel(
        &mut self,
        zeta_object: f64,
        shift: (f64, f64),
        aberration_a: f64,
        rho0: f64,
    ) -> Result<Vec<Complex64>> {
        self.check_zeta(zeta_object, rho0, self.f_fresnel)?;
        if rho0 / self.d_rho < MIN_SAMPLES_PER_RHO0 {
            return Err(CoreError::Sampling(format!(
                "pupil undersampled at rho0 = {rho0:.3e} m: {:.1} samples across rho0",
                rho0 / self.d_rho
            )));
        }
        let contain = (rho0 * (-super::PUPIL_CONTAINMENT_AMPLITUDE.ln()).powf(0.25))
            .min(self.na_radius);
        if self.window / 2.0 < contain {
            return Err(CoreError::Sampling(format!(
                "pupil at rho0 = {rho0:.3e} m is no longer contained in the transform window"
            )));
        }

        let n = self.pupil_n;
        let he = self.half_extent as isize;
        let lambda_f = self.lambda * self.f_fresnel;
        let defocus_coeff = PI * zeta_object / (lambda_f * self.f_fresnel);
        let shift_coeff = 2.0 * PI / lambda_f;

        self.static_block(rho0);
        let block = self.statics.as_ref().unwrap();
        let sum00 = block.sum00;

        if self.work.len() != n * n {
            self.work = vec![Complex64::new(0.0, 0.0); n * n];
        } else {
            self.work.fill(Complex64::new(0.0, 0.0));
        }
        let side = (2 * he + 1) as usize;
        let half_n = (n / 2) as isize;
        for oy in -he..=he {
            let ry = oy as f64 * self.d_rho;
            let jy = (half_n + oy) as usize;
            for ox in -he..=he {
                let w = block.amp[((oy + he) as usize) * side + (ox + he) as usize];
                if w == 0.0 {
                    continue;
                }
                let rx = ox as f64 * self.d_rho;
                let r2 = rx * rx + ry * ry;
                let theta = aberration_a * r2 * r2
                    + defocus_coeff * r2
                    + shift_coeff * (rx * shift.0 + ry * shift.1);
                let (s, c) = theta.sin_cos();
                let jx = (half_n + ox) as usize;
                // Checkerboard sign centres the transform's frequency origin.
                let sign = if (jx + jy) % 2 == 0 { 1.0 } else { -1.0 };
                self.work[jy * n + jx] = Complex64::new(c * w * sign, s * w * sign);
            }
        }

        fft2_raw_forward_inplace(&mut self.work, n);

        let n_img = self.n_img;
        let mut out = Vec::with_capacity(n_img * n_img);
        let base = n / 2 - n_img / 2;
        for iy in 0..n_img {
            let row = (base + iy) * n;
            for ix in 0..n_img {
                let sign = if (ix + iy) % 2 == 0 { 1.0 } else { -1.0 };
                out.push(self.work[row + base + ix] * (sign / sum00));
            }
        }
        Ok(out)
    }

    /// Direct double-sum evaluation of the same kernel: every output
    /// sample is an explicit sum over the pupil block with the centred
    /// transform phase written out. `O(n_img^2 * block^2)`; shares the
    /// pupil weights with the fast path but none of the transform code.
    pub fn kernel_direct(
        &mut self,
        zeta_object: f64,
        shift: (f64, f64),
        aberration_a: f64,
        rho0: f64,
    ) -> Result<Vec<Complex64>> {
        self.check_zeta(zeta_object, rho0, self.f_fresnel)?;
        let n = self.pupil_n as f64;
        let he = self.half_extent as isize;
        let lambda_f = self.lambda * self.f_fresnel;
        let defocus_coeff = PI * zeta_object / (lambda_f * self.f_fresnel);
        let shift_coeff = 2.0 * PI / lambda_f;

        self.static_block(rho0);
        let block = self.statics.as_ref().unwrap();
        let side = (2 * he + 1) as usize;

        // Pupil samples with their dynamic phase, kept as (offset, value).
        let mut samples = Vec::new();
        for oy in -he..=he {
            let ry = oy as f64 * self.d_rho;
            for ox in -he..=he {
                let w = block.amp[((oy + he) as usize) * side + (ox + he) as usize];
                if w == 0.0 {
                    continue;
                }
                let rx = ox as f64 * self.d_rho;
                let r2 = rx * rx + ry * ry;
                let theta = aberration_a * r2 * r2
                    + defocus_coeff * r2
                    + shift_coeff * (rx * shift.0 + ry * shift.1);
                samples.push((ox, oy, Complex64::from_polar(w, theta)));
            }
        }

        let n_img = self.n_img;
        let mut out = Vec::with_capacity(n_img * n_img);
        let step = -2.0 * PI / n;
        for iy in 0..n_img {
            let my = iy as isize - (n_img / 2) as isize;
            for ix in 0..n_img {
                let mx = ix as isize - (n_img / 2) as isize;
                let mut acc = Complex64::new(0.0, 0.0);
                for &(ox, oy, g) in &samples {
                    let angle = step * (mx * ox + my * oy) as f64;
                    acc += g * Complex64::new(angle.cos(), angle.sin());
                }
                out.push(acc / block.sum00);
            }
        }
        Ok(out)
    }
}

/// Direct-sum reference for the scattered image field: identical contract
/// to [`super::scattered_image_field_with_pupil`], evaluated without any
/// fast transform.
pub fn scattered_image_direct(
    resp: &ScatterResponse,
    sys: &ImagingSystem,
    zeta: f64,
    grid: &Grid,
    pupil_n: usize,
) -> Result<Field> {
    let mut engine = KernelEngine::for_image_grid(sys, grid, Some(pupil_n))?;
    let zeta_object = sys.defocus_object_from_image(zeta);
    let m = sys.magnification();
    let shift = (-grid.center_offset().0 / m, -grid.center_offset().1 / m);
    let kernel = engine.kernel_direct(zeta_object, shift, sys.aberration_a(), sys.rho0())?;
    let prefactor = Complex64::i() * Complex64::from_polar(resp.amplitude, resp.phase);
    let amplitude = kernel.into_iter().map(|k| prefactor * k).collect();
    Ok(Field::from_parts(*grid, amplitude, sys.wavelength(), zeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{LineParams, ScatterResponse};
    use crate::imaging::{scattered_image_field_with_pupil, ImagingSystem};

    const LAMBDA: f64 = 369.5e-9;

    /// Small geometry for the O(n^4) oracle: a 32-point image grid whose
    /// pitch puts the transform window just over the pupil containment
    /// radius.
    fn oracle_setup() -> (ImagingSystem, Grid) {
        let sys = ImagingSystem::new(3e-3, 585.0, 0.64, 1.5e-3, 0.0, LAMBDA).unwrap();
        let contain = sys.pupil_containment_radius();
        let window = 2.15 * contain;
        let dx = LAMBDA * sys.f_fresnel() / window;
        let grid = Grid::centered(32, dx * sys.magnification()).unwrap();
        (sys, grid)
    }

    fn max_rel_err(fast: &Field, slow: &Field) -> f64 {
        let scale = slow
            .amplitude()
            .iter()
            .map(|a| a.norm())
            .fold(0.0, f64::max);
        fast.amplitude()
            .iter()
            .zip(slow.amplitude())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn fast_transform_matches_direct_sum() {
        let (sys, grid) = oracle_setup();
        let line = LineParams::new(34e6, 0.0, 0.1).unwrap();
        let resp = ScatterResponse::at(-13e6, &line);
        let zeta_legal = sys.defocus_image_from_object(1.2e-6);
        let a_nonzero = 0.4 / sys.rho0().powi(4);

        for (zeta, a) in [
            (0.0, 0.0),
            (zeta_legal, 0.0),
            (-zeta_legal, 0.0),
            (0.0, a_nonzero),
            (zeta_legal, a_nonzero),
        ] {
            let sys_a = sys.with_aberration(a).unwrap();
            let fast = scattered_image_field_with_pupil(&resp, &sys_a, zeta, &grid, 32).unwrap();
            let slow = scattered_image_direct(&resp, &sys_a, zeta, &grid, 32).unwrap();
            let err = max_rel_err(&fast, &slow);
            assert!(err < 1e-8, "zeta={zeta:.2e} A={a:.2e}: rel err {err:.2e}");
        }
    }

    #[test]
    fn oracle_matches_on_64_grid_with_offset() {
        let sys = ImagingSystem::new(3e-3, 585.0, 0.64, 1.5e-3, 0.2e12, LAMBDA).unwrap();
        let contain = sys.pupil_containment_radius();
        let dx = LAMBDA * sys.f_fresnel() / (2.3 * contain);
        let grid = Grid::new(
            64,
            dx * sys.magnification(),
            (3.0 * dx * sys.magnification(), -2.0 * dx * sys.magnification()),
        )
        .unwrap();
        let line = LineParams::new(34e6, 0.0, 0.1).unwrap();
        let resp = ScatterResponse::at(9e6, &line);
        let zeta = sys.defocus_image_from_object(0.8e-6);
        let fast = scattered_image_field_with_pupil(&resp, &sys, zeta, &grid, 64).unwrap();
        let slow = scattered_image_direct(&resp, &sys, zeta, &grid, 64).unwrap();
        let err = max_rel_err(&fast, &slow);
        assert!(err < 1e-8, "rel err {err:.2e}");
    }

    #[test]
    fn kernel_is_unity_on_axis_in_focus() {
        let (sys, grid) = oracle_setup();
        let mut engine = KernelEngine::for_image_grid(&sys, &grid, None).unwrap();
        let k = engine.kernel(0.0, (0.0, 0.0), 0.0, sys.rho0()).unwrap();
        let centre = k[(grid.n() / 2) * grid.n() + grid.n() / 2];
        assert!((centre - Complex64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn undersampled_pupil_is_rejected() {
        let (sys, grid) = oracle_setup();
        // rho0 much smaller than 8 pupil samples on a 32-point transform.
        let sys_small = sys.with_rho0(sys.rho0() / 8.0).unwrap();
        let line = LineParams::new(34e6, 0.0, 0.1).unwrap();
        let resp = ScatterResponse::at(0.0, &line);
        let err =
            scattered_image_field_with_pupil(&resp, &sys_small, 0.0, &grid, 32).unwrap_err();
        assert!(matches!(err, CoreError::Sampling(_)), "{err}");
    }

    #[test]
    fn coarse_grid_cannot_contain_pupil() {
        let sys = ImagingSystem::new(3e-3, 585.0, 0.64, 1.5e-3, 0.0, LAMBDA).unwrap();
        // Pitch 4x too coarse: window smaller than the pupil.
        let contain = sys.pupil_containment_radius();
        let dx = LAMBDA * sys.f_fresnel() / (0.5 * contain);
        let grid = Grid::centered(32, dx * sys.magnification()).unwrap();
        let err = match KernelEngine::for_image_grid(&sys, &grid, None) {
            Err(e) => e,
            Ok(_) => panic!("containment check should have failed"),
        };
        assert!(matches!(err, CoreError::Sampling(_)), "{err}");
    }

    #[test]
    fn shift_moves_pattern_centre() {
        let (sys, grid) = oracle_setup();
        let mut engine = KernelEngine::for_image_grid(&sys, &grid, None).unwrap();
        let dx_obj = grid.pitch() / sys.magnification();
        let k0 = engine.kernel(0.0, (0.0, 0.0), 0.0, sys.rho0()).unwrap();
        let k3 = engine
            .kernel(0.0, (3.0 * dx_obj, 0.0), 0.0, sys.rho0())
            .unwrap();
        let n = grid.n();
        // Shifting by an integer number of samples translates the kernel.
        let mut worst = 0.0f64;
        for iy in 0..n {
            for ix in 0..n - 3 {
                worst = worst.max((k3[iy * n + ix + 3] - k0[iy * n + ix]).norm());
            }
        }
        assert!(worst < 1e-9, "shift mismatch {worst:.2e}");
    }
}
