use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::imaging::{ImagingSystem, Interferogram, KernelEngine};
use crate::Complex64;

use super::lm::{minimize, spd_inverse, LmOptions};

/// One detuning's worth of interferograms at several viewing planes.
///
/// The estimator consumes raw data only; smoothed copies are refused.
#[derive(Debug, Clone)]
pub struct SeriesObservation {
    images: Vec<Interferogram>,
    noise_sigma: f64,
}

impl SeriesObservation {
    pub fn new(images: Vec<Interferogram>, noise_sigma: f64) -> Result<Self> {
        if images.len() < 2 {
            return Err(CoreError::Observation(
                "a series needs at least two viewing planes; the scattered phase is not \
                 identifiable from a single in-focus image"
                    .into(),
            ));
        }
        let mut distinct: Vec<f64> = Vec::new();
        for img in &images {
            if !img.is_raw() {
                return Err(CoreError::Observation(format!(
                    "image at defocus {:.3e} m was smoothed (width {:.1e} m); \
                     the estimator accepts raw data only",
                    img.defocus_object(),
                    img.smoothed_with()
                )));
            }
            if img.grid() != images[0].grid() {
                return Err(CoreError::Observation(
                    "all images in a series must share one grid".into(),
                ));
            }
            if img.detuning() != images[0].detuning() {
                return Err(CoreError::Observation(
                    "all images in a series must share one detuning".into(),
                ));
            }
            if !distinct.iter().any(|z| *z == img.defocus_object()) {
                distinct.push(img.defocus_object());
            }
        }
        if distinct.len() < 2 {
            return Err(CoreError::Observation(
                "a series needs at least two distinct defocus values".into(),
            ));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(CoreError::Observation(format!(
                "noise sigma must be >= 0, got {noise_sigma}"
            )));
        }
        Ok(Self {
            images,
            noise_sigma,
        })
    }

    pub fn images(&self) -> &[Interferogram] {
        &self.images
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn detuning(&self) -> f64 {
        self.images[0].detuning()
    }

    pub fn grid(&self) -> &Grid {
        self.images[0].grid()
    }
}

/// Parameters shared across the planes of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedParams {
    pub aberration_a: f64,
    pub rho0: f64,
    /// Transverse position of the scatterer, object space, metres.
    pub center_offset: (f64, f64),
    /// Per-plane defocus corrections, object space, metres.
    pub defocus_offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
}

/// Symmetric covariance over the fitted parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    names: Vec<String>,
    data: Vec<f64>,
}

impl Covariance {
    fn new(names: Vec<String>, data: Vec<f64>) -> Self {
        debug_assert_eq!(names.len() * names.len(), data.len());
        Self { names, data }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.names.len() + j]
    }
}

/// Estimates from one series fit. The scattered-wave pair is represented
/// internally as `(a cos phi, a sin phi)` and converted here at the
/// boundary, so `phase` lands in `(-pi, pi]` and carries the usual
/// zero-amplitude identifiability caveat.
#[derive(Debug, Clone)]
pub struct SeriesFit {
    pub amplitude: f64,
    pub phase: f64,
    pub amplitude_sigma: f64,
    pub phase_sigma: f64,
    pub shared: SharedParams,
    pub residual_rms: f64,
    pub covariance: Covariance,
    pub convergence: Convergence,
}

/// Knobs for [`fit_series`]. Defaults fit the per-series parameters only
/// (scattered pair, centre, per-plane defocus corrections) and keep the
/// system's aberration and pupil width frozen, which is the production
/// configuration once those have been calibrated.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub fit_aberration: bool,
    pub fit_rho0: bool,
    pub max_iterations: usize,
    /// Overrides for the documented initialisation (a linear least-squares
    /// solve of the scattered pair at the nominal geometry).
    pub init_amplitude: Option<f64>,
    pub init_phase: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_aberration: false,
            fit_rho0: false,
            max_iterations: 200,
            init_amplitude: None,
            init_phase: None,
        }
    }
}

/// Amplitudes at or below `3 sigma + floor` are reported as the phase
/// identifiability singularity instead of an arbitrary angle.
const AMPLITUDE_FLOOR: f64 = 1e-12;

struct ParamLayout {
    n_planes: usize,
    fit_aberration: bool,
    fit_rho0: bool,
}

impl ParamLayout {
    fn len(&self) -> usize {
        4 + self.n_planes + usize::from(self.fit_aberration) + usize::from(self.fit_rho0)
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec![
            "a_cos_phi".to_string(),
            "a_sin_phi".to_string(),
            "center_x".to_string(),
            "center_y".to_string(),
        ];
        for p in 0..self.n_planes {
            names.push(format!("defocus_offset_{p}"));
        }
        if self.fit_aberration {
            names.push("aberration_a".to_string());
        }
        if self.fit_rho0 {
            names.push("rho0".to_string());
        }
        names
    }

    fn aberration_index(&self) -> Option<usize> {
        self.fit_aberration.then_some(4 + self.n_planes)
    }

    fn rho0_index(&self) -> Option<usize> {
        self.fit_rho0
            .then_some(4 + self.n_planes + usize::from(self.fit_aberration))
    }
}

/// Model signal for one plane given the complex kernel: the homodyne
/// signal is linear in the scattered pair,
/// `S = -2 (re K_im + im K_re)`.
fn model_into(re: f64, im: f64, kernel: &[Complex64], obs: &[f64], out: &mut Vec<f64>) {
    for (k, s_obs) in kernel.iter().zip(obs) {
        out.push(-2.0 * (re * k.im + im * k.re) - s_obs);
    }
}

/// Linear least-squares solve of the scattered pair against all planes at
/// fixed geometry; this is the fit initialiser (in-focus data pins the
/// `a sin phi` component, defocused data the rest).
fn linear_pair_init(kernels: &[Vec<Complex64>], observations: &[&[f64]]) -> (f64, f64) {
    let (mut m11, mut m12, mut m22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (kernel, obs) in kernels.iter().zip(observations) {
        for (k, s) in kernel.iter().zip(*obs) {
            let u1 = -2.0 * k.im;
            let u2 = -2.0 * k.re;
            m11 += u1 * u1;
            m12 += u1 * u2;
            m22 += u2 * u2;
            b1 += u1 * s;
            b2 += u2 * s;
        }
    }
    let det = m11 * m22 - m12 * m12;
    if det.abs() < 1e-300 {
        return (0.0, 0.0);
    }
    ((m22 * b1 - m12 * b2) / det, (m11 * b2 - m12 * b1) / det)
}

/// Fits one interferogram series to the forward model by damped least
/// squares, minimising the summed squared pixel residuals over all
/// planes. Deterministic for identical inputs.
pub fn fit_series(
    obs: &SeriesObservation,
    sys_init: &ImagingSystem,
    opts: &FitOptions,
) -> Result<SeriesFit> {
    if let Some(a) = opts.init_amplitude {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::Config(format!(
                "initial amplitude must be positive, got {a}"
            )));
        }
    }
    if let Some(p) = opts.init_phase {
        if !p.is_finite() {
            return Err(CoreError::Config("initial phase must be finite".into()));
        }
    }

    let grid = *obs.grid();
    let planes: Vec<(f64, &[f64])> = obs
        .images()
        .iter()
        .map(|img| (img.defocus_object(), img.signal()))
        .collect();
    let layout = ParamLayout {
        n_planes: planes.len(),
        fit_aberration: opts.fit_aberration,
        fit_rho0: opts.fit_rho0,
    };

    // No defocus-aware oversizing here: the fit must evaluate the forward
    // model on exactly the discretization that produces simulated data on
    // this grid, and the per-call sampling guard still rejects any plane
    // whose defocus phase would alias.
    let mut engine = KernelEngine::for_object_grid(sys_init, &grid, None, None)?;

    let base_aberration = sys_init.aberration_a();
    let base_rho0 = sys_init.rho0();
    let grid_offset = grid.center_offset();

    // Kernel cache: iterative fits revisit the same geometry many times
    // (every finite-difference column that does not move a geometry
    // parameter). Keyed by the exact bits of the geometry tuple.
    let mut cache: HashMap<[u64; 5], Vec<Complex64>> = HashMap::new();
    let mut kernel_for = move |engine: &mut KernelEngine,
                               zeta: f64,
                               shift: (f64, f64),
                               aberration: f64,
                               rho0: f64|
          -> Result<Vec<Complex64>> {
        let key = [
            zeta.to_bits(),
            shift.0.to_bits(),
            shift.1.to_bits(),
            aberration.to_bits(),
            rho0.to_bits(),
        ];
        if let Some(k) = cache.get(&key) {
            return Ok(k.clone());
        }
        let k = engine.kernel(zeta, shift, aberration, rho0)?;
        if cache.len() > 64 {
            cache.clear();
        }
        cache.insert(key, k.clone());
        Ok(k)
    };

    // Initial scattered pair from the linear solve at nominal geometry,
    // unless overridden.
    let base_shift = (-grid_offset.0, -grid_offset.1);
    let (re0, im0) = match (opts.init_amplitude, opts.init_phase) {
        (Some(a), Some(phi)) => (a * phi.cos(), a * phi.sin()),
        _ => {
            let kernels: Result<Vec<_>> = planes
                .iter()
                .map(|(z, _)| kernel_for(&mut engine, *z, base_shift, base_aberration, base_rho0))
                .collect();
            let kernels = kernels?;
            let obs_refs: Vec<&[f64]> = planes.iter().map(|(_, s)| *s).collect();
            let (mut re, mut im) = linear_pair_init(&kernels, &obs_refs);
            if let Some(a) = opts.init_amplitude {
                let norm = (re * re + im * im).sqrt();
                if norm > 0.0 {
                    re *= a / norm;
                    im *= a / norm;
                }
            }
            if let Some(phi) = opts.init_phase {
                let a = (re * re + im * im).sqrt().max(1e-6);
                re = a * phi.cos();
                im = a * phi.sin();
            }
            (re, im)
        }
    };

    let mut x0 = vec![re0, im0, 0.0, 0.0];
    x0.extend(std::iter::repeat(0.0).take(layout.n_planes));
    if layout.fit_aberration {
        x0.push(base_aberration);
    }
    if layout.fit_rho0 {
        x0.push(base_rho0);
    }

    let signal_scale = obs
        .images()
        .iter()
        .map(|i| i.max_abs_signal())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let pair_scale = (re0 * re0 + im0 * im0).sqrt().max(signal_scale / 2.0);
    let mut scales = vec![pair_scale, pair_scale, 50e-9, 50e-9];
    scales.extend(std::iter::repeat(100e-9).take(layout.n_planes));
    if layout.fit_aberration {
        let contain = sys_init.pupil_containment_radius();
        scales.push((0.2 / contain.powi(4)).max(base_aberration.abs() / 10.0));
    }
    if layout.fit_rho0 {
        scales.push(base_rho0 / 20.0);
    }

    let mut lm_opts = LmOptions::new(scales);
    lm_opts.max_iterations = opts.max_iterations;

    let layout_names = layout.names();
    let n_planes = layout.n_planes;
    let ab_idx = layout.aberration_index();
    let rho_idx = layout.rho0_index();
    let mut residuals = |x: &[f64], out: &mut Vec<f64>| -> Result<()> {
        out.clear();
        let (re, im) = (x[0], x[1]);
        let shift = (x[2] - grid_offset.0, x[3] - grid_offset.1);
        let aberration = ab_idx.map_or(base_aberration, |i| x[i]);
        let rho0 = rho_idx.map_or(base_rho0, |i| x[i]);
        for (p, (zeta, obs_signal)) in planes.iter().enumerate() {
            let kernel = kernel_for(&mut engine, zeta + x[4 + p], shift, aberration, rho0)?;
            model_into(re, im, &kernel, obs_signal, out);
        }
        Ok(())
    };

    let outcome = minimize(&mut residuals, &x0, &lm_opts)?;
    let p = layout.len();
    let m = outcome.n_residuals;
    let residual_rms = (outcome.cost / m as f64).sqrt();

    if !outcome.converged {
        return Err(CoreError::NonConvergence {
            iterations: outcome.iterations,
            residual_rms,
            trace: outcome.trace,
        });
    }

    let (re, im) = (outcome.params[0], outcome.params[1]);
    let amplitude = (re * re + im * im).sqrt();
    let phase_singularity = |detail: String| CoreError::Singular {
        null_direction: "phase".into(),
        detail,
    };
    // An amplitude at the absolute floor makes every geometry derivative
    // vanish with it; flag the phase singularity rather than an arbitrary
    // angle (or an unhelpful joint-singularity report).
    if amplitude <= AMPLITUDE_FLOOR * signal_scale.max(1.0) {
        return Err(phase_singularity(format!(
            "fitted amplitude {amplitude:.3e} is zero at working precision; \
             the scattered phase is unidentifiable"
        )));
    }

    // Covariance: Gauss-Newton curvature at the optimum scaled by the
    // residual variance.
    let sigma2 = outcome.cost / (m - p) as f64;
    let cov_data: Vec<f64> = match spd_inverse(&outcome.jtj, p) {
        Some(inv) => inv.iter().map(|v| v * sigma2).collect(),
        None => {
            return Err(CoreError::Singular {
                null_direction: "joint parameter space".into(),
                detail: "J^T J is singular at the optimum".into(),
            })
        }
    };

    let (c_rr, c_ri, c_ii) = (cov_data[0], cov_data[1], cov_data[p + 1]);
    let pair_sigma = ((c_rr + c_ii) / 2.0).max(0.0).sqrt();
    if amplitude <= 3.0 * pair_sigma {
        return Err(phase_singularity(format!(
            "fitted amplitude {amplitude:.3e} is consistent with zero \
             (pair sigma {pair_sigma:.3e}); the scattered phase is unidentifiable"
        )));
    }
    let a2 = amplitude * amplitude;
    let amplitude_sigma =
        ((re * re * c_rr + 2.0 * re * im * c_ri + im * im * c_ii) / a2).max(0.0).sqrt();
    let phase_sigma = ((im * im * c_rr - 2.0 * re * im * c_ri + re * re * c_ii) / (a2 * a2))
        .max(0.0)
        .sqrt();

    let shared = SharedParams {
        aberration_a: ab_idx.map_or(base_aberration, |i| outcome.params[i]),
        rho0: rho_idx.map_or(base_rho0, |i| outcome.params[i]),
        center_offset: (outcome.params[2], outcome.params[3]),
        defocus_offsets: outcome.params[4..4 + n_planes].to_vec(),
    };

    Ok(SeriesFit {
        amplitude,
        phase: im.atan2(re),
        amplitude_sigma,
        phase_sigma,
        shared,
        residual_rms,
        covariance: Covariance::new(layout_names, cov_data),
        convergence: Convergence {
            converged: true,
            iterations: outcome.iterations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{LineParams, ScatterResponse};
    use crate::estimator::inject_noise;
    use crate::imaging::interferogram;

    const LAMBDA: f64 = 369.5e-9;

    fn system() -> ImagingSystem {
        ImagingSystem::new(3e-3, 585.0, 0.64, 1.8e-3, 0.1e12, LAMBDA).unwrap()
    }

    fn grid64() -> Grid {
        Grid::centered(64, 3.4e-6 / 64.0).unwrap()
    }

    fn synth_series(
        sys: &ImagingSystem,
        detuning: f64,
        line: &LineParams,
        planes: &[f64],
    ) -> SeriesObservation {
        let resp = ScatterResponse::at(detuning, line);
        let images = planes
            .iter()
            .map(|z| interferogram(&resp, sys, *z, &grid64()).unwrap())
            .collect();
        SeriesObservation::new(images, 0.0).unwrap()
    }

    #[test]
    fn observation_validation() {
        let sys = system();
        let line = LineParams::new(34e6, 5e6, 0.1).unwrap();
        let resp = ScatterResponse::at(-13e6, &line);
        let one = interferogram(&resp, &sys, 0.0, &grid64()).unwrap();
        assert!(SeriesObservation::new(vec![one.clone()], 0.0).is_err());
        assert!(SeriesObservation::new(vec![one.clone(), one.clone()], 0.0).is_err());
        let two = interferogram(&resp, &sys, 1.7e-6, &grid64()).unwrap();
        assert!(SeriesObservation::new(vec![one.clone(), two.clone()], 0.0).is_ok());
        let smoothed = crate::imaging::render_smoothed(&two, 40e-9).unwrap();
        assert!(SeriesObservation::new(vec![one, smoothed], 0.0).is_err());
    }

    #[test]
    fn closed_loop_recovers_scattered_pair() {
        let sys = system();
        let line = LineParams::new(34e6, 0.0, 0.1).unwrap();
        let obs = synth_series(&sys, -13e6, &line, &[0.0, 1.7e-6, 3.3e-6]);
        let truth = ScatterResponse::at(-13e6, &line);
        let fit = fit_series(&obs, &sys, &FitOptions::default()).unwrap();
        assert!(fit.convergence.converged);
        assert!(
            (fit.amplitude - truth.amplitude).abs() / truth.amplitude < 5e-3,
            "amplitude {} vs {}",
            fit.amplitude,
            truth.amplitude
        );
        assert!(
            (fit.phase - truth.phase).abs() < 5e-3,
            "phase {} vs {}",
            fit.phase,
            truth.phase
        );
        assert!(fit.residual_rms < 1e-10);
        // Covariance is symmetric positive semidefinite on its diagonal.
        for i in 0..fit.covariance.len() {
            assert!(fit.covariance.get(i, i) >= 0.0);
            for j in 0..i {
                assert_eq!(fit.covariance.get(i, j), fit.covariance.get(j, i));
            }
        }
    }

    #[test]
    fn zero_amplitude_flags_phase_singularity() {
        let sys = system();
        let line = LineParams::new(34e6, 0.0, 0.0).unwrap();
        let obs = synth_series(&sys, -13e6, &line, &[0.0, 1.7e-6, 3.3e-6]);
        let err = fit_series(&obs, &sys, &FitOptions::default()).unwrap_err();
        match err {
            CoreError::Singular { null_direction, .. } => assert_eq!(null_direction, "phase"),
            other => panic!("expected the phase singularity, got {other}"),
        }
    }

    #[test]
    fn common_scale_moves_amplitude_not_phase() {
        let sys = system();
        let line = LineParams::new(34e6, 0.0, 0.08).unwrap();
        let obs = synth_series(&sys, 9e6, &line, &[0.0, 2.2e-6]);
        let scaled = SeriesObservation::new(
            obs.images()
                .iter()
                .map(|img| {
                    let s = img.signal().iter().map(|v| 3.0 * v).collect();
                    Interferogram::new(
                        *img.grid(),
                        s,
                        img.detuning(),
                        img.defocus_object(),
                        0.0,
                    )
                    .unwrap()
                })
                .collect(),
            0.0,
        )
        .unwrap();
        let f1 = fit_series(&obs, &sys, &FitOptions::default()).unwrap();
        let f2 = fit_series(&scaled, &sys, &FitOptions::default()).unwrap();
        assert!((f2.amplitude / f1.amplitude - 3.0).abs() < 1e-6);
        assert!((f2.phase - f1.phase).abs() < 1e-8);
    }

    #[test]
    fn recovers_transverse_offset() {
        let sys = system();
        let line = LineParams::new(34e6, 0.0, 0.1).unwrap();
        let resp = ScatterResponse::at(-5e6, &line);
        // Shift the scatterer by moving the grid the other way.
        let dx = 3.4e-6 / 64.0;
        let shifted_grid = Grid::new(64, dx, (-2.0 * dx, 1.5 * dx)).unwrap();
        let images: Vec<_> = [0.0, 1.7e-6, 3.3e-6]
            .iter()
            .map(|z| interferogram(&resp, &sys, *z, &shifted_grid).unwrap())
            .collect();
        let obs = SeriesObservation::new(images, 0.0).unwrap();
        let fit = fit_series(&obs, &sys, &FitOptions::default()).unwrap();
        // Pattern centre sits on the optic axis: zero in absolute
        // coordinates, which the fit reports relative to the axis too.
        assert!(fit.shared.center_offset.0.abs() < 2e-9);
        assert!(fit.shared.center_offset.1.abs() < 2e-9);
        assert!((fit.phase - resp.phase).abs() < 5e-3);
    }

    #[test]
    fn noisy_fit_stays_within_three_sigma() {
        let sys = system();
        let line = LineParams::new(34e6, 0.0, 0.1).unwrap();
        let truth = ScatterResponse::at(-13e6, &line);
        let clean = synth_series(&sys, -13e6, &line, &[0.0, 1.7e-6, 3.3e-6]);
        let sigma = 0.2 * clean.images()[0].max_abs_signal();
        let noisy = SeriesObservation::new(
            clean
                .images()
                .iter()
                .enumerate()
                .map(|(i, img)| inject_noise(img, sigma, 100 + i as u64).unwrap())
                .collect(),
            sigma,
        )
        .unwrap();
        let fit = fit_series(&noisy, &sys, &FitOptions::default()).unwrap();
        assert!(
            (fit.phase - truth.phase).abs() < 3.0 * fit.phase_sigma,
            "phase off by {:.3e} with sigma {:.3e}",
            (fit.phase - truth.phase).abs(),
            fit.phase_sigma
        );
    }
}
