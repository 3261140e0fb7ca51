use std::f64::consts::FRAC_PI_2;

use crate::error::{CoreError, Result};

/// Line parameters of the weak-field two-level response.
///
/// `gamma` is the full-width-at-half-maximum linewidth of the transition's
/// frequency response and enters the phase law as the plain ratio
/// `(delta - delta0) / gamma`, with no extra factor of two. Textbook
/// conventions differ; this one matches the convention under which the
/// fitted linewidth values in this crate are quoted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    /// Linewidth (FWHM), Hz.
    pub gamma: f64,
    /// Resonance offset from the nominal resonance, Hz.
    pub delta0: f64,
    /// On-resonance scattering amplitude, dimensionless.
    pub a0: f64,
}

impl LineParams {
    pub fn new(gamma: f64, delta0: f64, a0: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(CoreError::Config(format!(
                "linewidth must be positive, got {gamma}"
            )));
        }
        if !delta0.is_finite() {
            return Err(CoreError::Config("resonance offset must be finite".into()));
        }
        if !(a0 >= 0.0) || !a0.is_finite() {
            return Err(CoreError::Config(format!(
                "on-resonance amplitude must be >= 0, got {a0}"
            )));
        }
        Ok(Self { gamma, delta0, a0 })
    }
}

/// Scattered-wave parameters at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterResponse {
    /// Laser detuning from the nominal resonance, Hz (blue positive).
    pub detuning: f64,
    /// Scattering amplitude, dimensionless, >= 0.
    pub amplitude: f64,
    /// Scattered-wave phase, strictly inside (0, pi).
    pub phase: f64,
}

impl ScatterResponse {
    /// Evaluates the line response at the given detuning.
    pub fn at(detuning: f64, line: &LineParams) -> Self {
        Self {
            detuning,
            amplitude: scatter_amplitude(detuning, line),
            phase: scatter_phase(detuning, line),
        }
    }
}

/// Scattered-wave phase `atan((delta - delta0) / gamma) + pi/2`.
///
/// Strictly increasing in the detuning, equal to pi/2 on resonance, and
/// confined to (0, pi): 0 is approached for far red detuning and pi for
/// far blue detuning.
pub fn scatter_phase(delta: f64, line: &LineParams) -> f64 {
    ((delta - line.delta0) / line.gamma).atan() + FRAC_PI_2
}

/// Scattering amplitude `a0 * sin(phase)`, the Lorentzian
/// `a0 * gamma / sqrt(gamma^2 + (delta - delta0)^2)`.
///
/// Computed literally as `a0 * sin(scatter_phase(..))` so the
/// amplitude-phase consistency holds bit for bit. The squared amplitude
/// (the scattering probability) has FWHM `2 * gamma` in this convention.
pub fn scatter_amplitude(delta: f64, line: &LineParams) -> f64 {
    line.a0 * scatter_phase(delta, line).sin()
}

/// The detuning half-width over which the phase spans `total_span`
/// radians symmetrically about resonance: `gamma * tan(total_span / 2)`.
pub fn span_half_width(total_span: f64, gamma: f64) -> f64 {
    gamma * (total_span / 2.0).tan()
}

/// Saturation intensity of the modelled transition, W/cm^2.
pub const SATURATION_INTENSITY_W_CM2: f64 = 600.0;

/// Fraction of the saturation intensity above which the linear-response
/// assumption is flagged.
pub const SATURATION_WARN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SaturationCheck {
    Ok,
    /// The weak-field response model is outside its validity regime.
    Warning(String),
}

/// Polices the weak-field assumption: warns when the illumination
/// intensity reaches 10% of the saturation intensity.
pub fn saturation_guard(intensity_w_cm2: f64) -> Result<SaturationCheck> {
    if !(intensity_w_cm2 >= 0.0) {
        return Err(CoreError::Config(format!(
            "intensity must be >= 0, got {intensity_w_cm2}"
        )));
    }
    let threshold = SATURATION_WARN_FRACTION * SATURATION_INTENSITY_W_CM2;
    if intensity_w_cm2 < threshold {
        Ok(SaturationCheck::Ok)
    } else {
        Ok(SaturationCheck::Warning(format!(
            "illumination intensity {intensity_w_cm2} W/cm^2 is >= {threshold} W/cm^2 \
             (10% of the {SATURATION_INTENSITY_W_CM2} W/cm^2 saturation intensity); \
             the weak-field linear response model is outside its validity regime"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn line(gamma: f64, delta0: f64) -> LineParams {
        LineParams::new(gamma, delta0, 1.0).unwrap()
    }

    #[test]
    fn phase_on_resonance_is_exactly_half_pi() {
        let l = line(34e6, 5e6);
        assert_eq!(scatter_phase(5e6, &l), FRAC_PI_2);
    }

    #[test]
    fn phase_at_one_linewidth() {
        let l = line(34e6, 0.0);
        let hi = scatter_phase(34e6, &l);
        let lo = scatter_phase(-34e6, &l);
        assert!((hi - (FRAC_PI_2 + FRAC_PI_4)).abs() <= 4.0 * f64::EPSILON);
        assert!((lo - FRAC_PI_4).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn phase_example_value() {
        // gamma = 34 MHz, delta = -13 MHz: atan(-13/34) + pi/2 = 1.20562159...
        let l = line(34e6, 0.0);
        let expected = (-13.0f64 / 34.0).atan() + FRAC_PI_2;
        assert!((scatter_phase(-13e6, &l) - expected).abs() < 1e-15);
        assert!((expected - 1.2056).abs() < 1e-4);
    }

    #[test]
    fn phase_symmetry_about_resonance() {
        let l = line(21e6, 3.5e6);
        let mut d = 1.0;
        while d < 1e12 {
            let sum = scatter_phase(l.delta0 + d, &l) + scatter_phase(l.delta0 - d, &l);
            assert!((sum - std::f64::consts::PI).abs() < 1e-12);
            d *= 3.7;
        }
    }

    #[test]
    fn phase_is_monotone_and_confined() {
        let l = line(34e6, 5e6);
        let mut prev = 0.0;
        for k in 0..=4000 {
            let delta = -2e9 + k as f64 * 1e6;
            let p = scatter_phase(delta, &l);
            assert!(p > 0.0 && p < PI);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn amplitude_peak_and_half_width() {
        let l = LineParams::new(34e6, 5e6, 0.7).unwrap();
        assert!((scatter_amplitude(5e6, &l) - 0.7).abs() < 1e-15);
        let at_gamma = scatter_amplitude(5e6 + 34e6, &l);
        assert!((at_gamma - 0.7 / 2f64.sqrt()).abs() < 1e-12);
        // Probability convention: a^2/a0^2 = 0.5 at one linewidth from
        // resonance, so the probability curve has FWHM 2*gamma.
        let p = (at_gamma / 0.7).powi(2);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn amplitude_is_even_and_consistent_with_phase() {
        let l = LineParams::new(20e6, -2e6, 1.3).unwrap();
        for k in 0..200 {
            let d = k as f64 * 0.75e6;
            let plus = scatter_amplitude(l.delta0 + d, &l);
            let minus = scatter_amplitude(l.delta0 - d, &l);
            assert!((plus - minus).abs() <= 1e-15 * plus.abs().max(1.0));
            let via_phase = l.a0 * scatter_phase(l.delta0 + d, &l).sin();
            assert_eq!(plus, via_phase);
        }
    }

    #[test]
    fn span_inversion_matches_closed_form() {
        // A 1.3 rad total span needs a half-width of gamma * tan(0.65).
        let h = span_half_width(1.3, 34e6);
        assert!((h / 34e6 - 0.65f64.tan()).abs() < 1e-15);
        let l = line(34e6, 0.0);
        let span = scatter_phase(h, &l) - scatter_phase(-h, &l);
        assert!((span - 1.3).abs() < 1e-12);
    }

    #[test]
    fn saturation_thresholds() {
        assert_eq!(saturation_guard(0.0).unwrap(), SaturationCheck::Ok);
        assert_eq!(saturation_guard(59.9).unwrap(), SaturationCheck::Ok);
        assert!(matches!(
            saturation_guard(60.1).unwrap(),
            SaturationCheck::Warning(_)
        ));
        assert!(matches!(
            saturation_guard(600.0).unwrap(),
            SaturationCheck::Warning(_)
        ));
        assert!(saturation_guard(-1.0).is_err());
    }
}
