use std::f64::consts::FRAC_PI_2;

use crate::error::{CoreError, Result};

use super::lm::{minimize, spd_inverse, LmOptions};

/// One phase measurement: detuning (Hz), phase (rad) and its 1-sigma
/// uncertainty (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub detuning: f64,
    pub phase: f64,
    pub sigma: f64,
}

/// Line parameters recovered from the phase-versus-detuning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCurveFit {
    /// Linewidth (FWHM), Hz.
    pub gamma: f64,
    /// Resonance offset, Hz.
    pub delta0: f64,
    pub gamma_sigma: f64,
    pub delta0_sigma: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub chi2: f64,
}

fn model(delta: f64, gamma: f64, delta0: f64) -> f64 {
    ((delta - delta0) / gamma).atan() + FRAC_PI_2
}

/// Weighted least squares of `phi(delta) = atan((delta - delta0)/gamma) + pi/2`
/// over `(gamma, delta0)`.
///
/// The linewidth is fitted on a log scale so it stays positive; the
/// reported uncertainties come from the curvature of the weighted cost at
/// the optimum with the supplied sigmas taken at face value.
pub fn fit_phase_curve(points: &[PhasePoint]) -> Result<PhaseCurveFit> {
    let mut distinct: Vec<f64> = Vec::new();
    for p in points {
        if !p.detuning.is_finite() || !p.phase.is_finite() {
            return Err(CoreError::Observation("non-finite phase point".into()));
        }
        if !(p.sigma > 0.0) || !p.sigma.is_finite() {
            return Err(CoreError::Observation(format!(
                "phase uncertainties must be positive, got {}",
                p.sigma
            )));
        }
        if !distinct.iter().any(|d| *d == p.detuning) {
            distinct.push(p.detuning);
        }
    }
    if distinct.len() < 2 {
        return Err(CoreError::Singular {
            null_direction: "gamma and delta0 jointly".into(),
            detail: "all detunings are equal; the phase curve has no detuning lever arm".into(),
        });
    }
    if points.len() < 3 {
        return Err(CoreError::Observation(format!(
            "need at least 3 phase points, got {}",
            points.len()
        )));
    }

    let lo = distinct.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = distinct.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e6);

    // Resonance guess: the detuning whose phase sits closest to pi/2.
    let delta0_init = points
        .iter()
        .min_by(|a, b| {
            (a.phase - FRAC_PI_2)
                .abs()
                .total_cmp(&(b.phase - FRAC_PI_2).abs())
        })
        .map(|p| p.detuning)
        .unwrap_or(0.0);

    // Linewidth guess: coarse scan, smallest weighted cost wins.
    let cost_at = |gamma: f64, delta0: f64| -> f64 {
        points
            .iter()
            .map(|p| {
                let r = (model(p.detuning, gamma, delta0) - p.phase) / p.sigma;
                r * r
            })
            .sum()
    };
    let gamma_init = [0.05, 0.15, 0.4, 1.0, 2.5]
        .iter()
        .map(|f| f * span)
        .min_by(|a, b| cost_at(*a, delta0_init).total_cmp(&cost_at(*b, delta0_init)))
        .unwrap();

    let x0 = [gamma_init.ln(), delta0_init];
    let opts = LmOptions::new(vec![1.0, span / 4.0]);
    let mut residuals = |x: &[f64], out: &mut Vec<f64>| -> Result<()> {
        out.clear();
        let gamma = x[0].exp();
        for p in points {
            out.push((model(p.detuning, gamma, x[1]) - p.phase) / p.sigma);
        }
        Ok(())
    };
    let outcome = minimize(&mut residuals, &x0, &opts)?;
    if !outcome.converged {
        return Err(CoreError::NonConvergence {
            iterations: outcome.iterations,
            residual_rms: (outcome.cost / points.len() as f64).sqrt(),
            trace: outcome.trace,
        });
    }

    let gamma = outcome.params[0].exp();
    let delta0 = outcome.params[1];
    // Residuals are already sigma-weighted, so the parameter covariance is
    // the plain curvature inverse, with the log-gamma axis mapped back by
    // the chain rule.
    let cov = spd_inverse(&outcome.jtj, 2).ok_or_else(|| CoreError::Singular {
        null_direction: "gamma".into(),
        detail: "curvature of the phase-curve fit is singular at the optimum".into(),
    })?;
    let gamma_sigma = gamma * cov[0].max(0.0).sqrt();
    let delta0_sigma = cov[3].max(0.0).sqrt();

    Ok(PhaseCurveFit {
        gamma,
        delta0,
        gamma_sigma,
        delta0_sigma,
        chi2: outcome.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::{scatter_phase, LineParams};

    const SWEEP_MHZ: [f64; 9] = [-30.0, -20.0, -13.0, -5.0, 0.0, 5.0, 9.0, 15.0, 25.0];

    fn noiseless_points(gamma: f64, delta0: f64, sigma: f64) -> Vec<PhasePoint> {
        let line = LineParams::new(gamma, delta0, 1.0).unwrap();
        SWEEP_MHZ
            .iter()
            .map(|mhz| PhasePoint {
                detuning: mhz * 1e6,
                phase: scatter_phase(mhz * 1e6, &line),
                sigma,
            })
            .collect()
    }

    #[test]
    fn noiseless_closed_loop() {
        let points = noiseless_points(34e6, 5e6, 0.01);
        let fit = fit_phase_curve(&points).unwrap();
        assert!(
            (fit.gamma - 34e6).abs() < 0.1e6,
            "gamma {:.4} MHz",
            fit.gamma / 1e6
        );
        assert!(
            (fit.delta0 - 5e6).abs() < 0.05e6,
            "delta0 {:.4} MHz",
            fit.delta0 / 1e6
        );
        assert!(fit.chi2 < 1e-12);
    }

    #[test]
    fn uncertainty_scale_matches_noise() {
        // With 0.1 rad uncertainties on a 9-point sweep the fitted errors
        // come out at the few-MHz scale.
        let points = noiseless_points(34e6, 5e6, 0.1);
        let fit = fit_phase_curve(&points).unwrap();
        assert!(
            fit.gamma_sigma > 1e6 && fit.gamma_sigma < 20e6,
            "gamma sigma {:.2} MHz",
            fit.gamma_sigma / 1e6
        );
        assert!(
            fit.delta0_sigma > 0.3e6 && fit.delta0_sigma < 8e6,
            "delta0 sigma {:.2} MHz",
            fit.delta0_sigma / 1e6
        );
    }

    #[test]
    fn equal_detunings_are_rank_deficient() {
        let p = PhasePoint {
            detuning: 1e6,
            phase: 1.5,
            sigma: 0.1,
        };
        let err = fit_phase_curve(&[p, p]).unwrap_err();
        assert!(matches!(err, CoreError::Singular { .. }), "{err}");
        let err3 = fit_phase_curve(&[p, p, p]).unwrap_err();
        assert!(matches!(err3, CoreError::Singular { .. }), "{err3}");
    }

    #[test]
    fn too_few_points_rejected() {
        let points = noiseless_points(34e6, 0.0, 0.1);
        let err = fit_phase_curve(&points[..2]).unwrap_err();
        assert!(matches!(err, CoreError::Observation(_)), "{err}");
        assert!(fit_phase_curve(&points[..3]).is_ok());
    }

    #[test]
    fn bad_sigmas_rejected() {
        let mut points = noiseless_points(34e6, 0.0, 0.1);
        points[4].sigma = 0.0;
        assert!(fit_phase_curve(&points).is_err());
    }
}
