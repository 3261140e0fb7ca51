//! Inverse problem: recovering scattered-wave parameters from
//! interferogram series and line parameters from the phase curve.
//!
//! Model derivatives everywhere are forward finite differences of the
//! forward model; no analytic Jacobians are implemented, so the usual
//! analytic-versus-numeric derivative cross-check is vacuous by
//! construction.

mod lm;
mod noise;
mod phase_curve;
mod series;

pub use noise::inject_noise;
pub use phase_curve::{fit_phase_curve, PhaseCurveFit, PhasePoint};
pub use series::{
    fit_series, Convergence, Covariance, FitOptions, SeriesFit, SeriesObservation, SharedParams,
};
