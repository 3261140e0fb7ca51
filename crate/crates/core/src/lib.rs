//! Scalar-wave forward model and estimation pipeline for spatial
//! interferograms of a single pointlike scatterer.
//!
//! The library is organised as a small stack:
//!
//! * [`grid`] / [`field`] — sampled complex scalar fields with physical
//!   pitch, plus validated Gaussian-beam construction.
//! * [`fft`] — unitary 2-D discrete Fourier transforms.
//! * [`propagate`] — Fresnel transfer-function propagation and a slow
//!   direct-summation oracle used for cross-validation.
//! * [`atom`] — weak-field two-level scattering response: phase,
//!   amplitude and scattering probability versus detuning.
//! * [`imaging`] — image formation of the scattered wave through an
//!   apodized, aberrated imaging train, and synthesis of normalised
//!   interferograms against the illumination reference.
//! * [`estimator`] — inverse problem: damped least-squares fits of
//!   interferogram series and of the phase-versus-detuning curve.
//!
//! All operations are pure functions of their inputs; values are
//! immutable once constructed and safe to share between threads.
//! Results are independent of worker-thread count.

pub mod atom;
pub mod error;
pub mod estimator;
pub mod fft;
pub mod field;
pub mod grid;
pub mod imaging;
pub mod propagate;

pub use error::CoreError;
pub use field::Field;
pub use grid::Grid;

/// Convenience alias used throughout the crate.
pub type Complex64 = num_complex::Complex<f64>;
