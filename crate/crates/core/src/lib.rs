//! Multiple-harmonic envelope approximations for semilinear Friedrichs
//! systems with a highly oscillatory carrier wave.
//!
//! The crate integrates the coefficient system of the ansatz
//! `u ≈ Σ_{j odd, |j| ≤ m} e^{ij(κ·x - ωt)/ε} u_j`, measures the error
//! against a higher-order reference and probes the ε-scaling of the
//! quantities that control it.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod spectra;

pub use error::{Error, Result};
pub use grid::{Field, Space, SpectralGrid, Transform};
pub use model::{
    gaussian_profile, klein_gordon_1d, model_by_name, validate_model, zero_branch_model, DotCubic, EnvelopeProfile,
    FriedrichsModel, Nonlinearity, ValidationReport, ZeroNonlinearity,
};
pub use solver::{init_state, EnvelopeState, LinearPropagator, Schedule, StrangIntegrator};
pub use spectra::{check_nonresonance, select_carrier, CarrierRule, CarrierWave, EigenSystem, NonresonanceLevel};
