//! Sideband cooling of a low-frequency oscillator through a lossy
//! high-frequency partner.
//!
//! The crate evaluates closed-form steady states, integrates the moment
//! (rate) equations and their stochastic c-number counterpart, and checks
//! both against a truncated-Fock-space Lindblad solver. Exact small-ensemble
//! simulations test the collective-excitation (bosonic) description, and the
//! driven generalized coupling is reduced to the two-oscillator model by
//! mean-field linearization.
//!
//! Analytic modules are generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`.

pub mod atomic;
pub mod closed_form;
pub mod config_file;
pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod linearization;
pub mod model;
pub mod ode;
pub mod rate;
pub mod scalar;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SystemConfig = model::SystemConfig<f64>;
pub type SystemConfigF32 = model::SystemConfig<f32>;
pub type ModeParams = model::ModeParams<f64>;
pub type DriveParams = model::DriveParams<f64>;
pub type CouplingKind = model::CouplingKind<f64>;
pub type MomentState = rate::MomentState<f64>;
pub type Trajectory = rate::Trajectory<f64>;
pub type FSpec = linearization::FSpec<f64>;
pub type LinearizedModel = linearization::LinearizedModel<f64>;
pub type SteadyStateReport = closed_form::SteadyStateReport<f64>;
pub type Complex64 = num_complex::Complex<f64>;

pub use model::UnitSystem;
