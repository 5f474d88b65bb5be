//! Models, oracles and fitting procedures for DEER-based sensing of
//! depolarizing dark-spin baths with near-surface NV centers.

pub mod bathavg;
pub mod curve;
pub mod error;
pub mod fitting;
pub mod kernels;
pub mod lindblad;
pub mod nn;
pub mod nucleation;
pub mod physics;
pub mod quad;
pub mod sensitivity;
pub mod spectra;

pub use curve::DecayCurve;
pub use error::{Error, Result};
