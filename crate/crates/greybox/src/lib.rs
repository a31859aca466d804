//! Grey-box participation analysis for dq-frame power system models.
//!
//! The crate assembles a whole-system admittance model from apparatus
//! terminal impedances and a nodal network description, extracts modes and
//! residues, and computes impedance, parameter, and state participation
//! factors whose eigenvalue-shift predictions are checkable against
//! finite-difference re-solves. A rational-fitting route recovers the same
//! quantities from sampled spectra when no state-space model is available.

pub mod error;
pub mod lti;
pub mod network;
pub mod apparatus;
pub mod participation;
pub mod system;
pub mod sysfile;
pub mod vecfit;

pub use error::{ApparatusError, ConfigError, FitError, LtiError, NetError, ParticipationError};

// The linear-algebra and complex types appearing in this crate's public API.
pub use nalgebra;
pub use num_complex;
