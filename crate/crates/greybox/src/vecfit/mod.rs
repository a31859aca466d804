//! Rational approximation of sampled matrix spectra: iterative relaxed
//! pole relocation with a shared pole set across all matrix elements,
//! followed by linear residue identification.
//!
//! The basis uses real coefficients with explicit conjugate-pair columns, so
//! fitting on the imaginary axis yields exact conjugate closure of poles and
//! residues by construction.

mod fit;
mod quality;

pub use fit::{vector_fit, FitConfig, FitResult, Weighting};
pub use quality::{fit_quality, order_sweep, BandQuality, QualityReport, SweepReport};
