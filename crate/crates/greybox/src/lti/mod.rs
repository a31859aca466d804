//! Linear time-invariant building blocks: state-space and pole-residue forms,
//! eigendecomposition with left/right eigenvectors, residue extraction and the
//! Frobenius inner-product algebra used by the participation layer.

mod eigen;
mod spectrum;
mod types;

pub use eigen::{eigen_decompose, EigenSystem, DISTINCTNESS_RTOL};
pub use spectrum::{log_grid_hz, SampledSpectrum};
pub use types::{residue_by_limit, ComplexFrequency, PoleResidueForm, StateSpaceForm};

/// Sort eigenvalues in the canonical mode order (imaginary part descending,
/// then real part ascending).
pub fn canonical_mode_order(values: &mut [num_complex::Complex64]) {
    eigen::canonical_sort(values)
}

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::LtiError;

/// Frobenius inner product `<V, W> = sum conj(V_hl) W_hl`.
///
/// The conjugation sits on the first argument, so `<V, V>` is real and
/// non-negative.
pub fn frobenius_inner(
    v: &DMatrix<Complex64>,
    w: &DMatrix<Complex64>,
) -> Result<Complex64, LtiError> {
    if v.shape() != w.shape() {
        return Err(LtiError::ShapeMismatch {
            expected: format!("{}x{}", v.nrows(), v.ncols()),
            got: format!("{}x{}", w.nrows(), w.ncols()),
        });
    }
    Ok(v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum())
}

/// Frobenius norm induced by [`frobenius_inner`].
pub fn frobenius_norm(v: &DMatrix<Complex64>) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Real matrix lifted to complex entries.
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}
