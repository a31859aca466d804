//! Network description and the nodal admittance machinery in the synchronous
//! dq frame.
//!
//! Stationary-frame phasor elements enter the dq frame through the shift
//! `Z(s) -> Z(s + j*omega0)`, realized per entry as the 2x2 embedding
//! `[[a, -b], [b, a]]` of a complex value `a + jb`.

mod description;
mod nodal;

pub use description::{Branch, NetworkDescription, Shunt};
pub use nodal::{build_network_impedance, build_nodal_admittance, NodalAdmittance};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Real dq embedding of a complex-entry matrix: entry `a + jb` becomes the
/// 2x2 block `[[a, -b], [b, a]]`, with d/q channels interleaved per index.
pub(crate) fn embed_complex(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut out = DMatrix::zeros(2 * rows, 2 * cols);
    for i in 0..rows {
        for j in 0..cols {
            let z = m[(i, j)];
            out[(2 * i, 2 * j)] = z.re;
            out[(2 * i, 2 * j + 1)] = -z.im;
            out[(2 * i + 1, 2 * j)] = z.im;
            out[(2 * i + 1, 2 * j + 1)] = z.re;
        }
    }
    out
}
