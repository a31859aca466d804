//! Eigendecomposition with left and right eigenvectors and the classic
//! state participation matrix.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use super::to_complex;
use crate::error::LtiError;

/// Relative eigenvalue distinctness threshold (times the Frobenius norm of A).
pub const DISTINCTNESS_RTOL: f64 = 1e-8;

/// Eigenvalues with right eigenvectors (columns of `right`) and left
/// eigenvectors (rows of `left`), normalized so that `left * right = I`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    values: Vec<Complex64>,
    right: DMatrix<Complex64>,
    left: DMatrix<Complex64>,
    partner: Vec<usize>,
    a_norm: f64,
}

/// Deterministic mode ordering: imaginary part descending, then real part
/// ascending. Conjugate pairs land symmetrically around the real modes.
pub(crate) fn canonical_sort(values: &mut [Complex64]) {
    values.sort_by(|a, b| b.im.total_cmp(&a.im).then(a.re.total_cmp(&b.re)));
}

/// Decompose a real square matrix with distinct eigenvalues.
///
/// Eigenvalues are obtained from the real Schur form; eigenvectors by inverse
/// iteration. Conjugate pairs share exactly conjugate eigenvectors, and left
/// eigenvectors come from inverting the right-eigenvector matrix so that
/// `left * right = I` holds to solve precision.
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<EigenSystem, LtiError> {
    if !a.is_square() {
        return Err(LtiError::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let n = a.nrows();
    let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0 {
        return Ok(EigenSystem {
            values: vec![],
            right: DMatrix::zeros(0, 0),
            left: DMatrix::zeros(0, 0),
            partner: vec![],
            a_norm,
        });
    }

    let mut values: Vec<Complex64> = a.complex_eigenvalues().iter().cloned().collect();
    canonical_sort(&mut values);

    // Distinctness gate: clustered eigenvalues make residues meaningless.
    let threshold = DISTINCTNESS_RTOL * a_norm;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (values[i] - values[j]).norm();
            if gap <= threshold {
                return Err(LtiError::DegenerateSpectrum {
                    first: values[i],
                    second: values[j],
                    gap,
                    threshold,
                });
            }
        }
    }

    let partner = conjugate_partners(&values);

    let a_c = to_complex(a);
    let mut right = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        if partner[i] < i {
            // Mirror of an already computed conjugate partner.
            let src = right.column(partner[i]).map(|z| z.conj());
            right.set_column(i, &src);
            continue;
        }
        let v = eigenvector_by_inverse_iteration(&a_c, values[i], a_norm)?;
        right.set_column(i, &v);
    }

    let left = right
        .clone()
        .try_inverse()
        .ok_or(LtiError::SingularEigenbasis)?;

    let es = EigenSystem {
        values,
        right,
        left,
        partner,
        a_norm,
    };
    es.validate(a)?;
    Ok(es)
}

fn conjugate_partners(values: &[Complex64]) -> Vec<usize> {
    let n = values.len();
    let mut partner: Vec<usize> = (0..n).collect();
    for i in 0..n {
        if values[i].im == 0.0 {
            continue;
        }
        let target = values[i].conj();
        let tol = 1e-12 * (1.0 + values[i].norm());
        if let Some(j) = (0..n).find(|&j| j != i && (values[j] - target).norm() <= tol) {
            partner[i] = j;
        }
    }
    partner
}

fn eigenvector_by_inverse_iteration(
    a_c: &DMatrix<Complex64>,
    lambda: Complex64,
    a_norm: f64,
) -> Result<DVector<Complex64>, LtiError> {
    let n = a_c.nrows();
    let scale = a_norm.max(lambda.norm()).max(1.0);
    let mut shift_mag = 1e-13 * scale;
    // A deterministic start vector with spread phases; the inverse power step
    // amplifies the target direction by ~1/shift regardless of the overlap.
    let mut v = DVector::from_fn(n, |i, _| {
        Complex64::from_polar(1.0 + 0.1 * ((i % 7) as f64), 0.9 * i as f64 + 0.3)
    });
    v /= Complex64::new(v.norm(), 0.0);

    for _attempt in 0..3 {
        let shift = lambda + Complex64::new(1.0, 0.5).scale(shift_mag);
        let mut m = a_c.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let lu = m.full_piv_lu();
        let mut ok = true;
        for _iter in 0..4 {
            match lu.solve(&v) {
                Some(w) => {
                    let norm = w.norm();
                    if !norm.is_finite() || norm == 0.0 {
                        ok = false;
                        break;
                    }
                    v = w / Complex64::new(norm, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
            let residual = (a_c * &v - &v * lambda).norm();
            if residual <= 1e-13 * scale {
                break;
            }
        }
        if ok {
            let residual = (a_c * &v - &v * lambda).norm();
            if residual <= 1e-9 * scale {
                return Ok(fix_phase(v));
            }
        }
        // Singular factorization or poor convergence: back the shift off.
        shift_mag *= 100.0;
    }
    Err(LtiError::SolveFailed(format!(
        "inverse iteration failed to converge for eigenvalue {lambda}"
    )))
}

/// Deterministic phase: rotate so the entry of largest modulus is real
/// positive (first index wins ties).
fn fix_phase(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let mut imax = 0;
    let mut best = 0.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best + 1e-15 {
            best = m;
            imax = i;
        }
    }
    if best > 0.0 {
        let rot = v[imax].conj() / Complex64::new(best, 0.0);
        v *= rot;
    }
    v
}

impl EigenSystem {
    fn validate(&self, a: &DMatrix<f64>) -> Result<(), LtiError> {
        let n = self.values.len();
        let prod = &self.left * &self.right;
        let mut resid = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::default()
                };
                resid += (prod[(i, j)] - expect).norm_sqr();
            }
        }
        let resid = resid.sqrt();
        let bound = 1e-9 * n as f64;
        if resid > bound {
            return Err(LtiError::EigenValidation {
                what: "left*right - I".into(),
                residual: resid,
                bound,
            });
        }

        let a_c = to_complex(a);
        let mut diag = &self.left * (&a_c * &self.right);
        for i in 0..n {
            diag[(i, i)] -= self.values[i];
        }
        let resid = diag.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let bound = 1e-8 * self.a_norm.max(f64::MIN_POSITIVE);
        if resid > bound {
            return Err(LtiError::EigenValidation {
                what: "left*A*right - Lambda".into(),
                residual: resid,
                bound,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, n: usize) -> Complex64 {
        self.values[n]
    }

    /// Right-eigenvector matrix (eigenvectors as columns).
    pub fn right(&self) -> &DMatrix<Complex64> {
        &self.right
    }

    /// Left-eigenvector matrix (eigenvectors as rows), the inverse of
    /// [`EigenSystem::right`].
    pub fn left(&self) -> &DMatrix<Complex64> {
        &self.left
    }

    pub fn right_vector(&self, n: usize) -> DVector<Complex64> {
        self.right.column(n).into_owned()
    }

    pub fn left_vector(&self, n: usize) -> RowDVector<Complex64> {
        self.left.row(n).into_owned()
    }

    /// Index of the conjugate mode, or `n` itself for real modes.
    pub fn partner_of(&self, n: usize) -> usize {
        self.partner[n]
    }

    /// `P[m][n] = psi_nm * phi_mn`: the participation of state `m` in mode
    /// `n`. Every column sums to one, and `P[m][n]` equals the sensitivity of
    /// eigenvalue `n` to the diagonal state-matrix entry `a_mm`.
    pub fn state_participation_matrix(&self) -> DMatrix<Complex64> {
        let n = self.values.len();
        DMatrix::from_fn(n, n, |m, k| self.right[(m, k)] * self.left[(k, m)])
    }
}
