//! Value types for rational matrix transfer functions.

use nalgebra::DMatrix;
#[cfg(test)]
use nalgebra::DVector;
use num_complex::Complex64;

use super::eigen::eigen_decompose;
use super::{frobenius_norm, to_complex};
use crate::error::LtiError;

/// A point `s = sigma + j*omega` in the complex frequency plane, rad/s.
///
/// Components are guaranteed finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexFrequency(Complex64);

impl ComplexFrequency {
    pub fn new(value: Complex64) -> Result<Self, LtiError> {
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(LtiError::NonFinite {
                context: "complex frequency".into(),
            });
        }
        Ok(Self(value))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self, LtiError> {
        Self::new(Complex64::new(re, im))
    }

    /// Point on the imaginary axis at `omega` rad/s. `omega` must be finite.
    pub fn jomega(omega: f64) -> Self {
        Self::from_parts(0.0, omega).expect("finite angular frequency")
    }

    /// Point on the imaginary axis at `f` Hz.
    pub fn from_hz(f: f64) -> Self {
        Self::jomega(2.0 * std::f64::consts::PI * f)
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }
}

impl From<ComplexFrequency> for Complex64 {
    fn from(s: ComplexFrequency) -> Self {
        s.0
    }
}

impl std::fmt::Display for ComplexFrequency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Real state-space realization `xdot = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceForm {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpaceForm {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        if !a.is_square() {
            return Err(LtiError::ShapeMismatch {
                expected: "square A".into(),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        let n = a.nrows();
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::ShapeMismatch {
                expected: format!(
                    "B: {}xp, C: qx{}, D: {}x{}",
                    n,
                    n,
                    c.nrows(),
                    b.ncols()
                ),
                got: format!(
                    "B: {}x{}, C: {}x{}, D: {}x{}",
                    b.nrows(),
                    b.ncols(),
                    c.nrows(),
                    c.ncols(),
                    d.nrows(),
                    d.ncols()
                ),
            });
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(LtiError::NonFinite {
                    context: format!("state-space matrix {name}"),
                });
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Zero-state system `y = D u`.
    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let (q, p) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, p),
            c: DMatrix::zeros(q, 0),
            d,
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Eigenvalues of A in the canonical mode order.
    pub fn poles(&self) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = self.a.complex_eigenvalues().iter().cloned().collect();
        super::eigen::canonical_sort(&mut v);
        v
    }

    /// Transfer matrix `D + C (sI - A)^{-1} B`.
    pub fn eval(&self, s: ComplexFrequency) -> Result<DMatrix<Complex64>, LtiError> {
        self.eval_c(s.value())
    }

    pub(crate) fn eval_c(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let n = self.order();
        let d = to_complex(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let mut m = to_complex(&self.a).map(|x| -x);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.full_piv_lu();
        // Near-singular (sI - A) means s sits on a pole of the model.
        let udiag: Vec<f64> = (0..n).map(|i| lu.u()[(i, i)].norm()).collect();
        let umax = udiag.iter().cloned().fold(0.0, f64::max);
        let umin = udiag.iter().cloned().fold(f64::INFINITY, f64::min);
        if umax == 0.0 || umin < 1e-14 * umax {
            let (pole, distance) = self
                .poles()
                .into_iter()
                .map(|p| (p, (p - s).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap_or((Complex64::default(), 0.0));
            return Err(LtiError::EvalAtPole { s, pole, distance });
        }
        let x = lu
            .solve(&to_complex(&self.b))
            .ok_or_else(|| LtiError::SolveFailed("(sI - A) X = B".into()))?;
        Ok(d + to_complex(&self.c) * x)
    }

    /// Partial-fraction expansion over the eigenvalues of A.
    ///
    /// Residue matrices come from the eigenvector form `R_n = (C phi_n)(psi_n B)`;
    /// conjugate modes get exactly conjugate residues.
    pub fn to_pole_residue(&self) -> Result<PoleResidueForm, LtiError> {
        let es = eigen_decompose(&self.a)?;
        let n = self.order();
        let bc = to_complex(&self.b);
        let cc = to_complex(&self.c);
        let mut residues: Vec<Option<DMatrix<Complex64>>> = vec![None; n];
        for i in 0..n {
            if residues[i].is_some() {
                continue;
            }
            let phi = es.right_vector(i);
            let psi = es.left_vector(i);
            let col = &cc * phi; // q x 1
            let row = psi * &bc; // 1 x p
            let r = &col * &row;
            let partner = es.partner_of(i);
            if partner != i {
                residues[partner] = Some(r.map(|z| z.conj()));
            }
            residues[i] = Some(r);
        }
        PoleResidueForm::new(
            es.values().to_vec(),
            residues.into_iter().map(|r| r.unwrap()).collect(),
            self.d.clone(),
            DMatrix::zeros(self.n_outputs(), self.n_inputs()),
        )
    }

    /// Residue matrix at `lambda`, which must match a simple pole of the model.
    pub fn residue_at(&self, lambda: ComplexFrequency) -> Result<DMatrix<Complex64>, LtiError> {
        self.to_pole_residue()?.residue_at(lambda)
    }
}

/// Rational matrix in pole-residue form:
/// `G(s) = direct + s*linear + sum_n R_n / (s - lambda_n)`.
#[derive(Debug, Clone)]
pub struct PoleResidueForm {
    poles: Vec<Complex64>,
    residues: Vec<DMatrix<Complex64>>,
    direct: DMatrix<f64>,
    linear: DMatrix<f64>,
}

impl PoleResidueForm {
    pub fn new(
        poles: Vec<Complex64>,
        residues: Vec<DMatrix<Complex64>>,
        direct: DMatrix<f64>,
        linear: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        if poles.len() != residues.len() {
            return Err(LtiError::ShapeMismatch {
                expected: format!("{} residues", poles.len()),
                got: format!("{}", residues.len()),
            });
        }
        let shape = direct.shape();
        if linear.shape() != shape || residues.iter().any(|r| r.shape() != shape) {
            return Err(LtiError::ShapeMismatch {
                expected: format!("{}x{} blocks throughout", shape.0, shape.1),
                got: "inconsistent residue/linear shapes".into(),
            });
        }
        for (i, pole) in poles.iter().enumerate() {
            if !pole.re.is_finite() || !pole.im.is_finite() {
                return Err(LtiError::NonFinite {
                    context: format!("pole {i}"),
                });
            }
        }
        let form = Self {
            poles,
            residues,
            direct,
            linear,
        };
        form.check_conjugate_closure()?;
        Ok(form)
    }

    fn check_conjugate_closure(&self) -> Result<(), LtiError> {
        for (i, pole) in self.poles.iter().enumerate() {
            if pole.im == 0.0 {
                continue;
            }
            let tol = 1e-8 * (1.0 + pole.norm());
            let partner = self
                .poles
                .iter()
                .position(|q| (q - pole.conj()).norm() <= tol);
            let Some(j) = partner else {
                return Err(LtiError::NonFinite {
                    context: format!("pole {pole} has no conjugate partner"),
                });
            };
            let rdiff = frobenius_norm(&(self.residues[j].clone() - self.residues[i].map(|z| z.conj())));
            let rtol = 1e-8 * (1.0 + frobenius_norm(&self.residues[i]));
            if rdiff > rtol {
                return Err(LtiError::NonFinite {
                    context: format!("residues at {pole} and its conjugate are not conjugate"),
                });
            }
        }
        Ok(())
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn residues(&self) -> &[DMatrix<Complex64>] {
        &self.residues
    }

    pub fn direct(&self) -> &DMatrix<f64> {
        &self.direct
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn shape(&self) -> (usize, usize) {
        self.direct.shape()
    }

    pub fn eval(&self, s: ComplexFrequency) -> Result<DMatrix<Complex64>, LtiError> {
        self.eval_c(s.value())
    }

    pub(crate) fn eval_c(&self, s: Complex64) -> Result<DMatrix<Complex64>, LtiError> {
        let guard = 1e-12 * (1.0 + s.norm());
        let mut out = to_complex(&self.direct) + to_complex(&self.linear).map(|z| z * s);
        for (pole, residue) in self.poles.iter().zip(&self.residues) {
            let den = s - pole;
            if den.norm() <= guard {
                return Err(LtiError::EvalAtPole {
                    s,
                    pole: *pole,
                    distance: den.norm(),
                });
            }
            out += residue.map(|z| z / den);
        }
        Ok(out)
    }

    /// Residue matrix at the pole matching `lambda` within `1e-6 (1 + |lambda|)`.
    pub fn residue_at(&self, lambda: ComplexFrequency) -> Result<DMatrix<Complex64>, LtiError> {
        let lambda = lambda.value();
        let tol = 1e-6 * (1.0 + lambda.norm());
        let mut hits: Vec<usize> = Vec::new();
        let mut nearest = (Complex64::default(), f64::INFINITY);
        for (i, pole) in self.poles.iter().enumerate() {
            let d = (pole - lambda).norm();
            if d <= tol {
                hits.push(i);
            }
            if d < nearest.1 {
                nearest = (*pole, d);
            }
        }
        match hits.len() {
            0 => Err(LtiError::NoPoleAt {
                lambda,
                nearest: nearest.0,
                distance: nearest.1,
            }),
            1 => Ok(self.residues[hits[0]].clone()),
            _ => Err(LtiError::DegenerateSpectrum {
                first: self.poles[hits[0]],
                second: self.poles[hits[1]],
                gap: (self.poles[hits[0]] - self.poles[hits[1]]).norm(),
                threshold: tol,
            }),
        }
    }
}

/// Residue by the limit definition `lim_{s->lambda} (s - lambda) G(s)`,
/// approximated a small offset away from the pole. Used as an independent
/// route against the eigenvector formula.
pub fn residue_by_limit<F>(
    eval: F,
    lambda: Complex64,
    offset: f64,
) -> Result<DMatrix<Complex64>, LtiError>
where
    F: Fn(Complex64) -> Result<DMatrix<Complex64>, LtiError>,
{
    // Average over four directions to cancel the leading contribution of the
    // regular part and of neighbouring poles.
    let dirs = [
        Complex64::new(1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut acc: Option<DMatrix<Complex64>> = None;
    for dir in dirs {
        let s = lambda + dir * offset;
        let g = eval(s)?;
        let term = g.map(|z| z * (s - lambda));
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    Ok(acc.unwrap().map(|z| z / 4.0))
}

/// Helper for tests: `x` as a 1x1 complex matrix.
#[cfg(test)]
pub(crate) fn scalar_matrix(x: Complex64) -> DMatrix<Complex64> {
    DMatrix::from_element(1, 1, x)
}
