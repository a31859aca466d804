//! Central finite-difference linearization of apparatus dynamics around an
//! equilibrium, producing the admittance-oriented realization.

use nalgebra::{DMatrix, DVector};

use super::ApparatusDynamics;
use crate::error::ApparatusError;
use crate::lti::StateSpaceForm;

const FD_STEP: f64 = 1e-7;

fn step_for(value: f64) -> f64 {
    FD_STEP * (1.0 + value.abs())
}

/// Jacobians of `f` and `g` by central differences with step
/// `1e-7 (1 + |value|)`. Input is the terminal voltage perturbation, output
/// the current perturbation into the apparatus.
pub fn linearize_admittance(
    model: &dyn ApparatusDynamics,
    x0: &DVector<f64>,
    v0: &DVector<f64>,
) -> Result<StateSpaceForm, ApparatusError> {
    let n = model.state_count();
    let nv = v0.len();
    let i0 = model.output_current(x0, v0);
    let q = i0.len();

    let mut a = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(q, n);
    for k in 0..n {
        let h = step_for(x0[k]);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[k] += h;
        xm[k] -= h;
        let fp = model.derivatives(&xp, v0);
        let fm = model.derivatives(&xm, v0);
        let gp = model.output_current(&xp, v0);
        let gm = model.output_current(&xm, v0);
        for r in 0..n {
            a[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
        for r in 0..q {
            c[(r, k)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }

    let mut b = DMatrix::zeros(n, nv);
    let mut d = DMatrix::zeros(q, nv);
    for k in 0..nv {
        let h = step_for(v0[k]);
        let mut vp = v0.clone();
        let mut vm = v0.clone();
        vp[k] += h;
        vm[k] -= h;
        let fp = model.derivatives(x0, &vp);
        let fm = model.derivatives(x0, &vm);
        let gp = model.output_current(x0, &vp);
        let gm = model.output_current(x0, &vm);
        for r in 0..n {
            b[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
        for r in 0..q {
            d[(r, k)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }

    Ok(StateSpaceForm::new(a, b, c, d)?)
}
