//! Damped Newton solve of `f(x, v0) = 0` for the apparatus equilibrium.

use nalgebra::{DMatrix, DVector};

use super::ApparatusDynamics;
use crate::error::ApparatusError;

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_ITER: usize = 50;

/// Solve the equilibrium state at terminal voltage `v0`, starting from the
/// model's initial guess. Deterministic for identical inputs.
pub fn find_equilibrium(
    model: &dyn ApparatusDynamics,
    v0: &DVector<f64>,
) -> Result<DVector<f64>, ApparatusError> {
    let x0 = model.initial_guess(v0)?;
    newton_refine(model, x0, v0)
}

/// Newton iterations from an explicit starting state (used to warm-start the
/// re-solve under a perturbed parameter).
pub fn newton_refine(
    model: &dyn ApparatusDynamics,
    mut x: DVector<f64>,
    v0: &DVector<f64>,
) -> Result<DVector<f64>, ApparatusError> {
    let n = model.state_count();
    if n == 0 {
        return Ok(x);
    }
    let mut history = Vec::new();
    let mut fx = model.derivatives(&x, v0);
    let mut res = fx.norm();
    history.push(res);
    for _iter in 0..MAX_ITER {
        if res <= RESIDUAL_TOL {
            return Ok(x);
        }
        let jac = jacobian_x(model, &x, v0);
        let step = jac
            .full_piv_lu()
            .solve(&fx)
            .ok_or_else(|| ApparatusError::EquilibriumDiverged {
                kind: model.kind().into(),
                iterations: history.len(),
                history: history.clone(),
            })?;
        // Backtracking line search on the residual norm.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = &x - &step * alpha;
            let ftrial = model.derivatives(&trial, v0);
            let rtrial = ftrial.norm();
            if rtrial.is_finite() && (rtrial < res || rtrial <= RESIDUAL_TOL) {
                x = trial;
                fx = ftrial;
                res = rtrial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        history.push(res);
        if !accepted {
            break;
        }
    }
    if res <= RESIDUAL_TOL {
        Ok(x)
    } else {
        Err(ApparatusError::EquilibriumDiverged {
            kind: model.kind().into(),
            iterations: history.len(),
            history,
        })
    }
}

/// Central-difference Jacobian of `f` with respect to the state.
pub(crate) fn jacobian_x(
    model: &dyn ApparatusDynamics,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = 1e-7 * (1.0 + x[k].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let fp = model.derivatives(&xp, v);
        let fm = model.derivatives(&xm, v);
        for r in 0..n {
            jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}
