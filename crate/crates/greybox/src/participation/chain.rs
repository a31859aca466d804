//! The chain rule: impedance participation propagated to internal parameters
//! and to individual apparatus states.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::ImpedanceParticipation;
use crate::apparatus::{invert_small, ImpedanceSensitivity};
use crate::error::{LtiError, ParticipationError};
use crate::lti::frobenius_inner;
use crate::system::WholeSystemModel;

/// `p_{lambda, rho} = <p_{lambda,Z_k}, dZ_k(lambda)/drho>`, so that
/// `dlambda ~= p_{lambda,rho} * drho`.
pub fn parameter_participation(
    pf: &ImpedanceParticipation,
    sensitivity: &ImpedanceSensitivity,
) -> Result<Complex64, ParticipationError> {
    Ok(frobenius_inner(&pf.p, &sensitivity.matrix)?)
}

/// State participation of apparatus-local state `local` (at `node`) in mode
/// `mode`, computed through the impedance chain: the diagonal entry `a_mm` of
/// the apparatus state matrix is treated as a virtual parameter and
/// `dZ_k(lambda)/da_mm` is formed by a central difference on the linearized
/// model (no re-equilibration: the perturbation acts on the state equation
/// itself).
pub fn state_participation_via_chain(
    model: &WholeSystemModel,
    node: usize,
    mode: usize,
    local: usize,
) -> Result<Complex64, ParticipationError> {
    let terminal = model.terminal(node)?;
    let adm = terminal.admittance();
    let n = adm.order();
    if local >= n {
        return Err(ParticipationError::StateOutOfRange {
            index: local,
            node,
            count: n,
        });
    }
    let lambda = model.modes().value(mode);
    let a_mm = adm.a()[(local, local)];
    let h = 1e-5 * (1.0 + a_mm.abs());

    // Central difference on the admittance, organized through the resolvent
    // identity so the difference is formed without subtractive cancellation:
    //   Y(+h) - Y(-h) = 2h (C R+ e_m)(e_m^T R- B),
    // with R+- the resolvents of the perturbed state matrices at the mode.
    let resolvent = |delta: f64| -> Result<DMatrix<Complex64>, ParticipationError> {
        let mut m = crate::lti::to_complex(adm.a()).map(|x| -x);
        m[(local, local)] -= Complex64::new(delta, 0.0);
        for i in 0..n {
            m[(i, i)] += lambda;
        }
        invert_small(&m).ok_or_else(|| {
            ParticipationError::Lti(LtiError::SolveFailed(format!(
                "resolvent singular at {lambda}"
            )))
        })
    };
    let r_plus = resolvent(h)?;
    let r_minus = resolvent(-h)?;
    let b = crate::lti::to_complex(adm.b());
    let c = crate::lti::to_complex(adm.c());
    let col = &c * r_plus.column(local).into_owned();
    let row = r_minus.row(local).into_owned() * &b;
    let sens_y = col * row;

    let y_at = |delta: f64| -> Result<DMatrix<Complex64>, ParticipationError> {
        let mut a = adm.a().clone();
        a[(local, local)] += delta;
        let shifted = crate::lti::StateSpaceForm::new(
            a,
            adm.b().clone(),
            adm.c().clone(),
            adm.d().clone(),
        )
        .map_err(ParticipationError::Lti)?;
        shifted.eval_c(lambda).map_err(ParticipationError::Lti)
    };
    let invert = |m: DMatrix<Complex64>| -> Result<DMatrix<Complex64>, ParticipationError> {
        invert_small(&m).ok_or_else(|| {
            ParticipationError::Lti(LtiError::SolveFailed(format!(
                "perturbed terminal admittance singular at {lambda}"
            )))
        })
    };
    let z_plus = invert(y_at(h)?)?;
    let z_minus = invert(y_at(-h)?)?;
    // (Z+ - Z-)/(2h) = -Z+ [(Y+ - Y-)/(2h)] Z-.
    let sens = -(&z_plus * sens_y * &z_minus);

    let pf = super::impedance_participation(model, node, mode)?;
    Ok(frobenius_inner(&pf.p, &sens)?)
}
