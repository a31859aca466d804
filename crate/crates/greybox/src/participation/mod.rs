//! Participation factors from whole-system residues, the grey-box layers,
//! the chain rule down to parameters and states, and the finite-difference
//! validators for every prediction.

mod chain;
mod report;
mod verify;

pub use chain::{parameter_participation, state_participation_via_chain};
pub use report::{LayerReport, Layer2Entry, ModeEntry, ParameterEntry};
pub use verify::{verify_lemma_fd, LemmaConvergence};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::ParticipationError;
use crate::lti::{frobenius_inner, frobenius_norm};
use crate::system::WholeSystemModel;

/// Impedance participation factor of one apparatus in one mode:
/// `p = -(Res_lambda Y_kk)^*`, the gradient of the eigenvalue with respect to
/// that apparatus impedance.
#[derive(Debug, Clone)]
pub struct ImpedanceParticipation {
    pub mode_index: usize,
    pub lambda: Complex64,
    pub node: usize,
    pub p: DMatrix<Complex64>,
}

fn check_mode(model: &WholeSystemModel, mode: usize) -> Result<(), ParticipationError> {
    if mode >= model.modes().len() {
        return Err(ParticipationError::ModeOutOfRange {
            index: mode,
            count: model.modes().len(),
        });
    }
    Ok(())
}

/// `p_{lambda, Z_k}`: minus the conjugate transpose of the residue of the
/// whole-system admittance block at `node`.
pub fn impedance_participation(
    model: &WholeSystemModel,
    node: usize,
    mode: usize,
) -> Result<ImpedanceParticipation, ParticipationError> {
    check_mode(model, mode)?;
    let residue = model.admittance_residue(node, mode)?;
    Ok(ImpedanceParticipation {
        mode_index: mode,
        lambda: model.modes().value(mode),
        node,
        p: -residue.adjoint(),
    })
}

/// `p_{lambda, Y_k}`: the admittance dual, built from the whole-system
/// impedance block residue.
pub fn admittance_participation(
    model: &WholeSystemModel,
    node: usize,
    mode: usize,
) -> Result<ImpedanceParticipation, ParticipationError> {
    check_mode(model, mode)?;
    let residue = model.impedance_residue(node, mode)?;
    Ok(ImpedanceParticipation {
        mode_index: mode,
        lambda: model.modes().value(mode),
        node,
        p: -residue.adjoint(),
    })
}

/// First-order eigenvalue shift under an impedance perturbation evaluated at
/// the mode: `dlambda = <p, dZ>`.
pub fn predict_eigenvalue_shift(
    pf: &ImpedanceParticipation,
    dz: &DMatrix<Complex64>,
) -> Result<Complex64, ParticipationError> {
    let shift = frobenius_inner(&pf.p, dz)?;
    // Definition-level identity: <p, dZ> = -trace(Res * dZ).
    debug_assert!({
        let trace = (-pf.p.adjoint() * dz).trace();
        (shift + trace).norm() <= 1e-12 * (1.0 + shift.norm())
    });
    Ok(shift)
}

/// Layer-1 index: `|p| * |Z_k(lambda)|`, the eigenvalue-shift bound per unit
/// relative impedance perturbation.
pub fn layer1_index(pf: &ImpedanceParticipation, z_at_mode: &DMatrix<Complex64>) -> f64 {
    frobenius_norm(&pf.p) * frobenius_norm(z_at_mode)
}

/// Layer-2 index: `<p, Z_k(lambda)>`. A positive real part means growing the
/// impedance (scaling the apparatus down) pushes the mode right, so scaling
/// the apparatus up damps it.
pub fn layer2_index(
    pf: &ImpedanceParticipation,
    z_at_mode: &DMatrix<Complex64>,
) -> Result<Complex64, ParticipationError> {
    Ok(frobenius_inner(&pf.p, z_at_mode)?)
}

#[cfg(test)]
mod tests;

/// Participation factor from a rational model identified from spectra (the
/// black-box route): `-(Res_lambda)^*` of the fitted admittance block.
pub fn participation_from_rational(
    model: &crate::lti::PoleResidueForm,
    lambda: crate::lti::ComplexFrequency,
) -> Result<DMatrix<Complex64>, ParticipationError> {
    let residue = model.residue_at(lambda).map_err(ParticipationError::Lti)?;
    Ok(-residue.adjoint())
}
