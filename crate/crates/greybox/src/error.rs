//! Error types shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Errors from the LTI representations and modal machinery.
#[derive(Debug, Error)]
pub enum LtiError {
    #[error("matrix shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("evaluation at s = {s} hits the pole {pole} (distance {distance:.3e})")]
    EvalAtPole {
        s: Complex64,
        pole: Complex64,
        distance: f64,
    },

    #[error(
        "degenerate spectrum: eigenvalues {first} and {second} are separated by \
         {gap:.3e}, below the distinctness threshold {threshold:.3e}; residues at \
         clustered poles cannot be told apart"
    )]
    DegenerateSpectrum {
        first: Complex64,
        second: Complex64,
        gap: f64,
        threshold: f64,
    },

    #[error("{lambda} is not a pole of the model (nearest pole {nearest}, distance {distance:.3e})")]
    NoPoleAt {
        lambda: Complex64,
        nearest: Complex64,
        distance: f64,
    },

    #[error("eigendecomposition failed validation: {what} residual {residual:.3e} exceeds {bound:.3e}")]
    EigenValidation {
        what: String,
        residual: f64,
        bound: f64,
    },

    #[error("eigenvector basis is numerically singular and cannot be inverted")]
    SingularEigenbasis,

    #[error("linear solve failed: {0}")]
    SolveFailed(String),
}

/// Errors from network description handling and whole-system assembly.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network description: {0}")]
    Description(String),

    #[error("node {node} is isolated: it has no branch or shunt connection")]
    IsolatedNode { node: usize },

    #[error(
        "node {node} has no shunt capacitance and no resistive path to a dynamic node; \
         its voltage is undefined in the network realization"
    )]
    SingularAlgebraicNode { node: usize },

    #[error("node index {node} out of range 1..={count}")]
    NodeOutOfRange { node: usize, count: usize },

    #[error(
        "ill-posed interconnection at node {node}: loop feedthrough matrix has \
         condition number {cond:.3e} (limit {limit:.1e})"
    )]
    IllPosed { node: usize, cond: f64, limit: f64 },

    #[error("removing apparatus {node} leaves the driving-point network undefined: {reason}")]
    Topology { node: usize, reason: String },

    #[error(
        "assembled realization disagrees with the admittance formula at s = {s}: \
         relative error {error:.3e} exceeds {bound:.1e}"
    )]
    AssemblyCheck { s: Complex64, error: f64, bound: f64 },

    #[error(transparent)]
    Lti(#[from] LtiError),

    #[error(transparent)]
    Apparatus(#[from] ApparatusError),
}

/// Errors from apparatus models, equilibrium solving and sensitivities.
#[derive(Debug, Error)]
pub enum ApparatusError {
    #[error("unknown apparatus kind `{0}`")]
    UnknownKind(String),

    #[error("apparatus `{kind}`: missing required parameter `{name}`")]
    MissingParameter { kind: String, name: String },

    #[error("apparatus `{kind}`: unknown parameter `{name}`")]
    UnknownParameter { kind: String, name: String },

    #[error(
        "apparatus `{kind}`: parameter `{name}` = {value} outside catalog bounds \
         [{lo}, {hi}]"
    )]
    ParameterOutOfBounds {
        kind: String,
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("apparatus `{kind}`: infeasible setpoint: {reason}")]
    InfeasibleSetpoint { kind: String, reason: String },

    #[error(
        "apparatus `{kind}`: equilibrium solve did not converge after {iterations} \
         iterations (residual history: {history:?})"
    )]
    EquilibriumDiverged {
        kind: String,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error(
        "apparatus `{kind}`: admittance feedthrough is singular; an impedance-oriented \
         realization does not exist, use the admittance form"
    )]
    Orientation { kind: String },

    #[error("sensitivity of `{kind}` to `{name}`: perturbed equilibrium failed: {source}")]
    PerturbedEquilibrium {
        kind: String,
        name: String,
        #[source]
        source: Box<ApparatusError>,
    },

    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Errors from participation-factor computations and their validators.
#[derive(Debug, Error)]
pub enum ParticipationError {
    #[error("state index {index} out of range for apparatus at node {node} ({count} states)")]
    StateOutOfRange {
        index: usize,
        node: usize,
        count: usize,
    },

    #[error("mode index {index} out of range ({count} modes)")]
    ModeOutOfRange { index: usize, count: usize },

    #[error(
        "eigenvalue matching is ambiguous after perturbation: candidates {first} \
         (distance {d1:.3e}) and {second} (distance {d2:.3e}) are within a factor 2"
    )]
    AmbiguousMatch {
        first: Complex64,
        second: Complex64,
        d1: f64,
        d2: f64,
    },

    #[error(transparent)]
    Lti(#[from] LtiError),

    #[error(transparent)]
    Net(#[from] NetError),

    #[error(transparent)]
    Apparatus(#[from] ApparatusError),
}

/// Errors from rational fitting of sampled spectra.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("fit configuration invalid: {0}")]
    Config(String),

    #[error(
        "spectrum has {samples} samples but order {order} needs at least {needed} \
         (2*order + 2)"
    )]
    TooFewSamples {
        samples: usize,
        order: usize,
        needed: usize,
    },

    #[error(
        "least-squares system is rank deficient (diagonal ratio {ratio:.3e}); \
         try a lower fit order"
    )]
    RankDeficient { ratio: f64 },

    #[error("pole relocation produced a non-finite pole set at iteration {iteration}")]
    NonFinitePoles { iteration: usize },

    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Errors from files: system descriptions, spectra, run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: JSON parse error at {location}: {message}")]
    Json {
        path: String,
        location: String,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid run configuration: {0}")]
    Invalid(String),

    #[error("selection is empty: {0}")]
    EmptySelection(String),
}
