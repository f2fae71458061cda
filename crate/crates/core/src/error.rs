//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the algebra layers.
///
/// Anything that carries a mathematical verdict (a nonzero remainder, an
/// inconsistent linear system, a failed closure) is reported through the
/// corresponding report structure instead; `Error` is reserved for misuse of
/// the API and for structural failures.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),

    #[error("duplicate coordinate `{0}`")]
    DuplicateCoordinate(String),

    #[error("coordinate `{0}` declared out of kind order (base, jets, group, parameters)")]
    CoordinateOrder(String),

    #[error("operands belong to incompatible coordinate contexts")]
    ContextMismatch,

    #[error("operands belong to incompatible generator sets")]
    GeneratorMismatch,

    #[error("cyclic substitution through `{0}`")]
    CyclicSubstitution(String),

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("duplicate generator `{0}`")]
    DuplicateGenerator(String),

    #[error("degree mismatch: expected a form of degree {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("differential of parameter `{0}` is not part of the Grassmann basis")]
    ParameterDifferential(String),

    #[error("exact polynomial division failed")]
    InexactDivision,

    #[error("unknown `{0}` occurs nonlinearly in a linear system")]
    NonlinearUnknown(String),

    #[error("rewrite budget of {0} steps exhausted before a normal form was reached")]
    RewriteBudget(usize),

    #[error("relation `{0}` has no monomial with a rational coefficient to orient")]
    UnorientableRelation(String),

    #[error("structure constants invalid: {0}")]
    InvalidStructureConstants(String),

    #[error("evolution equations of order {0} need explicitly supplied ideal generators")]
    UnsupportedOrder(u32),

    #[error("right-hand side must be the leading jet plus lower-order terms: {0}")]
    MalformedRhs(String),

    #[error("series order must be at least 1")]
    ZeroSeriesOrder,

    #[error("generated ideal is not closed; offending generator index {0}")]
    NotClosed(usize),

    #[error("cannot eliminate the curvature multiplier `{0}` from the matching conditions")]
    MultiplierElimination(String),

    #[error("connection coefficients fail to recombine the curvature on `{0}`")]
    Recombination(String),

    #[error("bracket of `{0}` and `{1}` leaves the holonomy span")]
    HolonomyEscape(String, String),

    #[error("representation does not satisfy the relations; run verification for the residuals")]
    UnverifiedRep,

    #[error("matrix dimensions do not match")]
    DimensionMismatch,

    #[error("matrix is singular over the rationals")]
    SingularMatrix,

    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
}

impl Error {
    pub(crate) fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, col, msg: msg.into() }
    }
}
