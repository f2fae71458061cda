//! Exact symbolic toolkit for evolution equations phrased as exterior
//! differential systems.
//!
//! The crate is organized as a pipeline of small algebra layers:
//!
//! * [`context`] / [`poly`] / [`linsolve`]: coordinates on a jet manifold,
//!   sparse multivariate polynomials with exact rational coefficients, and a
//!   fraction-free linear solver over them.
//! * [`forms`]: Grassmann algebra of differential forms, exterior derivative,
//!   form ideals, and ideal-membership certificates.
//! * [`lie`]: the free Lie algebra on ordered generators in Hall-basis normal
//!   form, relation-set rewriting, spans, and structure constants.
//! * [`matrix`] / [`mc`]: polynomial matrices and the left-invariant
//!   Maurer-Cartan form of a Lie algebra given by structure constants,
//!   with exact verification of the structure equation.
//! * [`prolong`]: encoding an evolution equation as a closed ideal of
//!   2-forms, derivation and solution of the determining equations for a
//!   Lie-algebra-valued connection, and the holonomy filtration/closure.
//! * [`rep`]: small matrix representations of the resulting algebra,
//!   assembly of the linear (Lax) problem, and the zero-curvature check.
//! * [`check`]: seeded randomized self-checks of the core algebraic laws.
//!
//! All arithmetic is exact; every verdict the crate produces is backed by a
//! recomputable certificate (ideal multipliers, solved coefficient maps,
//! residual terms), never by floating-point tolerance.

pub mod context;
pub mod error;
pub mod forms;
pub mod lie;
pub mod linsolve;
pub mod matrix;
pub mod mc;
pub mod poly;
pub mod prolong;
pub mod rep;
pub(crate) mod text;

pub use context::{Context, ContextBuilder, CoordId, CoordKind};
pub use error::Error;
pub use forms::{DiffForm, FormIdeal, MembershipCertificate, WedgeMonomial};
pub use lie::{
    GenId, LieContext, LieElement, LieMonomial, RelationSet, SpanClosure, SpanReport,
    StructureConstants,
};
pub use linsolve::{LinearOutcome, LinearSystem};
pub use matrix::PolyMatrix;
pub use mc::{MCForm, MCReport};
pub use poly::{Rat, ScalarPoly};
pub use prolong::{
    connection_ansatz, contact_ideal, derive_determining, holonomy_close, holonomy_filtration,
    solve_determining, Condition, ConditionKind, ConnectionAnsatz, DeterminingSystem,
    EvolutionPDE, HolonomyClosure, HolonomyFiltration, PDEIdeal, ProlongationSolution,
    MAX_ENCODED_ORDER,
};
pub use rep::{
    assemble_lax, search_table_rep, verify_solution_rep, verify_table_rep,
    verify_zero_curvature, CurvatureReport, LaxPair, MatrixRep, RepFamily, RepReport,
};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
