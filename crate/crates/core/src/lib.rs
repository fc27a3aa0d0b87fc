//! Certificates for deterministic conversion of pure superposition states.
//!
//! States are real coefficient vectors over a fixed, linearly independent but
//! generally non-orthogonal basis `{|c_i>}` with real scalar products
//! `mu_ij = <c_i|c_j>`. The crate decides whether `|psi>` can be turned into
//! `|phi>` with unit probability by superposition-free Kraus operators, builds
//! those operators when it can, and re-checks every claim with an independent
//! matrix-level oracle.
//!
//! The pipeline, bottom up:
//!
//! * [`basis`]: Gram matrix, independence gate, concrete embedding and dual basis.
//! * [`state`]: normalized states, tilde coefficients, l1 norm, canonical order.
//! * [`conditions`]: majorization, completeness (CoC), region classification.
//! * [`kraus`]: index functions, probabilities, Kraus and completion operators.
//! * [`oracle`]: independent verification and grid census.
//! * [`io`]: JSON input/output and the binary operator dump.

pub mod basis;
pub mod conditions;
pub mod error;
pub mod interval;
pub mod io;
pub mod kraus;
pub mod linalg;
pub mod oracle;
pub mod state;

pub use basis::{build_basis, det_gram, gram_inner, independence_range, GramBasis, MuSpec};
pub use conditions::{
    check_coc, check_majorization, classify_region, qubit_closed_form, qubit_phase_case,
    stochastic_form, ConvertibilityReport, OmegaMatrix, PhaseCase, QubitPhaseCase, Region,
};
pub use error::{Error, Result};
pub use interval::Interval;
pub use kraus::{plan, IndexFunctionSet, PlanOutcome, TransformPlan};
pub use oracle::{exhaustive_condition_scan, verify_plan, GridSpec, VerificationReport};
pub use state::{make_state, tilde, MaximalSign, PureState, TildeVector};

/// Default absolute tolerance used across the crate.
pub const DEFAULT_TOL: f64 = 1e-9;
