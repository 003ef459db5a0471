//! Patch mutation: typed, location-aware rewrites of single statements.
//! [`deterministic_mutants`] enumerates the full one-step neighborhood of a
//! patch; [`havoc`] samples stacked random rewrites beyond it. Both only
//! produce patches that re-resolve at their location.

pub mod deterministic;
pub mod havoc;
pub mod ops;

pub use deterministic::deterministic_mutants;
pub use havoc::havoc;
pub use ops::{candidates_at, collect_sites, MutationCx, MutationKind, NodePath, Site, ALL_KINDS};
