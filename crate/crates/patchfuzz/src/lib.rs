//! Compilation-free program repair for a small imperative language.
//!
//! The engine finds candidate fixes for a crashing program by fuzzing two
//! search spaces against each other:
//!
//! * a **patch fuzzer** mutates single statements and validates each variant
//!   against a test oracle without recompiling — patches are installed as
//!   *detours* in a bytecode VM, interpreted in place of the original
//!   statement against the live frame;
//! * an **input fuzzer** mutates test inputs hunting for counter-examples
//!   that expose surviving patches as overfit (new crashes or output
//!   divergence), shrinking the plausible-patch pool and growing the oracle.
//!
//! Alternating the two yields a co-evolution loop: the patch pool expands
//! toward patches that satisfy the oracle, while the oracle hardens against
//! exactly those patches.
//!
//! Start with [`lang`] (parse/validate/refactor), [`exec`] (compile once, run
//! many), [`patch`] (detours and the on-disk patch format), then [`fuzz`] and
//! [`coevolve`] for the search loops. The `examples/` directory demonstrates
//! each capability end to end.

pub mod coevolve;
pub mod exec;
pub mod fuzz;
pub mod lang;
pub mod mutate;
pub mod patch;
pub mod report;
pub mod suite;
