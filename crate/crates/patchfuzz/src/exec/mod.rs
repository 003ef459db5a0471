//! Execution: one-shot bytecode compilation, a reusable coverage-instrumented
//! virtual machine, and the detour mechanism that lets candidate patches run
//! without recompiling anything.

pub mod bytecode;
pub mod compile;
pub mod coverage;
pub mod vm;

pub use bytecode::{BlockId, Bytecode, FuncInfo, Insn, StmtBounds, VarBindings};
pub use compile::{compile, compile_invocations, source_hash, CompileError};
pub use coverage::{edge_index, CoverageMap, EdgeSet, GlobalCoverage, MAP_SIZE};
pub use vm::{CrashKind, ExecLimits, ExecResult, Outcome, Vm};
