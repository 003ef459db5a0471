//! Compiled program representation. A program compiles once; every patch
//! variant and every input afterwards runs against this same object, so the
//! layout favors the VM's hot loop: flat instruction vector, dense side
//! tables indexed by `StmtId`, copyable instructions.

use std::collections::BTreeMap;

use crate::lang::{BinOp, IntWidth, StmtId, Type, UnOp};

/// Basic-block id used by coverage instrumentation.
pub type BlockId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insn {
    /// Statement boundary: updates crash attribution and fires any detour
    /// registered for this statement. Emitted for every statement.
    Stmt(StmtId),
    /// Coverage mark at a basic-block head.
    Block(BlockId),
    Const(i64),
    Load(u16),
    Store(u16),
    /// `[array, index] -> [value]`
    LoadIdx,
    /// `[array, index, value] -> []`
    StoreIdx,
    Un(UnOp),
    /// Arithmetic and comparison only; `&&`/`||` compile to jumps.
    Bin(BinOp),
    Jmp(u32),
    /// Jump if popped value is zero.
    Jz(u32),
    /// Jump if popped value is non-zero.
    Jnz(u32),
    Call { func: u16, argc: u8 },
    Ret,
    Print,
    /// Pop; crash with `AssertFailure` if zero.
    Assert,
    /// Push next input byte (width-wrapped; 0 at end of input).
    Input,
    /// `[array] -> [length]`
    Len,
    /// `[length] -> [array]`
    NewArray,
    Pop,
}

#[derive(Debug, Clone)]
pub struct FuncInfo {
    pub name: String,
    pub entry_pc: u32,
    pub n_params: u16,
    /// Frame size: parameters plus every declaration in the body (slots are
    /// not reused across disjoint scopes; assignment is by slot index).
    pub n_slots: u16,
    pub param_types: Vec<Type>,
}

/// Where a patchable statement lives in the instruction stream.
#[derive(Debug, Clone, Copy)]
pub struct StmtBounds {
    /// Offset of the statement's `Stmt` boundary instruction.
    pub start: u32,
    /// Offset just past the statement's own code; a detour that falls
    /// through resumes here.
    pub resume: u32,
}

/// Variables visible at a patchable statement: name -> (frame slot, type).
/// For declarations this includes the declared variable itself (its slot
/// exists and is zero-initialized from frame entry).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarBindings {
    map: BTreeMap<String, (u16, Type)>,
}

impl VarBindings {
    pub fn insert(&mut self, name: String, slot: u16, ty: Type) {
        self.map.insert(name, (slot, ty));
    }

    pub fn get(&self, name: &str) -> Option<(u16, Type)> {
        self.map.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u16, Type)> {
        self.map.iter().map(|(n, &(slot, ty))| (n.as_str(), slot, ty))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Bytecode {
    pub insns: Vec<Insn>,
    pub funcs: Vec<FuncInfo>,
    /// Index into `funcs` of the entry function.
    pub entry_func: u16,
    pub int_width: IntWidth,
    /// Number of statements in the source program; side tables are dense.
    pub n_stmts: u32,
    /// Number of native basic blocks (block ids `0..n_blocks`).
    pub n_blocks: u16,
    /// Dense by `StmtId`; `Some` exactly for patchable statements.
    pub stmt_bounds: Vec<Option<StmtBounds>>,
    /// Dense by `StmtId`; `Some` exactly for patchable statements.
    pub bindings: Vec<Option<VarBindings>>,
    /// Dense by `StmtId`: containing function index.
    pub stmt_func: Vec<u16>,
    /// Per function: sorted indices of functions transitively reachable
    /// through calls. Used to refuse patches that would make a detour
    /// re-enter its own function.
    pub reachable_funcs: Vec<Vec<u16>>,
    /// SHA-256 of the canonical program encoding; identifies what was
    /// compiled independent of compiler internals.
    pub source_hash: [u8; 32],
}

impl Bytecode {
    pub fn is_patchable(&self, id: StmtId) -> bool {
        self.stmt_bounds.get(id as usize).is_some_and(|b| b.is_some())
    }

    pub fn bounds_at(&self, id: StmtId) -> Option<StmtBounds> {
        self.stmt_bounds.get(id as usize).copied().flatten()
    }

    pub fn bindings_at(&self, id: StmtId) -> Option<&VarBindings> {
        self.bindings.get(id as usize).and_then(|b| b.as_ref())
    }

    pub fn function_name_of(&self, id: StmtId) -> Option<&str> {
        self.stmt_func
            .get(id as usize)
            .map(|&f| self.funcs[f as usize].name.as_str())
    }

    pub fn func_index(&self, name: &str) -> Option<u16> {
        self.funcs.iter().position(|f| f.name == name).map(|i| i as u16)
    }

    /// All patchable statement ids in program order.
    pub fn patchable_ids(&self) -> impl Iterator<Item = StmtId> + '_ {
        (0..self.n_stmts).filter(|&id| self.is_patchable(id))
    }

    /// True if calling `callee` could transitively re-enter `host`.
    pub fn call_reaches(&self, callee: u16, host: u16) -> bool {
        callee == host
            || self.reachable_funcs[callee as usize].binary_search(&host).is_ok()
    }
}
