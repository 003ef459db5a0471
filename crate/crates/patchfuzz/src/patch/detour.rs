//! Detour tables: the bridge between patches and the VM.
//!
//! Installing a patch does not modify bytecode. Instead the patch body is
//! *resolved* against the variables visible at its location — names become
//! frame slots, calls become function indices, and the whole statement is
//! type-checked — and registered in a table keyed by `StmtId`. When the VM
//! reaches that statement boundary it interprets the resolved body against
//! the live frame and resumes after the original statement (or returns, or
//! crashes), so swapping patches costs a table rebuild, not a compile.
//!
//! Each entry also carries a pseudo block id derived from the patch digest.
//! Firing the detour records an edge into that pseudo block, which is how
//! runs under different patches exhibit distinguishable coverage.

use crate::exec::{Bytecode, VarBindings};
use crate::lang::{BinOp, Expr, Stmt, StmtId, StmtKind, Type, UnOp};

use super::{Digest, Patch};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("`{0}` is not visible at the patch location")]
    UnboundVariable(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("`{0}` is not callable")]
    UnknownCallable(String),
    #[error("arity mismatch: {0}")]
    ArityMismatch(String),
    #[error("call to `{0}` could re-enter the patched function")]
    RecursiveCall(String),
    #[error("constant {0} does not fit the program's integer width")]
    ConstOutOfWidth(i64),
    #[error("statement shape is not patchable: {0}")]
    BadShape(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DetourError {
    #[error("statement {0} does not exist")]
    UnknownStmtId(StmtId),
    #[error("statement {0} is not patchable")]
    UnpatchableLocation(StmtId),
    #[error("two patches target statement {0}")]
    DuplicateLocation(StmtId),
    #[error("patch at statement {stmt_id} is ill-bounded: {source}")]
    IllBounded {
        stmt_id: StmtId,
        #[source]
        source: ResolveError,
    },
}

/// Patch body with names resolved to frame slots and function indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedStmt {
    Assign { slot: u16, value: ResolvedExpr },
    AssignIdx { base: ResolvedExpr, index: ResolvedExpr, value: ResolvedExpr },
    Print(ResolvedExpr),
    ExprStmt(ResolvedExpr),
    Return(ResolvedExpr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedExpr {
    Const(i64),
    Slot(u16),
    Index { base: Box<ResolvedExpr>, index: Box<ResolvedExpr> },
    Unary { op: UnOp, operand: Box<ResolvedExpr> },
    /// `&&`/`||` short-circuit in the interpreter, matching compiled code.
    Binary { op: BinOp, lhs: Box<ResolvedExpr>, rhs: Box<ResolvedExpr> },
    Input,
    Len(Box<ResolvedExpr>),
    NewArray(Box<ResolvedExpr>),
    Call { func: u16, args: Vec<ResolvedExpr> },
}

#[derive(Debug, Clone)]
pub struct DetourEntry {
    pub stmt_id: StmtId,
    pub digest: Digest,
    /// Coverage pseudo block: a detour firing records an edge into this id.
    /// Derived from the digest, so distinct patches mark distinct blocks.
    pub pseudo_block: u16,
    /// Where to resume when the body falls through.
    pub resume: u32,
    pub body: ResolvedStmt,
}

/// Immutable set of installed detours, dense by `StmtId`. At most one per
/// statement.
#[derive(Debug, Clone, Default)]
pub struct DetourTable {
    entries: Vec<Option<DetourEntry>>,
    count: usize,
}

impl DetourTable {
    pub fn empty() -> DetourTable {
        DetourTable::default()
    }

    #[inline]
    pub fn get(&self, id: StmtId) -> Option<&DetourEntry> {
        self.entries.get(id as usize).and_then(|e| e.as_ref())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn entries(&self) -> impl Iterator<Item = &DetourEntry> {
        self.entries.iter().filter_map(|e| e.as_ref())
    }
}

/// Resolve and install patches. Fails on unknown/unpatchable/duplicate
/// locations and on any patch that is not well-bounded and well-typed at its
/// location.
pub fn build_detours<'a>(
    bc: &Bytecode,
    patches: impl IntoIterator<Item = &'a Patch>,
) -> Result<DetourTable, DetourError> {
    let mut entries: Vec<Option<DetourEntry>> = vec![None; bc.n_stmts as usize];
    let mut count = 0usize;
    for patch in patches {
        let id = patch.loc.stmt_id;
        if id >= bc.n_stmts {
            return Err(DetourError::UnknownStmtId(id));
        }
        let Some(bounds) = bc.bounds_at(id) else {
            return Err(DetourError::UnpatchableLocation(id));
        };
        if entries[id as usize].is_some() {
            return Err(DetourError::DuplicateLocation(id));
        }
        let bindings = bc.bindings_at(id).expect("patchable statements have bindings");
        let body = resolve_stmt(&patch.stmt, bindings, bc, bc.stmt_func[id as usize])
            .map_err(|source| DetourError::IllBounded { stmt_id: id, source })?;
        let digest = patch.digest();
        let pseudo_block = u16::from_le_bytes([digest.0[0], digest.0[1]]);
        entries[id as usize] =
            Some(DetourEntry { stmt_id: id, digest, pseudo_block, resume: bounds.resume, body });
        count += 1;
    }
    Ok(DetourTable { entries, count })
}

/// Convenience for the common single-patch case.
pub fn detour_for(bc: &Bytecode, patch: &Patch) -> Result<DetourTable, DetourError> {
    build_detours(bc, std::iter::once(patch))
}

/// Resolve a statement against the bindings at a location, type-checking as
/// it goes. `host_func` is the function containing the location; calls that
/// could re-enter it are rejected so detours cannot smuggle recursion in.
pub fn resolve_stmt(
    stmt: &Stmt,
    bindings: &VarBindings,
    bc: &Bytecode,
    host_func: u16,
) -> Result<ResolvedStmt, ResolveError> {
    let cx = Resolver { bindings, bc, host_func };
    match &stmt.kind {
        StmtKind::Decl { name, init } => {
            let (slot, ty) = cx.var(name)?;
            let (value, vty) = cx.expr(init)?;
            if vty != ty {
                return Err(ResolveError::TypeError(format!(
                    "cannot bind {vty} to `{name}: {ty}`"
                )));
            }
            Ok(ResolvedStmt::Assign { slot, value })
        }
        StmtKind::Assign { target, value } => match target {
            Expr::Var(name) => {
                let (slot, ty) = cx.var(name)?;
                let (value, vty) = cx.expr(value)?;
                if vty != ty {
                    return Err(ResolveError::TypeError(format!(
                        "cannot assign {vty} to `{name}: {ty}`"
                    )));
                }
                Ok(ResolvedStmt::Assign { slot, value })
            }
            Expr::Index { base, index } => {
                let (base, bty) = cx.expr(base)?;
                if bty != Type::Array {
                    return Err(ResolveError::TypeError("indexed value must be an array".into()));
                }
                let (index, ity) = cx.expr(index)?;
                let (value, vty) = cx.expr(value)?;
                if ity != Type::Int || vty != Type::Int {
                    return Err(ResolveError::TypeError("indexed assignment stores an int".into()));
                }
                Ok(ResolvedStmt::AssignIdx { base, index, value })
            }
            _ => Err(ResolveError::BadShape("assignment target must be a variable or index".into())),
        },
        StmtKind::Print(e) => {
            let (e, ty) = cx.expr(e)?;
            if ty != Type::Int {
                return Err(ResolveError::TypeError("print argument must be an int".into()));
            }
            Ok(ResolvedStmt::Print(e))
        }
        StmtKind::ExprStmt(e) => {
            let (e, _) = cx.expr(e)?;
            Ok(ResolvedStmt::ExprStmt(e))
        }
        StmtKind::Return(e) => {
            let (e, ty) = cx.expr(e)?;
            if ty != Type::Int {
                return Err(ResolveError::TypeError("return value must be an int".into()));
            }
            Ok(ResolvedStmt::Return(e))
        }
        other => Err(ResolveError::BadShape(format!("{other:?}"))),
    }
}

struct Resolver<'a> {
    bindings: &'a VarBindings,
    bc: &'a Bytecode,
    host_func: u16,
}

impl<'a> Resolver<'a> {
    fn var(&self, name: &str) -> Result<(u16, Type), ResolveError> {
        self.bindings
            .get(name)
            .ok_or_else(|| ResolveError::UnboundVariable(name.to_string()))
    }

    fn int_expr(&self, e: &Expr, what: &str) -> Result<ResolvedExpr, ResolveError> {
        let (r, ty) = self.expr(e)?;
        if ty != Type::Int {
            return Err(ResolveError::TypeError(format!("{what} must be an int")));
        }
        Ok(r)
    }

    fn expr(&self, e: &Expr) -> Result<(ResolvedExpr, Type), ResolveError> {
        match e {
            Expr::Const(v) => {
                if !self.bc.int_width.contains(*v) {
                    return Err(ResolveError::ConstOutOfWidth(*v));
                }
                Ok((ResolvedExpr::Const(*v), Type::Int))
            }
            Expr::Var(name) => {
                let (slot, ty) = self.var(name)?;
                Ok((ResolvedExpr::Slot(slot), ty))
            }
            Expr::Index { base, index } => {
                let (b, bty) = self.expr(base)?;
                if bty != Type::Array {
                    return Err(ResolveError::TypeError("indexed value must be an array".into()));
                }
                let i = self.int_expr(index, "index")?;
                Ok((ResolvedExpr::Index { base: Box::new(b), index: Box::new(i) }, Type::Int))
            }
            Expr::Unary { op, operand } => {
                let r = self.int_expr(operand, "unary operand")?;
                Ok((ResolvedExpr::Unary { op: *op, operand: Box::new(r) }, Type::Int))
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.int_expr(lhs, "operand")?;
                let r = self.int_expr(rhs, "operand")?;
                Ok((
                    ResolvedExpr::Binary { op: *op, lhs: Box::new(l), rhs: Box::new(r) },
                    Type::Int,
                ))
            }
            Expr::Call { callee, args } => self.call(callee, args),
        }
    }

    fn call(&self, callee: &str, args: &[Expr]) -> Result<(ResolvedExpr, Type), ResolveError> {
        match callee {
            "input" => {
                if !args.is_empty() {
                    return Err(ResolveError::ArityMismatch("input takes no arguments".into()));
                }
                Ok((ResolvedExpr::Input, Type::Int))
            }
            "len" => {
                if args.len() != 1 {
                    return Err(ResolveError::ArityMismatch("len takes one array".into()));
                }
                let (a, ty) = self.expr(&args[0])?;
                if ty != Type::Array {
                    return Err(ResolveError::TypeError("len takes an array".into()));
                }
                Ok((ResolvedExpr::Len(Box::new(a)), Type::Int))
            }
            "array" => {
                if args.len() != 1 {
                    return Err(ResolveError::ArityMismatch("array takes one length".into()));
                }
                let n = self.int_expr(&args[0], "array length")?;
                Ok((ResolvedExpr::NewArray(Box::new(n)), Type::Array))
            }
            _ => {
                let func = self
                    .bc
                    .func_index(callee)
                    .ok_or_else(|| ResolveError::UnknownCallable(callee.to_string()))?;
                if self.bc.call_reaches(func, self.host_func) {
                    return Err(ResolveError::RecursiveCall(callee.to_string()));
                }
                let info = &self.bc.funcs[func as usize];
                if info.param_types.len() != args.len() {
                    return Err(ResolveError::ArityMismatch(format!(
                        "`{callee}` takes {} arguments, got {}",
                        info.param_types.len(),
                        args.len()
                    )));
                }
                let mut resolved = Vec::with_capacity(args.len());
                for (i, (arg, want)) in args.iter().zip(info.param_types.clone()).enumerate() {
                    let (a, got) = self.expr(arg)?;
                    if got != want {
                        return Err(ResolveError::TypeError(format!(
                            "argument {} of `{callee}` must be {want}",
                            i + 1
                        )));
                    }
                    resolved.push(a);
                }
                Ok((ResolvedExpr::Call { func, args: resolved }, Type::Int))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::compile;
    use crate::lang::{parse_program, refactor_conditionals};

    fn bc() -> Bytecode {
        let src = "fn helper(x: int) { return x + 1; }
fn main() {
    var a = array(4);
    var i = 0;
    while (i < 4) { a[i] = helper(i); i = i + 1; }
    print(a[3]);
}
";
        compile(&refactor_conditionals(&parse_program(src).unwrap())).unwrap()
    }

    fn patch_at(bc: &Bytecode, id: StmtId, kind: StmtKind) -> Patch {
        Patch::new(id, Stmt::new(kind), 0, bc).unwrap()
    }

    #[test]
    fn installs_a_well_bounded_patch() {
        let bc = bc();
        let id = bc.patchable_ids().next().unwrap();
        let p = patch_at(&bc, id, StmtKind::Print(Expr::Const(7)));
        let table = detour_for(&bc, &p).unwrap();
        assert_eq!(table.len(), 1);
        let entry = table.get(id).unwrap();
        assert_eq!(entry.digest, p.digest());
        assert_eq!(
            entry.pseudo_block,
            u16::from_le_bytes([p.digest().0[0], p.digest().0[1]])
        );
        assert!(matches!(entry.body, ResolvedStmt::Print(ResolvedExpr::Const(7))));
    }

    #[test]
    fn duplicate_locations_are_rejected() {
        let bc = bc();
        let id = bc.patchable_ids().next().unwrap();
        let p1 = patch_at(&bc, id, StmtKind::Print(Expr::Const(1)));
        let p2 = patch_at(&bc, id, StmtKind::Print(Expr::Const(2)));
        assert!(matches!(
            build_detours(&bc, [&p1, &p2]),
            Err(DetourError::DuplicateLocation(_))
        ));
    }

    #[test]
    fn type_errors_are_ill_bounded() {
        let bc = bc();
        // `print(a)` where a is an array.
        let id = bc
            .patchable_ids()
            .find(|&id| bc.bindings_at(id).unwrap().get("a").is_some())
            .unwrap();
        let p = patch_at(&bc, id, StmtKind::Print(Expr::var("a")));
        assert!(matches!(
            detour_for(&bc, &p),
            Err(DetourError::IllBounded { source: ResolveError::TypeError(_), .. })
        ));
    }

    #[test]
    fn recursion_inducing_calls_are_rejected() {
        let bc = bc();
        // A patch inside `helper` calling `helper`.
        let helper_idx = bc.func_index("helper").unwrap();
        let id = bc
            .patchable_ids()
            .find(|&id| bc.stmt_func[id as usize] == helper_idx)
            .unwrap();
        let p = patch_at(
            &bc,
            id,
            StmtKind::Return(Expr::call("helper", vec![Expr::var("x")])),
        );
        assert!(matches!(
            detour_for(&bc, &p),
            Err(DetourError::IllBounded { source: ResolveError::RecursiveCall(_), .. })
        ));
    }

    #[test]
    fn calls_from_main_into_helpers_resolve() {
        let bc = bc();
        let id = bc
            .patchable_ids()
            .find(|&id| {
                bc.stmt_func[id as usize] == bc.entry_func
                    && bc.bindings_at(id).unwrap().get("i").is_some()
            })
            .unwrap();
        let p = patch_at(
            &bc,
            id,
            StmtKind::ExprStmt(Expr::call("helper", vec![Expr::Const(1)])),
        );
        assert!(detour_for(&bc, &p).is_ok());
    }

    #[test]
    fn out_of_width_constants_are_rejected() {
        let bc = bc();
        let id = bc.patchable_ids().next().unwrap();
        let p = patch_at(&bc, id, StmtKind::Print(Expr::Const(1_000_000)));
        assert!(matches!(
            detour_for(&bc, &p),
            Err(DetourError::IllBounded { source: ResolveError::ConstOutOfWidth(_), .. })
        ));
    }
}
