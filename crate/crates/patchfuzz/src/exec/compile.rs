//! Single-pass bytecode compiler. Compilation happens once per repair
//! campaign; everything the patch machinery later needs (statement bounds,
//! visible-variable tables, function metadata) is recorded here so patch
//! validation never touches the compiler again. A process-wide invocation
//! counter makes "compiled exactly once" checkable from tests.
//!
//! Output is deterministic: recompiling the same program yields identical
//! instructions, tables and source hash.

use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest as _, Sha256};

use super::bytecode::*;
use crate::lang::*;

static COMPILE_INVOCATIONS: AtomicU64 = AtomicU64::new(0);

/// Total `compile` calls in this process.
pub fn compile_invocations() -> u64 {
    COMPILE_INVOCATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum CompileError {
    #[error("program failed validation:\n{0}")]
    Invalid(String),
}

/// Compile a validated program. Call sites are expected to have run
/// `validate` (and usually `refactor_conditionals`) first; this re-checks and
/// refuses rather than miscompiling.
pub fn compile(program: &Program) -> Result<Bytecode, CompileError> {
    let report = validate(program);
    if !report.is_ok_modulo_cf_temps() {
        return Err(CompileError::Invalid(report.to_string()));
    }
    COMPILE_INVOCATIONS.fetch_add(1, Ordering::Relaxed);

    let n_stmts = program.stmt_count();
    let mut c = Compiler {
        program,
        insns: Vec::new(),
        funcs: Vec::new(),
        next_block: 0,
        stmt_bounds: vec![None; n_stmts as usize],
        bindings: vec![None; n_stmts as usize],
        stmt_func: vec![0; n_stmts as usize],
        scopes: Vec::new(),
        decl_slots: Vec::new(),
        current_func: 0,
    };
    c.run();

    Ok(Bytecode {
        insns: c.insns,
        funcs: c.funcs,
        entry_func: program
            .functions
            .iter()
            .position(|f| f.name == program.entry)
            .expect("validated program has an entry") as u16,
        int_width: program.int_width,
        n_stmts,
        n_blocks: c.next_block,
        stmt_bounds: c.stmt_bounds,
        bindings: c.bindings,
        stmt_func: c.stmt_func,
        reachable_funcs: reachable_funcs(program),
        source_hash: source_hash(program),
    })
}

/// Per function, the sorted set of function indices reachable through calls.
/// Validated programs are recursion-free, so this is a DAG closure.
fn reachable_funcs(program: &Program) -> Vec<Vec<u16>> {
    fn callees(block: &Block, index_of: &impl Fn(&str) -> Option<usize>, out: &mut Vec<u16>) {
        fn walk_expr(e: &Expr, index_of: &impl Fn(&str) -> Option<usize>, out: &mut Vec<u16>) {
            if let Expr::Call { callee, .. } = e {
                if let Some(i) = index_of(callee) {
                    out.push(i as u16);
                }
            }
            for i in 0..e.child_count() {
                walk_expr(e.child(i).unwrap(), index_of, out);
            }
        }
        for stmt in &block.stmts {
            for root in stmt.expr_roots() {
                walk_expr(root, index_of, out);
            }
            match &stmt.kind {
                StmtKind::If { then_block, else_block, .. } => {
                    callees(then_block, index_of, out);
                    if let Some(e) = else_block {
                        callees(e, index_of, out);
                    }
                }
                StmtKind::While { body, .. } => callees(body, index_of, out),
                _ => {}
            }
        }
    }

    let index_of = |name: &str| program.functions.iter().position(|f| f.name == name);
    let direct: Vec<Vec<u16>> = program
        .functions
        .iter()
        .map(|func| {
            let mut out = Vec::new();
            callees(&func.body, &index_of, &mut out);
            out
        })
        .collect();

    (0..direct.len())
        .map(|start| {
            let mut seen = std::collections::BTreeSet::new();
            let mut stack = direct[start].clone();
            while let Some(f) = stack.pop() {
                if seen.insert(f) {
                    stack.extend(direct[f as usize].iter().copied());
                }
            }
            seen.into_iter().collect()
        })
        .collect()
}

struct Compiler<'a> {
    program: &'a Program,
    insns: Vec<Insn>,
    funcs: Vec<FuncInfo>,
    next_block: BlockId,
    stmt_bounds: Vec<Option<StmtBounds>>,
    bindings: Vec<Option<VarBindings>>,
    stmt_func: Vec<u16>,
    /// Lexical scopes: name -> (slot, type).
    scopes: Vec<Vec<(String, u16, Type)>>,
    /// Slot for each declaration, keyed by StmtId (dense, pre-assigned).
    decl_slots: Vec<u16>,
    current_func: u16,
}

impl<'a> Compiler<'a> {
    fn run(&mut self) {
        self.decl_slots = vec![0; self.stmt_bounds.len()];
        // Function table first so calls can resolve indices in one pass.
        for func in &self.program.functions {
            let n_params = func.params.len() as u16;
            let n_decls = count_decls(&func.body, &mut |id, slot| {
                self.decl_slots[id as usize] = n_params + slot;
            });
            self.funcs.push(FuncInfo {
                name: func.name.clone(),
                entry_pc: 0,
                n_params,
                n_slots: n_params + n_decls,
                param_types: func.params.iter().map(|p| p.ty).collect(),
            });
        }
        for (i, func) in self.program.functions.iter().enumerate() {
            self.current_func = i as u16;
            self.funcs[i].entry_pc = self.insns.len() as u32;
            self.emit_function(func);
        }
    }

    fn fresh_block(&mut self) -> BlockId {
        let id = self.next_block;
        self.next_block += 1;
        id
    }

    fn emit(&mut self, insn: Insn) -> u32 {
        self.insns.push(insn);
        (self.insns.len() - 1) as u32
    }

    fn here(&self) -> u32 {
        self.insns.len() as u32
    }

    fn emit_function(&mut self, func: &FunctionDef) {
        let entry_block = self.fresh_block();
        self.emit(Insn::Block(entry_block));
        self.scopes.clear();
        self.scopes.push(
            func.params
                .iter()
                .enumerate()
                .map(|(i, p)| (p.name.clone(), i as u16, p.ty))
                .collect(),
        );
        self.emit_block(&func.body);
        // Falling off the end returns 0.
        self.emit(Insn::Const(0));
        self.emit(Insn::Ret);
    }

    fn emit_block(&mut self, block: &Block) {
        self.scopes.push(Vec::new());
        for stmt in &block.stmts {
            self.emit_stmt(stmt);
        }
        self.scopes.pop();
    }

    fn lookup(&self, name: &str) -> (u16, Type) {
        self.scopes
            .iter()
            .rev()
            .find_map(|scope| {
                scope
                    .iter()
                    .rev()
                    .find(|(n, _, _)| n == name)
                    .map(|&(_, slot, ty)| (slot, ty))
            })
            .expect("validated program resolves all names")
    }

    fn snapshot_bindings(&self) -> VarBindings {
        let mut b = VarBindings::default();
        // Outer to inner; inner rebindings of a reused name win.
        for scope in &self.scopes {
            for (name, slot, ty) in scope {
                b.insert(name.clone(), *slot, *ty);
            }
        }
        b
    }

    fn emit_stmt(&mut self, stmt: &Stmt) {
        let id = stmt.id;
        self.stmt_func[id as usize] = self.current_func;
        let start = self.here();
        self.emit(Insn::Stmt(id));
        match &stmt.kind {
            StmtKind::Decl { name, init } => {
                let slot = self.decl_slots[id as usize];
                let ty = self.static_type(init);
                // The declared variable is visible to patches at its own
                // statement; its slot is zeroed at frame entry.
                self.scopes.last_mut().unwrap().push((name.clone(), slot, ty));
                self.record_patchable(id, start);
                self.emit_expr(init);
                self.emit(Insn::Store(slot));
                self.finish_patchable(id);
            }
            StmtKind::Assign { target, value } => {
                self.record_patchable(id, start);
                match target {
                    Expr::Var(name) => {
                        let (slot, _) = self.lookup(name);
                        self.emit_expr(value);
                        self.emit(Insn::Store(slot));
                    }
                    Expr::Index { base, index } => {
                        self.emit_expr(base);
                        self.emit_expr(index);
                        self.emit_expr(value);
                        self.emit(Insn::StoreIdx);
                    }
                    _ => unreachable!("validated assignment target"),
                }
                self.finish_patchable(id);
            }
            StmtKind::Print(e) => {
                self.record_patchable(id, start);
                self.emit_expr(e);
                self.emit(Insn::Print);
                self.finish_patchable(id);
            }
            StmtKind::ExprStmt(e) => {
                self.record_patchable(id, start);
                self.emit_expr(e);
                self.emit(Insn::Pop);
                self.finish_patchable(id);
            }
            StmtKind::Return(e) => {
                self.record_patchable(id, start);
                self.emit_expr(e);
                self.emit(Insn::Ret);
                self.finish_patchable(id);
            }
            StmtKind::Assert(e) => {
                self.emit_expr(e);
                self.emit(Insn::Assert);
            }
            StmtKind::If { cond, then_block, else_block } => {
                self.emit_expr(cond);
                let jz_at = self.emit(Insn::Jz(0));
                let then_b = self.fresh_block();
                self.emit(Insn::Block(then_b));
                self.emit_block(then_block);
                match else_block {
                    None => {
                        let join = self.here();
                        self.insns[jz_at as usize] = Insn::Jz(join);
                    }
                    Some(eb) => {
                        let jmp_at = self.emit(Insn::Jmp(0));
                        let else_at = self.here();
                        self.insns[jz_at as usize] = Insn::Jz(else_at);
                        let else_b = self.fresh_block();
                        self.emit(Insn::Block(else_b));
                        self.emit_block(eb);
                        let join = self.here();
                        self.insns[jmp_at as usize] = Insn::Jmp(join);
                    }
                }
            }
            StmtKind::While { cond, body } => {
                // The loop re-enters at the Stmt boundary so each iteration
                // re-fires detours and re-marks the head block.
                let top = start;
                let head_b = self.fresh_block();
                self.emit(Insn::Block(head_b));
                self.emit_expr(cond);
                let jz_at = self.emit(Insn::Jz(0));
                let body_b = self.fresh_block();
                self.emit(Insn::Block(body_b));
                self.emit_block(body);
                self.emit(Insn::Jmp(top));
                let exit = self.here();
                self.insns[jz_at as usize] = Insn::Jz(exit);
                let exit_b = self.fresh_block();
                self.emit(Insn::Block(exit_b));
            }
        }
    }

    fn record_patchable(&mut self, id: StmtId, start: u32) {
        self.bindings[id as usize] = Some(self.snapshot_bindings());
        self.stmt_bounds[id as usize] = Some(StmtBounds { start, resume: 0 });
    }

    fn finish_patchable(&mut self, id: StmtId) {
        let resume = self.here();
        self.stmt_bounds[id as usize]
            .as_mut()
            .expect("bounds recorded at statement start")
            .resume = resume;
    }

    fn static_type(&self, e: &Expr) -> Type {
        match e {
            Expr::Const(_) | Expr::Unary { .. } | Expr::Binary { .. } | Expr::Index { .. } => Type::Int,
            Expr::Var(name) => self.lookup(name).1,
            Expr::Call { callee, .. } => {
                if callee == "array" {
                    Type::Array
                } else {
                    Type::Int
                }
            }
        }
    }

    fn emit_expr(&mut self, e: &Expr) {
        match e {
            Expr::Const(v) => {
                self.emit(Insn::Const(*v));
            }
            Expr::Var(name) => {
                let (slot, _) = self.lookup(name);
                self.emit(Insn::Load(slot));
            }
            Expr::Index { base, index } => {
                self.emit_expr(base);
                self.emit_expr(index);
                self.emit(Insn::LoadIdx);
            }
            Expr::Unary { op, operand } => {
                self.emit_expr(operand);
                self.emit(Insn::Un(*op));
            }
            Expr::Binary { op: BinOp::And, lhs, rhs } => {
                // Short-circuit: result is 0 or 1.
                self.emit_expr(lhs);
                let jz1 = self.emit(Insn::Jz(0));
                self.emit_expr(rhs);
                let jz2 = self.emit(Insn::Jz(0));
                self.emit(Insn::Const(1));
                let jmp = self.emit(Insn::Jmp(0));
                let falsy = self.here();
                self.insns[jz1 as usize] = Insn::Jz(falsy);
                self.insns[jz2 as usize] = Insn::Jz(falsy);
                self.emit(Insn::Const(0));
                let join = self.here();
                self.insns[jmp as usize] = Insn::Jmp(join);
            }
            Expr::Binary { op: BinOp::Or, lhs, rhs } => {
                self.emit_expr(lhs);
                let jnz1 = self.emit(Insn::Jnz(0));
                self.emit_expr(rhs);
                let jnz2 = self.emit(Insn::Jnz(0));
                self.emit(Insn::Const(0));
                let jmp = self.emit(Insn::Jmp(0));
                let truthy = self.here();
                self.insns[jnz1 as usize] = Insn::Jnz(truthy);
                self.insns[jnz2 as usize] = Insn::Jnz(truthy);
                self.emit(Insn::Const(1));
                let join = self.here();
                self.insns[jmp as usize] = Insn::Jmp(join);
            }
            Expr::Binary { op, lhs, rhs } => {
                self.emit_expr(lhs);
                self.emit_expr(rhs);
                self.emit(Insn::Bin(*op));
            }
            Expr::Call { callee, args } => match callee.as_str() {
                "input" => {
                    self.emit(Insn::Input);
                }
                "len" => {
                    self.emit_expr(&args[0]);
                    self.emit(Insn::Len);
                }
                "array" => {
                    self.emit_expr(&args[0]);
                    self.emit(Insn::NewArray);
                }
                _ => {
                    for a in args {
                        self.emit_expr(a);
                    }
                    let func = self
                        .funcs
                        .iter()
                        .position(|f| f.name == *callee)
                        .expect("validated call target") as u16;
                    self.emit(Insn::Call { func, argc: args.len() as u8 });
                }
            },
        }
    }
}

/// Count declarations in a block (recursively), reporting each declaration's
/// ordinal so slots can be pre-assigned in pre-order.
fn count_decls(block: &Block, assign: &mut impl FnMut(StmtId, u16)) -> u16 {
    fn walk(block: &Block, next: &mut u16, assign: &mut impl FnMut(StmtId, u16)) {
        for stmt in &block.stmts {
            match &stmt.kind {
                StmtKind::Decl { .. } => {
                    assign(stmt.id, *next);
                    *next += 1;
                }
                StmtKind::If { then_block, else_block, .. } => {
                    walk(then_block, next, assign);
                    if let Some(e) = else_block {
                        walk(e, next, assign);
                    }
                }
                StmtKind::While { body, .. } => walk(body, next, assign),
                _ => {}
            }
        }
    }
    let mut next = 0u16;
    walk(block, &mut next, assign);
    next
}

/// Canonical program encoding, hashed to identify the compiled source.
pub fn source_hash(program: &Program) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(1024);
    bytes.extend_from_slice(b"RLC1");
    bytes.push(program.int_width.bits() as u8);
    push_str(&mut bytes, &program.entry);
    bytes.extend_from_slice(&(program.functions.len() as u16).to_le_bytes());
    for func in &program.functions {
        push_str(&mut bytes, &func.name);
        bytes.extend_from_slice(&(func.params.len() as u16).to_le_bytes());
        for p in &func.params {
            push_str(&mut bytes, &p.name);
            bytes.push(match p.ty {
                Type::Int => 0,
                Type::Array => 1,
            });
        }
        push_block(&mut bytes, &func.body);
    }
    Sha256::digest(&bytes).into()
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn push_block(out: &mut Vec<u8>, block: &Block) {
    out.extend_from_slice(&(block.stmts.len() as u32).to_le_bytes());
    for stmt in &block.stmts {
        out.extend_from_slice(&stmt.id.to_le_bytes());
        match &stmt.kind {
            StmtKind::Decl { name, init } => {
                out.push(1);
                push_str(out, name);
                push_expr(out, init);
            }
            StmtKind::Assign { target, value } => {
                out.push(2);
                push_expr(out, target);
                push_expr(out, value);
            }
            StmtKind::If { cond, then_block, else_block } => {
                out.push(3);
                push_expr(out, cond);
                push_block(out, then_block);
                match else_block {
                    Some(e) => {
                        out.push(1);
                        push_block(out, e);
                    }
                    None => out.push(0),
                }
            }
            StmtKind::While { cond, body } => {
                out.push(4);
                push_expr(out, cond);
                push_block(out, body);
            }
            StmtKind::Return(e) => {
                out.push(5);
                push_expr(out, e);
            }
            StmtKind::Print(e) => {
                out.push(6);
                push_expr(out, e);
            }
            StmtKind::Assert(e) => {
                out.push(7);
                push_expr(out, e);
            }
            StmtKind::ExprStmt(e) => {
                out.push(8);
                push_expr(out, e);
            }
        }
    }
}

fn push_expr(out: &mut Vec<u8>, e: &Expr) {
    match e {
        Expr::Const(v) => {
            out.push(16);
            out.extend_from_slice(&v.to_le_bytes());
        }
        Expr::Var(name) => {
            out.push(17);
            push_str(out, name);
        }
        Expr::Index { base, index } => {
            out.push(18);
            push_expr(out, base);
            push_expr(out, index);
        }
        Expr::Unary { op, operand } => {
            out.push(19);
            out.push(*op as u8);
            push_expr(out, operand);
        }
        Expr::Binary { op, lhs, rhs } => {
            out.push(20);
            out.push(*op as u8);
            push_expr(out, lhs);
            push_expr(out, rhs);
        }
        Expr::Call { callee, args } => {
            out.push(21);
            push_str(out, callee);
            out.push(args.len() as u8);
            for a in args {
                push_expr(out, a);
            }
        }
    }
}
