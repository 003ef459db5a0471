//! Syntax tree for RLang, the small imperative language the repair engine
//! operates on.
//!
//! Statements carry dense pre-order ids (`StmtId`) assigned by the parser and
//! reassigned by any transformation that moves statements around. Ids are the
//! coordinate system the rest of the engine uses: patch locations, detour
//! tables, execution traces and crash attribution all speak `StmtId`.

use std::fmt;

/// Dense pre-order statement id within a program.
pub type StmtId = u32;

/// Bit width of the integer type a program computes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntWidth {
    W8,
    W16,
    W32,
}

impl IntWidth {
    pub fn bits(self) -> u32 {
        match self {
            IntWidth::W8 => 8,
            IntWidth::W16 => 16,
            IntWidth::W32 => 32,
        }
    }

    pub fn min(self) -> i64 {
        -(1i64 << (self.bits() - 1))
    }

    pub fn max(self) -> i64 {
        (1i64 << (self.bits() - 1)) - 1
    }

    /// True if `v` is representable at this width.
    pub fn contains(self, v: i64) -> bool {
        v >= self.min() && v <= self.max()
    }

    pub fn from_bits(bits: u32) -> Option<IntWidth> {
        match bits {
            8 => Some(IntWidth::W8),
            16 => Some(IntWidth::W16),
            32 => Some(IntWidth::W32),
            _ => None,
        }
    }
}

impl fmt::Display for IntWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Static type of a variable or expression: scalar integer or integer array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Array,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "int"),
            Type::Array => write!(f, "arr"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// Arithmetic negation; traps on overflow (negating the minimum value).
    Neg,
    /// Logical not; yields 0 or 1.
    Not,
    /// Absolute value; traps on overflow.
    Abs,
}

impl UnOp {
    pub const ALL: [UnOp; 3] = [UnOp::Neg, UnOp::Not, UnOp::Abs];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

/// Operator family used by operator-replacement mutation: replacements stay
/// within a family so mutants remain well-typed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpFamily {
    Arith,
    Rel,
    Logic,
}

impl BinOp {
    pub fn family(self) -> OpFamily {
        match self {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => OpFamily::Arith,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne => OpFamily::Rel,
            BinOp::And | BinOp::Or => OpFamily::Logic,
        }
    }

    pub fn family_members(family: OpFamily) -> &'static [BinOp] {
        match family {
            OpFamily::Arith => &[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem],
            OpFamily::Rel => &[BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge, BinOp::Eq, BinOp::Ne],
            OpFamily::Logic => &[BinOp::And, BinOp::Or],
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Integer literal. The parser folds a leading minus into the literal so
    /// width-minimum constants are representable.
    Const(i64),
    Var(String),
    Index { base: Box<Expr>, index: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    /// Intrinsic (`input`, `len`, `array`) or program-function call.
    Call { callee: String, args: Vec<Expr> },
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn unary(op: UnOp, operand: Expr) -> Expr {
        Expr::Unary { op, operand: Box::new(operand) }
    }

    pub fn index(base: Expr, index: Expr) -> Expr {
        Expr::Index { base: Box::new(base), index: Box::new(index) }
    }

    pub fn call(callee: &str, args: Vec<Expr>) -> Expr {
        Expr::Call { callee: callee.to_string(), args }
    }

    pub fn child_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 0,
            Expr::Unary { .. } => 1,
            Expr::Index { .. } | Expr::Binary { .. } => 2,
            Expr::Call { args, .. } => args.len(),
        }
    }

    pub fn child(&self, i: usize) -> Option<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary { operand, .. } => (i == 0).then_some(operand.as_ref()),
            Expr::Index { base, index } => match i {
                0 => Some(base.as_ref()),
                1 => Some(index.as_ref()),
                _ => None,
            },
            Expr::Binary { lhs, rhs, .. } => match i {
                0 => Some(lhs.as_ref()),
                1 => Some(rhs.as_ref()),
                _ => None,
            },
            Expr::Call { args, .. } => args.get(i),
        }
    }

    pub fn child_mut(&mut self, i: usize) -> Option<&mut Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary { operand, .. } => (i == 0).then_some(operand.as_mut()),
            Expr::Index { base, index } => match i {
                0 => Some(base.as_mut()),
                1 => Some(index.as_mut()),
                _ => None,
            },
            Expr::Binary { lhs, rhs, .. } => match i {
                0 => Some(lhs.as_mut()),
                1 => Some(rhs.as_mut()),
                _ => None,
            },
            Expr::Call { args, .. } => args.get_mut(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    /// `var name = init;` — introduces a variable in the enclosing block.
    Decl { name: String, init: Expr },
    /// `target = value;` — target must be a variable or an index expression.
    Assign { target: Expr, value: Expr },
    If { cond: Expr, then_block: Block, else_block: Option<Block> },
    While { cond: Expr, body: Block },
    Return(Expr),
    Print(Expr),
    Assert(Expr),
    ExprStmt(Expr),
}

impl StmtKind {
    /// Statement kinds a detour may replace. Control flow and assertions are
    /// excluded: detours resume at a fixed offset, and assertions are part of
    /// the correctness oracle rather than the mutable program text.
    pub fn patchable(&self) -> bool {
        matches!(
            self,
            StmtKind::Decl { .. }
                | StmtKind::Assign { .. }
                | StmtKind::Print(_)
                | StmtKind::ExprStmt(_)
                | StmtKind::Return(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt { id: 0, kind }
    }

    /// Expression roots in mutation-path order. Assign exposes the target
    /// first, then the value; every other kind exposes its single expression.
    pub fn expr_roots(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Decl { init, .. } => vec![init],
            StmtKind::Assign { target, value } => vec![target, value],
            StmtKind::If { cond, .. } => vec![cond],
            StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) | StmtKind::Print(e) | StmtKind::Assert(e) | StmtKind::ExprStmt(e) => vec![e],
        }
    }

    pub fn expr_root_mut(&mut self, i: usize) -> Option<&mut Expr> {
        match &mut self.kind {
            StmtKind::Decl { init, .. } => (i == 0).then_some(init),
            StmtKind::Assign { target, value } => match i {
                0 => Some(target),
                1 => Some(value),
                _ => None,
            },
            StmtKind::If { cond, .. } => (i == 0).then_some(cond),
            StmtKind::While { cond, .. } => (i == 0).then_some(cond),
            StmtKind::Return(e) | StmtKind::Print(e) | StmtKind::Assert(e) | StmtKind::ExprStmt(e) => {
                (i == 0).then_some(e)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<FunctionDef>,
    /// Name of the entry function (`main`).
    pub entry: String,
    pub int_width: IntWidth,
}

pub const ENTRY_NAME: &str = "main";

/// Prefix of the temporaries introduced by conditional extraction. These are
/// excluded from variable-replacement mutation candidates.
pub const CF_TEMP_PREFIX: &str = "__cf_";

pub fn is_cf_temp(name: &str) -> bool {
    name.starts_with(CF_TEMP_PREFIX)
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Number of statements; ids are dense so this is `max id + 1`.
    pub fn stmt_count(&self) -> u32 {
        let mut n = 0u32;
        self.visit_stmts(&mut |s| n = n.max(s.id + 1));
        n
    }

    /// Visit every statement in pre-order (functions in declaration order).
    pub fn visit_stmts<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        fn walk<'a>(block: &'a Block, f: &mut dyn FnMut(&'a Stmt)) {
            for s in &block.stmts {
                f(s);
                match &s.kind {
                    StmtKind::If { then_block, else_block, .. } => {
                        walk(then_block, f);
                        if let Some(e) = else_block {
                            walk(e, f);
                        }
                    }
                    StmtKind::While { body, .. } => walk(body, f),
                    _ => {}
                }
            }
        }
        for func in &self.functions {
            walk(&func.body, f);
        }
    }

    /// All statement ids in pre-order.
    pub fn statement_ids(&self) -> Vec<StmtId> {
        let mut ids = Vec::new();
        self.visit_stmts(&mut |s| ids.push(s.id));
        ids
    }

    /// Find a statement by id.
    pub fn stmt(&self, id: StmtId) -> Option<&Stmt> {
        let mut found = None;
        self.visit_stmts(&mut |s| {
            if s.id == id {
                found = Some(s);
            }
        });
        found
    }

    /// Name of the function containing `id`.
    pub fn function_of(&self, id: StmtId) -> Option<&str> {
        fn contains(block: &Block, id: StmtId) -> bool {
            block.stmts.iter().any(|s| {
                s.id == id
                    || match &s.kind {
                        StmtKind::If { then_block, else_block, .. } => {
                            contains(then_block, id)
                                || else_block.as_ref().is_some_and(|e| contains(e, id))
                        }
                        StmtKind::While { body, .. } => contains(body, id),
                        _ => false,
                    }
            })
        }
        self.functions.iter().find(|f| contains(&f.body, id)).map(|f| f.name.as_str())
    }

    /// Reassign dense pre-order statement ids. Returns the statement count.
    pub fn renumber(&mut self) -> u32 {
        fn walk(block: &mut Block, next: &mut u32) {
            for s in &mut block.stmts {
                s.id = *next;
                *next += 1;
                match &mut s.kind {
                    StmtKind::If { then_block, else_block, .. } => {
                        walk(then_block, next);
                        if let Some(e) = else_block {
                            walk(e, next);
                        }
                    }
                    StmtKind::While { body, .. } => walk(body, next),
                    _ => {}
                }
            }
        }
        let mut next = 0u32;
        for func in &mut self.functions {
            walk(&mut func.body, &mut next);
        }
        next
    }
}

// --- source rendering ---

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Fully parenthesized except at obvious leaves; output is meant for
        // reports and round-trip tests, not for humans to retype.
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Index { base, index } => {
                write_atom(f, base)?;
                write!(f, "[{index}]")
            }
            Expr::Unary { op, operand } => match op {
                UnOp::Neg => {
                    write!(f, "-")?;
                    write_atom(f, operand)
                }
                UnOp::Not => {
                    write!(f, "!")?;
                    write_atom(f, operand)
                }
                UnOp::Abs => write!(f, "abs({operand})"),
            },
            Expr::Binary { op, lhs, rhs } => {
                write_atom(f, lhs)?;
                write!(f, " {} ", op.symbol())?;
                write_atom(f, rhs)
            }
            Expr::Call { callee, args } => {
                write!(f, "{callee}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Binary { .. } => write!(f, "({e})"),
        _ => write!(f, "{e}"),
    }
}

impl fmt::Display for Stmt {
    /// Single-line rendering; nested blocks are rendered inline.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            StmtKind::Decl { name, init } => write!(f, "var {name} = {init};"),
            StmtKind::Assign { target, value } => write!(f, "{target} = {value};"),
            StmtKind::If { cond, then_block, else_block } => {
                write!(f, "if ({cond}) {{ ")?;
                for s in &then_block.stmts {
                    write!(f, "{s} ")?;
                }
                write!(f, "}}")?;
                if let Some(e) = else_block {
                    write!(f, " else {{ ")?;
                    for s in &e.stmts {
                        write!(f, "{s} ")?;
                    }
                    write!(f, "}}")?;
                }
                Ok(())
            }
            StmtKind::While { cond, body } => {
                write!(f, "while ({cond}) {{ ")?;
                for s in &body.stmts {
                    write!(f, "{s} ")?;
                }
                write!(f, "}}")
            }
            StmtKind::Return(e) => write!(f, "return {e};"),
            StmtKind::Print(e) => write!(f, "print({e});"),
            StmtKind::Assert(e) => write!(f, "assert({e});"),
            StmtKind::ExprStmt(e) => write!(f, "{e};"),
        }
    }
}

/// Render a whole program as parseable source text.
pub fn render_program(p: &Program) -> String {
    fn indent(out: &mut String, depth: usize) {
        for _ in 0..depth {
            out.push_str("    ");
        }
    }
    fn block(out: &mut String, b: &Block, depth: usize) {
        for s in &b.stmts {
            stmt(out, s, depth);
        }
    }
    fn stmt(out: &mut String, s: &Stmt, depth: usize) {
        indent(out, depth);
        match &s.kind {
            StmtKind::If { cond, then_block, else_block } => {
                out.push_str(&format!("if ({cond}) {{\n"));
                block(out, then_block, depth + 1);
                indent(out, depth);
                out.push('}');
                if let Some(e) = else_block {
                    out.push_str(" else {\n");
                    block(out, e, depth + 1);
                    indent(out, depth);
                    out.push('}');
                }
                out.push('\n');
            }
            StmtKind::While { cond, body } => {
                out.push_str(&format!("while ({cond}) {{\n"));
                block(out, body, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
            _ => out.push_str(&format!("{s}\n")),
        }
    }

    let mut out = format!("pragma width {};\n\n", p.int_width);
    for func in &p.functions {
        out.push_str(&format!("fn {}(", func.name));
        for (i, param) in func.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("{}: {}", param.name, param.ty));
        }
        out.push_str(") {\n");
        block(&mut out, &func.body, 1);
        out.push_str("}\n\n");
    }
    out
}
