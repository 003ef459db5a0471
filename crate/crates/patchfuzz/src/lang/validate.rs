//! Static validation: name resolution, type checking, arity checks, entry
//! requirements and a recursion ban.
//!
//! Validation never aborts early; it collects findings so callers can report
//! everything wrong with a program at once. A program is executable only if
//! `ValidationReport::is_ok()`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ast::*;

pub const INTRINSICS: [&str; 3] = ["input", "len", "array"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FindingKind {
    MissingEntry,
    EntryHasParams,
    DuplicateFunction,
    ReservedName,
    DuplicateDeclaration,
    UndeclaredVariable,
    UnknownFunction,
    ArityMismatch,
    RecursiveCall,
    TypeMismatch,
    LiteralOutOfRange,
    InvalidAssignTarget,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FindingKind::MissingEntry => "missing entry",
            FindingKind::EntryHasParams => "entry has parameters",
            FindingKind::DuplicateFunction => "duplicate function",
            FindingKind::ReservedName => "reserved name",
            FindingKind::DuplicateDeclaration => "duplicate declaration",
            FindingKind::UndeclaredVariable => "undeclared variable",
            FindingKind::UnknownFunction => "unknown function",
            FindingKind::ArityMismatch => "arity mismatch",
            FindingKind::RecursiveCall => "recursive call",
            FindingKind::TypeMismatch => "type mismatch",
            FindingKind::LiteralOutOfRange => "literal out of range",
            FindingKind::InvalidAssignTarget => "invalid assignment target",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Finding {
    pub kind: FindingKind,
    pub stmt: Option<StmtId>,
    pub function: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)?;
        if let Some(func) = &self.function {
            write!(f, " (in fn {func}")?;
            if let Some(id) = self.stmt {
                write!(f, ", stmt {id}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has(&self, kind: FindingKind) -> bool {
        self.findings.iter().any(|f| f.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return write!(f, "ok");
        }
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{finding}")?;
        }
        Ok(())
    }
}

pub fn validate(program: &Program) -> ValidationReport {
    let mut v = Validator {
        program,
        functions: BTreeMap::new(),
        reaches: BTreeMap::new(),
        report: ValidationReport::default(),
        current_fn: String::new(),
        current_stmt: None,
        scopes: Vec::new(),
    };
    v.run();
    v.report
}

struct Validator<'a> {
    program: &'a Program,
    /// Function name -> parameter types (declaration order, first wins).
    functions: BTreeMap<&'a str, Vec<Type>>,
    /// Function name -> set of functions reachable through calls.
    reaches: BTreeMap<&'a str, BTreeSet<&'a str>>,
    report: ValidationReport,
    current_fn: String,
    current_stmt: Option<StmtId>,
    scopes: Vec<BTreeMap<String, Type>>,
}

impl<'a> Validator<'a> {
    fn finding(&mut self, kind: FindingKind, message: String) {
        self.report.findings.push(Finding {
            kind,
            stmt: self.current_stmt,
            function: if self.current_fn.is_empty() { None } else { Some(self.current_fn.clone()) },
            message,
        });
    }

    fn run(&mut self) {
        self.collect_functions();
        self.check_entry();
        self.compute_reachability();
        for func in &self.program.functions {
            self.check_function(func);
        }
    }

    fn collect_functions(&mut self) {
        for func in &self.program.functions {
            if INTRINSICS.contains(&func.name.as_str()) || func.name == "abs" {
                self.finding(
                    FindingKind::ReservedName,
                    format!("function name `{}` is reserved", func.name),
                );
            }
            if self.functions.contains_key(func.name.as_str()) {
                self.finding(
                    FindingKind::DuplicateFunction,
                    format!("function `{}` is defined more than once", func.name),
                );
            } else {
                self.functions
                    .insert(&func.name, func.params.iter().map(|p| p.ty).collect());
            }
        }
    }

    fn check_entry(&mut self) {
        match self.program.function(&self.program.entry) {
            None => self.finding(
                FindingKind::MissingEntry,
                format!("no `{}` function", self.program.entry),
            ),
            Some(f) if !f.params.is_empty() => self.finding(
                FindingKind::EntryHasParams,
                format!("`{}` must take no parameters", self.program.entry),
            ),
            _ => {}
        }
    }

    /// Transitive closure of the call graph; a function reaching itself means
    /// recursion, which the detour interpreter cannot bound statically.
    fn compute_reachability(&mut self) {
        let mut direct: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for func in &self.program.functions {
            let mut callees = BTreeSet::new();
            collect_callees(&func.body, &mut callees);
            direct.insert(&func.name, callees);
        }
        for func in &self.program.functions {
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            let mut stack: Vec<&str> = direct.get(func.name.as_str()).into_iter().flatten().copied().collect();
            while let Some(callee) = stack.pop() {
                if seen.insert(callee) {
                    if let Some(next) = direct.get(callee) {
                        stack.extend(next.iter().copied());
                    }
                }
            }
            self.reaches.insert(&func.name, seen);
        }
    }

    fn check_function(&mut self, func: &'a FunctionDef) {
        self.current_fn = func.name.clone();
        self.current_stmt = None;
        self.scopes.clear();
        self.scopes.push(BTreeMap::new());
        for param in &func.params {
            if is_cf_temp(&param.name) {
                self.finding(
                    FindingKind::ReservedName,
                    format!("`{}` uses the reserved `{CF_TEMP_PREFIX}` prefix", param.name),
                );
            }
            if self.scopes[0].insert(param.name.clone(), param.ty).is_some() {
                self.finding(
                    FindingKind::DuplicateDeclaration,
                    format!("parameter `{}` is declared twice", param.name),
                );
            }
        }
        self.check_block(&func.body);
        self.current_fn.clear();
    }

    fn check_block(&mut self, block: &Block) {
        self.scopes.push(BTreeMap::new());
        for stmt in &block.stmts {
            self.check_stmt(stmt);
        }
        self.scopes.pop();
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn check_stmt(&mut self, stmt: &Stmt) {
        self.current_stmt = Some(stmt.id);
        match &stmt.kind {
            StmtKind::Decl { name, init } => {
                let ty = self.type_of(init);
                if is_cf_temp(name) {
                    // User programs may not claim the refactoring namespace;
                    // this is what makes conditional extraction collision-free.
                    self.finding(
                        FindingKind::ReservedName,
                        format!("`{name}` uses the reserved `{CF_TEMP_PREFIX}` prefix"),
                    );
                }
                if self.lookup(name).is_some() {
                    self.finding(
                        FindingKind::DuplicateDeclaration,
                        format!("`{name}` is already visible here"),
                    );
                } else {
                    self.scopes.last_mut().unwrap().insert(name.clone(), ty);
                }
            }
            StmtKind::Assign { target, value } => {
                let vty = self.type_of(value);
                match target {
                    Expr::Var(name) => match self.lookup(name) {
                        Some(tty) => {
                            if tty != vty {
                                self.finding(
                                    FindingKind::TypeMismatch,
                                    format!("cannot assign {vty} to `{name}: {tty}`"),
                                );
                            }
                        }
                        None => self.finding(
                            FindingKind::UndeclaredVariable,
                            format!("`{name}` is not declared"),
                        ),
                    },
                    Expr::Index { .. } => {
                        let tty = self.type_of(target);
                        if tty != Type::Int || vty != Type::Int {
                            self.finding(
                                FindingKind::TypeMismatch,
                                "indexed assignment stores an int".to_string(),
                            );
                        }
                    }
                    _ => self.finding(
                        FindingKind::InvalidAssignTarget,
                        "assignment target must be a variable or index".to_string(),
                    ),
                }
            }
            StmtKind::If { cond, then_block, else_block } => {
                self.expect_int(cond, "condition");
                self.check_block(then_block);
                if let Some(e) = else_block {
                    self.check_block(e);
                }
            }
            StmtKind::While { cond, body } => {
                self.expect_int(cond, "condition");
                self.check_block(body);
            }
            StmtKind::Return(e) => self.expect_int(e, "return value"),
            StmtKind::Print(e) => self.expect_int(e, "print argument"),
            StmtKind::Assert(e) => self.expect_int(e, "assert argument"),
            StmtKind::ExprStmt(e) => {
                self.type_of(e);
            }
        }
        self.current_stmt = None;
    }

    fn expect_int(&mut self, e: &Expr, what: &str) {
        if self.type_of(e) != Type::Int {
            self.finding(FindingKind::TypeMismatch, format!("{what} must be an int"));
        }
    }

    /// Infer the type of `e`, reporting findings along the way. Errors
    /// recover as `Int` so one mistake doesn't cascade.
    fn type_of(&mut self, e: &Expr) -> Type {
        match e {
            Expr::Const(v) => {
                if !self.program.int_width.contains(*v) {
                    self.finding(
                        FindingKind::LiteralOutOfRange,
                        format!("{v} does not fit in {} bits", self.program.int_width),
                    );
                }
                Type::Int
            }
            Expr::Var(name) => match self.lookup(name) {
                Some(ty) => ty,
                None => {
                    self.finding(
                        FindingKind::UndeclaredVariable,
                        format!("`{name}` is not declared"),
                    );
                    Type::Int
                }
            },
            Expr::Index { base, index } => {
                if self.type_of(base) != Type::Array {
                    self.finding(FindingKind::TypeMismatch, "indexed value must be an array".into());
                }
                if self.type_of(index) != Type::Int {
                    self.finding(FindingKind::TypeMismatch, "index must be an int".into());
                }
                Type::Int
            }
            Expr::Unary { operand, .. } => {
                if self.type_of(operand) != Type::Int {
                    self.finding(FindingKind::TypeMismatch, "unary operand must be an int".into());
                }
                Type::Int
            }
            Expr::Binary { op, lhs, rhs } => {
                if self.type_of(lhs) != Type::Int || self.type_of(rhs) != Type::Int {
                    self.finding(
                        FindingKind::TypeMismatch,
                        format!("operands of `{}` must be ints", op.symbol()),
                    );
                }
                Type::Int
            }
            Expr::Call { callee, args } => self.check_call(callee, args),
        }
    }

    fn check_call(&mut self, callee: &str, args: &[Expr]) -> Type {
        let arg_types: Vec<Type> = args.iter().map(|a| self.type_of(a)).collect();
        match callee {
            "input" => {
                if !args.is_empty() {
                    self.finding(FindingKind::ArityMismatch, "input takes no arguments".into());
                }
                Type::Int
            }
            "len" => {
                if arg_types.len() != 1 {
                    self.finding(FindingKind::ArityMismatch, "len takes one array".into());
                } else if arg_types[0] != Type::Array {
                    self.finding(FindingKind::TypeMismatch, "len takes an array".into());
                }
                Type::Int
            }
            "array" => {
                if arg_types.len() != 1 {
                    self.finding(FindingKind::ArityMismatch, "array takes one length".into());
                } else if arg_types[0] != Type::Int {
                    self.finding(FindingKind::TypeMismatch, "array length must be an int".into());
                }
                Type::Array
            }
            _ => {
                let Some(params) = self.functions.get(callee).cloned() else {
                    self.finding(
                        FindingKind::UnknownFunction,
                        format!("`{callee}` is not defined"),
                    );
                    return Type::Int;
                };
                if params.len() != arg_types.len() {
                    self.finding(
                        FindingKind::ArityMismatch,
                        format!("`{callee}` takes {} arguments, got {}", params.len(), arg_types.len()),
                    );
                } else {
                    for (i, (want, got)) in params.iter().zip(&arg_types).enumerate() {
                        if want != got {
                            self.finding(
                                FindingKind::TypeMismatch,
                                format!("argument {} of `{callee}` must be {want}", i + 1),
                            );
                        }
                    }
                }
                if self
                    .reaches
                    .get(callee)
                    .is_some_and(|r| r.contains(self.current_fn.as_str()))
                    || callee == self.current_fn
                {
                    self.finding(
                        FindingKind::RecursiveCall,
                        format!("call to `{callee}` creates recursion"),
                    );
                }
                Type::Int
            }
        }
    }
}

fn collect_callees<'a>(block: &'a Block, out: &mut BTreeSet<&'a str>) {
    fn walk_expr<'a>(e: &'a Expr, out: &mut BTreeSet<&'a str>) {
        if let Expr::Call { callee, .. } = e {
            if !INTRINSICS.contains(&callee.as_str()) {
                out.insert(callee);
            }
        }
        for i in 0..e.child_count() {
            walk_expr(e.child(i).unwrap(), out);
        }
    }
    for stmt in &block.stmts {
        for root in stmt.expr_roots() {
            walk_expr(root, out);
        }
        match &stmt.kind {
            StmtKind::If { then_block, else_block, .. } => {
                collect_callees(then_block, out);
                if let Some(e) = else_block {
                    collect_callees(e, out);
                }
            }
            StmtKind::While { body, .. } => collect_callees(body, out),
            _ => {}
        }
    }
}

impl ValidationReport {
    /// True if the only findings are reserved-name hits on extraction
    /// temporaries. Refactored programs re-validate to exactly this state.
    pub fn is_ok_modulo_cf_temps(&self) -> bool {
        self.findings
            .iter()
            .all(|f| f.kind == FindingKind::ReservedName && f.message.contains(CF_TEMP_PREFIX))
    }
}
