//! Reference interpreter: a direct tree-walk over the AST, written from the
//! language rules alone, sharing no execution machinery with the bytecode VM.
//! Differential tests run both on the same (program, input) pair and require
//! identical outcomes and output bytes. The walker has no statement ids, no
//! coverage, and no bytecode — a bug would have to be implemented twice, in
//! two different shapes, to slip past the comparison.
//!
//! Semantics implemented here, independently of the VM:
//! * Integers are signed with the program's declared width; every arithmetic
//!   result (including unary negation and abs) must fit the width or the run
//!   crashes with an overflow. Division and remainder truncate toward zero
//!   and crash on a zero divisor.
//! * Comparisons yield 0/1. `&&` and `||` short-circuit and normalize to
//!   0/1. `!v` is 1 if v is zero, else 0.
//! * `input()` consumes one byte: at width 8 it is reinterpreted as a signed
//!   byte, at wider widths it is the unsigned byte value. At end of input it
//!   yields 0 without consuming.
//! * `array(n)` allocates n zeroed cells (negative or absurdly large n is an
//!   out-of-bounds crash) and evaluates to an opaque handle; indexing
//!   outside [0, len) crashes; `len(a)` reads the length. Assigning an array
//!   variable copies the handle, so both names alias one allocation.
//! * `print(e)` appends the decimal rendering of e and a newline to the
//!   output. `assert(e)` crashes the run when e evaluates to 0.
//! * Declarations are block-scoped and looked up innermost-first. Function
//!   calls pass scalar values (or array handles) by value; a function body
//!   falling off its end returns 0, as does `main`.

use patchfuzz::lang::{BinOp, Block, Expr, FunctionDef, IntWidth, Program, StmtKind, UnOp};

/// Crash classification, matching the engine's kinds by meaning (not by
/// sharing the type): the differential harness maps both sides to strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwCrash {
    Overflow,
    OutOfBounds,
    DivByZero,
    AssertFailure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TwOutcome {
    Normal(i64),
    Crash(TwCrash),
    /// The statement budget ran out; the run is considered non-terminating.
    Hang,
}

#[derive(Debug, Clone)]
pub struct TwResult {
    pub outcome: TwOutcome,
    pub output: Vec<u8>,
}

/// Largest allocation and heap the walker accepts; mirrors the engine's
/// documented limits so both sides crash on the same allocations.
const MAX_ARRAY_LEN: u64 = 1 << 20;
const MAX_HEAP_CELLS: usize = 1 << 22;

struct Walker<'p> {
    program: &'p Program,
    width: IntWidth,
    input: &'p [u8],
    input_pos: usize,
    output: Vec<u8>,
    heap: Vec<Vec<i64>>,
    /// Statements remaining before the run is declared hanging.
    fuel: u64,
    call_depth: u32,
}

/// Why a statement sequence stopped early.
enum Stop {
    Crash(TwCrash),
    Return(i64),
    Hang,
}

/// One lexical scope: names introduced by declarations (and parameters).
type Scope = Vec<(String, i64)>;

fn lookup<'a>(scopes: &'a mut [Scope], name: &str) -> Option<&'a mut i64> {
    scopes
        .iter_mut()
        .rev()
        .find_map(|s| s.iter_mut().rev().find(|(n, _)| n == name).map(|(_, v)| v))
}

/// Run `program` on `input`, spending at most `stmt_budget` statements.
pub fn run_treewalk(program: &Program, input: &[u8], stmt_budget: u64) -> TwResult {
    let mut w = Walker {
        program,
        width: program.int_width,
        input,
        input_pos: 0,
        output: Vec::new(),
        heap: Vec::new(),
        fuel: stmt_budget,
        call_depth: 0,
    };
    let entry = program
        .function(&program.entry)
        .expect("validated programs have an entry function");
    let outcome = match w.run_function(entry, &[]) {
        Ok(v) => TwOutcome::Normal(v),
        Err(Stop::Return(v)) => TwOutcome::Normal(v),
        Err(Stop::Crash(c)) => TwOutcome::Crash(c),
        Err(Stop::Hang) => TwOutcome::Hang,
    };
    TwResult { outcome, output: w.output }
}

impl<'p> Walker<'p> {
    /// Run a function body; `Ok` is the fall-off-the-end value 0.
    fn run_function(&mut self, func: &FunctionDef, args: &[i64]) -> Result<i64, Stop> {
        self.call_depth += 1;
        if self.call_depth > 64 {
            // Unbounded recursion: treat as non-termination, like any loop.
            self.call_depth -= 1;
            return Err(Stop::Hang);
        }
        let params: Scope = func
            .params
            .iter()
            .zip(args)
            .map(|(p, &v)| (p.name.clone(), v))
            .collect();
        let mut scopes = vec![params];
        let r = match self.run_block(&func.body, &mut scopes) {
            Ok(()) => Ok(0),
            Err(Stop::Return(v)) => Ok(v),
            Err(stop) => Err(stop),
        };
        self.call_depth -= 1;
        r
    }

    fn run_block(&mut self, block: &Block, scopes: &mut Vec<Scope>) -> Result<(), Stop> {
        scopes.push(Scope::new());
        let r = self.run_stmts(block, scopes);
        scopes.pop();
        r
    }

    fn run_stmts(&mut self, block: &Block, scopes: &mut Vec<Scope>) -> Result<(), Stop> {
        for stmt in &block.stmts {
            if self.fuel == 0 {
                return Err(Stop::Hang);
            }
            self.fuel -= 1;
            match &stmt.kind {
                StmtKind::Decl { name, init } => {
                    let v = self.eval(init, scopes)?;
                    scopes.last_mut().expect("scope stack nonempty").push((name.clone(), v));
                }
                StmtKind::Assign { target, value } => match target {
                    Expr::Var(name) => {
                        let v = self.eval(value, scopes)?;
                        *lookup(scopes, name).expect("validated: assigned variable exists") = v;
                    }
                    Expr::Index { base, index } => {
                        let handle = self.eval(base, scopes)?;
                        let index = self.eval(index, scopes)?;
                        let v = self.eval(value, scopes)?;
                        let arr = self.array_mut(handle)?;
                        if index < 0 || index as usize >= arr.len() {
                            return Err(Stop::Crash(TwCrash::OutOfBounds));
                        }
                        arr[index as usize] = v;
                    }
                    other => panic!("validated programs only assign vars/indexes, got {other}"),
                },
                StmtKind::If { cond, then_block, else_block } => {
                    if self.eval(cond, scopes)? != 0 {
                        self.run_block(then_block, scopes)?;
                    } else if let Some(e) = else_block {
                        self.run_block(e, scopes)?;
                    }
                }
                StmtKind::While { cond, body } => {
                    while self.eval(cond, scopes)? != 0 {
                        self.run_block(body, scopes)?;
                        if self.fuel == 0 {
                            return Err(Stop::Hang);
                        }
                        self.fuel -= 1;
                    }
                }
                StmtKind::Return(e) => {
                    let v = self.eval(e, scopes)?;
                    return Err(Stop::Return(v));
                }
                StmtKind::Print(e) => {
                    let v = self.eval(e, scopes)?;
                    self.output.extend_from_slice(v.to_string().as_bytes());
                    self.output.push(b'\n');
                }
                StmtKind::Assert(e) => {
                    if self.eval(e, scopes)? == 0 {
                        return Err(Stop::Crash(TwCrash::AssertFailure));
                    }
                }
                StmtKind::ExprStmt(e) => {
                    self.eval(e, scopes)?;
                }
            }
        }
        Ok(())
    }

    fn eval(&mut self, e: &Expr, scopes: &mut Vec<Scope>) -> Result<i64, Stop> {
        match e {
            Expr::Const(v) => Ok(*v),
            Expr::Var(name) => {
                Ok(*lookup(scopes, name).expect("validated: referenced variable exists"))
            }
            Expr::Index { base, index } => {
                let handle = self.eval(base, scopes)?;
                let index = self.eval(index, scopes)?;
                let arr = self.array(handle)?;
                if index < 0 || index as usize >= arr.len() {
                    return Err(Stop::Crash(TwCrash::OutOfBounds));
                }
                Ok(arr[index as usize])
            }
            Expr::Unary { op, operand } => {
                let v = self.eval(operand, scopes)?;
                match op {
                    UnOp::Not => Ok((v == 0) as i64),
                    UnOp::Neg => self.fit(-v),
                    UnOp::Abs => self.fit(v.abs()),
                }
            }
            Expr::Binary { op: BinOp::And, lhs, rhs } => {
                if self.eval(lhs, scopes)? == 0 {
                    Ok(0)
                } else {
                    Ok((self.eval(rhs, scopes)? != 0) as i64)
                }
            }
            Expr::Binary { op: BinOp::Or, lhs, rhs } => {
                if self.eval(lhs, scopes)? != 0 {
                    Ok(1)
                } else {
                    Ok((self.eval(rhs, scopes)? != 0) as i64)
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.eval(lhs, scopes)?;
                let r = self.eval(rhs, scopes)?;
                match op {
                    BinOp::Add => self.fit(l + r),
                    BinOp::Sub => self.fit(l - r),
                    BinOp::Mul => self.fit(l * r),
                    BinOp::Div if r == 0 => Err(Stop::Crash(TwCrash::DivByZero)),
                    BinOp::Div => self.fit(l / r),
                    BinOp::Rem if r == 0 => Err(Stop::Crash(TwCrash::DivByZero)),
                    BinOp::Rem => self.fit(l % r),
                    BinOp::Lt => Ok((l < r) as i64),
                    BinOp::Le => Ok((l <= r) as i64),
                    BinOp::Gt => Ok((l > r) as i64),
                    BinOp::Ge => Ok((l >= r) as i64),
                    BinOp::Eq => Ok((l == r) as i64),
                    BinOp::Ne => Ok((l != r) as i64),
                    BinOp::And | BinOp::Or => unreachable!("handled above"),
                }
            }
            Expr::Call { callee, args } => match callee.as_str() {
                "input" => Ok(self.next_input()),
                "len" => {
                    let handle = self.eval(&args[0], scopes)?;
                    Ok(self.array(handle)?.len() as i64)
                }
                "array" => {
                    let n = self.eval(&args[0], scopes)?;
                    self.alloc(n)
                }
                name => {
                    let mut vals = Vec::with_capacity(args.len());
                    for a in args {
                        vals.push(self.eval(a, scopes)?);
                    }
                    let func = self
                        .program
                        .function(name)
                        .expect("validated: called function exists");
                    self.run_function(func, &vals)
                }
            },
        }
    }

    fn fit(&self, v: i64) -> Result<i64, Stop> {
        if self.width.contains(v) {
            Ok(v)
        } else {
            Err(Stop::Crash(TwCrash::Overflow))
        }
    }

    fn next_input(&mut self) -> i64 {
        match self.input.get(self.input_pos) {
            None => 0,
            Some(&b) => {
                self.input_pos += 1;
                if self.width == IntWidth::W8 {
                    b as i8 as i64
                } else {
                    b as i64
                }
            }
        }
    }

    fn alloc(&mut self, n: i64) -> Result<i64, Stop> {
        let cells: usize = self.heap.iter().map(Vec::len).sum();
        if n < 0 || n as u64 > MAX_ARRAY_LEN || cells + n as usize > MAX_HEAP_CELLS {
            return Err(Stop::Crash(TwCrash::OutOfBounds));
        }
        self.heap.push(vec![0; n as usize]);
        Ok(self.heap.len() as i64)
    }

    fn array(&self, handle: i64) -> Result<&[i64], Stop> {
        if handle < 1 || handle as usize > self.heap.len() {
            return Err(Stop::Crash(TwCrash::OutOfBounds));
        }
        Ok(&self.heap[handle as usize - 1])
    }

    fn array_mut(&mut self, handle: i64) -> Result<&mut Vec<i64>, Stop> {
        if handle < 1 || handle as usize > self.heap.len() {
            return Err(Stop::Crash(TwCrash::OutOfBounds));
        }
        Ok(&mut self.heap[handle as usize - 1])
    }
}
