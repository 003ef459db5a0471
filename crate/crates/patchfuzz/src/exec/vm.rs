//! The virtual machine. One `Vm` instance owns all run scratch (coverage
//! map, operand stack, frames, heap, output buffer) and is reused across
//! runs, so a validation campaign allocates almost nothing per execution.
//!
//! Detours are checked at every statement boundary. When one fires, the
//! resolved patch body is interpreted against the live frame, a pseudo edge
//! tied to the patch digest is recorded, and control resumes after the
//! replaced statement (or returns, or crashes). Everything a patch body can
//! do charges the same step budget as compiled code, one step per node.
//!
//! Budget semantics are exact: a run crashes with `StepLimitExceeded` if and
//! only if `steps_used == max_steps`. Normal completions therefore always
//! report `steps_used < max_steps`, and other crash kinds do too.

use crate::lang::{BinOp, IntWidth, StmtId, UnOp};
use crate::patch::detour::{DetourTable, ResolvedExpr, ResolvedStmt};

use super::bytecode::{Bytecode, Insn};
use super::coverage::{edge_index, CoverageMap, EdgeSet};

/// Per-array allocation cap, in cells.
const MAX_ARRAY_LEN: u64 = 1 << 20;
/// Whole-run allocation cap, in cells. The heap is not freed mid-run.
const MAX_HEAP_CELLS: u64 = 1 << 22;
/// Nested patch-body call depth before the run is charged out. Guards the
/// host stack against call cycles routed through multiple detours, which the
/// static recursion checks cannot see.
const MAX_INTERP_DEPTH: u32 = 100;

/// Return-address sentinel: popping this frame finishes the run.
const RET_DONE: u32 = u32::MAX;
/// Return-address sentinel: popping this frame resumes a patch body.
const RET_NESTED: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashKind {
    IntegerOverflow,
    OutOfBounds,
    DivByZero,
    AssertFailure,
    StepLimitExceeded,
}

impl std::fmt::Display for CrashKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CrashKind::IntegerOverflow => "integer overflow",
            CrashKind::OutOfBounds => "out of bounds",
            CrashKind::DivByZero => "division by zero",
            CrashKind::AssertFailure => "assertion failure",
            CrashKind::StepLimitExceeded => "step limit exceeded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Ran to completion; carries the entry function's return value.
    Normal(i64),
    /// Trapped at the statement identified by `at`.
    Crash { kind: CrashKind, at: StmtId },
}

impl Outcome {
    pub fn is_crash(&self) -> bool {
        matches!(self, Outcome::Crash { .. })
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, Outcome::Normal(_))
    }

    pub fn crash_kind(&self) -> Option<CrashKind> {
        match self {
            Outcome::Crash { kind, .. } => Some(*kind),
            Outcome::Normal(_) => None,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Normal(v) => write!(f, "normal exit ({v})"),
            Outcome::Crash { kind, at } => write!(f, "{kind} at statement {at}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecLimits {
    pub max_steps: u64,
}

impl ExecLimits {
    pub fn with_steps(max_steps: u64) -> ExecLimits {
        ExecLimits { max_steps }
    }
}

impl Default for ExecLimits {
    fn default() -> ExecLimits {
        ExecLimits { max_steps: 200_000 }
    }
}

/// Everything one execution produced.
#[derive(Debug, Clone)]
pub struct ExecResult {
    pub outcome: Outcome,
    /// Raw bytes printed by the program.
    pub output: Vec<u8>,
    pub coverage: EdgeSet,
    /// Sorted, deduplicated map indices of the pseudo edges recorded by
    /// detour firings. Subtracting these from two runs' edge sets compares
    /// native control flow only.
    pub patch_edges: Vec<u16>,
    pub steps_used: u64,
}

struct Frame {
    /// Index of this frame's slot 0 within the shared slot stack. An index,
    /// not a pointer: the stack may reallocate underneath it.
    base: u32,
    ret_pc: u32,
}

struct RunCx<'a> {
    bc: &'a Bytecode,
    detours: &'a DetourTable,
    input: &'a [u8],
    budget: u64,
}

enum StepEvent {
    Next,
    /// The entry frame returned.
    Finished(i64),
    /// A frame pushed by a patch-body call returned.
    NestedReturn(i64),
}

/// Patch-body statement result.
enum Flow {
    Cont,
    Ret(i64),
}

/// Reusable executor. Create once, call [`Vm::run`] many times.
pub struct Vm {
    map: CoverageMap,
    stack: Vec<i64>,
    slots: Vec<i64>,
    frames: Vec<Frame>,
    heap: Vec<Vec<i64>>,
    heap_cells: u64,
    output: Vec<u8>,
    patch_edges: Vec<u16>,
    pc: u32,
    steps_used: u64,
    current_stmt: StmtId,
    input_pos: usize,
    interp_depth: u32,
    trace: Vec<StmtId>,
    traced: Vec<bool>,
}

impl Default for Vm {
    fn default() -> Self {
        Self::new()
    }
}

impl Vm {
    pub fn new() -> Vm {
        Vm {
            map: CoverageMap::new(),
            stack: Vec::with_capacity(64),
            slots: Vec::with_capacity(64),
            frames: Vec::with_capacity(8),
            heap: Vec::new(),
            heap_cells: 0,
            output: Vec::new(),
            patch_edges: Vec::new(),
            pc: 0,
            steps_used: 0,
            current_stmt: 0,
            input_pos: 0,
            interp_depth: 0,
            trace: Vec::new(),
            traced: Vec::new(),
        }
    }

    pub fn run(
        &mut self,
        bc: &Bytecode,
        detours: &DetourTable,
        input: &[u8],
        limits: ExecLimits,
    ) -> ExecResult {
        let outcome = self.run_inner::<false>(bc, detours, input, limits);
        self.finish(outcome)
    }

    /// Like [`Vm::run`], additionally reporting the patchable statements in
    /// first-execution order. This is how crash traces become seed locations.
    pub fn run_traced(
        &mut self,
        bc: &Bytecode,
        detours: &DetourTable,
        input: &[u8],
        limits: ExecLimits,
    ) -> (ExecResult, Vec<StmtId>) {
        let outcome = self.run_inner::<true>(bc, detours, input, limits);
        let trace = std::mem::take(&mut self.trace);
        (self.finish(outcome), trace)
    }

    fn finish(&mut self, outcome: Outcome) -> ExecResult {
        self.patch_edges.sort_unstable();
        self.patch_edges.dedup();
        ExecResult {
            outcome,
            output: std::mem::take(&mut self.output),
            coverage: self.map.snapshot(),
            patch_edges: std::mem::take(&mut self.patch_edges),
            steps_used: self.steps_used,
        }
    }

    fn run_inner<const TRACE: bool>(
        &mut self,
        bc: &Bytecode,
        detours: &DetourTable,
        input: &[u8],
        limits: ExecLimits,
    ) -> Outcome {
        self.map.reset();
        self.stack.clear();
        self.slots.clear();
        self.frames.clear();
        self.heap.clear();
        self.heap_cells = 0;
        self.output.clear();
        self.patch_edges.clear();
        self.steps_used = 0;
        self.current_stmt = 0;
        self.input_pos = 0;
        self.interp_depth = 0;
        if TRACE {
            self.trace.clear();
            self.traced.clear();
            self.traced.resize(bc.n_stmts as usize, false);
        }

        let cx = RunCx { bc, detours, input, budget: limits.max_steps };
        let entry = &bc.funcs[bc.entry_func as usize];
        self.slots.resize(entry.n_slots as usize, 0);
        self.frames.push(Frame { base: 0, ret_pc: RET_DONE });
        self.pc = entry.entry_pc;

        loop {
            match self.step::<TRACE>(&cx) {
                Ok(StepEvent::Next) => {}
                Ok(StepEvent::Finished(v)) => return Outcome::Normal(v),
                Ok(StepEvent::NestedReturn(_)) => {
                    unreachable!("nested return reached the top-level loop")
                }
                Err(kind) => return Outcome::Crash { kind, at: self.current_stmt },
            }
        }
    }

    /// Charge one step. Exactly at the budget the run is declared out of
    /// steps, so `steps_used == budget` iff the run crashed with
    /// `StepLimitExceeded`.
    #[inline]
    fn charge(&mut self, budget: u64) -> Result<(), CrashKind> {
        self.steps_used += 1;
        if self.steps_used >= budget {
            self.steps_used = budget;
            return Err(CrashKind::StepLimitExceeded);
        }
        Ok(())
    }

    #[inline]
    fn base(&self) -> usize {
        self.frames.last().expect("a frame is always live").base as usize
    }

    #[inline]
    fn pop(&mut self) -> i64 {
        self.stack.pop().expect("compiled code balances the stack")
    }

    fn step<const TRACE: bool>(&mut self, cx: &RunCx) -> Result<StepEvent, CrashKind> {
        self.charge(cx.budget)?;
        let insn = cx.bc.insns[self.pc as usize];
        self.pc += 1;
        match insn {
            Insn::Stmt(id) => {
                self.current_stmt = id;
                if TRACE && !self.traced[id as usize] && cx.bc.is_patchable(id) {
                    self.traced[id as usize] = true;
                    self.trace.push(id);
                }
                if let Some(entry) = cx.detours.get(id) {
                    self.patch_edges.push(edge_index(self.map.prev_loc, entry.pseudo_block));
                    self.map.record_edge(self.map.prev_loc, entry.pseudo_block);
                    let base = self.base();
                    match self.interp_stmt::<TRACE>(cx, &entry.body, base)? {
                        Flow::Cont => self.pc = entry.resume,
                        Flow::Ret(v) => return self.do_ret(v),
                    }
                }
                Ok(StepEvent::Next)
            }
            Insn::Block(b) => {
                self.map.record(b);
                Ok(StepEvent::Next)
            }
            Insn::Const(v) => {
                self.stack.push(v);
                Ok(StepEvent::Next)
            }
            Insn::Load(slot) => {
                let v = self.slots[self.base() + slot as usize];
                self.stack.push(v);
                Ok(StepEvent::Next)
            }
            Insn::Store(slot) => {
                let v = self.pop();
                let base = self.base();
                self.slots[base + slot as usize] = v;
                Ok(StepEvent::Next)
            }
            Insn::LoadIdx => {
                let index = self.pop();
                let handle = self.pop();
                let v = self.load_index(handle, index)?;
                self.stack.push(v);
                Ok(StepEvent::Next)
            }
            Insn::StoreIdx => {
                let value = self.pop();
                let index = self.pop();
                let handle = self.pop();
                self.store_index(handle, index, value)?;
                Ok(StepEvent::Next)
            }
            Insn::Un(op) => {
                let v = self.pop();
                let r = eval_un(op, v, cx.bc.int_width)?;
                self.stack.push(r);
                Ok(StepEvent::Next)
            }
            Insn::Bin(op) => {
                let rhs = self.pop();
                let lhs = self.pop();
                let r = eval_bin(op, lhs, rhs, cx.bc.int_width)?;
                self.stack.push(r);
                Ok(StepEvent::Next)
            }
            Insn::Jmp(t) => {
                self.pc = t;
                Ok(StepEvent::Next)
            }
            Insn::Jz(t) => {
                if self.pop() == 0 {
                    self.pc = t;
                }
                Ok(StepEvent::Next)
            }
            Insn::Jnz(t) => {
                if self.pop() != 0 {
                    self.pc = t;
                }
                Ok(StepEvent::Next)
            }
            Insn::Call { func, argc } => {
                let info = &cx.bc.funcs[func as usize];
                let base = self.slots.len();
                self.slots.resize(base + info.n_slots as usize, 0);
                let args_start = self.stack.len() - argc as usize;
                for (i, v) in self.stack.drain(args_start..).enumerate() {
                    self.slots[base + i] = v;
                }
                self.frames.push(Frame { base: base as u32, ret_pc: self.pc });
                self.pc = info.entry_pc;
                Ok(StepEvent::Next)
            }
            Insn::Ret => {
                let v = self.pop();
                self.do_ret(v)
            }
            Insn::Print => {
                let v = self.pop();
                self.print(v);
                Ok(StepEvent::Next)
            }
            Insn::Assert => {
                if self.pop() == 0 {
                    return Err(CrashKind::AssertFailure);
                }
                Ok(StepEvent::Next)
            }
            Insn::Input => {
                let v = self.next_input(cx);
                self.stack.push(v);
                Ok(StepEvent::Next)
            }
            Insn::Len => {
                let handle = self.pop();
                let n = self.array(handle)?.len() as i64;
                self.stack.push(n);
                Ok(StepEvent::Next)
            }
            Insn::NewArray => {
                let n = self.pop();
                let handle = self.new_array(n)?;
                self.stack.push(handle);
                Ok(StepEvent::Next)
            }
            Insn::Pop => {
                self.pop();
                Ok(StepEvent::Next)
            }
        }
    }

    fn do_ret(&mut self, v: i64) -> Result<StepEvent, CrashKind> {
        let frame = self.frames.pop().expect("a frame is always live");
        self.slots.truncate(frame.base as usize);
        match frame.ret_pc {
            RET_DONE => Ok(StepEvent::Finished(v)),
            RET_NESTED => Ok(StepEvent::NestedReturn(v)),
            ret => {
                self.stack.push(v);
                self.pc = ret;
                Ok(StepEvent::Next)
            }
        }
    }

    fn print(&mut self, v: i64) {
        let mut buf = [0u8; 20];
        let mut n = v.unsigned_abs();
        let mut at = buf.len();
        loop {
            at -= 1;
            buf[at] = b'0' + (n % 10) as u8;
            n /= 10;
            if n == 0 {
                break;
            }
        }
        if v < 0 {
            self.output.push(b'-');
        }
        self.output.extend_from_slice(&buf[at..]);
        self.output.push(b'\n');
    }

    fn next_input(&mut self, cx: &RunCx) -> i64 {
        match cx.input.get(self.input_pos) {
            None => 0,
            Some(&b) => {
                self.input_pos += 1;
                if cx.bc.int_width == IntWidth::W8 {
                    b as i8 as i64
                } else {
                    b as i64
                }
            }
        }
    }

    fn array(&self, handle: i64) -> Result<&[i64], CrashKind> {
        if handle < 1 || handle as usize > self.heap.len() {
            return Err(CrashKind::OutOfBounds);
        }
        Ok(&self.heap[handle as usize - 1])
    }

    fn load_index(&self, handle: i64, index: i64) -> Result<i64, CrashKind> {
        let arr = self.array(handle)?;
        if index < 0 || index as usize >= arr.len() {
            return Err(CrashKind::OutOfBounds);
        }
        Ok(arr[index as usize])
    }

    fn store_index(&mut self, handle: i64, index: i64, value: i64) -> Result<(), CrashKind> {
        if handle < 1 || handle as usize > self.heap.len() {
            return Err(CrashKind::OutOfBounds);
        }
        let arr = &mut self.heap[handle as usize - 1];
        if index < 0 || index as usize >= arr.len() {
            return Err(CrashKind::OutOfBounds);
        }
        arr[index as usize] = value;
        Ok(())
    }

    fn new_array(&mut self, n: i64) -> Result<i64, CrashKind> {
        if n < 0 || n as u64 > MAX_ARRAY_LEN || self.heap_cells + n as u64 > MAX_HEAP_CELLS {
            return Err(CrashKind::OutOfBounds);
        }
        self.heap_cells += n as u64;
        self.heap.push(vec![0; n as usize]);
        Ok(self.heap.len() as i64)
    }

    fn interp_stmt<const TRACE: bool>(
        &mut self,
        cx: &RunCx,
        stmt: &ResolvedStmt,
        base: usize,
    ) -> Result<Flow, CrashKind> {
        self.charge(cx.budget)?;
        match stmt {
            ResolvedStmt::Assign { slot, value } => {
                let v = self.interp_expr::<TRACE>(cx, value, base)?;
                self.slots[base + *slot as usize] = v;
                Ok(Flow::Cont)
            }
            ResolvedStmt::AssignIdx { base: arr, index, value } => {
                let handle = self.interp_expr::<TRACE>(cx, arr, base)?;
                let index = self.interp_expr::<TRACE>(cx, index, base)?;
                let value = self.interp_expr::<TRACE>(cx, value, base)?;
                self.store_index(handle, index, value)?;
                Ok(Flow::Cont)
            }
            ResolvedStmt::Print(e) => {
                let v = self.interp_expr::<TRACE>(cx, e, base)?;
                self.print(v);
                Ok(Flow::Cont)
            }
            ResolvedStmt::ExprStmt(e) => {
                self.interp_expr::<TRACE>(cx, e, base)?;
                Ok(Flow::Cont)
            }
            ResolvedStmt::Return(e) => {
                let v = self.interp_expr::<TRACE>(cx, e, base)?;
                Ok(Flow::Ret(v))
            }
        }
    }

    fn interp_expr<const TRACE: bool>(
        &mut self,
        cx: &RunCx,
        e: &ResolvedExpr,
        base: usize,
    ) -> Result<i64, CrashKind> {
        self.charge(cx.budget)?;
        match e {
            ResolvedExpr::Const(v) => Ok(*v),
            ResolvedExpr::Slot(slot) => Ok(self.slots[base + *slot as usize]),
            ResolvedExpr::Index { base: arr, index } => {
                let handle = self.interp_expr::<TRACE>(cx, arr, base)?;
                let index = self.interp_expr::<TRACE>(cx, index, base)?;
                self.load_index(handle, index)
            }
            ResolvedExpr::Unary { op, operand } => {
                let v = self.interp_expr::<TRACE>(cx, operand, base)?;
                eval_un(*op, v, cx.bc.int_width)
            }
            ResolvedExpr::Binary { op: BinOp::And, lhs, rhs } => {
                if self.interp_expr::<TRACE>(cx, lhs, base)? == 0 {
                    Ok(0)
                } else {
                    Ok((self.interp_expr::<TRACE>(cx, rhs, base)? != 0) as i64)
                }
            }
            ResolvedExpr::Binary { op: BinOp::Or, lhs, rhs } => {
                if self.interp_expr::<TRACE>(cx, lhs, base)? != 0 {
                    Ok(1)
                } else {
                    Ok((self.interp_expr::<TRACE>(cx, rhs, base)? != 0) as i64)
                }
            }
            ResolvedExpr::Binary { op, lhs, rhs } => {
                let l = self.interp_expr::<TRACE>(cx, lhs, base)?;
                let r = self.interp_expr::<TRACE>(cx, rhs, base)?;
                eval_bin(*op, l, r, cx.bc.int_width)
            }
            ResolvedExpr::Input => Ok(self.next_input(cx)),
            ResolvedExpr::Len(a) => {
                let handle = self.interp_expr::<TRACE>(cx, a, base)?;
                Ok(self.array(handle)?.len() as i64)
            }
            ResolvedExpr::NewArray(n) => {
                let n = self.interp_expr::<TRACE>(cx, n, base)?;
                self.new_array(n)
            }
            ResolvedExpr::Call { func, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.interp_expr::<TRACE>(cx, a, base)?);
                }
                self.call_function::<TRACE>(cx, *func, &vals)
            }
        }
    }

    /// Run a bytecode function to completion on behalf of a patch body.
    fn call_function<const TRACE: bool>(
        &mut self,
        cx: &RunCx,
        func: u16,
        args: &[i64],
    ) -> Result<i64, CrashKind> {
        self.interp_depth += 1;
        if self.interp_depth > MAX_INTERP_DEPTH {
            // Call cycles woven through several detours land here; treat
            // them like any other non-terminating run.
            self.interp_depth -= 1;
            self.steps_used = cx.budget;
            return Err(CrashKind::StepLimitExceeded);
        }
        let saved_pc = self.pc;
        let info = &cx.bc.funcs[func as usize];
        let base = self.slots.len();
        self.slots.resize(base + info.n_slots as usize, 0);
        self.slots[base..base + args.len()].copy_from_slice(args);
        self.frames.push(Frame { base: base as u32, ret_pc: RET_NESTED });
        self.pc = info.entry_pc;
        let result = loop {
            match self.step::<TRACE>(cx) {
                Ok(StepEvent::Next) => {}
                Ok(StepEvent::NestedReturn(v)) => break Ok(v),
                Ok(StepEvent::Finished(_)) => {
                    unreachable!("the entry frame sits below every nested frame")
                }
                Err(kind) => break Err(kind),
            }
        };
        self.pc = saved_pc;
        self.interp_depth -= 1;
        result
    }
}

#[inline]
fn check_width(v: i64, w: IntWidth) -> Result<i64, CrashKind> {
    if w.contains(v) {
        Ok(v)
    } else {
        Err(CrashKind::IntegerOverflow)
    }
}

#[inline]
fn eval_un(op: UnOp, v: i64, w: IntWidth) -> Result<i64, CrashKind> {
    match op {
        UnOp::Not => Ok((v == 0) as i64),
        // Operands fit the program width, so i64 math cannot itself wrap;
        // only the result's range check can trap.
        UnOp::Neg => check_width(-v, w),
        UnOp::Abs => check_width(v.abs(), w),
    }
}

#[inline]
fn eval_bin(op: BinOp, l: i64, r: i64, w: IntWidth) -> Result<i64, CrashKind> {
    let v = match op {
        BinOp::Add => l + r,
        BinOp::Sub => l - r,
        BinOp::Mul => l * r,
        BinOp::Div => {
            if r == 0 {
                return Err(CrashKind::DivByZero);
            }
            l / r
        }
        BinOp::Rem => {
            if r == 0 {
                return Err(CrashKind::DivByZero);
            }
            l % r
        }
        BinOp::Lt => return Ok((l < r) as i64),
        BinOp::Le => return Ok((l <= r) as i64),
        BinOp::Gt => return Ok((l > r) as i64),
        BinOp::Ge => return Ok((l >= r) as i64),
        BinOp::Eq => return Ok((l == r) as i64),
        BinOp::Ne => return Ok((l != r) as i64),
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators never reach eval_bin"),
    };
    check_width(v, w)
}
