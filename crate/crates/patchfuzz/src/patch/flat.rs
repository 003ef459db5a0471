//! On-disk patch format ("flat patches") and the patch digest.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "FPZ1"
//! version  u8       1
//! stmt_id  u32
//! lineage  u16
//! nodes    pre-order node stream (tags below)
//! names    u16 count, then per name: u8 length + UTF-8 bytes
//! ```
//!
//! Statement tags: 0x01 Assign(target, value), 0x02 Decl(name: u16, init),
//! 0x03 Print(e), 0x04 ExprStmt(e), 0x05 Return(e).
//! Expression tags: 0x10 Const(i64), 0x11 Var(name: u16), 0x12 Index(base,
//! index), 0x13 Unary(op: u8, operand), 0x14 Binary(op: u8, lhs, rhs),
//! 0x15 Call(callee: u16, argc: u8, args...).
//!
//! The name table always lists every variable visible at the location
//! (sorted) followed by every callable name (intrinsics plus program
//! functions, sorted), regardless of which names the statement uses. This
//! makes the encoded bytes a stable function of (location, statement):
//! encoding is injective per location, so the digest — SHA-256 over the
//! encoding with lineage zeroed, truncated to 16 bytes — identifies patch
//! content independent of mutation history.
//!
//! The decoder never panics on arbitrary bytes; every malformed input maps
//! to [`FlatError`].

use sha2::{Digest as _, Sha256};

use super::Digest;
use crate::exec::Bytecode;
use crate::lang::{BinOp, Expr, Stmt, StmtId, StmtKind, UnOp, INTRINSICS};

pub const MAGIC: &[u8; 4] = b"FPZ1";
pub const VERSION: u8 = 1;

/// Maximum expression nesting the decoder accepts.
const MAX_DEPTH: usize = 64;
/// Caps that keep crafted inputs from ballooning allocation.
const MAX_NAMES: usize = 4_096;
const MAX_ARGS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlatError {
    #[error("malformed patch: {0}")]
    FormatError(String),
    #[error("statement {0} does not exist or is not patchable")]
    UnknownStmtId(StmtId),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, FlatError> {
    Err(FlatError::FormatError(msg.into()))
}

/// The name table for a location: visible variables (sorted), then callable
/// names (sorted intrinsics + program functions).
pub fn name_table(stmt_id: StmtId, bc: &Bytecode) -> Result<Vec<String>, FlatError> {
    let bindings = bc.bindings_at(stmt_id).ok_or(FlatError::UnknownStmtId(stmt_id))?;
    let mut names: Vec<String> = bindings.names().map(str::to_string).collect();
    names.sort();
    let mut callables: Vec<String> = INTRINSICS.iter().map(|s| s.to_string()).collect();
    callables.extend(bc.funcs.iter().map(|f| f.name.clone()));
    callables.sort();
    callables.dedup();
    names.extend(callables);
    Ok(names)
}

/// Serialize a (location, statement, lineage) triple.
pub fn serialize_patch_parts(
    stmt_id: StmtId,
    stmt: &Stmt,
    lineage: u16,
    bc: &Bytecode,
) -> Result<Vec<u8>, FlatError> {
    let names = name_table(stmt_id, bc)?;
    let index_of = |name: &str| -> Result<u16, FlatError> {
        names
            .iter()
            .position(|n| n == name)
            .map(|i| i as u16)
            .ok_or_else(|| FlatError::FormatError(format!("`{name}` is not visible at statement {stmt_id}")))
    };

    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&stmt_id.to_le_bytes());
    out.extend_from_slice(&lineage.to_le_bytes());
    encode_stmt(&mut out, stmt, &index_of)?;
    out.extend_from_slice(&(names.len() as u16).to_le_bytes());
    for name in &names {
        if name.len() > u8::MAX as usize {
            return format_err("name too long");
        }
        out.push(name.len() as u8);
        out.extend_from_slice(name.as_bytes());
    }
    Ok(out)
}

/// Serialize a [`super::Patch`].
pub fn serialize_patch(patch: &super::Patch, bc: &Bytecode) -> Result<Vec<u8>, FlatError> {
    serialize_patch_parts(patch.loc.stmt_id, &patch.stmt, patch.lineage, bc)
}

/// Digest of (location, statement): encoding with lineage forced to zero,
/// hashed and truncated.
pub fn digest_of(stmt_id: StmtId, stmt: &Stmt, bc: &Bytecode) -> Result<Digest, FlatError> {
    let bytes = serialize_patch_parts(stmt_id, stmt, 0, bc)?;
    let hash: [u8; 32] = Sha256::digest(&bytes).into();
    let mut out = [0u8; 16];
    out.copy_from_slice(&hash[..16]);
    Ok(Digest(out))
}

fn encode_stmt(
    out: &mut Vec<u8>,
    stmt: &Stmt,
    index_of: &impl Fn(&str) -> Result<u16, FlatError>,
) -> Result<(), FlatError> {
    match &stmt.kind {
        StmtKind::Assign { target, value } => {
            out.push(0x01);
            encode_expr(out, target, index_of)?;
            encode_expr(out, value, index_of)
        }
        StmtKind::Decl { name, init } => {
            out.push(0x02);
            out.extend_from_slice(&index_of(name)?.to_le_bytes());
            encode_expr(out, init, index_of)
        }
        StmtKind::Print(e) => {
            out.push(0x03);
            encode_expr(out, e, index_of)
        }
        StmtKind::ExprStmt(e) => {
            out.push(0x04);
            encode_expr(out, e, index_of)
        }
        StmtKind::Return(e) => {
            out.push(0x05);
            encode_expr(out, e, index_of)
        }
        other => format_err(format!("statement kind is not patchable: {other:?}")),
    }
}

fn encode_expr(
    out: &mut Vec<u8>,
    e: &Expr,
    index_of: &impl Fn(&str) -> Result<u16, FlatError>,
) -> Result<(), FlatError> {
    match e {
        Expr::Const(v) => {
            out.push(0x10);
            out.extend_from_slice(&v.to_le_bytes());
        }
        Expr::Var(name) => {
            out.push(0x11);
            out.extend_from_slice(&index_of(name)?.to_le_bytes());
        }
        Expr::Index { base, index } => {
            out.push(0x12);
            encode_expr(out, base, index_of)?;
            encode_expr(out, index, index_of)?;
        }
        Expr::Unary { op, operand } => {
            out.push(0x13);
            out.push(unop_code(*op));
            encode_expr(out, operand, index_of)?;
        }
        Expr::Binary { op, lhs, rhs } => {
            out.push(0x14);
            out.push(binop_code(*op));
            encode_expr(out, lhs, index_of)?;
            encode_expr(out, rhs, index_of)?;
        }
        Expr::Call { callee, args } => {
            out.push(0x15);
            out.extend_from_slice(&index_of(callee)?.to_le_bytes());
            if args.len() > MAX_ARGS {
                return format_err("too many call arguments");
            }
            out.push(args.len() as u8);
            for a in args {
                encode_expr(out, a, index_of)?;
            }
        }
    }
    Ok(())
}

fn unop_code(op: UnOp) -> u8 {
    match op {
        UnOp::Neg => 0,
        UnOp::Not => 1,
        UnOp::Abs => 2,
    }
}

fn unop_from(code: u8) -> Option<UnOp> {
    match code {
        0 => Some(UnOp::Neg),
        1 => Some(UnOp::Not),
        2 => Some(UnOp::Abs),
        _ => None,
    }
}

fn binop_code(op: BinOp) -> u8 {
    match op {
        BinOp::Add => 0,
        BinOp::Sub => 1,
        BinOp::Mul => 2,
        BinOp::Div => 3,
        BinOp::Rem => 4,
        BinOp::Lt => 5,
        BinOp::Le => 6,
        BinOp::Gt => 7,
        BinOp::Ge => 8,
        BinOp::Eq => 9,
        BinOp::Ne => 10,
        BinOp::And => 11,
        BinOp::Or => 12,
    }
}

fn binop_from(code: u8) -> Option<BinOp> {
    Some(match code {
        0 => BinOp::Add,
        1 => BinOp::Sub,
        2 => BinOp::Mul,
        3 => BinOp::Div,
        4 => BinOp::Rem,
        5 => BinOp::Lt,
        6 => BinOp::Le,
        7 => BinOp::Gt,
        8 => BinOp::Ge,
        9 => BinOp::Eq,
        10 => BinOp::Ne,
        11 => BinOp::And,
        12 => BinOp::Or,
        _ => return None,
    })
}

/// Decode a flat patch against a compiled program. Every name the statement
/// mentions must be visible at the location (for variables) or callable
/// (for calls); anything else is a format error, so a successful decode
/// always yields a well-bounded patch.
pub fn deserialize_patch(bytes: &[u8], bc: &Bytecode) -> Result<super::Patch, FlatError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return format_err("bad magic");
    }
    if r.u8()? != VERSION {
        return format_err("unsupported version");
    }
    let stmt_id = r.u32()?;
    let lineage = r.u16()?;
    if !bc.is_patchable(stmt_id) {
        return Err(FlatError::UnknownStmtId(stmt_id));
    }

    // Nodes reference the table by index; parse structure first, then read
    // the table, then resolve names.
    let raw_stmt = decode_stmt(&mut r)?;

    let n_names = r.u16()? as usize;
    if n_names > MAX_NAMES {
        return format_err("name table too large");
    }
    let mut names = Vec::with_capacity(n_names);
    for _ in 0..n_names {
        let len = r.u8()? as usize;
        let raw = r.take(len)?;
        let name = std::str::from_utf8(raw).map_err(|_| FlatError::FormatError("name is not UTF-8".into()))?;
        names.push(name.to_string());
    }
    if r.pos != bytes.len() {
        return format_err("trailing bytes");
    }

    let bindings = bc.bindings_at(stmt_id).ok_or(FlatError::UnknownStmtId(stmt_id))?;
    let is_callable = |name: &str| {
        INTRINSICS.contains(&name) || bc.funcs.iter().any(|f| f.name == name)
    };
    let var_name = |idx: u16| -> Result<String, FlatError> {
        let name = names
            .get(idx as usize)
            .ok_or_else(|| FlatError::FormatError(format!("name index {idx} out of range")))?;
        if bindings.get(name).is_none() {
            return format_err(format!("`{name}` is not visible at statement {stmt_id}"));
        }
        Ok(name.clone())
    };
    let callee_name = |idx: u16| -> Result<String, FlatError> {
        let name = names
            .get(idx as usize)
            .ok_or_else(|| FlatError::FormatError(format!("name index {idx} out of range")))?;
        if !is_callable(name) {
            return format_err(format!("`{name}` is not callable"));
        }
        Ok(name.clone())
    };

    let kind = resolve_stmt_names(raw_stmt, &var_name, &callee_name)?;
    super::Patch::new(stmt_id, Stmt::new(kind), lineage, bc)
}

// Structure decoded before the name table is available.
enum RawStmt {
    Assign(RawExpr, RawExpr),
    Decl(u16, RawExpr),
    Print(RawExpr),
    ExprStmt(RawExpr),
    Return(RawExpr),
}

enum RawExpr {
    Const(i64),
    Var(u16),
    Index(Box<RawExpr>, Box<RawExpr>),
    Unary(UnOp, Box<RawExpr>),
    Binary(BinOp, Box<RawExpr>, Box<RawExpr>),
    Call(u16, Vec<RawExpr>),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FlatError> {
        if self.pos + n > self.bytes.len() {
            return format_err("truncated");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FlatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FlatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FlatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, FlatError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_stmt(r: &mut Reader) -> Result<RawStmt, FlatError> {
    match r.u8()? {
        0x01 => {
            let target = decode_expr(r, 0)?;
            if !matches!(target, RawExpr::Var(_) | RawExpr::Index(_, _)) {
                return format_err("assignment target must be a variable or index");
            }
            let value = decode_expr(r, 0)?;
            Ok(RawStmt::Assign(target, value))
        }
        0x02 => {
            let name = r.u16()?;
            Ok(RawStmt::Decl(name, decode_expr(r, 0)?))
        }
        0x03 => Ok(RawStmt::Print(decode_expr(r, 0)?)),
        0x04 => Ok(RawStmt::ExprStmt(decode_expr(r, 0)?)),
        0x05 => Ok(RawStmt::Return(decode_expr(r, 0)?)),
        tag => format_err(format!("unknown statement tag {tag:#04x}")),
    }
}

fn decode_expr(r: &mut Reader, depth: usize) -> Result<RawExpr, FlatError> {
    if depth > MAX_DEPTH {
        return format_err("expression too deep");
    }
    match r.u8()? {
        0x10 => Ok(RawExpr::Const(r.i64()?)),
        0x11 => Ok(RawExpr::Var(r.u16()?)),
        0x12 => {
            let base = decode_expr(r, depth + 1)?;
            let index = decode_expr(r, depth + 1)?;
            Ok(RawExpr::Index(Box::new(base), Box::new(index)))
        }
        0x13 => {
            let op = unop_from(r.u8()?).ok_or_else(|| FlatError::FormatError("unknown unary op".into()))?;
            Ok(RawExpr::Unary(op, Box::new(decode_expr(r, depth + 1)?)))
        }
        0x14 => {
            let op = binop_from(r.u8()?).ok_or_else(|| FlatError::FormatError("unknown binary op".into()))?;
            let lhs = decode_expr(r, depth + 1)?;
            let rhs = decode_expr(r, depth + 1)?;
            Ok(RawExpr::Binary(op, Box::new(lhs), Box::new(rhs)))
        }
        0x15 => {
            let callee = r.u16()?;
            let argc = r.u8()? as usize;
            if argc > MAX_ARGS {
                return format_err("too many call arguments");
            }
            let mut args = Vec::with_capacity(argc);
            for _ in 0..argc {
                args.push(decode_expr(r, depth + 1)?);
            }
            Ok(RawExpr::Call(callee, args))
        }
        tag => format_err(format!("unknown expression tag {tag:#04x}")),
    }
}

fn resolve_stmt_names(
    raw: RawStmt,
    var_name: &impl Fn(u16) -> Result<String, FlatError>,
    callee_name: &impl Fn(u16) -> Result<String, FlatError>,
) -> Result<StmtKind, FlatError> {
    Ok(match raw {
        RawStmt::Assign(t, v) => StmtKind::Assign {
            target: resolve_expr_names(t, var_name, callee_name)?,
            value: resolve_expr_names(v, var_name, callee_name)?,
        },
        RawStmt::Decl(name, init) => StmtKind::Decl {
            name: var_name(name)?,
            init: resolve_expr_names(init, var_name, callee_name)?,
        },
        RawStmt::Print(e) => StmtKind::Print(resolve_expr_names(e, var_name, callee_name)?),
        RawStmt::ExprStmt(e) => StmtKind::ExprStmt(resolve_expr_names(e, var_name, callee_name)?),
        RawStmt::Return(e) => StmtKind::Return(resolve_expr_names(e, var_name, callee_name)?),
    })
}

fn resolve_expr_names(
    raw: RawExpr,
    var_name: &impl Fn(u16) -> Result<String, FlatError>,
    callee_name: &impl Fn(u16) -> Result<String, FlatError>,
) -> Result<Expr, FlatError> {
    Ok(match raw {
        RawExpr::Const(v) => Expr::Const(v),
        RawExpr::Var(i) => Expr::Var(var_name(i)?),
        RawExpr::Index(b, i) => Expr::index(
            resolve_expr_names(*b, var_name, callee_name)?,
            resolve_expr_names(*i, var_name, callee_name)?,
        ),
        RawExpr::Unary(op, e) => Expr::unary(op, resolve_expr_names(*e, var_name, callee_name)?),
        RawExpr::Binary(op, l, r) => Expr::binary(
            op,
            resolve_expr_names(*l, var_name, callee_name)?,
            resolve_expr_names(*r, var_name, callee_name)?,
        ),
        RawExpr::Call(c, args) => Expr::Call {
            callee: callee_name(c)?,
            args: args
                .into_iter()
                .map(|a| resolve_expr_names(a, var_name, callee_name))
                .collect::<Result<_, _>>()?,
        },
    })
}
