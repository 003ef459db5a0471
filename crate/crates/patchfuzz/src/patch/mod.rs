//! Patches: single-statement replacements addressed by `StmtId`.
//!
//! A patch never edits the program or its bytecode. It is installed as a
//! detour (see [`detour`]) and interpreted in place of the original statement
//! when execution reaches that location, which is what makes validating
//! thousands of candidate repairs per second possible without recompiling.

pub mod detour;
pub mod flat;
pub mod seeds;

use std::fmt;

use crate::exec::Bytecode;
use crate::lang::{Stmt, StmtId};

/// Where a patch applies. The function name is derivable from the statement
/// id; it is carried for readability of artifacts and reports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceLoc {
    pub stmt_id: StmtId,
    pub function: String,
}

/// Truncated SHA-256 of a patch's canonical encoding (location + replacement
/// statement, lineage zeroed). Identifies a patch independent of how many
/// mutations produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 16]);

impl Digest {
    pub fn to_hex(self) -> String {
        let mut s = String::with_capacity(32);
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 32 {
            return None;
        }
        let mut out = [0u8; 16];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16)?;
            let lo = (chunk[1] as char).to_digit(16)?;
            out[i] = ((hi << 4) | lo) as u8;
        }
        Some(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl serde::Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> serde::Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 32 hex chars"))
    }
}

/// A candidate repair: replace the statement at `loc` with `stmt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub loc: SourceLoc,
    pub stmt: Stmt,
    /// Number of mutation steps from the seed patch this descends from.
    pub lineage: u16,
    digest: Digest,
}

impl Patch {
    /// Build a patch, computing its digest against `bc`'s name tables.
    /// Fails if `stmt` mentions a name not visible at the location.
    pub fn new(
        stmt_id: StmtId,
        stmt: Stmt,
        lineage: u16,
        bc: &Bytecode,
    ) -> Result<Patch, flat::FlatError> {
        let function = bc
            .function_name_of(stmt_id)
            .ok_or(flat::FlatError::UnknownStmtId(stmt_id))?
            .to_string();
        let digest = flat::digest_of(stmt_id, &stmt, bc)?;
        Ok(Patch { loc: SourceLoc { stmt_id, function }, stmt, lineage, digest })
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    /// One-line human rendering: `fn@stmt: replacement`.
    pub fn describe(&self) -> String {
        format!("{}@{}: {}", self.loc.function, self.loc.stmt_id, self.stmt)
    }
}

impl fmt::Display for Patch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}
