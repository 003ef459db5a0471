//! RLang front end: syntax tree, parser, static validation and the
//! conditional-extraction refactoring that exposes branch predicates as
//! patchable statements.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod refactor;
pub mod validate;

pub use ast::*;
pub use lexer::SyntaxError;
pub use parser::{parse_program, parse_stmt};
pub use refactor::refactor_conditionals;
pub use validate::{validate, Finding, FindingKind, ValidationReport, INTRINSICS};
