//! Conditional extraction: rewrite every `if`/`while` whose condition is not
//! already a single variable so the condition value flows through a fresh
//! temporary. The temporaries are ordinary (patchable) statements, which is
//! the point: branch predicates become repairable locations.
//!
//! ```text
//! if (C) {...}            =>  var __cf_N = C;
//!                             if (__cf_N) {...}
//!
//! while (C) { BODY }      =>  var __cf_N = C;
//!                             while (__cf_N) { BODY  __cf_N = C; }
//! ```
//!
//! The while form evaluates `C` exactly as often and in the same order as the
//! original (once before the loop, once after each body execution), so
//! behavior is preserved even when `C` has side effects. The loop re-check
//! duplicates `C` textually, giving two patchable sites per loop condition.
//!
//! The transformation is idempotent: conditions that are already a single
//! variable are left alone. Statement ids are renumbered densely afterwards.

use super::ast::*;

#[must_use = "returns the refactored program; the input is untouched"]
pub fn refactor_conditionals(program: &Program) -> Program {
    let mut out = program.clone();
    let mut counter = 0u32;
    for func in &mut out.functions {
        rewrite_block(&mut func.body, &mut counter);
    }
    out.renumber();
    out
}

fn rewrite_block(block: &mut Block, counter: &mut u32) {
    let mut rewritten = Vec::with_capacity(block.stmts.len());
    for mut stmt in std::mem::take(&mut block.stmts) {
        match &mut stmt.kind {
            StmtKind::If { cond, then_block, else_block } => {
                // Outer-first numbering, then recurse so nested conditions get
                // later temporaries.
                let extracted = extract(cond, counter);
                rewrite_block(then_block, counter);
                if let Some(e) = else_block {
                    rewrite_block(e, counter);
                }
                if let Some((name, orig_cond)) = extracted {
                    rewritten.push(Stmt::new(StmtKind::Decl { name, init: orig_cond }));
                }
                rewritten.push(stmt);
            }
            StmtKind::While { cond, body } => {
                let extracted = extract(cond, counter);
                rewrite_block(body, counter);
                if let Some((name, orig_cond)) = extracted {
                    body.stmts.push(Stmt::new(StmtKind::Assign {
                        target: Expr::Var(name.clone()),
                        value: orig_cond.clone(),
                    }));
                    rewritten.push(Stmt::new(StmtKind::Decl { name, init: orig_cond }));
                }
                rewritten.push(stmt);
            }
            _ => rewritten.push(stmt),
        }
    }
    block.stmts = rewritten;
}

/// If `cond` is not a bare variable, replace it with a fresh temporary and
/// return the temporary's name plus the original condition.
fn extract(cond: &mut Expr, counter: &mut u32) -> Option<(String, Expr)> {
    if matches!(cond, Expr::Var(_)) {
        return None;
    }
    let name = format!("{CF_TEMP_PREFIX}{counter}");
    *counter += 1;
    let orig = std::mem::replace(cond, Expr::Var(name.clone()));
    Some((name, orig))
}
