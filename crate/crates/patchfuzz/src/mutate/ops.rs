//! Statement mutation operators. All of them rewrite one expression node of
//! a patch body, chosen by a [`NodePath`], and all of them preserve static
//! validity at the patch location: types match, every name stays visible,
//! constants stay in width. That keeps every mutant installable as a detour,
//! so no validation cycle is wasted on ill-formed candidates.

use crate::exec::VarBindings;
use crate::lang::{is_cf_temp, BinOp, Expr, IntWidth, Stmt, StmtKind, Type, UnOp};

/// Everything site collection and rewriting need to know about the location:
/// which variables are visible (with types) and the integer width.
pub struct MutationCx<'a> {
    pub bindings: &'a VarBindings,
    pub width: IntWidth,
}

/// The rewrite families, in enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationKind {
    /// `e` -> `abs(e)`.
    AbsWrap,
    /// Binary operator -> another operator of the same family.
    OpSwitch,
    /// `e` -> `-(e)` or `!(e)`.
    UnaryInsert,
    /// `op(e)` -> `e`.
    UnaryDrop,
    /// Variable -> another visible variable of the same type.
    VarSwitch,
    /// Constant -> one of `0`, `1`, `-1`, `c+1`, `c-1`, `-c`.
    ConstTweak,
    /// `a op b` -> `b op a`.
    OperandSwap,
    /// `e` -> `e + v`, `v + e`, `e - v`, `v - e` for a visible variable or
    /// a small constant `v`.
    TermAdd,
}

pub const ALL_KINDS: [MutationKind; 8] = [
    MutationKind::AbsWrap,
    MutationKind::OpSwitch,
    MutationKind::UnaryInsert,
    MutationKind::UnaryDrop,
    MutationKind::VarSwitch,
    MutationKind::ConstTweak,
    MutationKind::OperandSwap,
    MutationKind::TermAdd,
];

/// Address of an expression node inside a statement: which expression root
/// (assignments have two, target then value), then child indices downward.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodePath {
    pub root: u8,
    pub steps: Vec<u8>,
}

/// A mutable node. `is_target_root` marks the whole assignment target, which
/// must keep its variable/index shape: only a variable switch may touch it.
#[derive(Debug, Clone)]
pub struct Site {
    pub path: NodePath,
    pub is_target_root: bool,
}

/// All expression nodes of `stmt`, pre-order, roots in declaration order.
pub fn collect_sites(stmt: &Stmt) -> Vec<Site> {
    fn rec(e: &Expr, root: u8, steps: &mut Vec<u8>, out: &mut Vec<Site>) {
        out.push(Site {
            path: NodePath { root, steps: steps.clone() },
            is_target_root: false,
        });
        for i in 0..e.child_count() {
            steps.push(i as u8);
            rec(e.child(i).unwrap(), root, steps, out);
            steps.pop();
        }
    }
    let mut out = Vec::new();
    let is_assign = matches!(stmt.kind, StmtKind::Assign { .. });
    for (ri, root) in stmt.expr_roots().into_iter().enumerate() {
        let at = out.len();
        rec(root, ri as u8, &mut Vec::new(), &mut out);
        if is_assign && ri == 0 {
            out[at].is_target_root = true;
        }
    }
    out
}

pub fn node_at<'s>(stmt: &'s Stmt, path: &NodePath) -> &'s Expr {
    let mut e = stmt.expr_roots()[path.root as usize];
    for &s in &path.steps {
        e = e.child(s as usize).expect("path addresses an existing node");
    }
    e
}

fn node_at_mut<'s>(stmt: &'s mut Stmt, path: &NodePath) -> &'s mut Expr {
    let mut e = stmt
        .expr_root_mut(path.root as usize)
        .expect("path addresses an existing root");
    for &s in &path.steps {
        e = e.child_mut(s as usize).expect("path addresses an existing node");
    }
    e
}

/// Static type of a node given the visible bindings. Mutants only contain
/// names from `bindings`, so lookups cannot miss.
pub fn node_type(e: &Expr, bindings: &VarBindings) -> Type {
    match e {
        Expr::Var(name) => {
            bindings.get(name).map(|(_, ty)| ty).expect("mutants only use visible names")
        }
        Expr::Call { callee, .. } if callee == "array" => Type::Array,
        _ => Type::Int,
    }
}

/// All rewrites of `kind` at `site`, in deterministic payload order. Empty
/// when the kind does not apply there.
pub fn candidates_at(stmt: &Stmt, site: &Site, kind: MutationKind, cx: &MutationCx) -> Vec<Stmt> {
    let node = node_at(stmt, &site.path);
    let node_ty = node_type(node, cx.bindings);
    let mut out = Vec::new();
    let mut emit = |replacement: Expr| {
        let mut s = stmt.clone();
        *node_at_mut(&mut s, &site.path) = replacement;
        out.push(s);
    };

    match kind {
        MutationKind::AbsWrap => {
            if !site.is_target_root && node_ty == Type::Int {
                emit(Expr::unary(UnOp::Abs, node.clone()));
            }
        }
        MutationKind::OpSwitch => {
            if let Expr::Binary { op, lhs, rhs } = node {
                for &alt in BinOp::family_members(op.family()) {
                    if alt != *op {
                        emit(Expr::binary(alt, (**lhs).clone(), (**rhs).clone()));
                    }
                }
            }
        }
        MutationKind::UnaryInsert => {
            if !site.is_target_root && node_ty == Type::Int {
                emit(Expr::unary(UnOp::Neg, node.clone()));
                emit(Expr::unary(UnOp::Not, node.clone()));
            }
        }
        MutationKind::UnaryDrop => {
            if let Expr::Unary { operand, .. } = node {
                emit((**operand).clone());
            }
        }
        MutationKind::VarSwitch => {
            if let Expr::Var(name) = node {
                for (cand, _, ty) in cx.bindings.iter() {
                    if ty == node_ty && cand != name && !is_cf_temp(cand) {
                        emit(Expr::var(cand));
                    }
                }
            }
        }
        MutationKind::ConstTweak => {
            if let Expr::Const(v) = node {
                let v = *v;
                let mut seen = Vec::new();
                for p in [0, 1, -1, v.wrapping_add(1), v.wrapping_sub(1), v.wrapping_neg()] {
                    if p != v && cx.width.contains(p) && !seen.contains(&p) {
                        seen.push(p);
                        emit(Expr::Const(p));
                    }
                }
            }
        }
        MutationKind::OperandSwap => {
            if let Expr::Binary { op, lhs, rhs } = node {
                if lhs != rhs {
                    emit(Expr::binary(*op, (**rhs).clone(), (**lhs).clone()));
                }
            }
        }
        MutationKind::TermAdd => {
            if !site.is_target_root && node_ty == Type::Int {
                let mut terms: Vec<Expr> = cx
                    .bindings
                    .iter()
                    .filter(|(name, _, ty)| *ty == Type::Int && !is_cf_temp(name))
                    .map(|(name, _, _)| Expr::var(name))
                    .collect();
                terms.push(Expr::Const(1));
                terms.push(Expr::Const(2));
                for term in terms {
                    emit(Expr::binary(BinOp::Add, node.clone(), term.clone()));
                    emit(Expr::binary(BinOp::Add, term.clone(), node.clone()));
                    emit(Expr::binary(BinOp::Sub, node.clone(), term.clone()));
                    emit(Expr::binary(BinOp::Sub, term, node.clone()));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::compile;
    use crate::lang::{parse_program, refactor_conditionals};

    fn mid_stmt() -> (Stmt, VarBindings, IntWidth) {
        let src = "fn search(a: arr, val: int, lo: int, hi: int) {
            while (lo <= hi) {
                var mid = (lo + hi) / 2;
                if (a[mid] < val) { lo = mid + 1; } else { hi = mid - 1; }
            }
            return 0 - 1;
        }
        fn main() { var a = array(4); print(search(a, 3, 0, 3)); }";
        let program = refactor_conditionals(&parse_program(src).unwrap());
        let bc = compile(&program).unwrap();
        let id = program
            .statement_ids()
            .into_iter()
            .find(|&id| matches!(
                &program.stmt(id).unwrap().kind,
                StmtKind::Decl { name, .. } if name == "mid"
            ))
            .unwrap();
        let stmt = program.stmt(id).unwrap().clone();
        let bindings = bc.bindings_at(id).unwrap().clone();
        (stmt, bindings, bc.int_width)
    }

    #[test]
    fn sites_cover_every_node_preorder() {
        let (stmt, _, _) = mid_stmt();
        // var mid = (lo + hi) / 2; nodes: /، +، lo، hi، 2.
        let sites = collect_sites(&stmt);
        assert_eq!(sites.len(), 5);
        assert!(sites.iter().all(|s| !s.is_target_root), "decl roots are rvalues");
        assert_eq!(sites[0].path.steps, Vec::<u8>::new());
        assert_eq!(sites[1].path.steps, vec![0]);
        assert_eq!(sites[2].path.steps, vec![0, 0]);
    }

    #[test]
    fn assignment_targets_only_switch_variables() {
        let p = parse_program("fn main() { var x = 1; var y = 2; x = y; }").unwrap();
        let stmt = p.stmt(2).unwrap().clone();
        let mut bindings = VarBindings::default();
        bindings.insert("x".into(), 0, Type::Int);
        bindings.insert("y".into(), 1, Type::Int);
        let cx = MutationCx { bindings: &bindings, width: IntWidth::W16 };

        let sites = collect_sites(&stmt);
        assert!(sites[0].is_target_root);
        assert!(candidates_at(&stmt, &sites[0], MutationKind::AbsWrap, &cx).is_empty());
        assert!(candidates_at(&stmt, &sites[0], MutationKind::TermAdd, &cx).is_empty());
        let switched = candidates_at(&stmt, &sites[0], MutationKind::VarSwitch, &cx);
        assert_eq!(switched.len(), 1);
        assert_eq!(switched[0].to_string(), "y = y;");
    }

    #[test]
    fn const_tweak_respects_width_and_dedups() {
        let stmt = Stmt::new(StmtKind::Print(Expr::Const(1)));
        let bindings = VarBindings::default();
        let cx = MutationCx { bindings: &bindings, width: IntWidth::W16 };
        let sites = collect_sites(&stmt);
        let tweaks = candidates_at(&stmt, &sites[0], MutationKind::ConstTweak, &cx);
        // From 1: payloads 0, -1, 2 (1 excluded as original, +1/-1/neg dedup).
        let rendered: Vec<String> = tweaks.iter().map(|s| s.to_string()).collect();
        assert_eq!(rendered, ["print(0);", "print(-1);", "print(2);"]);

        let stmt = Stmt::new(StmtKind::Print(Expr::Const(32767)));
        let sites = collect_sites(&stmt);
        let tweaks = candidates_at(&stmt, &sites[0], MutationKind::ConstTweak, &cx);
        assert!(
            tweaks.iter().all(|s| s.to_string() != "print(32768);"),
            "out-of-width payloads are dropped"
        );
    }

    #[test]
    fn operand_swap_skips_structurally_equal_operands() {
        let bindings = VarBindings::default();
        let cx = MutationCx { bindings: &bindings, width: IntWidth::W16 };
        let stmt = Stmt::new(StmtKind::Print(Expr::binary(
            BinOp::Add,
            Expr::Const(3),
            Expr::Const(3),
        )));
        let sites = collect_sites(&stmt);
        assert!(candidates_at(&stmt, &sites[0], MutationKind::OperandSwap, &cx).is_empty());
    }

    #[test]
    fn var_switch_is_type_preserving_and_skips_temps() {
        let mut bindings = VarBindings::default();
        bindings.insert("a".into(), 0, Type::Array);
        bindings.insert("b".into(), 1, Type::Array);
        bindings.insert("n".into(), 2, Type::Int);
        bindings.insert("__cf_0".into(), 3, Type::Int);
        let cx = MutationCx { bindings: &bindings, width: IntWidth::W16 };

        // print(len(a)) — the array argument can only become `b`.
        let stmt = Stmt::new(StmtKind::Print(Expr::call("len", vec![Expr::var("a")])));
        let sites = collect_sites(&stmt);
        let arg_site = &sites[1];
        let cands = candidates_at(&stmt, arg_site, MutationKind::VarSwitch, &cx);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].to_string(), "print(len(b));");

        // print(n) — int var never becomes an array or a temp.
        let stmt = Stmt::new(StmtKind::Print(Expr::var("n")));
        let sites = collect_sites(&stmt);
        assert!(candidates_at(&stmt, &sites[0], MutationKind::VarSwitch, &cx).is_empty());
    }

    #[test]
    fn term_add_uses_visible_ints_and_small_consts_in_order() {
        let (stmt, bindings, width) = mid_stmt();
        let cx = MutationCx { bindings: &bindings, width };
        let sites = collect_sites(&stmt);
        // Site [0]: the whole (lo + hi) / 2.
        let cands = candidates_at(&stmt, &sites[0], MutationKind::TermAdd, &cx);
        // Terms: hi, lo, mid, val (name order), then 1, 2; four shapes each.
        assert_eq!(cands.len(), 6 * 4);
        assert_eq!(cands[0].to_string(), "var mid = ((lo + hi) / 2) + hi;");
        assert_eq!(cands[1].to_string(), "var mid = hi + ((lo + hi) / 2);");
        assert_eq!(cands[2].to_string(), "var mid = ((lo + hi) / 2) - hi;");
        assert_eq!(cands[3].to_string(), "var mid = hi - ((lo + hi) / 2);");
        // The repair chain's final link exists in the catalog.
        assert!(cands.iter().any(|s| s.to_string() == "var mid = lo + ((lo + hi) / 2);"));
    }

    #[test]
    fn op_switch_stays_in_family() {
        let (stmt, bindings, width) = mid_stmt();
        let cx = MutationCx { bindings: &bindings, width };
        let sites = collect_sites(&stmt);
        // Site [1] is (lo + hi).
        let cands = candidates_at(&stmt, &sites[1], MutationKind::OpSwitch, &cx);
        let rendered: Vec<String> = cands.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            rendered,
            [
                "var mid = (lo - hi) / 2;",
                "var mid = (lo * hi) / 2;",
                "var mid = (lo / hi) / 2;",
                "var mid = (lo % hi) / 2;",
            ]
        );
    }

    #[test]
    fn unary_insert_and_drop_are_inverses() {
        let bindings = VarBindings::default();
        let cx = MutationCx { bindings: &bindings, width: IntWidth::W16 };
        let stmt = Stmt::new(StmtKind::Print(Expr::Const(5)));
        let sites = collect_sites(&stmt);
        let inserted = candidates_at(&stmt, &sites[0], MutationKind::UnaryInsert, &cx);
        assert_eq!(inserted.len(), 2);
        for m in &inserted {
            let sites = collect_sites(m);
            let dropped = candidates_at(m, &sites[0], MutationKind::UnaryDrop, &cx);
            assert_eq!(dropped.len(), 1);
            assert_eq!(dropped[0].to_string(), stmt.to_string());
        }
    }
}
