//! Recursive-descent parser with precedence climbing for expressions.
//!
//! Grammar sketch (lowest to highest binding):
//!
//! ```text
//! program   := pragma? function*
//! pragma    := "pragma" "width" INT ";"
//! function  := "fn" IDENT "(" params? ")" block
//! params    := IDENT ":" ("int" | "arr") ("," IDENT ":" ("int" | "arr"))*
//! block     := "{" stmt* "}"
//! stmt      := "var" IDENT "=" expr ";"
//!            | "if" "(" expr ")" block ("else" (block | if-stmt))?
//!            | "while" "(" expr ")" block
//!            | "return" expr ";"
//!            | "print" "(" expr ")" ";"
//!            | "assert" "(" expr ")" ";"
//!            | expr ("=" expr)? ";"
//! expr      := or
//! or        := and ("||" and)*
//! and       := eq ("&&" eq)*
//! eq        := rel (("==" | "!=") rel)*
//! rel       := add (("<" | "<=" | ">" | ">=") add)*
//! add       := mul (("+" | "-") mul)*
//! mul       := unary (("*" | "/" | "%") unary)*
//! unary     := ("-" | "!") unary | postfix
//! postfix   := primary ("[" expr "]")*
//! primary   := INT | IDENT | IDENT "(" args? ")" | "abs" "(" expr ")" | "(" expr ")"
//! ```
//!
//! A unary minus applied directly to a literal folds into the literal, so the
//! width minimum (e.g. `-128` at width 8) is writable. Statement ids are
//! assigned densely in pre-order once parsing finishes.

use super::ast::*;
use super::lexer::{lex, SyntaxError, Tok, Token};

pub const DEFAULT_WIDTH: IntWidth = IntWidth::W16;

pub fn parse_program(src: &str) -> Result<Program, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

/// Parse a single statement, e.g. a patch replacement read from a file.
/// The statement keeps its placeholder id; patches address real locations
/// through their own statement id.
pub fn parse_stmt(src: &str) -> Result<Stmt, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let stmt = p.stmt()?;
    if *p.peek() != Tok::Eof {
        return Err(p.err(format!("trailing input after statement: {}", p.peek())));
    }
    Ok(stmt)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (u32, u32) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> SyntaxError {
        let (line, col) = self.here();
        SyntaxError::new(line, col, message)
    }

    fn expect(&mut self, want: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {want}, found {}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => Err(self.err(format!("expected identifier, found {other}"))),
        }
    }

    fn program(&mut self) -> Result<Program, SyntaxError> {
        let int_width = if *self.peek() == Tok::KwPragma {
            self.bump();
            let key = self.ident()?;
            if key != "width" {
                return Err(self.err(format!("unknown pragma `{key}`")));
            }
            let bits = match self.bump() {
                Tok::Int(v) => v,
                other => return Err(self.err(format!("expected width in bits, found {other}"))),
            };
            let w = u32::try_from(bits)
                .ok()
                .and_then(IntWidth::from_bits)
                .ok_or_else(|| self.err(format!("unsupported width {bits}; expected 8, 16 or 32")))?;
            self.expect(Tok::Semi)?;
            w
        } else {
            DEFAULT_WIDTH
        };

        let mut functions = Vec::new();
        while *self.peek() != Tok::Eof {
            functions.push(self.function()?);
        }
        if functions.is_empty() {
            return Err(self.err("program has no functions"));
        }
        let mut program = Program { functions, entry: ENTRY_NAME.to_string(), int_width };
        program.renumber();
        Ok(program)
    }

    fn function(&mut self) -> Result<FunctionDef, SyntaxError> {
        self.expect(Tok::KwFn)?;
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let pname = self.ident()?;
                self.expect(Tok::Colon)?;
                let ty = match self.ident()?.as_str() {
                    "int" => Type::Int,
                    "arr" => Type::Array,
                    other => return Err(self.err(format!("unknown type `{other}`"))),
                };
                params.push(Param { name: pname, ty });
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let body = self.block()?;
        Ok(FunctionDef { name, params, body })
    }

    fn block(&mut self) -> Result<Block, SyntaxError> {
        self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.err("unterminated block"));
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> Result<Stmt, SyntaxError> {
        match self.peek().clone() {
            Tok::KwVar => {
                self.bump();
                let name = self.ident()?;
                self.expect(Tok::Assign)?;
                let init = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::new(StmtKind::Decl { name, init }))
            }
            Tok::KwIf => self.if_stmt(),
            Tok::KwWhile => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(Tok::RParen)?;
                let body = self.block()?;
                Ok(Stmt::new(StmtKind::While { cond, body }))
            }
            Tok::KwReturn => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::new(StmtKind::Return(e)))
            }
            Tok::KwPrint => {
                self.bump();
                self.expect(Tok::LParen)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::new(StmtKind::Print(e)))
            }
            Tok::KwAssert => {
                self.bump();
                self.expect(Tok::LParen)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                Ok(Stmt::new(StmtKind::Assert(e)))
            }
            _ => {
                let e = self.expr()?;
                if *self.peek() == Tok::Assign {
                    if !matches!(e, Expr::Var(_) | Expr::Index { .. }) {
                        return Err(self.err("assignment target must be a variable or index"));
                    }
                    self.bump();
                    let value = self.expr()?;
                    self.expect(Tok::Semi)?;
                    Ok(Stmt::new(StmtKind::Assign { target: e, value }))
                } else {
                    self.expect(Tok::Semi)?;
                    Ok(Stmt::new(StmtKind::ExprStmt(e)))
                }
            }
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        self.expect(Tok::KwIf)?;
        self.expect(Tok::LParen)?;
        let cond = self.expr()?;
        self.expect(Tok::RParen)?;
        let then_block = self.block()?;
        let else_block = if *self.peek() == Tok::KwElse {
            self.bump();
            if *self.peek() == Tok::KwIf {
                // `else if` sugars to an else block holding a single if.
                let nested = self.if_stmt()?;
                Some(Block { stmts: vec![nested] })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::new(StmtKind::If { cond, then_block, else_block }))
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.eq_expr()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            let rhs = self.eq_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn eq_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.rel_expr()?;
        loop {
            let op = match self.peek() {
                Tok::EqEq => BinOp::Eq,
                Tok::Ne => BinOp::Ne,
                _ => break,
            };
            self.bump();
            let rhs = self.rel_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn rel_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                _ => break,
            };
            self.bump();
            let rhs = self.add_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Rem,
                _ => break,
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let operand = self.unary_expr()?;
                // Fold `-LITERAL` so the width minimum is writable.
                if let Expr::Const(v) = operand {
                    v.checked_neg()
                        .map(Expr::Const)
                        .ok_or_else(|| self.err("integer literal too large"))
                } else {
                    Ok(Expr::unary(UnOp::Neg, operand))
                }
            }
            Tok::Not => {
                self.bump();
                let operand = self.unary_expr()?;
                Ok(Expr::unary(UnOp::Not, operand))
            }
            _ => self.postfix_expr(),
        }
    }

    fn postfix_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.primary_expr()?;
        while *self.peek() == Tok::LBracket {
            self.bump();
            let index = self.expr()?;
            self.expect(Tok::RBracket)?;
            e = Expr::index(e, index);
        }
        Ok(e)
    }

    fn primary_expr(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen)?;
                    if name == "abs" {
                        if args.len() != 1 {
                            return Err(self.err("abs takes exactly one argument"));
                        }
                        Ok(Expr::unary(UnOp::Abs, args.into_iter().next().unwrap()))
                    } else {
                        Ok(Expr::Call { callee: name, args })
                    }
                } else {
                    Ok(Expr::Var(name))
                }
            }
            other => Err(self.err(format!("expected expression, found {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pragma_width() {
        let p = parse_program("pragma width 8;\nfn main() { print(1); }").unwrap();
        assert_eq!(p.int_width, IntWidth::W8);
        let p = parse_program("fn main() { print(1); }").unwrap();
        assert_eq!(p.int_width, IntWidth::W16);
    }

    #[test]
    fn rejects_unknown_width() {
        assert!(parse_program("pragma width 12;\nfn main() { }").is_err());
        assert!(parse_program("pragma depth 8;\nfn main() { }").is_err());
    }

    #[test]
    fn precedence_binds_mul_tighter_than_add() {
        let p = parse_program("fn main() { var x = 1 + 2 * 3; }").unwrap();
        let init = match &p.functions[0].body.stmts[0].kind {
            StmtKind::Decl { init, .. } => init.clone(),
            _ => panic!(),
        };
        assert_eq!(
            init,
            Expr::binary(
                BinOp::Add,
                Expr::Const(1),
                Expr::binary(BinOp::Mul, Expr::Const(2), Expr::Const(3)),
            )
        );
    }

    #[test]
    fn logic_is_looser_than_comparison() {
        let p = parse_program("fn main() { var x = 1 < 2 && 3 == 3 || 0; }").unwrap();
        let init = match &p.functions[0].body.stmts[0].kind {
            StmtKind::Decl { init, .. } => init.clone(),
            _ => panic!(),
        };
        match init {
            Expr::Binary { op: BinOp::Or, lhs, .. } => match *lhs {
                Expr::Binary { op: BinOp::And, .. } => {}
                other => panic!("expected && under ||, got {other}"),
            },
            other => panic!("expected || at root, got {other}"),
        }
    }

    #[test]
    fn folds_negative_literals() {
        let p = parse_program("pragma width 8;\nfn main() { var x = -128; }").unwrap();
        match &p.functions[0].body.stmts[0].kind {
            StmtKind::Decl { init, .. } => assert_eq!(*init, Expr::Const(-128)),
            _ => panic!(),
        }
    }

    #[test]
    fn abs_parses_as_unary() {
        let p = parse_program("fn main() { var x = abs(1 - 2); }").unwrap();
        match &p.functions[0].body.stmts[0].kind {
            StmtKind::Decl { init, .. } => {
                assert!(matches!(init, Expr::Unary { op: UnOp::Abs, .. }))
            }
            _ => panic!(),
        }
    }

    #[test]
    fn else_if_nests_into_else_block() {
        let p = parse_program(
            "fn main() { var x = 1; if (x) { print(1); } else if (x) { print(2); } else { print(3); } }",
        )
        .unwrap();
        match &p.functions[0].body.stmts[1].kind {
            StmtKind::If { else_block: Some(e), .. } => {
                assert_eq!(e.stmts.len(), 1);
                assert!(matches!(e.stmts[0].kind, StmtKind::If { .. }));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn indexed_assignment_parses() {
        let p = parse_program("fn main() { var a = array(3); a[1 + 1] = 5; }").unwrap();
        match &p.functions[0].body.stmts[1].kind {
            StmtKind::Assign { target: Expr::Index { .. }, .. } => {}
            _ => panic!(),
        }
    }

    #[test]
    fn rejects_assignment_to_call() {
        assert!(parse_program("fn main() { input() = 3; }").is_err());
    }

    #[test]
    fn stmt_ids_are_dense_preorder() {
        let p = parse_program(
            "fn f(x: int) { if (x) { return 1; } return 0; }\nfn main() { print(f(2)); }",
        )
        .unwrap();
        assert_eq!(p.statement_ids(), vec![0, 1, 2, 3]);
        assert_eq!(p.function_of(3), Some("main"));
    }

    #[test]
    fn render_round_trips() {
        let src = "pragma width 8;

fn bsearch(a: arr, val: int, lo: int, hi: int) {
    while (lo <= hi) {
        var mid = (lo + hi) / 2;
        if (a[mid] < val) {
            lo = mid + 1;
        } else {
            if (a[mid] > val) {
                hi = mid - 1;
            } else {
                return 1;
            }
        }
    }
    return 0;
}

fn main() {
    print(bsearch(array(4), 1, 0, 3));
}
";
        let p1 = parse_program(src).unwrap();
        let rendered = render_program(&p1);
        let p2 = parse_program(&rendered).unwrap();
        assert_eq!(p1, p2);
    }
}
