//! Hand-rolled lexer. Produces a flat token stream with line/column
//! positions; the parser reports errors against these positions.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    KwFn,
    KwVar,
    KwIf,
    KwElse,
    KwWhile,
    KwReturn,
    KwPrint,
    KwAssert,
    KwPragma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Not,
    AndAnd,
    OrOr,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(v) => write!(f, "integer `{v}`"),
            Tok::KwFn => write!(f, "`fn`"),
            Tok::KwVar => write!(f, "`var`"),
            Tok::KwIf => write!(f, "`if`"),
            Tok::KwElse => write!(f, "`else`"),
            Tok::KwWhile => write!(f, "`while`"),
            Tok::KwReturn => write!(f, "`return`"),
            Tok::KwPrint => write!(f, "`print`"),
            Tok::KwAssert => write!(f, "`assert`"),
            Tok::KwPragma => write!(f, "`pragma`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Percent => write!(f, "`%`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Not => write!(f, "`!`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("syntax error at {line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl SyntaxError {
    pub fn new(line: u32, col: u32, message: impl Into<String>) -> SyntaxError {
        SyntaxError { line, col, message: message.into() }
    }
}

pub fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($t:expr, $len:expr) => {{
            toks.push(Token { tok: $t, line, col });
            i += $len;
            col += $len as u32;
        }};
    }

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                col += 1;
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'0'..=b'9' => {
                let start = i;
                let start_col = col;
                let mut v: i64 = 0;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    v = v
                        .checked_mul(10)
                        .and_then(|v| v.checked_add((bytes[i] - b'0') as i64))
                        .ok_or_else(|| SyntaxError::new(line, start_col, "integer literal too large"))?;
                    i += 1;
                }
                col += (i - start) as u32;
                toks.push(Token { tok: Tok::Int(v), line, col: start_col });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                let start_col = col;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                col += (i - start) as u32;
                let word = &src[start..i];
                let tok = match word {
                    "fn" => Tok::KwFn,
                    "var" => Tok::KwVar,
                    "if" => Tok::KwIf,
                    "else" => Tok::KwElse,
                    "while" => Tok::KwWhile,
                    "return" => Tok::KwReturn,
                    "print" => Tok::KwPrint,
                    "assert" => Tok::KwAssert,
                    "pragma" => Tok::KwPragma,
                    _ => Tok::Ident(word.to_string()),
                };
                toks.push(Token { tok, line, col: start_col });
            }
            b'(' => push!(Tok::LParen, 1),
            b')' => push!(Tok::RParen, 1),
            b'{' => push!(Tok::LBrace, 1),
            b'}' => push!(Tok::RBrace, 1),
            b'[' => push!(Tok::LBracket, 1),
            b']' => push!(Tok::RBracket, 1),
            b',' => push!(Tok::Comma, 1),
            b';' => push!(Tok::Semi, 1),
            b':' => push!(Tok::Colon, 1),
            b'+' => push!(Tok::Plus, 1),
            b'-' => push!(Tok::Minus, 1),
            b'*' => push!(Tok::Star, 1),
            b'/' => push!(Tok::Slash, 1),
            b'%' => push!(Tok::Percent, 1),
            b'<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Le, 2)
                } else {
                    push!(Tok::Lt, 1)
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Ge, 2)
                } else {
                    push!(Tok::Gt, 1)
                }
            }
            b'=' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::EqEq, 2)
                } else {
                    push!(Tok::Assign, 1)
                }
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    push!(Tok::Ne, 2)
                } else {
                    push!(Tok::Not, 1)
                }
            }
            b'&' => {
                if bytes.get(i + 1) == Some(&b'&') {
                    push!(Tok::AndAnd, 2)
                } else {
                    return Err(SyntaxError::new(line, col, "expected `&&`"));
                }
            }
            b'|' => {
                if bytes.get(i + 1) == Some(&b'|') {
                    push!(Tok::OrOr, 2)
                } else {
                    return Err(SyntaxError::new(line, col, "expected `||`"));
                }
            }
            other => {
                return Err(SyntaxError::new(
                    line,
                    col,
                    format!("unexpected character `{}`", other as char),
                ));
            }
        }
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_keywords() {
        let toks = lex("fn main() { var x = 1 <= 2 && a != b; }").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert!(kinds.contains(&&Tok::KwFn));
        assert!(kinds.contains(&&Tok::Le));
        assert!(kinds.contains(&&Tok::AndAnd));
        assert!(kinds.contains(&&Tok::Ne));
        assert_eq!(*kinds.last().unwrap(), &Tok::Eof);
    }

    #[test]
    fn tracks_positions_across_lines() {
        let toks = lex("fn\n  main").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        assert_eq!((toks[1].line, toks[1].col), (2, 3));
    }

    #[test]
    fn comments_run_to_end_of_line() {
        let toks = lex("x // everything here is skipped\ny").unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks[1].tok, Tok::Ident("y".into()));
    }

    #[test]
    fn rejects_stray_ampersand() {
        assert!(lex("a & b").is_err());
    }

    #[test]
    fn rejects_huge_literal() {
        assert!(lex("99999999999999999999").is_err());
    }
}
