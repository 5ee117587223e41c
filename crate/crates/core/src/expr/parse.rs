use alloc::boxed::Box;
use alloc::string::String;

use super::{BinOp, Expr, Func};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: &'static str },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("expected {expected} expressions, found {found}")]
    Shape { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tok<'a> {
    Num(f64),
    Ident(&'a str),
    Op(u8),
    Eof,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok<'a>,
    tok_at: usize,
    vars: &'a [&'a str],
}

/// Parse `text`, resolving names against `variables` (declaration order gives `Var` indices).
pub fn parse(text: &str, variables: &[&str]) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text, pos: 0, tok: Tok::Eof, tok_at: 0, vars: variables };
    p.advance()?;
    let e = p.expr()?;
    match p.tok {
        Tok::Eof => Ok(e),
        _ => Err(p.err("operator or end of input")),
    }
}

impl<'a> Parser<'a> {
    fn err(&self, expected: &'static str) -> ParseError {
        ParseError::Syntax { offset: self.tok_at, expected }
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let b = self.src.as_bytes();
        while self.pos < b.len() && b[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_at = self.pos;
        if self.pos == b.len() {
            self.tok = Tok::Eof;
            return Ok(());
        }
        let c = b[self.pos];
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
                self.pos += 1;
            }
            if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
                let mut k = self.pos + 1;
                if k < b.len() && (b[k] == b'+' || b[k] == b'-') {
                    k += 1;
                }
                if k < b.len() && b[k].is_ascii_digit() {
                    while k < b.len() && b[k].is_ascii_digit() {
                        k += 1;
                    }
                    self.pos = k;
                }
            }
            let x: f64 = self.src[start..self.pos].parse().map_err(|_| self.err("number"))?;
            self.tok = Tok::Num(x);
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
                self.pos += 1;
            }
            self.tok = Tok::Ident(&self.src[start..self.pos]);
        } else if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            self.tok = Tok::Op(c);
        } else {
            return Err(self.err("number, name, operator or parenthesis"));
        }
        Ok(())
    }

    fn eat(&mut self, op: u8, expected: &'static str) -> Result<(), ParseError> {
        if self.tok == Tok::Op(op) {
            self.advance()
        } else {
            Err(self.err(expected))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op(b'+') => BinOp::Add,
                Tok::Op(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op(b'*') => BinOp::Mul,
                Tok::Op(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Op(b'-') {
            self.advance()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.tok == Tok::Op(b'^') {
            self.advance()?;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok {
            Tok::Num(x) => {
                self.advance()?;
                Ok(Expr::Num(x))
            }
            Tok::Op(b'(') => {
                self.advance()?;
                let e = self.expr()?;
                self.eat(b')', "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.tok_at;
                self.advance()?;
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                if name == "pi" {
                    return Ok(Expr::Num(core::f64::consts::PI));
                }
                if name == "atan2" {
                    self.eat(b'(', "'('")?;
                    let y = self.expr()?;
                    self.eat(b',', "','")?;
                    let x = self.expr()?;
                    self.eat(b')', "')'")?;
                    return Ok(Expr::Atan2(Box::new(y), Box::new(x)));
                }
                if let Some(f) = Func::from_name(name) {
                    self.eat(b'(', "'('")?;
                    let a = self.expr()?;
                    self.eat(b')', "')'")?;
                    return Ok(Expr::Call(f, Box::new(a)));
                }
                Err(ParseError::UnknownIdentifier { name: String::from(name), offset: at })
            }
            _ => Err(self.err("operand")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: usize) -> Box<Expr> {
        Box::new(Expr::Var(i))
    }

    #[test]
    fn precedence() {
        let e = parse("x^2*y", &["x", "y"]).unwrap();
        assert_eq!(
            e,
            Expr::Bin(BinOp::Mul, Box::new(Expr::Bin(BinOp::Pow, v(0), Box::new(Expr::Num(2.0)))), v(1))
        );
        // -x^2 is -(x^2); ^ is right-associative
        let e = parse("-x^2", &["x"]).unwrap();
        assert!(matches!(e, Expr::Neg(ref a) if matches!(**a, Expr::Bin(BinOp::Pow, _, _))));
        let e = parse("x^y^x", &["x", "y"]).unwrap();
        assert!(matches!(e, Expr::Bin(BinOp::Pow, ref a, ref b)
            if **a == Expr::Var(0) && matches!(**b, Expr::Bin(BinOp::Pow, _, _))));
        let e = parse("x - y - x", &["x", "y"]).unwrap();
        assert!(matches!(e, Expr::Bin(BinOp::Sub, ref a, _) if matches!(**a, Expr::Bin(BinOp::Sub, _, _))));
    }

    #[test]
    fn syntax_error_offset() {
        assert_eq!(
            parse("x +* y", &["x", "y"]),
            Err(ParseError::Syntax { offset: 3, expected: "operand" })
        );
        assert!(matches!(parse("(x", &["x"]), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x y", &["x", "y"]), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("sin x", &["x"]), Err(ParseError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("x $ y", &["x", "y"]), Err(ParseError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            parse("x + z", &["x"]),
            Err(ParseError::UnknownIdentifier { name: "z".into(), offset: 4 })
        );
        assert!(matches!(parse("foo(x)", &["x"]), Err(ParseError::UnknownIdentifier { .. })));
    }

    #[test]
    fn numbers_and_builtins() {
        assert_eq!(parse("1.5e-3", &[]).unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse(".25", &[]).unwrap(), Expr::Num(0.25));
        assert_eq!(parse("pi", &[]).unwrap(), Expr::Num(core::f64::consts::PI));
        let e = parse("atan2(y, x)", &["x", "y"]).unwrap();
        assert_eq!(e, Expr::Atan2(v(1), v(0)));
        assert!(parse("1.2.3", &[]).is_err());
    }
}
