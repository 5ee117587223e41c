//! Minimal-parenthesis printing that re-parses to the same tree.

use core::fmt;

use super::{BinOp, Expr};

const ADD: u8 = 1;
const MUL: u8 = 2;
const NEG: u8 = 3;
const POW: u8 = 4;
const ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => ADD,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => MUL,
        Expr::Neg(_) => NEG,
        Expr::Bin(BinOp::Pow, ..) => POW,
        Expr::Num(x) if x.is_sign_negative() => NEG,
        _ => ATOM,
    }
}

/// Printable view of an expression with its variable names.
pub struct Display<'a, N: AsRef<str>> {
    expr: &'a Expr,
    names: &'a [N],
}

impl Expr {
    pub fn display<'a, N: AsRef<str>>(&'a self, names: &'a [N]) -> Display<'a, N> {
        Display { expr: self, names }
    }
}

impl<N: AsRef<str>> Display<'_, N> {
    fn write(&self, f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
        if prec(e) < min {
            f.write_str("(")?;
            self.write(f, e, 0)?;
            return f.write_str(")");
        }
        match e {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(i) => match self.names.get(*i) {
                Some(n) => f.write_str(n.as_ref()),
                None => write!(f, "_{i}"),
            },
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.write(f, a, NEG)
            }
            Expr::Bin(op, a, b) => {
                let (sym, lmin, rmin) = match op {
                    BinOp::Add => (" + ", ADD, ADD + 1),
                    BinOp::Sub => (" - ", ADD, ADD + 1),
                    BinOp::Mul => ("*", MUL, MUL + 1),
                    BinOp::Div => ("/", MUL, MUL + 1),
                    BinOp::Pow => ("^", ATOM, NEG),
                };
                self.write(f, a, lmin)?;
                f.write_str(sym)?;
                self.write(f, b, rmin)
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.write(f, a, 0)?;
                f.write_str(")")
            }
            Expr::Atan2(a, b) => {
                f.write_str("atan2(")?;
                self.write(f, a, 0)?;
                f.write_str(", ")?;
                self.write(f, b, 0)?;
                f.write_str(")")
            }
        }
    }
}

impl<N: AsRef<str>> fmt::Display for Display<'_, N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.expr, 0)
    }
}
