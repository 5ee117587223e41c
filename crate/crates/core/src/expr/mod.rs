//! A small arithmetic language for user-defined fields.
//!
//! Expressions are parsed against an ordered list of variable names and stored
//! with variables resolved to indices, so evaluation is a plain tree walk over
//! any [`Scalar`]. Evaluating over [`Dual`](crate::dual::Dual) numbers gives
//! exact partial derivatives.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | func '(' expr ')' | 'atan2' '(' expr ',' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and `-x^2` is `-(x^2)`. There is no implicit
//! multiplication. Builtins are `sin cos tan exp ln sqrt atan2` and the constant
//! `pi`. Angles are radians.

mod parse;
mod print;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::dual::Scalar;

pub use parse::{parse, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Ln, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Expression tree. `Var(i)` refers to the i-th declared variable.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Atan2(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error in {op}")]
    Domain { op: &'static str },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

fn check<S: Scalar>(x: S, op: &'static str) -> Result<S, EvalError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EvalError::Domain { op })
    }
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn pow(self, e: Expr) -> Expr {
        Expr::Bin(BinOp::Pow, Box::new(self), Box::new(e))
    }

    /// Negative exponents are stored as `Neg(Num)`, the form the parser produces.
    pub fn powi(self, n: i32) -> Expr {
        let e = Expr::Num(n.unsigned_abs() as f64);
        self.pow(if n < 0 { Expr::Neg(Box::new(e)) } else { e })
    }

    pub fn call(self, f: Func) -> Expr {
        Expr::Call(f, Box::new(self))
    }

    pub fn sin(self) -> Expr {
        self.call(Func::Sin)
    }

    pub fn cos(self) -> Expr {
        self.call(Func::Cos)
    }

    pub fn sqrt(self) -> Expr {
        self.call(Func::Sqrt)
    }

    pub fn ln(self) -> Expr {
        self.call(Func::Ln)
    }

    pub fn exp(self) -> Expr {
        self.call(Func::Exp)
    }

    pub fn atan2(self, x: Expr) -> Expr {
        Expr::Atan2(Box::new(self), Box::new(x))
    }

    /// True iff the tree is a literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(x) if *x == 0.0)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Bin(_, a, b) | Expr::Atan2(a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.depth(),
            Expr::Bin(_, a, b) | Expr::Atan2(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Evaluate with `vars[i]` bound to `Var(i)`. Any non-finite intermediate is an error.
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<S, EvalError> {
        match self {
            Expr::Num(x) => Ok(S::from_f64(*x)),
            Expr::Var(i) => vars
                .get(*i)
                .copied()
                .ok_or_else(|| EvalError::UnboundVariable(alloc::format!("#{i}"))),
            Expr::Neg(a) => Ok(-a.eval(vars)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(vars)?;
                if let (BinOp::Pow, Some(n)) = (op, const_int(b)) {
                    if n < 0 && x.re() == 0.0 {
                        return Err(EvalError::Domain { op: "^" });
                    }
                    return check(x.powi(n), "^");
                }
                let y = b.eval(vars)?;
                match op {
                    BinOp::Add => check(x + y, "+"),
                    BinOp::Sub => check(x - y, "-"),
                    BinOp::Mul => check(x * y, "*"),
                    BinOp::Div => {
                        if y.re() == 0.0 {
                            return Err(EvalError::Domain { op: "/" });
                        }
                        check(x / y, "/")
                    }
                    BinOp::Pow => {
                        if !(x.re() > 0.0) {
                            return Err(EvalError::Domain { op: "^" });
                        }
                        check(x.powf(y), "^")
                    }
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(vars)?;
                let r = match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan(),
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if !(x.re() > 0.0) {
                            return Err(EvalError::Domain { op: "ln" });
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x.re() < 0.0 {
                            return Err(EvalError::Domain { op: "sqrt" });
                        }
                        x.sqrt()
                    }
                };
                check(r, f.name())
            }
            Expr::Atan2(a, b) => {
                let y = a.eval(vars)?;
                let x = b.eval(vars)?;
                check(y.atan2(x), "atan2")
            }
        }
    }

    /// Evaluate against named bindings, `names` being the declaration order used at parse time.
    pub fn eval_named<S: Scalar>(&self, names: &[&str], env: &[(&str, S)]) -> Result<S, EvalError> {
        let mut vals = Vec::with_capacity(names.len());
        if let Some(m) = self.max_var() {
            for name in names.iter().take(m + 1) {
                let v = env
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| EvalError::UnboundVariable(String::from(*name)))?;
                vals.push(v);
            }
        }
        self.eval(&vals)
    }
}

/// Literal integer exponent (possibly negated), evaluated by repeated multiplication.
fn const_int(e: &Expr) -> Option<i32> {
    match e {
        Expr::Num(n) if *n == libm::trunc(*n) && libm::fabs(*n) <= 64.0 => Some(*n as i32),
        Expr::Neg(a) => const_int(a).map(|n| -n),
        _ => None,
    }
}

impl From<f64> for Expr {
    fn from(x: f64) -> Expr {
        Expr::Num(x)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

macro_rules! bin_impl {
    ($tr:ident, $m:ident, $op:expr) => {
        impl $tr for Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                Expr::Bin($op, Box::new(self), Box::new(o))
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, o: f64) -> Expr {
                Expr::Bin($op, Box::new(self), Box::new(Expr::Num(o)))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                Expr::Bin($op, Box::new(Expr::Num(self)), Box::new(o))
            }
        }
    };
}

bin_impl!(Add, add, BinOp::Add);
bin_impl!(Sub, sub, BinOp::Sub);
bin_impl!(Mul, mul, BinOp::Mul);
bin_impl!(Div, div, BinOp::Div);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// A tuple of expressions over a shared variable list. Matrices are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedField {
    variables: Vec<String>,
    exprs: Vec<Expr>,
    shape: Shape,
}

impl ParsedField {
    pub fn parse<T: AsRef<str>>(variables: &[&str], texts: &[T], shape: Shape) -> Result<Self, ParseError> {
        if texts.len() != shape.len() {
            return Err(ParseError::Shape { expected: shape.len(), found: texts.len() });
        }
        let exprs = texts.iter().map(|t| parse(t.as_ref(), variables)).collect::<Result<_, _>>()?;
        Ok(ParsedField { variables: variables.iter().map(|s| String::from(*s)).collect(), exprs, shape })
    }

    /// Build from already-constructed trees; every `Var` index must be below `variables.len()`.
    pub fn from_exprs(variables: Vec<String>, exprs: Vec<Expr>, shape: Shape) -> Self {
        assert_eq!(exprs.len(), shape.len(), "field shape");
        assert!(
            exprs.iter().all(|e| e.max_var().is_none_or(|m| m < variables.len())),
            "expression references an undeclared variable"
        );
        ParsedField { variables, exprs, shape }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> Result<Vec<S>, EvalError> {
        self.exprs.iter().map(|e| e.eval(vars)).collect()
    }
}
