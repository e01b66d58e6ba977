//! Arithmetic expressions for potentials and kernel entries.
//!
//! A small recursive-descent parser over real literals, the variables
//! `x` and `t`, the constants `pi` and `alpha`, the binary operators
//! `+ - * / ^` (with `^` right-associative and binding tighter than unary
//! minus), and the functions `sin cos exp sqrt abs pow`.

use std::fmt;

use thiserror::Error;

use crate::scalar::{real, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("evaluation produced a non-finite value in `{op}`")]
    NonFinite { op: &'static str },
    #[error("variable `{0}` is not bound in this context")]
    UnboundVariable(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    T,
    Pi,
    Alpha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

/// Parse tree of an expression. Immutable after parse; evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Number(f64),
    Variable(Var),
    Neg(Box<Expression>),
    Binary(BinOp, Box<Expression>, Box<Expression>),
    Call(Func, Vec<Expression>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset,
            message: message.into(),
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), ExprError> {
        match self.peek() {
            Some(c) if c == byte => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(self.pos, format!("expected `{}`", byte as char))),
        }
    }

    fn parse_expr(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expression::Binary(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expression::Binary(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expression, ExprError> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expression::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expression::Binary(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expression, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expression::Neg(Box::new(inner)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expression, ExprError> {
        let base = self.parse_atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // right-associative; the exponent may carry a unary minus
            let exponent = self.parse_unary()?;
            return Ok(Expression::Binary(
                BinOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expression, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.parse_ident(),
            Some(c) => Err(self.err(self.pos, format!("unexpected `{}`", c as char))),
            None => Err(self.err(self.pos, "unexpected end of input")),
        }
    }

    fn parse_number(&mut self) -> Result<Expression, ExprError> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        if self.src.get(self.pos).is_some_and(|c| *c == b'e' || *c == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.src.get(self.pos).is_some_and(|c| *c == b'+' || *c == b'-') {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                    self.pos += 1;
                }
            } else {
                // `e` was the start of an identifier, not an exponent
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expression::Number)
            .map_err(|_| self.err(start, format!("invalid number `{text}`")))
    }

    fn parse_ident(&mut self) -> Result<Expression, ExprError> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "x" => Ok(Expression::Variable(Var::X)),
            "t" => Ok(Expression::Variable(Var::T)),
            "pi" => Ok(Expression::Variable(Var::Pi)),
            "alpha" => Ok(Expression::Variable(Var::Alpha)),
            "sin" | "cos" | "exp" | "sqrt" | "abs" | "pow" => {
                let func = match name {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    _ => Func::Pow,
                };
                self.expect(b'(')?;
                let mut args = vec![self.parse_expr()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.parse_expr()?);
                }
                self.expect(b')')?;
                if args.len() != func.arity() {
                    return Err(ExprError::Arity {
                        name: func.name().to_string(),
                        expected: func.arity(),
                        got: args.len(),
                    });
                }
                Ok(Expression::Call(func, args))
            }
            _ => Err(ExprError::UnknownIdentifier {
                offset: start,
                name: name.to_string(),
            }),
        }
    }
}

impl Expression {
    /// Parse under standard precedence; unknown identifiers are rejected.
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        if source.trim().is_empty() {
            return Err(ExprError::Syntax {
                offset: 0,
                message: "empty expression".to_string(),
            });
        }
        let mut p = Parser::new(source);
        let e = p.parse_expr()?;
        if p.peek().is_some() {
            return Err(ExprError::Syntax {
                offset: p.pos,
                message: "trailing input".to_string(),
            });
        }
        Ok(e)
    }

    /// Evaluate with both variables bound; `alpha` is unbound here and
    /// expressions referencing it are rejected.
    pub fn eval<T: Scalar>(&self, x: T, t: T) -> Result<T, ExprError> {
        self.eval_node(x, t, None)
    }

    /// Evaluate with the model's fractional order bound to `alpha`.
    pub fn eval_with_alpha<T: Scalar>(&self, x: T, t: T, alpha: T) -> Result<T, ExprError> {
        self.eval_node(x, t, Some(alpha))
    }

    fn eval_node<T: Scalar>(&self, x: T, t: T, alpha: Option<T>) -> Result<T, ExprError> {
        let v = match self {
            Expression::Number(n) => real::<T>(*n),
            Expression::Variable(Var::X) => x,
            Expression::Variable(Var::T) => t,
            Expression::Variable(Var::Pi) => T::PI(),
            Expression::Variable(Var::Alpha) => {
                alpha.ok_or(ExprError::UnboundVariable("alpha"))?
            }
            Expression::Neg(inner) => -inner.eval_node(x, t, alpha)?,
            Expression::Binary(op, a, b) => {
                let a = a.eval_node(x, t, alpha)?;
                let b = b.eval_node(x, t, alpha)?;
                let (v, name) = match op {
                    BinOp::Add => (a + b, "+"),
                    BinOp::Sub => (a - b, "-"),
                    BinOp::Mul => (a * b, "*"),
                    BinOp::Div => (a / b, "/"),
                    BinOp::Pow => (a.powf(b), "^"),
                };
                if !v.is_finite() {
                    return Err(ExprError::NonFinite {
                        op: match name {
                            "+" => "+",
                            "-" => "-",
                            "*" => "*",
                            "/" => "/",
                            _ => "^",
                        },
                    });
                }
                v
            }
            Expression::Call(func, args) => {
                let a = args[0].eval_node(x, t, alpha)?;
                let v = match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Pow => {
                        let b = args[1].eval_node(x, t, alpha)?;
                        a.powf(b)
                    }
                };
                if !v.is_finite() {
                    return Err(ExprError::NonFinite { op: func.name() });
                }
                v
            }
        };
        Ok(v)
    }

    /// True if the tree references the given variable.
    pub fn uses_var(&self, var: Var) -> bool {
        match self {
            Expression::Number(_) => false,
            Expression::Variable(v) => *v == var,
            Expression::Neg(inner) => inner.uses_var(var),
            Expression::Binary(_, a, b) => a.uses_var(var) || b.uses_var(var),
            Expression::Call(_, args) => args.iter().any(|a| a.uses_var(var)),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Number(n) => write!(f, "{n:?}"),
            Expression::Variable(Var::X) => write!(f, "x"),
            Expression::Variable(Var::T) => write!(f, "t"),
            Expression::Variable(Var::Pi) => write!(f, "pi"),
            Expression::Variable(Var::Alpha) => write!(f, "alpha"),
            Expression::Neg(inner) => write!(f, "(-{inner})"),
            Expression::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expression::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: f64, t: f64) -> f64 {
        Expression::parse(src).unwrap().eval(x, t).unwrap()
    }

    #[test]
    fn parse_and_eval_examples() {
        assert!((ev("sin(2*x)", std::f64::consts::FRAC_PI_4, 0.0) - 1.0).abs() < 1e-15);
        assert!((ev("0.5*(x - t)", 1.0, 0.25) - 0.375).abs() < 1e-15);
        assert_eq!(ev("pi", 0.0, 0.0), std::f64::consts::PI);
        assert_eq!(ev("x^2", 3.0, 0.0), 9.0);
    }

    #[test]
    fn malformed_input_reports_offset() {
        match Expression::parse("1 + * 2") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_named() {
        match Expression::parse("2*y") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "y");
                assert_eq!(offset, 2);
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn division_by_zero_is_an_eval_error() {
        let e = Expression::parse("1/x").unwrap();
        assert!(matches!(e.eval(0.0f64, 0.0), Err(ExprError::NonFinite { .. })));
        assert!((e.eval(2.0f64, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("2+3*4", 0.0, 0.0), 14.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("pow(2, 10)", 0.0, 0.0), 1024.0);
    }

    #[test]
    fn alpha_requires_binding() {
        let e = Expression::parse("alpha*x").unwrap();
        assert!(matches!(e.eval(1.0f64, 0.0), Err(ExprError::UnboundVariable(_))));
        assert_eq!(e.eval_with_alpha(2.0f64, 0.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn variable_usage_detection() {
        let e = Expression::parse("sin(x) + t^2").unwrap();
        assert!(e.uses_var(Var::X));
        assert!(e.uses_var(Var::T));
        assert!(!e.uses_var(Var::Alpha));
        let c = Expression::parse("cos(t)").unwrap();
        assert!(!c.uses_var(Var::X));
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(
            Expression::parse("sin(x, t)"),
            Err(ExprError::Arity { .. })
        ));
        assert!(matches!(
            Expression::parse("pow(x)"),
            Err(ExprError::Arity { .. })
        ));
    }

    #[test]
    fn repeated_eval_is_bit_identical() {
        let e = Expression::parse("sin(x)*exp(-t) + x^3/7").unwrap();
        let a = e.eval(1.37f64, 0.21).unwrap();
        let b = e.eval(1.37f64, 0.21).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
