//! Closed arithmetic expressions in the variables `t` and `x`.
//!
//! Coefficients `a(t,x)`, `b(t,x)` and initial data are supplied as text and
//! parsed once into an immutable [`Expr`]. Precedence, tightest first:
//! `^`, unary `-`, `* /`, `+ -`. Every binary operator is left associative,
//! so `2^3^2` is `(2^3)^2`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
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
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdent { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdent { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("domain error in `{subexpr}` at (t={t}, x={x}): {reason}")]
pub struct EvalError {
    pub subexpr: String,
    pub reason: &'static str,
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                expected: vec!["number"],
                found: format!("`{text}`"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or('?');
                    return Err(ParseError::Syntax {
                        offset: start,
                        expected: vec!["operator", "operand"],
                        found: format!("`{ch}`"),
                    });
                }
            };
            i += 1;
            out.push((start, tok));
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

const OPERAND: &[&str] = &["number", "`t`", "`x`", "`pi`", "function", "`(`", "`-`"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&'static str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            expected: expected.to_vec(),
            found: describe(self.peek()),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.primary()?;
        while let Tok::Op('^') = self.peek() {
            self.bump();
            let rhs = self.exponent()?;
            lhs = Expr::Bin(BinOp::Pow, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // Allows `2^-1`; the exponent binds no looser than a primary.
    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(e)
                    }
                    _ => self.fail(&["`)`", "operator"]),
                }
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "pi" => Ok(Expr::Pi),
                    _ => match Func::from_name(&name) {
                        Some(f) => {
                            if !matches!(self.peek(), Tok::LParen) {
                                return self.fail(&["`(`"]);
                            }
                            self.bump();
                            let arg = self.expr()?;
                            if !matches!(self.peek(), Tok::RParen) {
                                return self.fail(&["`)`", "operator"]);
                            }
                            self.bump();
                            Ok(Expr::Call(f, Box::new(arg)))
                        }
                        None => Err(ParseError::UnknownIdent { offset, name }),
                    },
                }
            }
            _ => self.fail(OPERAND),
        }
    }
}

/// Parses `src` into an expression tree.
pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        _ => p.fail(&["operator", "end of input"]),
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Evaluates at `(t, x)`. Any non-finite intermediate is a domain error.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        let err = |e: &Expr, reason| EvalError {
            subexpr: e.to_string(),
            reason,
            t,
            x,
        };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(t, x)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(t, x)?;
                let b = r.eval(t, x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(err(self, "division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        if a < 0.0 && b.fract() != 0.0 {
                            return Err(err(self, "negative base with non-integer exponent"));
                        }
                        if a == 0.0 && b < 0.0 {
                            return Err(err(self, "zero raised to a negative power"));
                        }
                        a.powf(b)
                    }
                }
            }
            Expr::Call(f, arg) => {
                let a = arg.eval(t, x)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(err(self, "logarithm of a non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(err(self, "square root of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(self, "non-finite value"))
        }
    }

    /// Replaces every `t` by `t_to` and every `x` by `x_to`.
    pub fn substitute(&self, t_to: &Expr, x_to: &Expr) -> Expr {
        match self {
            Expr::Var(Var::T) => t_to.clone(),
            Expr::Var(Var::X) => x_to.clone(),
            Expr::Num(_) | Expr::Pi => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(t_to, x_to))),
            Expr::Call(f, e) => Expr::Call(*f, Box::new(e.substitute(t_to, x_to))),
            Expr::Bin(op, l, r) => Expr::Bin(
                *op,
                Box::new(l.substitute(t_to, x_to)),
                Box::new(r.substitute(t_to, x_to)),
            ),
        }
    }

    /// True when the tree never references `t`.
    pub fn is_time_independent(&self) -> bool {
        match self {
            Expr::Var(Var::T) => false,
            Expr::Num(_) | Expr::Var(Var::X) | Expr::Pi => true,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_time_independent(),
            Expr::Bin(_, l, r) => l.is_time_independent() && r.is_time_independent(),
        }
    }

    /// Returns the literal value if the tree is a bare number.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, l, r) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({l} {s} {r})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn num(v: f64) -> Box<Expr> {
        Box::new(Expr::Num(v))
    }

    #[test]
    fn parses_difference() {
        assert_eq!(
            parse("t - x").unwrap(),
            Expr::Bin(
                BinOp::Sub,
                Box::new(Expr::Var(Var::T)),
                Box::new(Expr::Var(Var::X))
            )
        );
    }

    #[test]
    fn power_binds_tighter_than_call_result() {
        let e = parse("sin(pi*x)^2").unwrap();
        let expected = Expr::Bin(
            BinOp::Pow,
            Box::new(Expr::Call(
                Func::Sin,
                Box::new(Expr::Bin(
                    BinOp::Mul,
                    Box::new(Expr::Pi),
                    Box::new(Expr::Var(Var::X)),
                )),
            )),
            num(2.0),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn trailing_operator_reports_end_offset() {
        let err = parse("t +").unwrap_err();
        assert_eq!(err.offset(), 3);
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn unknown_identifier_is_named() {
        match parse("2*y + 1").unwrap_err() {
            ParseError::UnknownIdent { name, offset } => {
                assert_eq!(name, "y");
                assert_eq!(offset, 2);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| parse(s).unwrap().eval(0.0, 0.0).unwrap();
        assert_eq!(v("-2^2"), -4.0);
        assert_eq!(v("2^3^2"), 64.0);
        assert_eq!(v("8/4/2"), 1.0);
        assert_eq!(v("1-2-3"), -4.0);
        assert_eq!(v("2*-3"), -6.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("1e-3*1000"), 1.0);
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(parse("t - x").unwrap().eval(2.0, 0.5).unwrap(), 1.5);
        let s = parse("sin(pi*x)").unwrap().eval(0.0, 0.5).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_name_subexpression() {
        let e = parse("1/x").unwrap().eval(0.0, 0.0).unwrap_err();
        assert_eq!(e.reason, "division by zero");
        assert_eq!(e.subexpr, "(1.0 / x)");
        assert!(parse("log(x - 1)").unwrap().eval(0.0, 0.5).is_err());
        assert!(parse("sqrt(t)").unwrap().eval(-1.0, 0.0).is_err());
    }

    #[test]
    fn missing_paren_and_bad_function_use() {
        assert!(parse("sin x").is_err());
        assert!(parse("(t + x").is_err());
        assert!(parse("t x").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn time_independence() {
        assert!(parse("1 + x^2").unwrap().is_time_independent());
        assert!(!parse("x*t").unwrap().is_time_independent());
    }

    #[test]
    fn substitution_composes() {
        let a = parse("x^2 + sin(t)").unwrap();
        let e = a.substitute(&Expr::constant(0.0), &parse("t - x").unwrap());
        assert_eq!(e.eval(3.0, 1.0).unwrap(), 4.0);
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            Just(Expr::Var(Var::T)),
            Just(Expr::Var(Var::X)),
            Just(Expr::Pi),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let op = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div),
                Just(BinOp::Pow),
            ];
            let func = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Exp),
                Just(Func::Log),
                Just(Func::Sqrt),
                Just(Func::Abs),
            ];
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (op, inner.clone(), inner.clone())
                    .prop_map(|(o, l, r)| Expr::Bin(o, Box::new(l), Box::new(r))),
                (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(e in arb_expr()) {
            let printed = e.to_string();
            prop_assert_eq!(parse(&printed).unwrap(), e);
        }

        #[test]
        fn horner_agrees(coeffs in prop::collection::vec(-10.0f64..10.0, 1..7), x in -2.0f64..2.0) {
            let mut src = format!("{:?}", coeffs[coeffs.len() - 1].abs());
            if coeffs[coeffs.len() - 1] < 0.0 {
                src = format!("(-{src})");
            }
            for c in coeffs.iter().rev().skip(1) {
                src = if *c < 0.0 {
                    format!("({src})*x - {:?}", c.abs())
                } else {
                    format!("({src})*x + {c:?}")
                };
            }
            let mut h = coeffs[coeffs.len() - 1];
            for c in coeffs.iter().rev().skip(1) {
                h = h * x + c;
            }
            let v = parse(&src).unwrap().eval(0.0, x).unwrap();
            let ulp = f64::EPSILON * h.abs().max(f64::MIN_POSITIVE);
            prop_assert!((v - h).abs() <= 4.0 * ulp, "{} vs {}", v, h);
        }
    }
}
