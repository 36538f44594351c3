//! A small expression language for problem data.
//!
//! Expressions are real-valued functions of the two variables `x` and `t`.
//! The grammar covers numeric literals, the constants `pi` and `e`, unary
//! minus, the binary operators `+ - * / ^`, and the functions
//! `sin cos tan exp log sqrt abs`.
//!
//! Precedence, from tightest to loosest: `^`, unary `-`, `* /`, `+ -`.
//! `^` is right-associative and its exponent must be a constant, so
//! `-x^2` is `-(x^2)` and `2^3^2` is `2^9`.
//!
//! ```
//! use nonlocal_inverse::expr::{Bindings, Expr, Var};
//!
//! let e: Expr = "sin(2*pi*x)*cos(t)".parse().unwrap();
//! let v = e.eval(&Bindings::xt(0.25, 0.0)).unwrap();
//! assert!((v - 1.0).abs() < 1e-15);
//!
//! let d = e.differentiate(Var::X).unwrap();
//! let dv = d.eval(&Bindings::xt(0.0, 0.0)).unwrap();
//! assert!((dv - 2.0 * std::f64::consts::PI).abs() < 1e-12);
//! ```

use std::fmt;
use std::ops;
use std::str::FromStr;

use thiserror::Error;

/// Free variable of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    T,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X => write!(f, "x"),
            Var::T => write!(f, "t"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree.
///
/// Division nodes keep the byte offset of their `/` in the source text so
/// evaluation errors can point back at it. Exponents are folded to
/// constants at parse time.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>, usize),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("parse error at offset {offset}: {message} (expected one of: {})", expected.join(", "))]
pub struct ParseError {
    /// 0-based byte offset into the source text.
    pub offset: usize,
    pub message: String,
    pub expected: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(Var),
    #[error("division by zero (operator at offset {0})")]
    DivisionByZero(usize),
    #[error("log of nonpositive argument {0}")]
    LogDomain(f64),
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DiffError {
    #[error("`abs` is not differentiable")]
    NonDifferentiable,
}

/// Variable values for evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings {
    pub x: Option<f64>,
    pub t: Option<f64>,
}

impl Bindings {
    pub fn x(x: f64) -> Self {
        Bindings { x: Some(x), t: None }
    }

    pub fn t(t: f64) -> Self {
        Bindings { x: None, t: Some(t) }
    }

    pub fn xt(x: f64, t: f64) -> Self {
        Bindings {
            x: Some(x),
            t: Some(t),
        }
    }

    fn get(&self, var: Var) -> Result<f64, EvalError> {
        match var {
            Var::X => self.x,
            Var::T => self.t,
        }
        .ok_or(EvalError::UnboundVariable(var))
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
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
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    return Err(ParseError {
                        offset: start,
                        message: "`**` is not an operator; use `^` for powers".into(),
                        expected: vec!["*".into(), "^".into()],
                    });
                }
                Tok::Star
            }
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part only when followed by digits
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
                let v: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                    expected: vec!["number".into()],
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(ParseError {
                    offset: start,
                    message: format!("unexpected character `{}`", src[start..].chars().next().unwrap()),
                    expected: primary_expected(),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

fn primary_expected() -> Vec<String> {
    ["number", "identifier", "(", "-"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>, expected: &[&str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    let (_, at) = self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs), at);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        let exponent = self.unary()?;
        if exponent.contains(Var::X) || exponent.contains(Var::T) {
            return Err(ParseError {
                offset: at,
                message: "exponent must be a constant".into(),
                expected: vec!["constant exponent".into()],
            });
        }
        let c = exponent.eval(&Bindings::default()).map_err(|e| ParseError {
            offset: at,
            message: format!("exponent does not evaluate: {e}"),
            expected: vec!["constant exponent".into()],
        })?;
        Ok(Expr::Pow(Box::new(base), c))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.bump();
                match name.as_str() {
                    "pi" => Ok(Expr::Const(Constant::Pi)),
                    "e" => Ok(Expr::Const(Constant::E)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "t" => Ok(Expr::Var(Var::T)),
                    other => {
                        let Some(func) = Func::from_name(other) else {
                            return Err(ParseError {
                                offset: at,
                                message: format!("unknown identifier `{other}`"),
                                expected: vec![
                                    "x".into(),
                                    "t".into(),
                                    "pi".into(),
                                    "e".into(),
                                    "function name".into(),
                                ],
                            });
                        };
                        if *self.peek() != Tok::LParen {
                            return Err(self.err(format!("`{other}` must be called"), &["("]));
                        }
                        self.bump();
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                }
            }
            Tok::End => Err(self.err("unexpected end of input", &["number", "identifier", "(", "-"])),
            _ => Err(self.err("expected an operand", &["number", "identifier", "(", "-"])),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.err("unbalanced parenthesis", &[")", "+", "-", "*", "/", "^"]))
        }
    }
}

/// Parses an expression.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            offset: 0,
            message: "empty expression".into(),
            expected: primary_expected(),
        });
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err(
            "unexpected token after expression",
            &["+", "-", "*", "/", "^", "end of input"],
        ));
    }
    Ok(e)
}

impl FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// Smart constructors (constant folding only)

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(n) if *n == v)
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn pi() -> Expr {
        Expr::Const(Constant::Pi)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        match arg {
            Expr::Num(v) if f != Func::Log && f != Func::Sqrt => {
                Expr::Num(apply_func(f, v).unwrap_or(f64::NAN))
            }
            arg => Expr::Call(f, Box::new(arg)),
        }
    }

    pub fn sin(arg: Expr) -> Expr {
        Expr::call(Func::Sin, arg)
    }

    pub fn cos(arg: Expr) -> Expr {
        Expr::call(Func::Cos, arg)
    }

    pub fn powf(base: Expr, c: f64) -> Expr {
        if c == 1.0 {
            base
        } else if c == 0.0 {
            Expr::Num(1.0)
        } else if let Expr::Num(b) = base {
            let v = b.powf(c);
            if v.is_finite() {
                Expr::Num(v)
            } else {
                Expr::Pow(Box::new(Expr::Num(b)), c)
            }
        } else {
            Expr::Pow(Box::new(base), c)
        }
    }

    fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            (a, b) if is_num(&a, 0.0) => b,
            (a, b) if is_num(&b, 0.0) => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            (a, b) if is_num(&b, 0.0) => a,
            (a, b) if is_num(&a, 0.0) => Expr::neg(b),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            (a, b) if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
            (a, b) if is_num(&a, 1.0) => b,
            (a, b) if is_num(&b, 1.0) => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    fn div(a: Expr, b: Expr, at: usize) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) if y != 0.0 => Expr::Num(x / y),
            (a, b) if is_num(&a, 0.0) && !is_num(&b, 0.0) => Expr::Num(0.0),
            (a, b) if is_num(&b, 1.0) => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b), at),
        }
    }

    fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs, 0)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Num(v)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

fn apply_func(f: Func, v: f64) -> Result<f64, EvalError> {
    Ok(match f {
        Func::Sin => v.sin(),
        Func::Cos => v.cos(),
        Func::Tan => v.tan(),
        Func::Exp => v.exp(),
        Func::Log => {
            if v <= 0.0 {
                return Err(EvalError::LogDomain(v));
            }
            v.ln()
        }
        Func::Sqrt => v.sqrt(),
        Func::Abs => v.abs(),
    })
}

fn pow_value(b: f64, c: f64) -> f64 {
    if c.fract() == 0.0 && c.abs() < i32::MAX as f64 {
        b.powi(c as i32)
    } else {
        b.powf(c)
    }
}

impl Expr {
    /// Evaluates the expression. Non-finite results are reported as errors.
    pub fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        let v = self.eval_raw(b)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_raw(&self, b: &Bindings) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Const(c) => c.value(),
            Expr::Var(v) => b.get(*v)?,
            Expr::Neg(a) => -a.eval_raw(b)?,
            Expr::Add(l, r) => l.eval_raw(b)? + r.eval_raw(b)?,
            Expr::Sub(l, r) => l.eval_raw(b)? - r.eval_raw(b)?,
            Expr::Mul(l, r) => l.eval_raw(b)? * r.eval_raw(b)?,
            Expr::Div(l, r, at) => {
                let den = r.eval_raw(b)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero(*at));
                }
                l.eval_raw(b)? / den
            }
            Expr::Pow(base, c) => pow_value(base.eval_raw(b)?, *c),
            Expr::Call(f, a) => apply_func(*f, a.eval_raw(b)?)?,
        })
    }

    /// Whether `var` occurs free in the expression.
    pub fn contains(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.contains(var),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r, _) => {
                l.contains(var) || r.contains(var)
            }
        }
    }

    /// Replaces `var` by a numeric value, folding constants where possible.
    pub fn substitute(&self, var: Var, value: f64) -> Expr {
        let s = |e: &Expr| e.substitute(var, value);
        match self {
            Expr::Num(_) | Expr::Const(_) => self.clone(),
            Expr::Var(v) if *v == var => Expr::Num(value),
            Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::neg(s(a)),
            Expr::Add(l, r) => Expr::add(s(l), s(r)),
            Expr::Sub(l, r) => Expr::sub(s(l), s(r)),
            Expr::Mul(l, r) => Expr::mul(s(l), s(r)),
            Expr::Div(l, r, at) => Expr::div(s(l), s(r), *at),
            Expr::Pow(a, c) => Expr::powf(s(a), *c),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(s(a))),
        }
    }

    /// Exact symbolic derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Result<Expr, DiffError> {
        let d = |e: &Expr| e.differentiate(var);
        Ok(match self {
            Expr::Num(_) | Expr::Const(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => Expr::neg(d(a)?),
            Expr::Add(l, r) => Expr::add(d(l)?, d(r)?),
            Expr::Sub(l, r) => Expr::sub(d(l)?, d(r)?),
            Expr::Mul(l, r) => Expr::add(
                Expr::mul(d(l)?, (**r).clone()),
                Expr::mul((**l).clone(), d(r)?),
            ),
            Expr::Div(l, r, at) => Expr::div(
                Expr::sub(
                    Expr::mul(d(l)?, (**r).clone()),
                    Expr::mul((**l).clone(), d(r)?),
                ),
                Expr::powf((**r).clone(), 2.0),
                *at,
            ),
            Expr::Pow(a, c) => Expr::mul(
                Expr::mul(Expr::Num(*c), Expr::powf((**a).clone(), c - 1.0)),
                d(a)?,
            ),
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let da = d(a)?;
                let outer = match f {
                    Func::Sin => Expr::cos(inner),
                    Func::Cos => Expr::neg(Expr::sin(inner)),
                    Func::Tan => Expr::powf(Expr::cos(inner), -2.0),
                    Func::Exp => Expr::call(Func::Exp, inner),
                    Func::Log => Expr::powf(inner, -1.0),
                    Func::Sqrt => Expr::mul(
                        Expr::Num(0.5),
                        Expr::powf(Expr::Call(Func::Sqrt, Box::new(inner)), -1.0),
                    ),
                    Func::Abs => return Err(DiffError::NonDifferentiable),
                };
                Expr::mul(outer, da)
            }
        })
    }

    /// Repeated derivative.
    pub fn derivative(&self, var: Var, order: usize) -> Result<Expr, DiffError> {
        let mut e = self.clone();
        for _ in 0..order {
            e = e.differentiate(var)?;
        }
        Ok(e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{:?})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Const(Constant::Pi) => write!(f, "pi"),
            Expr::Const(Constant::E) => write!(f, "e"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(l, r) => write!(f, "({l} + {r})"),
            Expr::Sub(l, r) => write!(f, "({l} - {r})"),
            Expr::Mul(l, r) => write!(f, "({l} * {r})"),
            Expr::Div(l, r, _) => write!(f, "({l} / {r})"),
            Expr::Pow(a, c) => {
                if c.is_sign_negative() {
                    write!(f, "({a})^(-{:?})", -c)
                } else {
                    write!(f, "({a})^({c:?})")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
