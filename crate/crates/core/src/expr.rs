//! Declarative scalar expressions for custom flows and processes.
//!
//! Grammar (usual precedence, `^` binds tightest and is right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names: `t`; `x` (same as `x1`), `x1`..`x9`; `W` (current driver value,
//! same as `W1` and `W(t)`), `W1`..`W9`; constants `pi`, `e`. Functions:
//! `abs sign sqrt exp log sin cos min max pow`.
//!
//! Expressions differentiate symbolically in a space coordinate, and
//! sums of products split into time and space factors when possible.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sign,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func::Sqrt => v.sqrt(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    /// Space coordinate, 0-based.
    Space(usize),
    /// Current driver component, 0-based.
    Driver(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `if a <= b { then } else { other }`; produced by differentiating
    /// `min` and `max`.
    IfLe(Box<Expr>, Box<Expr>, Box<Expr>, Box<Expr>),
}

/// Evaluation environment.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub w: &'a [f64],
}

pub type Compiled = Arc<dyn Fn(&Env<'_>) -> f64 + Send + Sync>;

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn uses_space(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Space(_)))
    }

    /// Depends on `t` or on the driver.
    pub fn uses_time(&self) -> bool {
        self.any(&|e| matches!(e, Expr::Time | Expr::Driver(_)))
    }

    /// Contains a primitive with a kink or jump (`abs`, `sign`, `min`,
    /// `max` or a conditional).
    pub fn is_piecewise(&self) -> bool {
        self.any(&|e| {
            matches!(
                e,
                Expr::Call(Func::Abs | Func::Sign, _) | Expr::Min(..) | Expr::Max(..) | Expr::IfLe(..)
            )
        })
    }

    /// Largest space coordinate referenced, plus one.
    pub fn space_dim(&self) -> usize {
        let mut dim = 0;
        self.visit(&mut |e| {
            if let Expr::Space(i) = e {
                dim = dim.max(i + 1);
            }
        });
        dim
    }

    /// Largest driver component referenced, plus one.
    pub fn driver_dim(&self) -> usize {
        let mut dim = 0;
        self.visit(&mut |e| {
            if let Expr::Driver(i) = e {
                dim = dim.max(i + 1);
            }
        });
        dim
    }

    fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Time | Expr::Space(_) | Expr::Driver(_) => vec![],
            Expr::Neg(a) | Expr::Call(_, a) => vec![a],
            Expr::Add(a, c)
            | Expr::Sub(a, c)
            | Expr::Mul(a, c)
            | Expr::Div(a, c)
            | Expr::Pow(a, c)
            | Expr::Min(a, c)
            | Expr::Max(a, c) => vec![a, c],
            Expr::IfLe(a, c, d, e) => vec![a, c, d, e],
        }
    }

    fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        pred(self) || self.children().into_iter().any(|c| c.any(pred))
    }

    pub fn eval(&self, env: &Env<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Time => env.t,
            Expr::Space(i) => env.x[*i],
            Expr::Driver(i) => env.w[*i],
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, c) => a.eval(env) + c.eval(env),
            Expr::Sub(a, c) => a.eval(env) - c.eval(env),
            Expr::Mul(a, c) => a.eval(env) * c.eval(env),
            Expr::Div(a, c) => a.eval(env) / c.eval(env),
            Expr::Pow(a, c) => pow(a.eval(env), c.eval(env)),
            Expr::Call(f, a) => f.apply(a.eval(env)),
            Expr::Min(a, c) => a.eval(env).min(c.eval(env)),
            Expr::Max(a, c) => a.eval(env).max(c.eval(env)),
            Expr::IfLe(a, c, then, other) => {
                if a.eval(env) <= c.eval(env) {
                    then.eval(env)
                } else {
                    other.eval(env)
                }
            }
        }
    }

    /// Closure tree equivalent to [`Expr::eval`].
    pub fn compile(&self) -> Compiled {
        match self {
            Expr::Const(c) => {
                let c = *c;
                Arc::new(move |_| c)
            }
            Expr::Time => Arc::new(|env| env.t),
            Expr::Space(i) => {
                let i = *i;
                Arc::new(move |env| env.x[i])
            }
            Expr::Driver(i) => {
                let i = *i;
                Arc::new(move |env| env.w[i])
            }
            Expr::Neg(a) => {
                let a = a.compile();
                Arc::new(move |env| -a(env))
            }
            Expr::Add(a, c) => bin(a, c, |p, q| p + q),
            Expr::Sub(a, c) => bin(a, c, |p, q| p - q),
            Expr::Mul(a, c) => {
                // x * x shows up constantly; skip the second traversal
                if a == c {
                    let a = a.compile();
                    return Arc::new(move |env| {
                        let v = a(env);
                        v * v
                    });
                }
                bin(a, c, |p, q| p * q)
            }
            Expr::Div(a, c) => bin(a, c, |p, q| p / q),
            Expr::Pow(a, c) => match c.constant() {
                Some(k) if k == 2.0 => {
                    let a = a.compile();
                    Arc::new(move |env| {
                        let v = a(env);
                        v * v
                    })
                }
                Some(k) if k.fract() == 0.0 && k.abs() < 64.0 => {
                    let a = a.compile();
                    let k = k as i32;
                    Arc::new(move |env| a(env).powi(k))
                }
                _ => bin(a, c, pow),
            },
            Expr::Call(f, a) => {
                let f = *f;
                let a = a.compile();
                Arc::new(move |env| f.apply(a(env)))
            }
            Expr::Min(a, c) => bin(a, c, f64::min),
            Expr::Max(a, c) => bin(a, c, f64::max),
            Expr::IfLe(a, c, then, other) => {
                let (a, c, then, other) = (a.compile(), c.compile(), then.compile(), other.compile());
                Arc::new(move |env| if a(env) <= c(env) { then(env) } else { other(env) })
            }
        }
    }

    /// Partial derivative in space coordinate `i`.
    ///
    /// Kinks get their one-sided conventions: `d|u| = sign(u) du`,
    /// `d sign(u) = 0`, and `min`/`max` follow the active branch.
    pub fn derivative(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::Time | Expr::Driver(_) => Expr::Const(0.0),
            Expr::Space(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(i)),
            Expr::Add(a, c) => add(a.derivative(i), c.derivative(i)),
            Expr::Sub(a, c) => sub(a.derivative(i), c.derivative(i)),
            Expr::Mul(a, c) => add(
                mul(a.derivative(i), (**c).clone()),
                mul((**a).clone(), c.derivative(i)),
            ),
            Expr::Div(a, c) => {
                // (a'c - ac') / c^2
                let num = sub(
                    mul(a.derivative(i), (**c).clone()),
                    mul((**a).clone(), c.derivative(i)),
                );
                div(num, mul((**c).clone(), (**c).clone()))
            }
            Expr::Pow(a, c) => {
                if !c.uses_space() {
                    // c a^(c-1) a'
                    let da = a.derivative(i);
                    if da.constant() == Some(0.0) {
                        return Expr::Const(0.0);
                    }
                    let lowered = powe((**a).clone(), sub((**c).clone(), Expr::Const(1.0)));
                    mul(mul((**c).clone(), lowered), da)
                } else {
                    // a^c (c' ln a + c a'/a)
                    let inner = add(
                        mul(c.derivative(i), Expr::Call(Func::Log, a.clone())),
                        div(mul((**c).clone(), a.derivative(i)), (**a).clone()),
                    );
                    mul(self.clone(), inner)
                }
            }
            Expr::Call(f, a) => {
                let da = a.derivative(i);
                if da.constant() == Some(0.0) {
                    return Expr::Const(0.0);
                }
                let outer = match f {
                    Func::Abs => Expr::Call(Func::Sign, a.clone()),
                    Func::Sign => return Expr::Const(0.0),
                    Func::Sqrt => div(Expr::Const(0.5), self.clone()),
                    Func::Exp => self.clone(),
                    Func::Log => div(Expr::Const(1.0), (**a).clone()),
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Expr::Call(Func::Sin, a.clone())),
                };
                mul(outer, da)
            }
            Expr::Min(a, c) => if_le((**a).clone(), (**c).clone(), a.derivative(i), c.derivative(i)),
            Expr::Max(a, c) => if_le((**a).clone(), (**c).clone(), c.derivative(i), a.derivative(i)),
            Expr::IfLe(a, c, then, other) => {
                if_le((**a).clone(), (**c).clone(), then.derivative(i), other.derivative(i))
            }
        }
    }

    /// Splits the expression into `sum_i time_i * space_i`, where each
    /// `time_i` depends only on `(t, W)` and each `space_i` only on `x`.
    /// Returns `None` when some summand mixes the two.
    pub fn separate(&self) -> Option<Vec<(Expr, Expr)>> {
        let mut out = Vec::new();
        for term in summands(self) {
            let mut time = Expr::Const(1.0);
            let mut space = Expr::Const(1.0);
            for (factor, inverted) in factors(&term, false) {
                let factor = if inverted {
                    div(Expr::Const(1.0), factor)
                } else {
                    factor
                };
                match (factor.uses_time(), factor.uses_space()) {
                    (true, true) => return None,
                    (false, true) => space = mul(space, factor),
                    _ => time = mul(time, factor),
                }
            }
            if time.constant() != Some(0.0) && space.constant() != Some(0.0) {
                out.push((time, space));
            }
        }
        Some(out)
    }
}

fn bin(a: &Expr, c: &Expr, op: fn(f64, f64) -> f64) -> Compiled {
    let (a, c) = (a.compile(), c.compile());
    Arc::new(move |env| op(a(env), c(env)))
}

fn pow(a: f64, c: f64) -> f64 {
    if c.fract() == 0.0 && c.abs() < 64.0 {
        a.powi(c as i32)
    } else {
        a.powf(c)
    }
}

fn summands(e: &Expr) -> Vec<Expr> {
    match e {
        Expr::Add(a, c) => {
            let mut v = summands(a);
            v.extend(summands(c));
            v
        }
        Expr::Sub(a, c) => {
            let mut v = summands(a);
            v.extend(summands(c).into_iter().map(neg));
            v
        }
        Expr::Neg(a) => summands(a).into_iter().map(neg).collect(),
        other => vec![other.clone()],
    }
}

fn factors(e: &Expr, inverted: bool) -> Vec<(Expr, bool)> {
    match e {
        Expr::Mul(a, c) => {
            let mut v = factors(a, inverted);
            v.extend(factors(c, inverted));
            v
        }
        Expr::Div(a, c) => {
            let mut v = factors(a, inverted);
            v.extend(factors(c, !inverted));
            v
        }
        Expr::Neg(a) => {
            let mut v = factors(a, inverted);
            v.push((Expr::Const(-1.0), false));
            v
        }
        other => vec![(other.clone(), inverted)],
    }
}

// Simplifying constructors. They fold constants and drop neutral
// elements so that derivatives of polynomial flows stay small.

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(b(other)),
    }
}

pub fn add(a: Expr, c: Expr) -> Expr {
    match (a.constant(), c.constant()) {
        (Some(p), Some(q)) => Expr::Const(p + q),
        (Some(p), _) if p == 0.0 => c,
        (_, Some(q)) if q == 0.0 => a,
        _ => Expr::Add(b(a), b(c)),
    }
}

pub fn sub(a: Expr, c: Expr) -> Expr {
    match (a.constant(), c.constant()) {
        (Some(p), Some(q)) => Expr::Const(p - q),
        (Some(p), _) if p == 0.0 => neg(c),
        (_, Some(q)) if q == 0.0 => a,
        _ => Expr::Sub(b(a), b(c)),
    }
}

pub fn mul(a: Expr, c: Expr) -> Expr {
    match (a.constant(), c.constant()) {
        (Some(p), Some(q)) => Expr::Const(p * q),
        (Some(p), _) | (_, Some(p)) if p == 0.0 => Expr::Const(0.0),
        (Some(p), _) if p == 1.0 => c,
        (_, Some(q)) if q == 1.0 => a,
        (Some(p), _) if p == -1.0 => neg(c),
        (_, Some(q)) if q == -1.0 => neg(a),
        _ => Expr::Mul(b(a), b(c)),
    }
}

pub fn div(a: Expr, c: Expr) -> Expr {
    match (a.constant(), c.constant()) {
        (Some(p), Some(q)) if q != 0.0 => Expr::Const(p / q),
        (Some(p), _) if p == 0.0 => Expr::Const(0.0),
        (_, Some(q)) if q == 1.0 => a,
        _ => Expr::Div(b(a), b(c)),
    }
}

pub fn powe(a: Expr, c: Expr) -> Expr {
    match (a.constant(), c.constant()) {
        (Some(p), Some(q)) => Expr::Const(pow(p, q)),
        (_, Some(q)) if q == 0.0 => Expr::Const(1.0),
        (_, Some(q)) if q == 1.0 => a,
        _ => Expr::Pow(b(a), b(c)),
    }
}

fn if_le(a: Expr, c: Expr, then: Expr, other: Expr) -> Expr {
    if then == other {
        return then;
    }
    Expr::IfLe(b(a), b(c), b(then), b(other))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Time => f.write_str("t"),
            Expr::Space(0) => f.write_str("x"),
            Expr::Space(i) => write!(f, "x{}", i + 1),
            Expr::Driver(0) => f.write_str("W"),
            Expr::Driver(i) => write!(f, "W{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, c) => write!(f, "({a} + {c})"),
            Expr::Sub(a, c) => write!(f, "({a} - {c})"),
            Expr::Mul(a, c) => write!(f, "({a} * {c})"),
            Expr::Div(a, c) => write!(f, "({a} / {c})"),
            Expr::Pow(a, c) => write!(f, "({a} ^ {c})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Min(a, c) => write!(f, "min({a}, {c})"),
            Expr::Max(a, c) => write!(f, "max({a}, {c})"),
            Expr::IfLe(a, c, then, other) => write!(f, "(({a}) <= ({c}) ? {then} : {other})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: msg.to_string(),
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(b(lhs), b(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(b(lhs), b(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(b(lhs), b(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(b(lhs), b(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(b(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Expr::Pow(b(base), b(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(c) => Err(self.err(&format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map(Expr::Const).map_err(|_| Error::Parse {
            offset: start,
            message: format!("bad number {text:?}"),
        })
    }

    fn name(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("").to_string();
        let unknown = || Error::Parse {
            offset: start,
            message: format!("unknown name {name:?}"),
        };
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            self.expect(b')')?;
            return self.call(&name, args, start);
        }
        let indexed = |prefix: &str| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() {
                return Some(0);
            }
            match rest.parse::<usize>() {
                Ok(i) if (1..=9).contains(&i) => Some(i - 1),
                _ => None,
            }
        };
        match name.as_str() {
            "t" => Ok(Expr::Time),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "e" => Ok(Expr::Const(std::f64::consts::E)),
            _ => {
                if let Some(i) = indexed("x") {
                    Ok(Expr::Space(i))
                } else if let Some(i) = indexed("W") {
                    Ok(Expr::Driver(i))
                } else {
                    Err(unknown())
                }
            }
        }
    }

    fn call(&self, name: &str, mut args: Vec<Expr>, start: usize) -> Result<Expr> {
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Parse {
                    offset: start,
                    message: format!("{name} takes {n} argument(s), got {}", args.len()),
                })
            }
        };
        let unary = |f: Func, args: &mut Vec<Expr>| Expr::Call(f, b(args.remove(0)));
        let func = match name {
            "abs" => Some(Func::Abs),
            "sign" => Some(Func::Sign),
            "sqrt" => Some(Func::Sqrt),
            "exp" => Some(Func::Exp),
            "log" | "ln" => Some(Func::Log),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        };
        if let Some(f) = func {
            arity(1)?;
            return Ok(unary(f, &mut args));
        }
        let driver = name.strip_prefix('W').and_then(|rest| {
            if rest.is_empty() {
                Some(0)
            } else {
                rest.parse::<usize>().ok().filter(|i| (1..=9).contains(i)).map(|i| i - 1)
            }
        });
        match name {
            "min" | "max" | "pow" => {
                arity(2)?;
                let c = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(match name {
                    "min" => Expr::Min(b(a), b(c)),
                    "max" => Expr::Max(b(a), b(c)),
                    _ => Expr::Pow(b(a), b(c)),
                })
            }
            _ => match driver {
                // only the current value of the driver is addressable
                Some(i) if args.len() == 1 && args[0] == Expr::Time => Ok(Expr::Driver(i)),
                Some(_) => Err(Error::Parse {
                    offset: start,
                    message: format!("{name}(..) only accepts the current time t"),
                }),
                None => Err(Error::Parse {
                    offset: start,
                    message: format!("unknown function {name:?}"),
                }),
            },
        }
    }
}
