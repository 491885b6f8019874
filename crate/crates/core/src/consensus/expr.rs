//! Small symbolic expression engine for comparing symbolic final answers.
//!
//! Supports `+ - * / ^ **`, unary signs, implicit multiplication (`2pi`,
//! `2(x+1)`), the constants `pi` and `e`, and the usual elementary functions.
//! [`Expr::canonical`] flattens and sorts commutative operands so that
//! `x*(x+1)` and `(1+x)*x` print identically; [`Expr::eval`] evaluates under a
//! variable binding for sampling-based comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Const(&'static str),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub at: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.at, self.message)
    }
}

impl std::error::Error for ParseError {}

const FUNCTIONS: &[&str] = &[
    "sqrt", "sin", "cos", "tan", "exp", "ln", "log", "log10", "abs", "asin", "acos", "atan", "sinh",
    "cosh", "tanh", "arcsin", "arccos", "arctan",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) {
            let start = i;
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
            let value = text.parse().map_err(|_| ParseError {
                at: start,
                message: format!("bad number `{text}`"),
            })?;
            out.push((start, Tok::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if c == '*' && bytes.get(i + 1) == Some(&b'*') {
            out.push((i, Tok::Op('^')));
            i += 2;
        } else if "+-*/^".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else if c == '(' || c == '[' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' || c == ']' {
            out.push((i, Tok::RParen));
            i += 1;
        } else if c == ',' {
            out.push((i, Tok::Comma));
            i += 1;
        } else {
            return Err(ParseError {
                at: i,
                message: format!("unexpected character `{}`", src[i..].chars().next().unwrap_or(c)),
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(a, _)| *a)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            at: self.at(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let t = self.term()?;
            terms.push(if op == '-' { Expr::Neg(Box::new(t)) } else { t });
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Add(terms) })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(Tok::Op('*')) => {
                    self.pos += 1;
                    factors.push(self.unary()?);
                }
                Some(Tok::Op('/')) => {
                    self.pos += 1;
                    let d = self.unary()?;
                    factors.push(Expr::Pow(Box::new(d), Box::new(Expr::Num(-1.0))));
                }
                Some(Tok::Num(_) | Tok::Ident(_) | Tok::LParen) => factors.push(self.power()?),
                _ => break,
            }
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { Expr::Mul(factors) })
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(Tok::LParen) = self.peek() {
                    if FUNCTIONS.contains(&name.as_str()) {
                        self.pos += 1;
                        let mut args = vec![self.expr()?];
                        while let Some(Tok::Comma) = self.peek() {
                            self.pos += 1;
                            args.push(self.expr()?);
                        }
                        self.expect_rparen()?;
                        return Ok(Expr::Call(canonical_fn(&name).to_string(), args));
                    }
                }
                Ok(match name.as_str() {
                    "pi" | "PI" | "Pi" => Expr::Const("pi"),
                    "e" => Expr::Const("e"),
                    _ => Expr::Var(name),
                })
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(t) => Err(self.err(format!("unexpected token {t:?}"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("expected `)`")),
        }
    }
}

fn canonical_fn(name: &str) -> &str {
    match name {
        "log" => "ln",
        "arcsin" => "asin",
        "arccos" => "acos",
        "arctan" => "atan",
        other => other,
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let toks = lex(src)?;
        let mut p = Parser {
            toks,
            pos: 0,
            end: src.len(),
        };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    /// Free variables in sorted order.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Num(_) | Expr::Const(_) => {}
            Expr::Add(xs) | Expr::Mul(xs) | Expr::Call(_, xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Expr::Neg(x) => x.collect_vars(out),
            Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, vars: &BTreeMap<String, f64>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => vars.get(name).copied().unwrap_or(f64::NAN),
            Expr::Const("pi") => std::f64::consts::PI,
            Expr::Const(_) => std::f64::consts::E,
            Expr::Add(xs) => xs.iter().map(|x| x.eval(vars)).sum(),
            Expr::Mul(xs) => xs.iter().map(|x| x.eval(vars)).product(),
            Expr::Neg(x) => -x.eval(vars),
            Expr::Pow(a, b) => a.eval(vars).powf(b.eval(vars)),
            Expr::Call(f, args) => {
                let x = args.first().map_or(f64::NAN, |a| a.eval(vars));
                match (f.as_str(), args.len()) {
                    ("sqrt", 1) => x.sqrt(),
                    ("sin", 1) => x.sin(),
                    ("cos", 1) => x.cos(),
                    ("tan", 1) => x.tan(),
                    ("exp", 1) => x.exp(),
                    ("ln", 1) => x.ln(),
                    ("log10", 1) => x.log10(),
                    ("abs", 1) => x.abs(),
                    ("asin", 1) => x.asin(),
                    ("acos", 1) => x.acos(),
                    ("atan", 1) => x.atan(),
                    ("sinh", 1) => x.sinh(),
                    ("cosh", 1) => x.cosh(),
                    ("tanh", 1) => x.tanh(),
                    _ => f64::NAN,
                }
            }
        }
    }

    /// Structural normal form: nested sums and products flattened, their
    /// operands sorted by printed form.
    pub fn canonical(&self) -> Expr {
        match self {
            Expr::Add(xs) => {
                let mut flat = Vec::new();
                for x in xs {
                    match x.canonical() {
                        Expr::Add(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                flat.sort_by_cached_key(|e| e.to_string());
                Expr::Add(flat)
            }
            Expr::Mul(xs) => {
                let mut flat = Vec::new();
                for x in xs {
                    match x.canonical() {
                        Expr::Mul(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                flat.sort_by_cached_key(|e| e.to_string());
                Expr::Mul(flat)
            }
            Expr::Neg(x) => match x.canonical() {
                Expr::Neg(inner) => *inner,
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.canonical()), Box::new(b.canonical())),
            Expr::Call(f, args) => Expr::Call(f.clone(), args.iter().map(Expr::canonical).collect()),
            leaf => leaf.clone(),
        }
    }

    pub fn canonical_string(&self) -> String {
        self.canonical().to_string()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{}", fmt_num(*v)),
            Expr::Var(v) => f.write_str(v),
            Expr::Const(c) => f.write_str(c),
            Expr::Add(xs) => {
                f.write_str("(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
            Expr::Mul(xs) => {
                f.write_str("(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
            Expr::Neg(x) => write!(f, "-({x})"),
            Expr::Pow(a, b) => write!(f, "({a})^({b})"),
            Expr::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
