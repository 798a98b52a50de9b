//! Scalar expressions in the multitime variables `t1..tm`.
//!
//! Expressions are parsed from infix strings, evaluated in double precision
//! and differentiated symbolically. Differentiation is closed on the AST, so
//! integrability residuals use exact derivatives rather than finite
//! differences.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

/// AST for a scalar expression over `t1..tm`.
///
/// Variables are stored zero-based: `Var(0)` is `t1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, i32),
    Apply(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    // Smart constructors fold constants so derivatives stay compact.
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (_, Some(0.0)) => a,
            (Some(0.0), _) => Expr::neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::Const(0.0),
            _ if a.is_one() => b,
            _ if b.is_one() => a,
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero() && !b.is_zero() {
            return Expr::Const(0.0);
        }
        if b.is_one() {
            return a;
        }
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Expr) -> Expr {
        match a.as_const() {
            Some(x) => Expr::Const(-x),
            None => Expr::Neg(Box::new(a)),
        }
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        match n {
            0 => Expr::Const(1.0),
            1 => a,
            _ => match a.as_const() {
                Some(x) => Expr::Const(x.powi(n)),
                None => Expr::Pow(Box::new(a), n),
            },
        }
    }

    pub fn apply(f: Func, a: Expr) -> Expr {
        Expr::Apply(f, Box::new(a))
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Apply(_, a) => a.max_var(),
        }
    }

    /// Evaluate at a multitime point `t`.
    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        let err = |msg: String| Error::Eval {
            point: t.to_vec(),
            msg,
        };
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *t
                .get(*i)
                .ok_or_else(|| err(format!("variable t{} out of range (m = {})", i + 1, t.len())))?,
            Expr::Add(a, b) => a.eval(t)? + b.eval(t)?,
            Expr::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            Expr::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            Expr::Div(a, b) => {
                let den = b.eval(t)?;
                if den == 0.0 {
                    return Err(err("division by zero".into()));
                }
                a.eval(t)? / den
            }
            Expr::Neg(a) => -a.eval(t)?,
            Expr::Pow(a, n) => a.eval(t)?.powi(*n),
            Expr::Apply(f, a) => {
                let x = a.eval(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(err(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(format!("non-finite value {v}")))
        }
    }

    /// Symbolic partial derivative with respect to `t{var+1}`.
    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => Expr::sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(var), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.diff(var), (**b).clone()),
                    Expr::mul((**a).clone(), b.diff(var)),
                ),
                Expr::pow((**b).clone(), 2),
            ),
            Expr::Neg(a) => Expr::neg(a.diff(var)),
            Expr::Pow(a, n) => Expr::mul(
                Expr::mul(Expr::Const(f64::from(*n)), Expr::pow((**a).clone(), n - 1)),
                a.diff(var),
            ),
            Expr::Apply(f, a) => {
                let inner = a.diff(var);
                match f {
                    Func::Sin => Expr::mul(Expr::apply(Func::Cos, (**a).clone()), inner),
                    Func::Cos => Expr::neg(Expr::mul(Expr::apply(Func::Sin, (**a).clone()), inner)),
                    Func::Exp => Expr::mul(Expr::apply(Func::Exp, (**a).clone()), inner),
                    Func::Sqrt => Expr::div(
                        inner,
                        Expr::mul(Expr::Const(2.0), Expr::apply(Func::Sqrt, (**a).clone())),
                    ),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Fully parenthesized below the top level; round-trips through parse.
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(i) => write!(f, "t{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Pow(a, n) => {
                if *n < 0 {
                    write!(f, "({a}^({n}))")
                } else {
                    write!(f, "({a}^{n})")
                }
            }
            Expr::Apply(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Parse an infix expression string.
///
/// Grammar precedence: `^` > unary `-` > `*`, `/` > `+`, `-`. Exponents are
/// integer literals. Positions in errors are zero-based byte offsets.
pub fn parse_expr(text: &str) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, at: 0 };
    let e = parser.expression()?;
    match parser.peek() {
        Some(tok) => Err(Error::Parse {
            pos: tok.pos,
            msg: format!("unexpected `{}`", tok.kind.describe()),
        }),
        None => Ok(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Number(n) => n.to_string(),
            TokKind::Ident(s) => s.clone(),
            TokKind::Plus => "+".into(),
            TokKind::Minus => "-".into(),
            TokKind::Star => "*".into(),
            TokKind::Slash => "/".into(),
            TokKind::Caret => "^".into(),
            TokKind::LParen => "(".into(),
            TokKind::RParen => ")".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' => {
                let kind = match c {
                    '+' => TokKind::Plus,
                    '-' => TokKind::Minus,
                    '*' => TokKind::Star,
                    '/' => TokKind::Slash,
                    '^' => TokKind::Caret,
                    '(' => TokKind::LParen,
                    _ => TokKind::RParen,
                };
                out.push(Token { kind, pos });
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let value = lit.parse::<f64>().map_err(|_| Error::Parse {
                    pos: start,
                    msg: format!("invalid number literal `{lit}`"),
                })?;
                out.push(Token {
                    kind: TokKind::Number(value),
                    pos: start,
                });
            }
            _ if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::Ident(text[start..i].to_string()),
                    pos: start,
                });
            }
            _ => {
                return Err(Error::Parse {
                    pos,
                    msg: format!("unexpected character `{c}`"),
                });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn eof_pos(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.pos + t.kind.describe().len())
            .unwrap_or(0)
    }

    fn advance(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.at).cloned();
        if tok.is_some() {
            self.at += 1;
        }
        tok
    }

    fn eat(&mut self, kind: &TokKind) -> bool {
        if self.peek().map(|t| &t.kind) == Some(kind) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expression(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat(&TokKind::Plus) {
                e = Expr::Add(Box::new(e), Box::new(self.term()?));
            } else if self.eat(&TokKind::Minus) {
                e = Expr::Sub(Box::new(e), Box::new(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat(&TokKind::Star) {
                e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
            } else if self.eat(&TokKind::Slash) {
                e = Expr::Div(Box::new(e), Box::new(self.unary()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&TokKind::Minus) {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(&TokKind::Caret) {
            let n = self.integer_exponent()?;
            Ok(Expr::Pow(Box::new(base), n))
        } else {
            Ok(base)
        }
    }

    fn integer_exponent(&mut self) -> Result<i32> {
        let negate = self.eat(&TokKind::Minus);
        // Allow a parenthesized exponent, as produced by Display.
        if self.eat(&TokKind::LParen) {
            let n = self.integer_exponent()?;
            let pos = self.peek().map(|t| t.pos).unwrap_or_else(|| self.eof_pos());
            if !self.eat(&TokKind::RParen) {
                return Err(Error::Parse {
                    pos,
                    msg: "expected `)` after exponent".into(),
                });
            }
            return Ok(if negate { -n } else { n });
        }
        match self.advance() {
            Some(Token {
                kind: TokKind::Number(v),
                pos,
            }) => {
                if v.fract() != 0.0 || v.abs() > f64::from(i32::MAX) {
                    Err(Error::Parse {
                        pos,
                        msg: format!("exponent must be an integer, got {v}"),
                    })
                } else {
                    let n = v as i32;
                    Ok(if negate { -n } else { n })
                }
            }
            Some(tok) => Err(Error::Parse {
                pos: tok.pos,
                msg: format!("expected integer exponent, got `{}`", tok.kind.describe()),
            }),
            None => Err(Error::Parse {
                pos: self.eof_pos(),
                msg: "expected integer exponent, got end of input".into(),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.advance() {
            Some(Token {
                kind: TokKind::Number(v),
                ..
            }) => Ok(Expr::Const(v)),
            Some(Token {
                kind: TokKind::Ident(name),
                pos,
            }) => self.ident(&name, pos),
            Some(Token {
                kind: TokKind::LParen,
                pos,
            }) => {
                let e = self.expression()?;
                if self.eat(&TokKind::RParen) {
                    Ok(e)
                } else {
                    Err(Error::Parse {
                        pos: self.peek().map(|t| t.pos).unwrap_or_else(|| self.eof_pos()),
                        msg: format!("unbalanced parenthesis opened at position {pos}"),
                    })
                }
            }
            Some(tok) => Err(Error::Parse {
                pos: tok.pos,
                msg: format!("expected expression, got `{}`", tok.kind.describe()),
            }),
            None => Err(Error::Parse {
                pos: self.eof_pos(),
                msg: "expected expression, got end of input".into(),
            }),
        }
    }

    fn ident(&mut self, name: &str, pos: usize) -> Result<Expr> {
        if let Some(func) = match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        } {
            let open_pos = self.peek().map(|t| t.pos).unwrap_or_else(|| self.eof_pos());
            if !self.eat(&TokKind::LParen) {
                return Err(Error::Parse {
                    pos: open_pos,
                    msg: format!("expected `(` after `{name}`"),
                });
            }
            let arg = self.expression()?;
            if !self.eat(&TokKind::RParen) {
                return Err(Error::Parse {
                    pos: self.peek().map(|t| t.pos).unwrap_or_else(|| self.eof_pos()),
                    msg: format!("unbalanced parenthesis in `{name}(...)`"),
                });
            }
            return Ok(Expr::apply(func, arg));
        }
        if let Some(rest) = name.strip_prefix('t') {
            if let Ok(idx) = rest.parse::<usize>() {
                if idx >= 1 {
                    return Ok(Expr::Var(idx - 1));
                }
            }
        }
        Err(Error::Parse {
            pos,
            msg: format!("unknown identifier `{name}`"),
        })
    }
}

/// A rows x cols matrix of expressions, row-major.
#[derive(Debug, Clone)]
pub struct MatrixExpr {
    rows: usize,
    cols: usize,
    entries: Vec<Expr>,
}

impl MatrixExpr {
    pub fn new(rows: usize, cols: usize, entries: Vec<Expr>) -> Result<MatrixExpr> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix expression has {} entries, expected {} ({}x{})",
                entries.len(),
                rows * cols,
                rows,
                cols
            )));
        }
        Ok(MatrixExpr {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> MatrixExpr {
        MatrixExpr {
            rows,
            cols,
            entries: vec![Expr::Const(0.0); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, r: usize, c: usize) -> &Expr {
        &self.entries[r * self.cols + c]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Expr::is_zero)
    }

    pub fn max_var(&self) -> Option<usize> {
        self.entries.iter().filter_map(Expr::max_var).max()
    }

    /// Entrywise evaluation; errors carry the failing entry index.
    pub fn eval(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(r, c)] = self.entry(r, c).eval(t).map_err(|e| match e {
                    Error::Eval { point, msg } => Error::Eval {
                        point,
                        msg: format!("entry ({r},{c}): {msg}"),
                    },
                    other => other,
                })?;
            }
        }
        Ok(out)
    }

    /// Entrywise symbolic derivative.
    pub fn diff(&self, var: usize) -> MatrixExpr {
        MatrixExpr {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.diff(var)).collect(),
        }
    }

    pub fn transpose(&self) -> MatrixExpr {
        let mut entries = Vec::with_capacity(self.entries.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                entries.push(self.entry(r, c).clone());
            }
        }
        MatrixExpr {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn single_token_variable() {
        assert_eq!(p("t2"), Expr::Var(1));
    }

    #[test]
    fn polynomial_evaluation() {
        let e = p("3*t2^2 + 1");
        assert_eq!(e.eval(&[7.0, 2.0]).unwrap(), 13.0);
    }

    #[test]
    fn unbalanced_paren_position() {
        match parse_expr("t1*(") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert!(matches!(parse_expr("foo+1"), Err(Error::Parse { pos: 0, .. })));
    }

    #[test]
    fn eval_basics() {
        assert_eq!(p("t1+t2").eval(&[1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(p("t2^2").eval(&[5.0, 3.0]).unwrap(), 9.0);
        assert!(matches!(
            p("1/t2").eval(&[0.0, 0.0]),
            Err(Error::Eval { .. })
        ));
        assert!(matches!(
            p("sqrt(t1)").eval(&[-1.0]),
            Err(Error::Eval { .. })
        ));
    }

    #[test]
    fn power_rule() {
        let d = p("t2^2").diff(1);
        for t2 in [0.0, 0.5, -3.0, 2.0] {
            assert_eq!(d.eval(&[0.0, t2]).unwrap(), 2.0 * t2);
        }
    }

    #[test]
    fn derivative_of_independent_variable_vanishes() {
        assert!(p("t2").diff(0).is_zero());
    }

    #[test]
    fn chain_rule_matches_finite_difference() {
        let e = p("sin(t1*t2)");
        let d = e.diff(0);
        let t = [0.3, 0.7];
        let h = 1e-6;
        let fd = (e.eval(&[t[0] + h, t[1]]).unwrap() - e.eval(&[t[0] - h, t[1]]).unwrap())
            / (2.0 * h);
        assert!((d.eval(&t).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn precedence() {
        // ^ binds tighter than unary minus.
        assert_eq!(p("-t1^2").eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("2+3*4").eval(&[]).unwrap(), 14.0);
        assert_eq!(p("2*3^2").eval(&[]).unwrap(), 18.0);
    }

    #[test]
    fn negative_exponent() {
        assert_eq!(p("t1^-2").eval(&[2.0]).unwrap(), 0.25);
    }

    #[test]
    fn matrix_eval_and_dims() {
        let m = MatrixExpr::new(1, 1, vec![p("t1*t2")]).unwrap();
        let v = m.eval(&[2.0, 3.0]).unwrap();
        assert_eq!(v[(0, 0)], 6.0);
        assert!(MatrixExpr::new(2, 2, vec![p("1")]).is_err());
        assert!(MatrixExpr::zeros(3, 2).eval(&[]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn display_round_trip_evaluates_identically() {
        let exprs = [
            "3*t2^2 + 1",
            "sin(t1*t2) - cos(t2)/(1+t1^2)",
            "sqrt(t1+2)*exp(-t2)",
            "-t1^3 + t2^-1",
        ];
        for src in exprs {
            let e = p(src);
            let round = p(&e.to_string());
            for k in 0..20 {
                let t = [0.05 + 0.04 * k as f64, 0.1 + 0.03 * k as f64];
                let a = e.eval(&t).unwrap();
                let b = round.eval(&t).unwrap();
                assert!(
                    (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                    "round trip mismatch for {src}: {a} vs {b}"
                );
            }
        }
    }
}
