//! Small math-expression language for model definitions: one free variable
//! x, the constant pi, arithmetic with the usual precedence, and the
//! functions sin, cos, exp, abs. Parsing is recursive descent over a token
//! stream that remembers character positions, so every diagnostic points at
//! the offending spot in the source text.

use std::fmt;
use std::sync::Arc;

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
    Exp,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::X => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(x), r.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(x);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                }
            }
        }
    }

    /// Forward-mode value and derivative at x. abs uses the zero subgradient
    /// at its kink; a^b falls back to the logarithmic rule only when the
    /// exponent actually varies.
    pub fn eval_dual(&self, x: f64) -> (f64, f64) {
        match self {
            Expr::Num(c) => (*c, 0.0),
            Expr::X => (x, 1.0),
            Expr::Pi => (std::f64::consts::PI, 0.0),
            Expr::Neg(e) => {
                let (v, d) = e.eval_dual(x);
                (-v, -d)
            }
            Expr::Bin(op, l, r) => {
                let (a, da) = l.eval_dual(x);
                let (b, db) = r.eval_dual(x);
                match op {
                    BinOp::Add => (a + b, da + db),
                    BinOp::Sub => (a - b, da - db),
                    BinOp::Mul => (a * b, da * b + a * db),
                    BinOp::Div => (a / b, (da * b - a * db) / (b * b)),
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if db == 0.0 {
                            (v, b * a.powf(b - 1.0) * da)
                        } else {
                            (v, v * (db * a.ln() + b * da / a))
                        }
                    }
                }
            }
            Expr::Call(f, e) => {
                let (v, d) = e.eval_dual(x);
                match f {
                    Func::Sin => (v.sin(), v.cos() * d),
                    Func::Cos => (v.cos(), -v.sin() * d),
                    Func::Exp => (v.exp(), v.exp() * d),
                    Func::Abs => (v.abs(), if v == 0.0 { 0.0 } else { v.signum() * d }),
                }
            }
        }
    }

    /// Wraps the expression into evaluation closures suitable for the model
    /// types: one for values, one for derivatives.
    pub fn closures(
        &self,
    ) -> (
        Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) {
        let v = self.clone();
        let d = self.clone();
        (
            Arc::new(move |x| v.eval(x)),
            Arc::new(move |x| d.eval_dual(x).1),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnknownIdentifier(String),
    ArityMismatch(String),
    UnbalancedParens,
    BadNumber,
    UnexpectedChar(char),
    UnexpectedEnd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    /// 1-based character position in the source text.
    pub pos: usize,
    pub kind: ParseErrorKind,
    message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at position {}", self.message, self.pos)
    }
}

impl std::error::Error for ParseError {}

fn err(pos: usize, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
    ParseError { pos: pos + 1, kind, message: message.into() }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Open,
    Close,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let tok = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '/' => Token::Slash,
            '^' => Token::Caret,
            '(' => Token::Open,
            ')' => Token::Close,
            ',' => Token::Comma,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // optional exponent suffix
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let v: f64 = lit
                    .parse()
                    .map_err(|_| err(start, ParseErrorKind::BadNumber, format!("bad number `{lit}`")))?;
                out.push((start, Token::Num(v)));
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((start, Token::Ident(chars[start..i].iter().collect())));
                continue;
            }
            _ => {
                return Err(err(
                    i,
                    ParseErrorKind::UnexpectedChar(c),
                    format!("unexpected character `{c}`"),
                ))
            }
        };
        out.push((i, tok));
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Token)> {
        self.tokens.get(self.cursor)
    }

    fn bump(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn end_pos(&self) -> usize {
        self.tokens.last().map_or(self.len, |(p, _)| p + 1)
    }

    // sum := product (('+' | '-') product)*
    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.product()?;
        while let Some((_, tok)) = self.peek() {
            let op = match tok {
                Token::Plus => BinOp::Add,
                Token::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.product()?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    // product := unary (('*' | '/') unary)*
    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        while let Some((_, tok)) = self.peek() {
            let op = match tok {
                Token::Star => BinOp::Mul,
                Token::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    // unary := '-' unary | power; the minus binds looser than '^'
    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some((_, Token::Minus))) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?, right associative
    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some((_, Token::Caret))) {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (pos, tok) = self
            .bump()
            .ok_or_else(|| err(self.end_pos(), ParseErrorKind::UnexpectedEnd, "expression ends early"))?;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Open => {
                let inner = self.sum()?;
                match self.bump() {
                    Some((_, Token::Close)) => Ok(inner),
                    _ => Err(err(
                        pos,
                        ParseErrorKind::UnbalancedParens,
                        "unclosed parenthesis opened",
                    )),
                }
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "pi" => Ok(Expr::Pi),
                "sin" | "cos" | "exp" | "abs" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        _ => Func::Abs,
                    };
                    self.call(func, pos)
                }
                other => Err(err(
                    pos,
                    ParseErrorKind::UnknownIdentifier(other.to_string()),
                    format!("unknown identifier `{other}`"),
                )),
            },
            Token::Close => Err(err(pos, ParseErrorKind::UnbalancedParens, "unmatched `)`")),
            other => Err(err(
                pos,
                ParseErrorKind::UnexpectedChar(match other {
                    Token::Plus => '+',
                    Token::Star => '*',
                    Token::Slash => '/',
                    Token::Caret => '^',
                    Token::Comma => ',',
                    _ => '?',
                }),
                "expected a value here, found an operator",
            )),
        }
    }

    fn call(&mut self, func: Func, name_pos: usize) -> Result<Expr, ParseError> {
        match self.peek() {
            Some((_, Token::Open)) => {
                self.bump();
            }
            _ => {
                return Err(err(
                    name_pos,
                    ParseErrorKind::ArityMismatch(func.name().to_string()),
                    format!("{} takes exactly one parenthesized argument", func.name()),
                ))
            }
        }
        let arg = self.sum()?;
        match self.bump() {
            Some((_, Token::Close)) => Ok(Expr::Call(func, Box::new(arg))),
            Some((p, Token::Comma)) => Err(err(
                p,
                ParseErrorKind::ArityMismatch(func.name().to_string()),
                format!("{} takes exactly one argument", func.name()),
            )),
            _ => Err(err(
                name_pos,
                ParseErrorKind::UnbalancedParens,
                format!("missing `)` for the {} call", func.name()),
            )),
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(err(0, ParseErrorKind::UnexpectedEnd, "empty expression"));
    }
    let mut parser = Parser { tokens, cursor: 0, len: text.chars().count() };
    let expr = parser.sum()?;
    if let Some((pos, tok)) = parser.peek() {
        let (pos, kind, msg) = match tok {
            Token::Close => (*pos, ParseErrorKind::UnbalancedParens, "unmatched `)`".to_string()),
            other => (
                *pos,
                ParseErrorKind::UnexpectedChar('?'),
                format!("unexpected trailing {other:?}"),
            ),
        };
        return Err(err(pos, kind, msg));
    }
    Ok(expr)
}

/// Periodicity defect |f(0) - f(1^-)| measured just inside the seam.
pub fn periodicity_gap(expr: &Expr) -> f64 {
    (expr.eval(0.0) - expr.eval(1.0 - 1e-12)).abs()
}

/// Minimum over the validation sample: 2048 uniform points plus a seeded
/// scatter, so pathological dips between uniform points still have a chance
/// of being caught. Returns (argmin, min).
pub fn sampled_min(expr: &Expr, seed: u64) -> (f64, f64) {
    let mut best = (0.0, f64::INFINITY);
    let mut consider = |x: f64| {
        let v = expr.eval(x);
        if v < best.1 {
            best = (x, v);
        }
    };
    for i in 0..2048 {
        consider(i as f64 / 2048.0);
    }
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    for _ in 0..256 {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        consider(((z ^ (z >> 31)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64));
    }
    best
}

/// Worst non-finite evaluation over the validation sample, if any.
pub fn sampled_nonfinite(expr: &Expr, seed: u64) -> Option<f64> {
    let mut bad = None;
    let mut consider = |x: f64| {
        if bad.is_none() && !expr.eval(x).is_finite() {
            bad = Some(x);
        }
    };
    for i in 0..2048 {
        consider(i as f64 / 2048.0);
    }
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    for _ in 0..256 {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        consider(((z ^ (z >> 31)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64));
    }
    bad
}
