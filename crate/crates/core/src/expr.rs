//! Small arithmetic expressions in `t`, `x`, `y` with symbolic
//! differentiation.
//!
//! Grammar: `+ - * / ^`, parentheses, unary minus, the constant `pi` and the
//! functions `sin cos tan exp sqrt ln` (`log` is an alias of `ln`). `^` binds
//! tighter than unary minus and is right-associative.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Shared closure of `(t, x, y)`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(Error::Expression {
                column: tok.column,
                message: format!("unexpected {:?}", tok.kind),
            });
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(a) => -a.eval(t, x, y),
            Expr::Add(a, b) => a.eval(t, x, y) + b.eval(t, x, y),
            Expr::Sub(a, b) => a.eval(t, x, y) - b.eval(t, x, y),
            Expr::Mul(a, b) => a.eval(t, x, y) * b.eval(t, x, y),
            Expr::Div(a, b) => a.eval(t, x, y) / b.eval(t, x, y),
            Expr::Pow(a, b) => {
                let base = a.eval(t, x, y);
                match **b {
                    Expr::Const(c) if c == c.trunc() && c.abs() < 64.0 => base.powi(c as i32),
                    _ => base.powf(b.eval(t, x, y)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(t, x, y)),
        }
    }

    /// True when the expression does not mention `var`.
    pub fn is_free_of(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(v) => *v != var,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_free_of(var),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.is_free_of(var) && b.is_free_of(var),
        }
    }

    /// Symbolic partial derivative with light constant folding.
    pub fn diff(&self, var: Var) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(var)),
            Add(a, b) => add(a.diff(var), b.diff(var)),
            Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), Const(2.0)),
            ),
            Pow(a, b) => {
                if b.is_free_of(var) {
                    // d(a^c) = c a^(c-1) a'
                    mul(
                        mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), Const(1.0)))),
                        a.diff(var),
                    )
                } else {
                    mul(
                        self.clone(),
                        add(
                            mul(b.diff(var), call(Func::Ln, (**a).clone())),
                            div(mul((**b).clone(), a.diff(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.diff(var);
                let outer = match f {
                    Func::Sin => call(Func::Cos, (**a).clone()),
                    Func::Cos => neg(call(Func::Sin, (**a).clone())),
                    Func::Tan => div(Const(1.0), pow(call(Func::Cos, (**a).clone()), Const(2.0))),
                    Func::Exp => self.clone(),
                    Func::Sqrt => div(Const(0.5), self.clone()),
                    Func::Ln => div(Const(1.0), (**a).clone()),
                };
                mul(outer, inner)
            }
        }
    }

    pub fn into_fn(self) -> SpaceTimeFn {
        Arc::new(move |t, x, y| self.eval(t, x, y))
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), _) if *z == 0.0 => b,
        (_, Expr::Const(z)) if *z == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (Expr::Const(z), _) if *z == 0.0 => neg(b),
        (_, Expr::Const(z)) if *z == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if *z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), _) if *o == 1.0 => b,
        (_, Expr::Const(o)) if *o == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(z), _) if *z == 0.0 => Expr::Const(0.0),
        (_, Expr::Const(o)) if *o == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(z)) if *z == 0.0 => Expr::Const(1.0),
        (_, Expr::Const(o)) if *o == 1.0 => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x.powf(*y)),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(f.apply(c)),
        other => Expr::Call(f, Box::new(other)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let column = k + 1;
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                k += 1;
            }
            // exponent part, e.g. 1e-3
            if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let text: String = chars[start..k].iter().collect();
            let value = text.parse::<f64>().map_err(|_| Error::Expression {
                column,
                message: format!("malformed number '{text}'"),
            })?;
            out.push(Token {
                kind: TokenKind::Number(value),
                column,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(chars[start..k].iter().collect()),
                column,
            });
        } else {
            let kind = match c {
                '+' | '-' | '*' | '/' | '^' => TokenKind::Op(c),
                '(' => TokenKind::LParen,
                ')' => TokenKind::RParen,
                _ => {
                    return Err(Error::Expression {
                        column,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            };
            out.push(Token { kind, column });
            k += 1;
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn column(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or(self.tokens.last())
            .map_or(1, |t| t.column)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            column: self.column(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(TokenKind::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(TokenKind::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(TokenKind::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(TokenKind::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(TokenKind::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            TokenKind::Number(v) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            TokenKind::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&TokenKind::RParen) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            TokenKind::Ident(name) => {
                let func = match name.as_str() {
                    "t" => return self.advance_with(Expr::Var(Var::T)),
                    "x" => return self.advance_with(Expr::Var(Var::X)),
                    "y" => return self.advance_with(Expr::Var(Var::Y)),
                    "pi" => return self.advance_with(Expr::Const(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "tan" => Func::Tan,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    "ln" | "log" => Func::Ln,
                    _ => return self.err(format!("unknown identifier '{name}'")),
                };
                self.pos += 1;
                if self.peek() != Some(&TokenKind::LParen) {
                    return self.err(format!("expected '(' after '{name}'"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(&TokenKind::RParen) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            other => self.err(format!("unexpected {other:?}")),
        }
    }

    fn advance_with(&mut self, e: Expr) -> Result<Expr> {
        self.pos += 1;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, t: f64, x: f64, y: f64) -> f64 {
        Expr::parse(s).unwrap().eval(t, x, y)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1+0.5*x*y", 0.0, 0.5, 0.5), 1.125);
        assert_eq!(ev("2^3^2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0, 0.0), 0.5);
        assert_eq!(ev("(1+2)*3 - 4/2", 0.0, 0.0, 0.0), 7.0);
        assert_eq!(ev("1.5e-3*1e3", 0.0, 0.0, 0.0), 1.5);
        assert!((ev("exp(-t)*sin(pi*x)*cos(pi*y)", 0.3, 0.2, 0.7)
            - (-0.3f64).exp() * (std::f64::consts::PI * 0.2).sin() * (std::f64::consts::PI * 0.7).cos())
        .abs()
            < 1e-15);
    }

    #[test]
    fn parse_errors_carry_column() {
        match Expr::parse("1 + foo(x)") {
            Err(Error::Expression { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        assert!(Expr::parse("(1+x").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("x $ y").is_err());
        assert!(Expr::parse("sin x").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let cases = [
            "exp(-t)*sin(pi*x)*sin(pi*y)",
            "1+0.5*x*y",
            "x^3 - 2*x*y^2 + tan(0.3*y)",
            "sqrt(1+x*x)/(2+cos(y))",
            "ln(2+x)*exp(x*y)",
            "(1+x)^(1+y)",
        ];
        let (t, x, y) = (0.37, 0.41, 0.63);
        let h = 1e-5;
        for src in cases {
            let e = Expr::parse(src).unwrap();
            let fd = [
                (e.eval(t + h, x, y) - e.eval(t - h, x, y)) / (2.0 * h),
                (e.eval(t, x + h, y) - e.eval(t, x - h, y)) / (2.0 * h),
                (e.eval(t, x, y + h) - e.eval(t, x, y - h)) / (2.0 * h),
            ];
            for (var, want) in [Var::T, Var::X, Var::Y].into_iter().zip(fd) {
                let got = e.diff(var).eval(t, x, y);
                assert!((got - want).abs() < 1e-8 * (1.0 + want.abs()), "{src} {var:?}");
            }
        }
    }

    #[test]
    fn folding_keeps_derivatives_small() {
        let e = Expr::parse("3*x + 2").unwrap();
        assert_eq!(e.diff(Var::X), Expr::Const(3.0));
        assert_eq!(e.diff(Var::Y), Expr::Const(0.0));
    }
}
