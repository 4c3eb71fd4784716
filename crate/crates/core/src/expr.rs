//! Closed-form expressions in the single variable `s`.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := implicit ('^' '-'? INTEGER)?
//! implicit:= NUMBER (IDENT | '(')?  ... | atom
//! atom    := NUMBER | 's' | 'pi' | FUNC '(' expr ')' | '(' expr ')'
//! FUNC    := sin | cos | exp | sqrt
//! ```
//!
//! A numeric literal directly followed by an identifier or a parenthesis is
//! read as a product, so `2s` and `0.3sin(s)` are accepted.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

/// Expression tree over the variable `s`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("exponent must be an integer literal")]
    NonIntegerExponent,
    #[error("malformed number")]
    BadNumber,
    #[error("trailing input")]
    Trailing,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("sqrt of negative value {0} at s = {1}")]
    NegativeSqrt(f64, f64),
    #[error("non-finite value at s = {0}")]
    NonFinite(f64),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.err(ParseErrorKind::Trailing));
        }
        Ok(e)
    }

    /// Evaluates at `s`, reporting domain errors instead of producing NaN.
    pub fn eval(&self, s: f64) -> Result<f64, EvalError> {
        let v = self.eval_raw(s)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(s))
        }
    }

    fn eval_raw(&self, s: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Var => s,
            Expr::Neg(e) => -e.eval_raw(s)?,
            Expr::Add(a, b) => a.eval_raw(s)? + b.eval_raw(s)?,
            Expr::Sub(a, b) => a.eval_raw(s)? - b.eval_raw(s)?,
            Expr::Mul(a, b) => a.eval_raw(s)? * b.eval_raw(s)?,
            Expr::Div(a, b) => a.eval_raw(s)? / b.eval_raw(s)?,
            Expr::Pow(e, n) => e.eval_raw(s)?.powi(*n),
            Expr::Call(f, e) => {
                let x = e.eval_raw(s)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::NegativeSqrt(x, s));
                        }
                        x.sqrt()
                    }
                }
            }
        })
    }

    /// Symbolic derivative with respect to `s`, lightly simplified.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) => Num(0.0),
            Var => Num(1.0),
            Neg(e) => neg(e.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(
                mul(a.derivative(), (**b).clone()),
                mul((**a).clone(), b.derivative()),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(), (**b).clone()),
                    mul((**a).clone(), b.derivative()),
                ),
                pow((**b).clone(), 2),
            ),
            Pow(e, n) => {
                if *n == 0 {
                    Num(0.0)
                } else {
                    mul(
                        mul(Num(*n as f64), pow((**e).clone(), n - 1)),
                        e.derivative(),
                    )
                }
            }
            Call(f, e) => {
                let inner = e.derivative();
                let outer = match f {
                    Func::Sin => call(Func::Cos, (**e).clone()),
                    Func::Cos => neg(call(Func::Sin, (**e).clone())),
                    Func::Exp => call(Func::Exp, (**e).clone()),
                    Func::Sqrt => div(Num(1.0), mul(Num(2.0), call(Func::Sqrt, (**e).clone()))),
                };
                mul(outer, inner)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var => false,
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(x) if *x < 0.0 => 3,
            _ => 5,
        }
    }
}

// Smart constructors used by the differentiator.

fn num_of(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(x) => Some(*x),
        _ => None,
    }
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (num_of(&a), num_of(&b)) {
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(e: Expr, n: i32) -> Expr {
    match (n, num_of(&e)) {
        (0, _) => Expr::Num(1.0),
        (1, _) => e,
        (_, Some(x)) => Expr::Num(x.powi(n)),
        _ => Expr::Pow(Box::new(e), n),
    }
}

fn call(f: Func, e: Expr) -> Expr {
    Expr::Call(f, Box::new(e))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Parenthesise a child whenever its precedence is below what the
        // parent position requires; ties on the right of - and / need parens.
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
            if e.precedence() < min_prec {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(x) => {
                if *x < 0.0 {
                    write!(f, "({x:?})")
                } else {
                    write!(f, "{x:?}")
                }
            }
            Expr::Var => write!(f, "s"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                child(f, e, 4)
            }
            Expr::Add(a, b) => {
                child(f, a, 1)?;
                write!(f, " + ")?;
                child(f, b, 2)
            }
            Expr::Sub(a, b) => {
                child(f, a, 1)?;
                write!(f, " - ")?;
                child(f, b, 2)
            }
            Expr::Mul(a, b) => {
                child(f, a, 2)?;
                write!(f, "*")?;
                child(f, b, 4)
            }
            Expr::Div(a, b) => {
                child(f, a, 2)?;
                write!(f, "/")?;
                child(f, b, 4)
            }
            Expr::Pow(e, n) => {
                child(f, e, 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError { kind, offset: self.pos }
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

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += 1;
                Ok(())
            }
            Some(x) => Err(self.err(ParseErrorKind::UnexpectedChar(x as char))),
            None => Err(self.err(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.unary()?;
            // Fold literal negation so printed negative constants re-parse
            // to the same tree.
            return Ok(match inner {
                Expr::Num(x) => Expr::Num(-x),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.implicit()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let negative = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(ParseErrorKind::NonIntegerExponent));
        }
        if matches!(self.src.get(self.pos), Some(b'.') | Some(b'e') | Some(b'E')) {
            return Err(self.err(ParseErrorKind::NonIntegerExponent));
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        let n: i32 = digits.parse().map_err(|_| ParseError {
            kind: ParseErrorKind::BadNumber,
            offset: start,
        })?;
        Ok(Expr::Pow(Box::new(base), if negative { -n } else { n }))
    }

    fn implicit(&mut self) -> Result<Expr, ParseError> {
        let first = self.atom()?;
        if let Expr::Num(_) = first {
            // no whitespace skipping: `2 s` is rejected, `2s` is a product
            if let Some(&c) = self.src.get(self.pos) {
                if c.is_ascii_alphabetic() || c == b'(' {
                    let rhs = self.power()?;
                    return Ok(Expr::Mul(Box::new(first), Box::new(rhs)));
                }
            }
        }
        Ok(first)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.err(ParseErrorKind::UnexpectedEnd)),
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii ident");
            return match name {
                "s" => Ok(Expr::Var),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                _ => match Func::from_name(name) {
                    Some(func) => {
                        self.expect(b'(')?;
                        let arg = self.expr()?;
                        self.expect(b')')?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                    None => Err(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name.to_string()),
                        offset: start,
                    }),
                },
            };
        }
        Err(self.err(ParseErrorKind::UnexpectedChar(c as char)))
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.err(ParseErrorKind::BadNumber));
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2exp(s)`: the `e` starts an identifier, not an exponent
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        text.parse::<f64>().map(Expr::Num).map_err(|_| ParseError {
            kind: ParseErrorKind::BadNumber,
            offset: start,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn parses_sin() {
        assert_eq!(p("sin(s)"), Expr::Call(Func::Sin, Box::new(Expr::Var)));
    }

    #[test]
    fn parses_perturbed_sphere() {
        let e = p("sin(s)*(1 + 0.3*sin(s)^2)");
        let s: f64 = 0.7;
        let want = s.sin() * (1.0 + 0.3 * s.sin().powi(2));
        assert!((e.eval(s).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn unknown_identifier_reports_offset() {
        let err = Expr::parse("sin(t)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("t".into()));
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn syntax_errors() {
        assert_eq!(Expr::parse("sin(s").unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(Expr::parse("s^0.5").unwrap_err().kind, ParseErrorKind::NonIntegerExponent);
        let e = Expr::parse("1 + * 2").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedChar('*'));
        assert_eq!(e.offset, 4);
        assert_eq!(Expr::parse("s s").unwrap_err().kind, ParseErrorKind::Trailing);
    }

    #[test]
    fn implicit_products_and_constants() {
        let e = p("2+cos(2s)");
        assert!((e.eval(0.3).unwrap() - (2.0 + (0.6f64).cos())).abs() < 1e-15);
        let e = p("2exp(s)");
        assert!((e.eval(1.0).unwrap() - 2.0 * 1f64.exp()).abs() < 1e-14);
        let e = p("1e-3*s + pi");
        assert!((e.eval(2.0).unwrap() - (0.002 + std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(p("-2^2").eval(0.0).unwrap(), -4.0);
        assert_eq!(p("s^-2").eval(2.0).unwrap(), 0.25);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p("sin(s)").derivative(), p("cos(s)"));
        assert_eq!(p("3").derivative(), Expr::Num(0.0));
        assert_eq!(p("sin(s)^2").derivative(), p("2*sin(s)*cos(s)"));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(p("sqrt(s)").eval(-1.0), Err(EvalError::NegativeSqrt(..))));
        assert!(matches!(p("1/s").eval(0.0), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn printing_round_trips() {
        for src in [
            "sin(s)*(1 + 0.3*sin(s)^2)",
            "2 + cos(2*s) + 0.3*cos(4*s)",
            "-(s - 1)/(s + 2)^-3",
            "exp(-s^2)*sqrt(1 + s^2) - -1.5",
            "s - (s - s)",
            "s/(s/s)",
        ] {
            let e = p(src);
            assert_eq!(p(&e.to_string()), e, "{src} -> {e}");
            let d = e.derivative();
            assert_eq!(p(&d.to_string()), d, "{d}");
        }
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            Just(Expr::Var),
            (-3.0f64..3.0).prop_map(|x| Expr::Num((x * 100.0).round() / 100.0)),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
                inner.clone().prop_map(|e| Expr::Call(Func::Sin, Box::new(e))),
                inner.prop_map(|e| Expr::Call(Func::Cos, Box::new(e))),
            ]
        })
    }

    fn central_difference(e: &Expr, s: f64) -> f64 {
        let h = 1e-5;
        (e.eval(s + h).unwrap() - e.eval(s - h).unwrap()) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            // Neg(Num) folds on parse; compare by value instead of shape.
            for s in [-1.3, 0.0, 0.4, 2.2] {
                let (x, y) = (e.eval(s), back.eval(s));
                if let (Ok(x), Ok(y)) = (x, y) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
            prop_assert_eq!(Expr::parse(&back.to_string()).unwrap(), back);
        }

        #[test]
        fn derivative_matches_finite_difference(e in arb_expr(), s in 0.0f64..std::f64::consts::PI) {
            let d = e.derivative();
            let exact = d.eval(s).unwrap();
            let fd = central_difference(&e, s);
            prop_assume!(exact.abs() < 1e3);
            prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{} at {}: {} vs {}", e, s, exact, fd);
        }

        #[test]
        fn derivative_is_linear(a in arb_expr(), b in arb_expr(), s in -2.0f64..2.0) {
            let sum = Expr::Add(Box::new(a.clone()), Box::new(b.clone())).derivative();
            let lhs = sum.eval(s).unwrap();
            let rhs = a.derivative().eval(s).unwrap() + b.derivative().eval(s).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
