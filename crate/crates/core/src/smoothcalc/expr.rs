//! Arithmetic expressions over chart coordinates.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := base ("^" int)?
//! base   := number | ident | func "(" expr ")" | "(" expr ")" | "-" base
//! func   := "sin" | "cos" | "exp"
//! ```
//!
//! Identifiers must match chart labels exactly; `sin`, `cos`, `exp` are
//! reserved. Numbers are decimal doubles. Note that per this grammar the
//! unary minus binds at `base` level, so `-x^2` parses as `(-x)^2`.

use super::chart::Chart;
use super::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
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

/// Expression AST. Coordinates are stored as indices into the chart the
/// source was parsed against.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }
    pub fn coord(i: usize) -> Expr {
        Expr::Coord(i)
    }
    pub fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
    pub fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
    pub fn pow(self, n: i32) -> Expr {
        Expr::Pow(Box::new(self), n)
    }
    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
    pub fn sin(self) -> Expr {
        Expr::Sin(Box::new(self))
    }
    pub fn cos(self) -> Expr {
        Expr::Cos(Box::new(self))
    }
    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    /// Evaluate at a point, generically over plain or dual scalars.
    pub fn eval<T: Real>(&self, vars: &[T]) -> T {
        match self {
            Expr::Num(v) => T::from_f64(*v),
            Expr::Coord(i) => vars[*i],
            Expr::Add(l, r) => l.eval(vars) + r.eval(vars),
            Expr::Sub(l, r) => l.eval(vars) - r.eval(vars),
            Expr::Mul(l, r) => l.eval(vars) * r.eval(vars),
            Expr::Div(l, r) => l.eval(vars) / r.eval(vars),
            Expr::Pow(b, n) => b.eval(vars).powi(*n),
            Expr::Neg(e) => -e.eval(vars),
            Expr::Sin(e) => e.eval(vars).sin(),
            Expr::Cos(e) => e.eval(vars).cos(),
            Expr::Exp(e) => e.eval(vars).exp(),
        }
    }

    /// Largest coordinate index used, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                match (l.max_coord(), r.max_coord()) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                }
            }
            Expr::Pow(b, _) => b.max_coord(),
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) => e.max_coord(),
        }
    }

    /// Render to source text that parses back to a structurally equal AST.
    ///
    /// Programmatically built negative literals are normalized to a unary
    /// minus on the reparse.
    pub fn print(&self, chart: &Chart) -> String {
        let mut out = String::new();
        self.fmt_level(chart, &mut out, 0);
        out
    }

    // Grammar levels: 0 = expr, 1 = term, 2 = factor, 3 = base.
    fn level(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 0,
            Expr::Mul(..) | Expr::Div(..) => 1,
            Expr::Pow(..) => 2,
            _ => 3,
        }
    }

    fn fmt_level(&self, chart: &Chart, out: &mut String, required: u8) {
        if self.level() < required {
            out.push('(');
            self.fmt_level(chart, out, 0);
            out.push(')');
            return;
        }
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    out.push('-');
                    out.push_str(&format!("{}", -v));
                } else {
                    out.push_str(&format!("{v}"));
                }
            }
            Expr::Coord(i) => out.push_str(&chart.labels()[*i]),
            Expr::Add(l, r) => {
                l.fmt_level(chart, out, 0);
                out.push_str(" + ");
                r.fmt_level(chart, out, 1);
            }
            Expr::Sub(l, r) => {
                l.fmt_level(chart, out, 0);
                out.push_str(" - ");
                r.fmt_level(chart, out, 1);
            }
            Expr::Mul(l, r) => {
                l.fmt_level(chart, out, 1);
                out.push('*');
                r.fmt_level(chart, out, 2);
            }
            Expr::Div(l, r) => {
                l.fmt_level(chart, out, 1);
                out.push('/');
                r.fmt_level(chart, out, 2);
            }
            Expr::Pow(b, n) => {
                b.fmt_level(chart, out, 3);
                out.push('^');
                out.push_str(&format!("{n}"));
            }
            Expr::Neg(e) => {
                out.push('-');
                e.fmt_level(chart, out, 3);
            }
            Expr::Sin(e) => Self::fmt_call(chart, out, "sin", e),
            Expr::Cos(e) => Self::fmt_call(chart, out, "cos", e),
            Expr::Exp(e) => Self::fmt_call(chart, out, "exp", e),
        }
    }

    fn fmt_call(chart: &Chart, out: &mut String, name: &str, arg: &Expr) {
        out.push_str(name);
        out.push('(');
        arg.fmt_level(chart, out, 0);
        out.push(')');
    }
}

/// Parse `source` against the chart's coordinate labels.
pub fn parse_expr(source: &str, chart: &Chart) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        chart,
    };
    p.skip_ws();
    if p.at_end() {
        return Err(p.syntax("expected an expression"));
    }
    let e = p.parse_expr()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    chart: &'a Chart,
}

impl<'a> Parser<'a> {
    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ') | Some(b'\t') | Some(b'\n') | Some(b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            self.skip_ws();
            if self.eat(b'+') {
                let rhs = self.parse_term()?;
                lhs = lhs.add(rhs);
            } else if self.eat(b'-') {
                let rhs = self.parse_term()?;
                lhs = lhs.sub(rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_factor()?;
        loop {
            self.skip_ws();
            if self.eat(b'*') {
                let rhs = self.parse_factor()?;
                lhs = lhs.mul(rhs);
            } else if self.eat(b'/') {
                let rhs = self.parse_factor()?;
                lhs = lhs.div(rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn parse_factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_base()?;
        self.skip_ws();
        if self.eat(b'^') {
            let n = self.parse_int()?;
            Ok(base.pow(n))
        } else {
            Ok(base)
        }
    }

    fn parse_int(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'+') || self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.syntax("expected an integer exponent"));
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<i32>().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("integer exponent `{text}` out of range"),
        })
    }

    fn parse_base(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.syntax("expected a value")),
            Some(b'-') => {
                self.pos += 1;
                Ok(self.parse_base()?.neg())
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.parse_expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.parse_ident(),
            Some(c) => Err(self.syntax(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn parse_number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.eat(b'.') {
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        // Exponent part only if it is complete; `2e` is number 2 followed by
        // identifier `e`, which the caller will reject in context.
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if self.peek() == Some(b'+') || self.peek() == Some(b'-') {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(b'0'..=b'9')) {
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Num(v)),
            Err(_) => Err(ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            }),
        }
    }

    fn parse_ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii identifier")
            .to_string();
        if matches!(name.as_str(), "sin" | "cos" | "exp") {
            self.skip_ws();
            if !self.eat(b'(') {
                return Err(self.syntax(&format!("expected `(` after function `{name}`")));
            }
            let arg = self.parse_expr()?;
            self.skip_ws();
            if !self.eat(b')') {
                return Err(self.syntax("expected `)`"));
            }
            return Ok(match name.as_str() {
                "sin" => arg.sin(),
                "cos" => arg.cos(),
                _ => arg.exp(),
            });
        }
        match self.chart.index_of(&name) {
            Some(i) => Ok(Expr::Coord(i)),
            None => Err(ParseError::UnknownIdent {
                offset: start,
                name,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chart2() -> Chart {
        Chart::cube(2, -1.0, 1.0)
    }

    #[test]
    fn direct_grammar_case() {
        let e = parse_expr("x1 + 2*x2", &chart2()).unwrap();
        assert_eq!(
            e,
            Expr::coord(0).add(Expr::num(2.0).mul(Expr::coord(1)))
        );
    }

    #[test]
    fn pythagorean_identity() {
        let e = parse_expr("sin(x1)^2 + cos(x1)^2", &chart2()).unwrap();
        for &x in &[0.0, 0.3, -0.9, 0.77] {
            assert_relative_eq!(e.eval(&[x, 0.0]), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn truncated_input_reports_offset() {
        let err = parse_expr("x1 + ", &chart2()).unwrap_err();
        assert_eq!(err.offset(), 5);
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn unknown_identifier_is_named() {
        let err = parse_expr("x1 + y", &chart2()).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdent {
                offset: 5,
                name: "y".to_string()
            }
        );
    }

    #[test]
    fn precedence_and_associativity() {
        let c = chart2();
        // 1 - 2 - 3 associates left
        let e = parse_expr("1 - 2 - 3", &c).unwrap();
        assert_relative_eq!(e.eval::<f64>(&[0.0, 0.0]), -4.0);
        // unary minus binds at base level: -x1^2 == (-x1)^2
        let e = parse_expr("-2^2", &c).unwrap();
        assert_relative_eq!(e.eval::<f64>(&[0.0, 0.0]), 4.0);
        let e = parse_expr("-(2^2)", &c).unwrap();
        assert_relative_eq!(e.eval::<f64>(&[0.0, 0.0]), -4.0);
        // division and negative exponents
        let e = parse_expr("x1^-2", &c).unwrap();
        assert_relative_eq!(e.eval::<f64>(&[2.0, 0.0]), 0.25);
    }

    #[test]
    fn scientific_notation_and_dot() {
        let c = chart2();
        assert_relative_eq!(
            parse_expr("1.5e2 + .5", &c).unwrap().eval::<f64>(&[0.0, 0.0]),
            150.5
        );
        assert_relative_eq!(
            parse_expr("2e-3", &c).unwrap().eval::<f64>(&[0.0, 0.0]),
            0.002
        );
    }

    #[test]
    fn print_parse_round_trip_examples() {
        let c = chart2();
        for src in [
            "x1 + 2*x2",
            "sin(x1)^2 + cos(x1)^2",
            "-x1^2",
            "(x1 + x2)*(x1 - x2)",
            "x1/(x2 + 2)/3",
            "exp(-(x1*x2))",
            "1 - 2 - 3",
            "--x1",
            "(x1^2)^3",
        ] {
            let ast = parse_expr(src, &c).unwrap();
            let printed = ast.print(&c);
            let reparsed = parse_expr(&printed, &c)
                .unwrap_or_else(|e| panic!("reparse of `{printed}` failed: {e}"));
            assert_eq!(ast, reparsed, "round trip changed `{src}` -> `{printed}`");
        }
    }
}
