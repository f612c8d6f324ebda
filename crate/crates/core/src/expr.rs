//! Arithmetic expressions in the chart variables `x1..x4`.
//!
//! Metric components and perturbation directions can be supplied as text;
//! the same AST evaluates over plain `f64` and over [`Jet2`], and the value
//! slot of the jet path is bit-identical to the scalar path because both go
//! through the [`Scalar`] trait with the same operation sequence.

use crate::error::{EvalError, Result};
use crate::jet::Jet2;
use std::fmt::Write as _;

/// Operations a scalar type must support to evaluate an [`ExprAst`].
pub trait Scalar: Copy {
    fn from_f64(c: f64) -> Self;
    fn value(self) -> f64;
    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;
    fn neg(self) -> Self;
    fn div(self, rhs: Self) -> Result<Self>;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn bump(self) -> Self;
    fn ln(self) -> Result<Self>;
    fn sqrt(self) -> Result<Self>;
    fn recip(self) -> Result<Self>;
    /// Power with a constant exponent.
    fn powf(self, p: f64) -> Result<Self>;
    /// True when the scalar carries no derivative information.
    fn is_constant(self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    fn neg(self) -> Self {
        -self
    }
    // Mirrors the jet implementation (multiply by reciprocal) so the value
    // slots agree bit for bit.
    fn div(self, rhs: Self) -> Result<Self> {
        Ok(self * Scalar::recip(rhs)?)
    }
    fn sin(self) -> Self {
        self.sin_cos().0
    }
    fn cos(self) -> Self {
        self.sin_cos().1
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn bump(self) -> Self {
        if self.abs() >= 1.0 {
            0.0
        } else {
            f64::exp(-(1.0 / (1.0 - self * self)))
        }
    }
    fn ln(self) -> Result<Self> {
        if self <= 0.0 {
            return Err(EvalError::Domain(format!("log of non-positive {self}")));
        }
        Ok(f64::ln(self))
    }
    fn sqrt(self) -> Result<Self> {
        if self <= 0.0 {
            return Err(EvalError::Domain(format!("sqrt of non-positive {self}")));
        }
        Ok(f64::sqrt(self))
    }
    fn recip(self) -> Result<Self> {
        if self == 0.0 {
            return Err(EvalError::Domain("reciprocal of zero".into()));
        }
        Ok(1.0 / self)
    }
    fn powf(self, p: f64) -> Result<Self> {
        if p == p.trunc() && p.abs() <= 64.0 {
            return Ok(f64::powi(self, p as i32));
        }
        if self <= 0.0 {
            return Err(EvalError::Domain(format!("power {p} of non-positive base {self}")));
        }
        Ok(f64::powf(self, p))
    }
    fn is_constant(self) -> bool {
        true
    }
}

impl Scalar for Jet2 {
    fn from_f64(c: f64) -> Self {
        Jet2::constant(c)
    }
    fn value(self) -> f64 {
        self.val
    }
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    fn neg(self) -> Self {
        -self
    }
    fn div(self, rhs: Self) -> Result<Self> {
        Ok(self * Jet2::recip(rhs)?)
    }
    fn sin(self) -> Self {
        Jet2::sin(self)
    }
    fn cos(self) -> Self {
        Jet2::cos(self)
    }
    fn exp(self) -> Self {
        Jet2::exp(self)
    }
    fn tanh(self) -> Self {
        Jet2::tanh(self)
    }
    fn bump(self) -> Self {
        Jet2::bump(self)
    }
    fn ln(self) -> Result<Self> {
        Jet2::ln(self)
    }
    fn sqrt(self) -> Result<Self> {
        Jet2::sqrt(self)
    }
    fn recip(self) -> Result<Self> {
        Jet2::recip(self)
    }
    fn powf(self, p: f64) -> Result<Self> {
        Jet2::powf(self, p)
    }
    fn is_constant(self) -> bool {
        self.grad == [0.0; 4] && self.hess == [0.0; 10]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Recip,
    Bump,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Recip => "recip",
            UnaryFn::Bump => "bump",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "log" | "ln" => UnaryFn::Log,
            "sqrt" => UnaryFn::Sqrt,
            "tanh" => UnaryFn::Tanh,
            "recip" => UnaryFn::Recip,
            "bump" => UnaryFn::Bump,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprAst {
    Const(f64),
    /// Chart variable index 0..=3 (surface syntax `x1`..`x4`).
    Var(u8),
    Neg(Box<ExprAst>),
    Unary(UnaryFn, Box<ExprAst>),
    Bin(BinOp, Box<ExprAst>, Box<ExprAst>),
}

impl ExprAst {
    /// Evaluate over any [`Scalar`], with `vars[i]` bound to `x{i+1}`.
    pub fn eval<S: Scalar>(&self, vars: &[S; 4]) -> Result<S> {
        match self {
            ExprAst::Const(c) => Ok(S::from_f64(*c)),
            ExprAst::Var(i) => Ok(vars[*i as usize]),
            ExprAst::Neg(e) => Ok(e.eval(vars)?.neg()),
            ExprAst::Unary(f, e) => {
                let v = e.eval(vars)?;
                match f {
                    UnaryFn::Sin => Ok(v.sin()),
                    UnaryFn::Cos => Ok(v.cos()),
                    UnaryFn::Exp => Ok(v.exp()),
                    UnaryFn::Tanh => Ok(v.tanh()),
                    UnaryFn::Bump => Ok(v.bump()),
                    UnaryFn::Log => v.ln(),
                    UnaryFn::Sqrt => v.sqrt(),
                    UnaryFn::Recip => v.recip(),
                }
            }
            ExprAst::Bin(op, l, r) => {
                let a = l.eval(vars)?;
                match op {
                    BinOp::Add => Ok(a.add(r.eval(vars)?)),
                    BinOp::Sub => Ok(a.sub(r.eval(vars)?)),
                    BinOp::Mul => Ok(a.mul(r.eval(vars)?)),
                    BinOp::Div => a.div(r.eval(vars)?),
                    BinOp::Pow => {
                        let p = r.eval(vars)?;
                        if !p.is_constant() {
                            return Err(EvalError::Domain(
                                "exponent must not depend on chart variables".into(),
                            ));
                        }
                        a.powf(p.value())
                    }
                }
            }
        }
    }

    /// Canonical fully parenthesised rendering; `parse(print(ast)) == ast`.
    pub fn print(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }

    fn write(&self, out: &mut String) {
        match self {
            ExprAst::Const(c) => {
                if *c < 0.0 || c.is_sign_negative() {
                    // A leading '-' re-parses as a folded negative literal.
                    let _ = write!(out, "{:?}", c);
                } else {
                    let _ = write!(out, "{:?}", c);
                }
            }
            ExprAst::Var(i) => {
                let _ = write!(out, "x{}", i + 1);
            }
            ExprAst::Neg(e) => {
                out.push_str("(-");
                e.write(out);
                out.push(')');
            }
            ExprAst::Unary(f, e) => {
                out.push_str(f.name());
                out.push('(');
                e.write(out);
                out.push(')');
            }
            ExprAst::Bin(op, l, r) => {
                out.push('(');
                l.write(out);
                out.push(match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                });
                r.write(out);
                out.push(')');
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Parse an expression; errors carry the byte offset of the offending token.
pub fn parse_expr(text: &str) -> Result<ExprAst> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let ast = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(ast)
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> EvalError {
        EvalError::Parse {
            offset: self.pos,
            message: message.into(),
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

    fn expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = ExprAst::Bin(BinOp::Add, Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = ExprAst::Bin(BinOp::Sub, Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = ExprAst::Bin(BinOp::Mul, Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = ExprAst::Bin(BinOp::Div, Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<ExprAst> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            // Fold a negated literal so printing round-trips structurally.
            if let ExprAst::Const(c) = inner {
                return Ok(ExprAst::Const(-c));
            }
            return Ok(ExprAst::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ExprAst> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(ExprAst::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ExprAst> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.err("expected a number, variable, function or '('")),
        }
    }

    fn number(&mut self) -> Result<ExprAst> {
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
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) => Ok(ExprAst::Const(v)),
            Err(_) => {
                self.pos = start;
                Err(self.err("malformed number"))
            }
        }
    }

    fn ident(&mut self) -> Result<ExprAst> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<u8>() {
                if (1..=4).contains(&k) {
                    return Ok(ExprAst::Var(k - 1));
                }
            }
        }
        if name == "pow" {
            if !self.eat(b'(') {
                return Err(self.err("expected '(' after 'pow'"));
            }
            let base = self.expr()?;
            if !self.eat(b',') {
                return Err(self.err("expected ',' in pow(base, exponent)"));
            }
            let exponent = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(ExprAst::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        if let Some(f) = UnaryFn::from_name(name) {
            if !self.eat(b'(') {
                return Err(self.err("expected '(' after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(ExprAst::Unary(f, Box::new(arg)));
        }
        self.pos = start;
        Err(self.err(&format!("unknown identifier '{name}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_sphere_conformal_factor() {
        let ast = parse_expr("4/(1+x1^2+x2^2+x3^2+x4^2)^2").unwrap();
        let v = ast.eval(&[0.0f64; 4]).unwrap();
        assert_eq!(v, 4.0);
    }

    #[test]
    fn trailing_operator_reports_offset() {
        let err = parse_expr("x1 + ").unwrap_err();
        match err {
            EvalError::Parse { offset, .. } => assert_eq!(offset, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn function_calls_parse() {
        let ast = parse_expr("sin(x2)*exp(-x3)").unwrap();
        let mut count = 0;
        fn walk(e: &ExprAst, count: &mut usize) {
            match e {
                ExprAst::Unary(_, a) => {
                    *count += 1;
                    walk(a, count);
                }
                ExprAst::Bin(_, l, r) => {
                    walk(l, count);
                    walk(r, count);
                }
                ExprAst::Neg(a) => walk(a, count),
                _ => {}
            }
        }
        walk(&ast, &mut count);
        assert_eq!(count, 2);
    }

    #[test]
    fn unknown_identifier_errors() {
        assert!(matches!(parse_expr("y1 + 2"), Err(EvalError::Parse { offset: 0, .. })));
    }

    #[test]
    fn precedence_pow_binds_tighter_than_unary_minus() {
        let ast = parse_expr("-x1^2").unwrap();
        let v = ast.eval(&[3.0f64, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, -9.0);
    }

    #[test]
    fn jet_value_slot_matches_f64_exactly() {
        let ast = parse_expr("sin(x2)*exp(-x3)/(1+x1^2) + sqrt(x4+2)").unwrap();
        let x = [0.3, -1.2, 0.7, 0.25];
        let scalar = ast.eval(&x).unwrap();
        let jets = Jet2::vars(&x);
        let jet = ast.eval(&jets).unwrap();
        assert_eq!(scalar, jet.val);
    }

    fn arb_ast() -> impl Strategy<Value = ExprAst> {
        let leaf = prop_oneof![
            (0u8..4).prop_map(ExprAst::Var),
            (-8.0..8.0f64).prop_map(|c| ExprAst::Const((c * 64.0).round() / 64.0)),
        ];
        leaf.prop_recursive(4, 48, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone(), prop_oneof![
                    Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div),
                ])
                    .prop_map(|(l, r, op)| ExprAst::Bin(op, Box::new(l), Box::new(r))),
                inner.clone().prop_map(|e| match e {
                    ExprAst::Const(c) => ExprAst::Const(-c),
                    other => ExprAst::Neg(Box::new(other)),
                }),
                (inner, prop_oneof![
                    Just(UnaryFn::Sin), Just(UnaryFn::Cos), Just(UnaryFn::Exp), Just(UnaryFn::Tanh),
                ])
                    .prop_map(|(e, f)| ExprAst::Unary(f, Box::new(e))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_parse_round_trip(ast in arb_ast()) {
            let printed = ast.print();
            let reparsed = parse_expr(&printed).unwrap();
            prop_assert_eq!(ast, reparsed);
        }
    }
}
