//! Scalar expression language for drift, input and modulation entries.
//!
//! Precedence from tightest: `^` (right-associative), unary `-`, `* /`,
//! `+ -`. Variables are `t` and `x1..xd`; named parameters are substituted as
//! constants when parsing.

mod dual;
mod parse;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

pub use dual::{DualValue, Number};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Tanh,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    pub const FUNCTIONS: [UnaryOp; 7] = [
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tanh,
        UnaryOp::Exp,
        UnaryOp::Log,
        UnaryOp::Sqrt,
        UnaryOp::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::FUNCTIONS
            .iter()
            .copied()
            .chain(std::iter::once(UnaryOp::Neg))
            .find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    /// Zero-based state index.
    State(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Fully parenthesized rendering; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Time => write!(f, "t"),
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

pub fn parse_expression(text: &str, dimension: usize) -> Result<Expr> {
    parse_with_params(text, dimension, &BTreeMap::new())
}

pub fn parse_with_params(
    text: &str,
    dimension: usize,
    params: &BTreeMap<String, f64>,
) -> Result<Expr> {
    parse::Parser::new(text, dimension, params)?.parse()
}

impl Expr {
    pub fn depends_on_state(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Time => false,
            Expr::State(_) => true,
            Expr::Unary(_, a) => a.depends_on_state(),
            Expr::Binary(_, a, b) => a.depends_on_state() || b.depends_on_state(),
        }
    }

    /// Value of an expression free of `t` and state, such as `-0.5` or
    /// `2*pi`.
    pub fn constant_value(&self) -> Option<f64> {
        fn free(e: &Expr) -> bool {
            match e {
                Expr::Const(_) => true,
                Expr::Time | Expr::State(_) => false,
                Expr::Unary(_, a) => free(a),
                Expr::Binary(_, a, b) => free(a) && free(b),
            }
        }
        if free(self) {
            self.eval::<f64>(0.0, &[]).ok()
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    /// Evaluate with domain checks; the result is checked for finiteness.
    pub fn eval<N: Number>(&self, t: f64, x: &[N]) -> Result<N> {
        let v = self.eval_inner(t, x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{self} at t={t}")));
        }
        Ok(v)
    }

    fn eval_inner<N: Number>(&self, t: f64, x: &[N]) -> Result<N> {
        Ok(match self {
            Expr::Const(v) => N::constant(*v),
            Expr::Time => N::constant(t),
            Expr::State(i) => x[*i],
            Expr::Unary(op, a) => {
                let a = a.eval_inner(t, x)?;
                let v = a.value();
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.chain(v.sin(), v.cos(), -v.sin()),
                    UnaryOp::Cos => a.chain(v.cos(), -v.sin(), -v.cos()),
                    UnaryOp::Tanh => {
                        let th = v.tanh();
                        let s = 1.0 - th * th;
                        a.chain(th, s, -2.0 * th * s)
                    }
                    UnaryOp::Exp => {
                        let e = v.exp();
                        a.chain(e, e, e)
                    }
                    UnaryOp::Log => {
                        if v <= 0.0 {
                            return Err(Error::Domain(format!("log of {v}")));
                        }
                        a.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
                    }
                    UnaryOp::Sqrt => {
                        if v < 0.0 {
                            return Err(Error::Domain(format!("sqrt of {v}")));
                        }
                        let s = v.sqrt();
                        if a.is_constant() {
                            N::constant(s)
                        } else {
                            a.chain(s, 0.5 / s, -0.25 / (s * v))
                        }
                    }
                    UnaryOp::Abs => {
                        let sg = if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        a.chain(v.abs(), sg, 0.0)
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval_inner(t, x)?;
                let b = b.eval_inner(t, x)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b.value() == 0.0 {
                            return Err(Error::Domain(format!("division by zero in {self}")));
                        }
                        a / b
                    }
                    BinaryOp::Pow => pow(a, b)?,
                }
            }
        })
    }
}

fn pow<N: Number>(a: N, b: N) -> Result<N> {
    let base = a.value();
    let p = b.value();
    if b.is_constant() {
        let integral = p.fract() == 0.0 && p.abs() < i32::MAX as f64;
        if base < 0.0 && !integral {
            return Err(Error::Domain(format!(
                "{base} raised to non-integer power {p}"
            )));
        }
        if base == 0.0 && p < 0.0 {
            return Err(Error::Domain(format!("zero raised to negative power {p}")));
        }
        let f = |q: f64| -> f64 {
            if integral {
                base.powi((p - q) as i32)
            } else {
                base.powf(p - q)
            }
        };
        let f0 = f(0.0);
        if a.is_constant() {
            return Ok(N::constant(f0));
        }
        let f1 = if p == 0.0 { 0.0 } else { p * f(1.0) };
        let f2 = if p == 0.0 || p == 1.0 {
            0.0
        } else {
            p * (p - 1.0) * f(2.0)
        };
        return Ok(a.chain(f0, f1, f2));
    }
    if base <= 0.0 {
        return Err(Error::Domain(format!(
            "non-positive base {base} with a varying exponent"
        )));
    }
    let ln = a.chain(base.ln(), 1.0 / base, -1.0 / (base * base));
    let e = (b * ln).value().exp();
    Ok((b * ln).chain(e, e, e))
}

/// Evaluate a vector field at `(t, x)`.
pub fn eval_field(field: &[Expr], t: f64, x: &[f64]) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(field.len());
    for (o, e) in out.iter_mut().zip(field) {
        *o = e.eval(t, x)?;
    }
    Ok(out)
}

/// Jacobian of a vector field by forward-mode dual numbers, one pass per
/// state coordinate.
pub fn jacobian(field: &[Expr], t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut jac = DMatrix::zeros(field.len(), d);
    let mut seed: Vec<DualValue> = x.iter().map(|&v| DualValue::variable(v, 0.0)).collect();
    for j in 0..d {
        seed[j].first = 1.0;
        for (i, e) in field.iter().enumerate() {
            jac[(i, j)] = e.eval(t, &seed)?.first;
        }
        seed[j].first = 0.0;
    }
    Ok(jac)
}

/// Second derivative along `v`: each component's `D^2 f(x)[v, v]`.
fn second_along(field: &[Expr], t: f64, x: &[f64], v: &[f64]) -> Result<DVector<f64>> {
    let seed: Vec<DualValue> = x
        .iter()
        .zip(v)
        .map(|(&xi, &vi)| DualValue::variable(xi, vi))
        .collect();
    let mut out = DVector::zeros(field.len());
    for (o, e) in out.iter_mut().zip(field) {
        *o = e.eval(t, &seed)?.second;
    }
    Ok(out)
}

/// Symmetric bilinear second derivative `D^2 f(x)[h, w]`, obtained by
/// polarization of two directional second derivatives.
pub fn second_directional(
    field: &[Expr],
    t: f64,
    x: &[f64],
    h: &[f64],
    w: &[f64],
) -> Result<DVector<f64>> {
    let plus: Vec<f64> = h.iter().zip(w).map(|(a, b)| a + b).collect();
    let minus: Vec<f64> = h.iter().zip(w).map(|(a, b)| a - b).collect();
    let p = second_along(field, t, x, &plus)?;
    let m = second_along(field, t, x, &minus)?;
    Ok((p - m) * 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expression(s, 3).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(p("-x1^2"), p("-(x1^2)"));
        assert_eq!(p("2^3^2"), p("2^(3^2)"));
        assert_eq!(p("1+2*3"), p("1+(2*3)"));
        assert_eq!(p("x1^-2"), p("x1^(-2)"));
        assert_eq!(p("-x1^2").eval(0.0, &[3.0, 0.0, 0.0]).unwrap(), -9.0);
        assert_eq!(p("2^3^2").eval::<f64>(0.0, &[0.0; 3]).unwrap(), 512.0);
        assert_eq!(p("8/2/2").eval::<f64>(0.0, &[0.0; 3]).unwrap(), 2.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_expression("x1*x3", 2),
            Err(Error::UnknownIdentifier { ref name, offset: 3 }) if name == "x3"
        ));
        assert!(matches!(
            parse_expression("x1 +", 1),
            Err(Error::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            parse_expression("sin(x1, x1)", 1),
            Err(Error::Arity { found: 2, .. })
        ));
        assert!(matches!(
            parse_expression("foo(x1)", 1),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("x0", 1),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse_expression("(x1", 1),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_expression("x1 $ 2", 1),
            Err(Error::Syntax { offset: 3, .. })
        ));
    }

    #[test]
    fn params_become_constants() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.5);
        let e = parse_with_params("k*x1", 1, &params).unwrap();
        assert_eq!(e.eval::<f64>(0.0, &[2.0]).unwrap(), 5.0);
    }

    #[test]
    fn domain_errors() {
        let e = parse_expression("log(x1)", 1).unwrap();
        assert!(matches!(e.eval::<f64>(0.0, &[-1.0]), Err(Error::Domain(_))));
        let e = parse_expression("1/x1", 1).unwrap();
        assert!(matches!(e.eval::<f64>(0.0, &[0.0]), Err(Error::Domain(_))));
        let e = parse_expression("exp(x1)", 1).unwrap();
        assert!(matches!(
            e.eval::<f64>(0.0, &[1000.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn derivatives() {
        let f = vec![parse_expression("x1*x1", 1).unwrap()];
        assert_eq!(jacobian(&f, 0.0, &[3.0]).unwrap()[(0, 0)], 6.0);
        let g = vec![parse_expression("x1^3", 1).unwrap()];
        let s = second_directional(&g, 0.0, &[1.0], &[1.0], &[1.0]).unwrap();
        assert!((s[0] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn display_round_trips() {
        for s in [
            "-x1^2 + sin(t)*x2",
            "exp(-x3)/(1+x1^2)",
            "abs(x1) - sqrt(x2)^-0.5",
        ] {
            let e = p(s);
            assert_eq!(p(&e.to_string()), e);
        }
    }
}
