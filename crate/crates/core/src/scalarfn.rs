//! Scalar coefficient functions of the energy density `t`.
//!
//! A [`CoeffFn`] is a small expression tree over `t` built from constants,
//! sums, products, integer powers and admissible quotients. Derivatives up to
//! third order are evaluated exactly by propagating a truncated Taylor jet
//! through the tree, so no finite differencing happens anywhere in this module.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value and first three derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet(pub [f64; 4]);

impl Jet {
    pub fn constant(a: f64) -> Self {
        Jet([a, 0.0, 0.0, 0.0])
    }

    /// The independent variable itself, seeded at `t`.
    pub fn variable(t: f64) -> Self {
        Jet([t, 1.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn d1(&self) -> f64 {
        self.0[1]
    }

    pub fn d2(&self) -> f64 {
        self.0[2]
    }

    pub fn d3(&self) -> f64 {
        self.0[3]
    }

    pub fn derivative(&self, order: usize) -> f64 {
        self.0[order]
    }

    pub fn scale(self, a: f64) -> Self {
        Jet(self.0.map(|v| v * a))
    }

    pub fn recip(self) -> Self {
        let [g, g1, g2, g3] = self.0;
        let r = 1.0 / g;
        let r2 = r * r;
        let r3 = r2 * r;
        let r4 = r3 * r;
        Jet([
            r,
            -g1 * r2,
            2.0 * g1 * g1 * r3 - g2 * r2,
            -6.0 * g1 * g1 * g1 * r4 + 6.0 * g1 * g2 * r3 - g3 * r2,
        ])
    }

    pub fn powi(self, k: u32) -> Self {
        let mut acc = Jet::constant(1.0);
        let mut base = self;
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet([
            self.0[0] - o.0[0],
            self.0[1] - o.0[1],
            self.0[2] - o.0[2],
            self.0[3] - o.0[3],
        ])
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let [f, f1, f2, f3] = self.0;
        let [g, g1, g2, g3] = o.0;
        Jet([
            f * g,
            f1 * g + f * g1,
            f2 * g + 2.0 * f1 * g1 + f * g2,
            f3 * g + 3.0 * f2 * g1 + 3.0 * f1 * g2 + f * g3,
        ])
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, a: f64) -> Jet {
        self.scale(a)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, a: f64) -> Jet {
        let mut j = self;
        j.0[0] += a;
        j
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Const(f64),
    T,
    Sum(Box<Expr>, Box<Expr>),
    Product(Box<Expr>, Box<Expr>),
    Quotient(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    fn sum(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
            (a, b) => Expr::Sum(Box::new(a), Box::new(b)),
        }
    }

    fn product(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
            (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
            (a, b) => Expr::Product(Box::new(a), Box::new(b)),
        }
    }

    fn pow(e: Expr, k: u32) -> Expr {
        match (e, k) {
            (_, 0) => Expr::Const(1.0),
            (e, 1) => e,
            (Expr::Const(a), k) => Expr::Const(a.powi(k as i32)),
            (e, k) => Expr::Pow(Box::new(e), k),
        }
    }

    fn jet(&self, t: f64) -> Jet {
        match self {
            Expr::Const(a) => Jet::constant(*a),
            Expr::T => Jet::variable(t),
            Expr::Sum(a, b) => a.jet(t) + b.jet(t),
            Expr::Product(a, b) => a.jet(t) * b.jet(t),
            Expr::Quotient(a, b) => a.jet(t) / b.jet(t),
            Expr::Pow(e, k) => e.jet(t).powi(*k),
        }
    }

    fn derivative(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::T => Expr::Const(1.0),
            Expr::Sum(a, b) => Expr::sum(a.derivative(), b.derivative()),
            Expr::Product(a, b) => Expr::sum(
                Expr::product(a.derivative(), (**b).clone()),
                Expr::product((**a).clone(), b.derivative()),
            ),
            Expr::Quotient(a, b) => {
                let num = Expr::sum(
                    Expr::product(a.derivative(), (**b).clone()),
                    Expr::product(Expr::Const(-1.0), Expr::product((**a).clone(), b.derivative())),
                );
                match num {
                    Expr::Const(z) if z == 0.0 => Expr::Const(0.0),
                    num => Expr::Quotient(Box::new(num), Box::new(Expr::pow((**b).clone(), 2))),
                }
            }
            Expr::Pow(e, k) => Expr::product(
                Expr::product(Expr::Const(*k as f64), Expr::pow((**e).clone(), k - 1)),
                e.derivative(),
            ),
        }
    }

    fn as_polynomial(&self) -> Option<Vec<f64>> {
        let p = match self {
            Expr::Const(a) => vec![*a],
            Expr::T => vec![0.0, 1.0],
            Expr::Sum(a, b) => poly_add(&a.as_polynomial()?, &b.as_polynomial()?),
            Expr::Product(a, b) => poly_mul(&a.as_polynomial()?, &b.as_polynomial()?),
            Expr::Pow(e, k) => {
                let base = e.as_polynomial()?;
                (0..*k).fold(vec![1.0], |acc, _| poly_mul(&acc, &base))
            }
            Expr::Quotient(a, b) => {
                let den = trim(b.as_polynomial()?);
                if den.len() != 1 {
                    return None;
                }
                a.as_polynomial()?.iter().map(|c| c / den[0]).collect()
            }
        };
        Some(trim(p))
    }

    fn is_const(&self) -> Option<f64> {
        match self.as_polynomial() {
            Some(p) if p.len() <= 1 => Some(p.first().copied().unwrap_or(0.0)),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(a) => write!(f, "{a}"),
            Expr::T => write!(f, "t"),
            Expr::Sum(a, b) => write!(f, "({a} + {b})"),
            Expr::Product(a, b) => write!(f, "{a}*{b}"),
            Expr::Quotient(a, b) => write!(f, "({a})/({b})"),
            Expr::Pow(e, k) => write!(f, "({e})^{k}"),
        }
    }
}

fn trim(mut p: Vec<f64>) -> Vec<f64> {
    while p.len() > 1 && p[p.len() - 1] == 0.0 {
        p.pop();
    }
    if p.is_empty() {
        p.push(0.0);
    }
    p
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, c) in a.iter().enumerate() {
        out[i] += c;
    }
    for (i, c) in b.iter().enumerate() {
        out[i] += c;
    }
    out
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_expr(coeffs: &[f64]) -> Expr {
    // Horner form: a0 + t*(a1 + t*(a2 + ...))
    let coeffs = trim(coeffs.to_vec());
    let mut e = Expr::Const(*coeffs.last().unwrap());
    for c in coeffs.iter().rev().skip(1) {
        e = Expr::sum(Expr::Const(*c), Expr::product(Expr::T, e));
    }
    e
}

/// Denominators must be polynomials in `t` that stay strictly positive on
/// `t >= 0`: nonnegative coefficients with a positive constant term.
fn check_denominator(den: &Expr) -> Result<()> {
    let p = den
        .as_polynomial()
        .ok_or_else(|| Error::InadmissibleQuotient(format!("denominator {den} is not a polynomial in t")))?;
    if p[0] <= 0.0 || p.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(Error::InadmissibleQuotient(format!(
            "denominator coefficients {p:?} are not all positive"
        )));
    }
    Ok(())
}

/// Closed-form scalar function of the energy density with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffFn {
    expr: Expr,
    domain_floor: f64,
}

impl CoeffFn {
    pub fn constant(a: f64) -> Self {
        Self::from_expr(Expr::Const(a))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// The identity function `t`.
    pub fn t() -> Self {
        Self::from_expr(Expr::T)
    }

    /// Polynomial with coefficients in increasing degree, `a0 + a1 t + ...`.
    pub fn poly(coeffs: &[f64]) -> Self {
        if coeffs.is_empty() {
            return Self::zero();
        }
        Self::from_expr(poly_expr(coeffs))
    }

    pub fn ratio(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::poly(num).checked_div(&Self::poly(den))
    }

    fn from_expr(expr: Expr) -> Self {
        CoeffFn {
            expr,
            domain_floor: 0.0,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.domain_floor = floor.max(0.0);
        self
    }

    pub fn domain_floor(&self) -> f64 {
        self.domain_floor
    }

    pub fn checked_div(&self, den: &CoeffFn) -> Result<Self> {
        check_denominator(&den.expr)?;
        let expr = match (&self.expr, den.expr.is_const()) {
            (Expr::Const(z), _) if *z == 0.0 => Expr::Const(0.0),
            (e, Some(c)) => Expr::product(Expr::Const(1.0 / c), e.clone()),
            (e, None) => Expr::Quotient(Box::new(e.clone()), Box::new(den.expr.clone())),
        };
        Ok(CoeffFn {
            expr,
            domain_floor: self.domain_floor.max(den.domain_floor),
        })
    }

    pub fn powi(&self, k: u32) -> Self {
        CoeffFn {
            expr: Expr::pow(self.expr.clone(), k),
            domain_floor: self.domain_floor,
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        CoeffFn {
            expr: Expr::product(Expr::Const(a), self.expr.clone()),
            domain_floor: self.domain_floor,
        }
    }

    /// Symbolic derivative with respect to `t`.
    pub fn derivative(&self) -> Self {
        CoeffFn {
            expr: self.expr.derivative(),
            domain_floor: self.domain_floor,
        }
    }

    /// Coefficients in increasing degree when the function is a polynomial.
    pub fn as_polynomial(&self) -> Option<Vec<f64>> {
        self.expr.as_polynomial()
    }

    /// The constant value when the function does not depend on `t`.
    pub fn as_constant(&self) -> Option<f64> {
        self.expr.is_const()
    }

    pub fn jet(&self, t: f64) -> Result<Jet> {
        if !(t >= self.domain_floor) {
            return Err(Error::Domain {
                t,
                floor: self.domain_floor,
            });
        }
        Ok(self.expr.jet(t))
    }

    pub fn eval(&self, t: f64, order: usize) -> Result<f64> {
        if order > 3 {
            return Err(Error::Order(order));
        }
        Ok(self.jet(t)?.derivative(order))
    }
}

/// `order`-th derivative of `f` at `t`.
pub fn eval_coeff(f: &CoeffFn, t: f64, order: usize) -> Result<f64> {
    f.eval(t, order)
}

impl fmt::Display for CoeffFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

impl Add for &CoeffFn {
    type Output = CoeffFn;
    fn add(self, o: &CoeffFn) -> CoeffFn {
        CoeffFn {
            expr: Expr::sum(self.expr.clone(), o.expr.clone()),
            domain_floor: self.domain_floor.max(o.domain_floor),
        }
    }
}

impl Sub for &CoeffFn {
    type Output = CoeffFn;
    fn sub(self, o: &CoeffFn) -> CoeffFn {
        self + &o.scale(-1.0)
    }
}

impl Mul for &CoeffFn {
    type Output = CoeffFn;
    fn mul(self, o: &CoeffFn) -> CoeffFn {
        CoeffFn {
            expr: Expr::product(self.expr.clone(), o.expr.clone()),
            domain_floor: self.domain_floor.max(o.domain_floor),
        }
    }
}

impl Add for CoeffFn {
    type Output = CoeffFn;
    fn add(self, o: CoeffFn) -> CoeffFn {
        &self + &o
    }
}

impl Sub for CoeffFn {
    type Output = CoeffFn;
    fn sub(self, o: CoeffFn) -> CoeffFn {
        &self - &o
    }
}

impl Mul for CoeffFn {
    type Output = CoeffFn;
    fn mul(self, o: CoeffFn) -> CoeffFn {
        &self * &o
    }
}

/// Configuration form of a coefficient function.
///
/// Serializes as `{"poly": [a0, a1, ...]}`, `{"ratio": {"num": [...], "den": [...]}}`
/// or `{"const": a}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffSpec {
    Poly(Vec<f64>),
    Ratio { num: Vec<f64>, den: Vec<f64> },
    Const(f64),
}

impl CoeffSpec {
    pub fn build(&self) -> Result<CoeffFn> {
        match self {
            CoeffSpec::Poly(c) => Ok(CoeffFn::poly(c)),
            CoeffSpec::Ratio { num, den } => CoeffFn::ratio(num, den),
            CoeffSpec::Const(a) => Ok(CoeffFn::constant(*a)),
        }
    }
}

impl TryFrom<&CoeffSpec> for CoeffFn {
    type Error = Error;
    fn try_from(spec: &CoeffSpec) -> Result<CoeffFn> {
        spec.build()
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad coefficient {v:?}: {e}")))
        })
        .collect()
}

/// Command-line shorthand: `const:0.5`, `poly:1,2` (= 1 + 2t) or
/// `ratio:1/1,2` (= 1 / (1 + 2t)).
impl FromStr for CoeffSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected <kind>:<values>, got {s:?}")))?;
        match kind.trim() {
            "const" => Ok(CoeffSpec::Const(
                body.trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("bad constant {body:?}: {e}")))?,
            )),
            "poly" => Ok(CoeffSpec::Poly(parse_list(body)?)),
            "ratio" => {
                let (num, den) = body
                    .split_once('/')
                    .ok_or_else(|| Error::Config(format!("ratio needs <num>/<den>, got {body:?}")))?;
                Ok(CoeffSpec::Ratio {
                    num: parse_list(num)?,
                    den: parse_list(den)?,
                })
            }
            other => Err(Error::Config(format!("unknown coefficient kind {other:?}"))),
        }
    }
}
