//! Truncated univariate Taylor arithmetic.
//!
//! A jet stores normalized Taylor coefficients `c_j = f^(j) / j!` of a
//! function restricted to a line `x0 + s·d`, truncated after order
//! [`MAX_ORDER`]. Composition with a smooth primitive `g` uses the explicit
//! Faà di Bruno expansion up to fourth order, which only needs the
//! derivatives `g(a0), g'(a0), …, g''''(a0)`. The adjoint of that map needs
//! the series of `g'` along the same line, hence primitives expose five
//! derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::AutodiffError;

/// Highest derivative order carried by a jet.
pub const MAX_ORDER: usize = 4;

/// Smallest magnitude accepted as a divisor.
pub const DIV_GUARD: f64 = 1e-300;

/// Smooth scalar primitives that can be lifted to jets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    Tanh,
    Sigmoid,
    Exp,
    /// `log σ(x)`, evaluated without forming `σ(x)` first.
    LogSigmoid,
    Recip,
    /// `x^{-1/2}`
    InvSqrt,
}

impl Primitive {
    pub const ALL: [Primitive; 6] = [
        Primitive::Tanh,
        Primitive::Sigmoid,
        Primitive::Exp,
        Primitive::LogSigmoid,
        Primitive::Recip,
        Primitive::InvSqrt,
    ];

    /// Look a primitive up by name; anything outside the supported set is rejected.
    pub fn from_name(name: &str) -> Result<Self, AutodiffError> {
        match name {
            "tanh" => Ok(Primitive::Tanh),
            "sigmoid" => Ok(Primitive::Sigmoid),
            "exp" => Ok(Primitive::Exp),
            "logsigmoid" | "log_sigmoid" => Ok(Primitive::LogSigmoid),
            "recip" => Ok(Primitive::Recip),
            "invsqrt" | "rsqrt" => Ok(Primitive::InvSqrt),
            other => Err(AutodiffError::Unsupported(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Exp => "exp",
            Primitive::LogSigmoid => "logsigmoid",
            Primitive::Recip => "recip",
            Primitive::InvSqrt => "invsqrt",
        }
    }

    /// Whether `x` lies in the domain of the primitive.
    #[inline]
    pub fn admits(self, x: f64) -> bool {
        match self {
            Primitive::Recip => x.abs() >= DIV_GUARD,
            Primitive::InvSqrt => x >= DIV_GUARD,
            _ => true,
        }
    }

    /// `[g(x), g'(x), …, g^(5)(x)]`.
    #[inline]
    pub fn derivatives(self, x: f64) -> [f64; 6] {
        match self {
            Primitive::Tanh => {
                let t = x.tanh();
                let t2 = t * t;
                let s = 1.0 - t2;
                [
                    t,
                    s,
                    -2.0 * t * s,
                    -2.0 + t2 * (8.0 - 6.0 * t2),
                    t * (16.0 + t2 * (-40.0 + 24.0 * t2)),
                    16.0 + t2 * (-136.0 + t2 * (240.0 - 120.0 * t2)),
                ]
            }
            Primitive::Sigmoid => {
                let s = sigmoid(x);
                let [p1, p2, p3, p4, p5] = sigmoid_polys(s);
                [s, p1, p2, p3, p4, p5]
            }
            Primitive::LogSigmoid => {
                let s = sigmoid(x);
                let [p1, p2, p3, p4, _] = sigmoid_polys(s);
                [log_sigmoid(x), sigmoid(-x), -p1, -p2, -p3, -p4]
            }
            Primitive::Exp => [x.exp(); 6],
            Primitive::Recip => {
                let r = 1.0 / x;
                let r2 = r * r;
                let r3 = r2 * r;
                [r, -r2, 2.0 * r3, -6.0 * r3 * r, 24.0 * r3 * r2, -120.0 * r3 * r3]
            }
            Primitive::InvSqrt => {
                let mut out = [0.0; 6];
                let r = 1.0 / x;
                let mut c = 1.0;
                let mut p = x.sqrt().recip();
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = c * p;
                    c *= -0.5 - k as f64;
                    p *= r;
                }
                out
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Derivatives one through five of the logistic function as polynomials in `s = σ(x)`.
#[inline]
fn sigmoid_polys(s: f64) -> [f64; 5] {
    let s2 = s * s;
    let p1 = s - s2;
    let p2 = s + s2 * (-3.0 + 2.0 * s);
    let p3 = s + s2 * (-7.0 + s * (12.0 - 6.0 * s));
    let p4 = s + s2 * (-15.0 + s * (50.0 + s * (-60.0 + 24.0 * s)));
    let p5 = s + s2 * (-31.0 + s * (180.0 + s * (-390.0 + s * (360.0 - 120.0 * s))));
    [p1, p2, p3, p4, p5]
}

/// Coefficients `y[0..=order]` of `g(a(s))`, where `g[k]` is the k-th
/// derivative of `g` at `a[0]` and `a` holds normalized coefficients.
///
/// Passing `&g[1..]` yields the series of `g'` along the same line.
#[inline(always)]
pub(crate) fn compose(g: &[f64], a: &[f64; 5], order: usize, y: &mut [f64; 5]) {
    y[0] = g[0];
    if order == 0 {
        return;
    }
    let a1 = a[1];
    y[1] = g[1] * a1;
    if order == 1 {
        return;
    }
    let a2 = a[2];
    let a1s = a1 * a1;
    y[2] = g[1] * a2 + 0.5 * g[2] * a1s;
    if order == 2 {
        return;
    }
    let a3 = a[3];
    y[3] = g[1] * a3 + g[2] * a1 * a2 + g[3] * a1s * a1 / 6.0;
    if order == 3 {
        return;
    }
    let a4 = a[4];
    y[4] = g[1] * a4
        + g[2] * (a1 * a3 + 0.5 * a2 * a2)
        + 0.5 * g[3] * a1s * a2
        + g[4] * a1s * a1s / 24.0;
}

/// Function value plus normalized Taylor coefficients along one direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetValue {
    coef: [f64; 5],
}

impl JetValue {
    pub fn constant(value: f64) -> Self {
        JetValue { coef: [value, 0.0, 0.0, 0.0, 0.0] }
    }

    /// Coordinate `value` moving with unit speed `seed` along the direction.
    pub fn variable(value: f64, seed: f64) -> Self {
        JetValue { coef: [value, seed, 0.0, 0.0, 0.0] }
    }

    pub fn from_taylor(coef: [f64; 5]) -> Self {
        JetValue { coef }
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    /// Normalized coefficient `f^(j)/j!`.
    pub fn taylor(&self, j: usize) -> f64 {
        self.coef[j]
    }

    pub fn taylor_coefficients(&self) -> [f64; 5] {
        self.coef
    }

    /// The j-th directional derivative.
    pub fn derivative(&self, j: usize) -> f64 {
        self.coef[j] * FACTORIAL[j]
    }

    pub fn is_finite(&self) -> bool {
        self.coef.iter().all(|c| c.is_finite())
    }

    pub fn apply(self, prim: Primitive) -> Self {
        if !prim.admits(self.coef[0]) {
            return JetValue { coef: [f64::NAN; 5] };
        }
        let g = prim.derivatives(self.coef[0]);
        let mut y = [0.0; 5];
        compose(&g, &self.coef, MAX_ORDER, &mut y);
        JetValue { coef: y }
    }

    pub fn tanh(self) -> Self {
        self.apply(Primitive::Tanh)
    }

    pub fn sigmoid(self) -> Self {
        self.apply(Primitive::Sigmoid)
    }

    pub fn exp(self) -> Self {
        self.apply(Primitive::Exp)
    }

    pub fn log_sigmoid(self) -> Self {
        self.apply(Primitive::LogSigmoid)
    }

    /// Reciprocal; yields a NaN jet when `|value|` is below [`DIV_GUARD`].
    pub fn recip(self) -> Self {
        self.apply(Primitive::Recip)
    }

    pub fn inv_sqrt(self) -> Self {
        self.apply(Primitive::InvSqrt)
    }

    pub fn checked_recip(self) -> Result<Self, AutodiffError> {
        if !Primitive::Recip.admits(self.coef[0]) {
            return Err(AutodiffError::Domain(format!(
                "division by {:e} below guard",
                self.coef[0]
            )));
        }
        Ok(self.recip())
    }

    /// Piecewise selection by value; ties pick `self`.
    pub fn max(self, other: Self) -> Self {
        if other.coef[0] > self.coef[0] {
            other
        } else {
            self
        }
    }

    /// Clamp to `[lo, hi]`; a value sitting exactly on a bound keeps the branch on its left.
    pub fn clip(self, lo: f64, hi: f64) -> Self {
        let v = self.coef[0];
        if v <= lo {
            JetValue::constant(lo)
        } else if v > hi {
            JetValue::constant(hi)
        } else {
            self
        }
    }

    pub fn scale(self, k: f64) -> Self {
        let mut c = self.coef;
        c.iter_mut().for_each(|x| *x *= k);
        JetValue { coef: c }
    }

    pub fn powi(self, n: u32) -> Self {
        (0..n).fold(JetValue::constant(1.0), |acc, _| acc * self)
    }
}

pub(crate) const FACTORIAL: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

impl Add for JetValue {
    type Output = JetValue;
    fn add(self, rhs: JetValue) -> JetValue {
        let mut c = self.coef;
        for (x, y) in c.iter_mut().zip(rhs.coef) {
            *x += y;
        }
        JetValue { coef: c }
    }
}

impl Sub for JetValue {
    type Output = JetValue;
    fn sub(self, rhs: JetValue) -> JetValue {
        let mut c = self.coef;
        for (x, y) in c.iter_mut().zip(rhs.coef) {
            *x -= y;
        }
        JetValue { coef: c }
    }
}

impl Neg for JetValue {
    type Output = JetValue;
    fn neg(self) -> JetValue {
        self.scale(-1.0)
    }
}

impl Mul for JetValue {
    type Output = JetValue;
    fn mul(self, rhs: JetValue) -> JetValue {
        let a = self.coef;
        let b = rhs.coef;
        let mut c = [0.0; 5];
        for (j, slot) in c.iter_mut().enumerate() {
            *slot = (0..=j).map(|i| a[i] * b[j - i]).sum();
        }
        JetValue { coef: c }
    }
}

impl Div for JetValue {
    type Output = JetValue;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: JetValue) -> JetValue {
        self * rhs.recip()
    }
}

impl Add<f64> for JetValue {
    type Output = JetValue;
    fn add(mut self, rhs: f64) -> JetValue {
        self.coef[0] += rhs;
        self
    }
}

impl Sub<f64> for JetValue {
    type Output = JetValue;
    fn sub(mut self, rhs: f64) -> JetValue {
        self.coef[0] -= rhs;
        self
    }
}

impl Mul<f64> for JetValue {
    type Output = JetValue;
    fn mul(self, rhs: f64) -> JetValue {
        self.scale(rhs)
    }
}

impl Mul<JetValue> for f64 {
    type Output = JetValue;
    fn mul(self, rhs: JetValue) -> JetValue {
        rhs.scale(self)
    }
}

impl Add<JetValue> for f64 {
    type Output = JetValue;
    fn add(self, rhs: JetValue) -> JetValue {
        rhs + self
    }
}

impl Sub<JetValue> for f64 {
    type Output = JetValue;
    fn sub(self, rhs: JetValue) -> JetValue {
        -rhs + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Coefficients of `p(t) ↦ p'(t)·q(t)`, the chain-rule step for
    /// functions whose derivative is a polynomial `q` in the function itself.
    fn chain(p: &[f64], q: &[f64]) -> Vec<f64> {
        let dp: Vec<f64> = p.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
        let mut out = vec![0.0; dp.len() + q.len()];
        for (i, a) in dp.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    }

    fn horner(p: &[f64], t: f64) -> f64 {
        p.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    #[test]
    fn tanh_and_sigmoid_tables_match_symbolic_chain_rule() {
        for &(prim, q) in &[
            (Primitive::Tanh, &[1.0, 0.0, -1.0][..]),
            (Primitive::Sigmoid, &[0.0, 1.0, -1.0][..]),
        ] {
            for &x in &[-2.3f64, -0.4, 0.0, 0.7, 3.1] {
                let t = match prim {
                    Primitive::Tanh => x.tanh(),
                    _ => 1.0 / (1.0 + (-x as f64).exp()),
                };
                let g = prim.derivatives(x);
                let mut p = vec![0.0, 1.0];
                for (k, gk) in g.iter().enumerate() {
                    let expect = horner(&p, t);
                    assert!((gk - expect).abs() < 1e-12, "{prim:?} order {k} at {x}");
                    p = chain(&p, q);
                }
            }
        }
    }

    #[test]
    fn closed_form_primitives_match_known_derivatives() {
        let x = 0.8_f64;
        let r = Primitive::Recip.derivatives(x);
        assert!((r[3] + 6.0 / x.powi(4)).abs() < 1e-12);
        let s = Primitive::InvSqrt.derivatives(x);
        // d²/dx² x^{-1/2} = 3/4 x^{-5/2}
        assert!((s[2] - 0.75 * x.powf(-2.5)).abs() < 1e-12);
        let l = Primitive::LogSigmoid.derivatives(x);
        assert!((l[0] - (1.0 / (1.0 + (-x).exp())).ln()).abs() < 1e-15);
        assert!((l[1] - 1.0 / (1.0 + x.exp())).abs() < 1e-15);
    }

    #[test]
    fn log_sigmoid_is_stable_for_large_arguments() {
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(log_sigmoid(800.0), 0.0);
    }

    #[test]
    fn tanh_at_origin() {
        let j = JetValue::variable(0.0, 1.0).tanh();
        assert_eq!(j.value(), 0.0);
        assert_eq!(j.derivative(1), 1.0);
        assert_eq!(j.derivative(2), 0.0);
    }

    #[test]
    fn constant_has_no_derivatives() {
        let j = JetValue::constant(2.5).exp().tanh();
        assert!((1..=4).all(|k| j.derivative(k) == 0.0));
    }

    #[test]
    fn unsupported_primitive_is_rejected() {
        assert!(matches!(Primitive::from_name("relu"), Err(AutodiffError::Unsupported(_))));
        for p in Primitive::ALL {
            assert_eq!(Primitive::from_name(p.name()).unwrap(), p);
        }
    }

    #[test]
    fn division_guard() {
        assert!(JetValue::constant(0.0).checked_recip().is_err());
        assert!(!(JetValue::constant(1.0) / JetValue::constant(0.0)).is_finite());
    }

    #[test]
    fn max_and_clip_ties_take_left_branch() {
        let a = JetValue::variable(1.0, 2.0);
        let b = JetValue::variable(1.0, 5.0);
        assert_eq!(a.max(b).taylor(1), 2.0);
        assert_eq!(JetValue::variable(0.0, 3.0).clip(-30.0, 0.0).taylor(1), 3.0);
        assert_eq!(JetValue::variable(-30.0, 3.0).clip(-30.0, 0.0).taylor(1), 0.0);
    }
}
