//! A small symbolic differentiator used as an independent oracle for the
//! jet arithmetic and the tape.
//!
//! Expressions are shared DAGs; differentiation and evaluation memoize on
//! node identity so repeated differentiation of a network expansion stays
//! linear in the DAG size. Piecewise nodes (`max`, `clip`) differentiate to
//! selection nodes that pick a branch from the primal values at evaluation
//! time, using the same tie conventions as the jets.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use crate::autodiff::JetValue;

#[derive(Debug)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Neg(Expr),
    Tanh(Expr),
    Sigmoid(Expr),
    Exp(Expr),
    LogSigmoid(Expr),
    Recip(Expr),
    InvSqrt(Expr),
    Max(Expr, Expr),
    Clip(Expr, f64, f64),
    /// `if a ≥ b { x } else { y }` with `a`, `b` compared by value.
    Pick { a: Expr, b: Expr, x: Expr, y: Expr },
    /// `if lo < v ≤ hi { x } else { 0 }`.
    Pass { v: Expr, lo: f64, hi: f64, x: Expr },
}

#[derive(Clone, Debug)]
pub struct Expr(Rc<Node>);

impl Expr {
    fn new(n: Node) -> Self {
        Expr(Rc::new(n))
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    pub fn constant(v: f64) -> Self {
        Expr::new(Node::Const(v))
    }

    pub fn var(i: usize) -> Self {
        Expr::new(Node::Var(i))
    }

    fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn tanh(&self) -> Self {
        Expr::new(Node::Tanh(self.clone()))
    }

    pub fn sigmoid(&self) -> Self {
        Expr::new(Node::Sigmoid(self.clone()))
    }

    pub fn exp(&self) -> Self {
        Expr::new(Node::Exp(self.clone()))
    }

    pub fn log_sigmoid(&self) -> Self {
        Expr::new(Node::LogSigmoid(self.clone()))
    }

    pub fn recip(&self) -> Self {
        Expr::new(Node::Recip(self.clone()))
    }

    pub fn inv_sqrt(&self) -> Self {
        Expr::new(Node::InvSqrt(self.clone()))
    }

    pub fn max(&self, other: &Expr) -> Self {
        Expr::new(Node::Max(self.clone(), other.clone()))
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Self {
        Expr::new(Node::Clip(self.clone(), lo, hi))
    }

    pub fn scale(&self, k: f64) -> Self {
        self.clone() * Expr::constant(k)
    }

    /// Directional derivative `Σ_i dir_i ∂_i`.
    pub fn diff(&self, dir: &[f64]) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(dir, &mut memo)
    }

    fn diff_memo(&self, dir: &[f64], memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.key()) {
            return d.clone();
        }
        let one = || Expr::constant(1.0);
        let mut d = |e: &Expr| e.diff_memo(dir, memo);
        let out = match &*self.0 {
            Node::Const(_) => Expr::constant(0.0),
            Node::Var(i) => Expr::constant(dir.get(*i).copied().unwrap_or(0.0)),
            Node::Add(a, b) => d(a) + d(b),
            Node::Mul(a, b) => d(a) * b.clone() + a.clone() * d(b),
            Node::Neg(a) => -d(a),
            Node::Tanh(a) => (one() - self.clone() * self.clone()) * d(a),
            Node::Sigmoid(a) => self.clone() * (one() - self.clone()) * d(a),
            Node::Exp(a) => self.clone() * d(a),
            Node::LogSigmoid(a) => (one() - a.sigmoid()) * d(a),
            Node::Recip(a) => -(self.clone() * self.clone()) * d(a),
            Node::InvSqrt(a) => self.clone() * a.recip() * Expr::constant(-0.5) * d(a),
            Node::Max(a, b) => {
                let (x, y) = (d(a), d(b));
                Expr::new(Node::Pick { a: a.clone(), b: b.clone(), x, y })
            }
            Node::Clip(v, lo, hi) => {
                let x = d(v);
                Expr::new(Node::Pass { v: v.clone(), lo: *lo, hi: *hi, x })
            }
            Node::Pick { a, b, x, y } => {
                let (dx, dy) = (d(x), d(y));
                Expr::new(Node::Pick { a: a.clone(), b: b.clone(), x: dx, y: dy })
            }
            Node::Pass { v, lo, hi, x } => {
                let dx = d(x);
                Expr::new(Node::Pass { v: v.clone(), lo: *lo, hi: *hi, x: dx })
            }
        };
        memo.insert(self.key(), out.clone());
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut memo = HashMap::new();
        self.eval_memo(x, &mut memo)
    }

    fn eval_memo(&self, x: &[f64], memo: &mut HashMap<usize, f64>) -> f64 {
        if let Some(v) = memo.get(&self.key()) {
            return *v;
        }
        let mut e = |a: &Expr| a.eval_memo(x, memo);
        let v = match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => x[*i],
            Node::Add(a, b) => e(a) + e(b),
            Node::Mul(a, b) => e(a) * e(b),
            Node::Neg(a) => -e(a),
            Node::Tanh(a) => e(a).tanh(),
            Node::Sigmoid(a) => 1.0 / (1.0 + (-e(a)).exp()),
            Node::Exp(a) => e(a).exp(),
            Node::LogSigmoid(a) => {
                let t = e(a);
                // log σ(t) = −log(1 + e^{−t}), split to avoid overflow
                if t >= 0.0 {
                    -(-t).exp().ln_1p()
                } else {
                    t - t.exp().ln_1p()
                }
            }
            Node::Recip(a) => 1.0 / e(a),
            Node::InvSqrt(a) => 1.0 / e(a).sqrt(),
            Node::Max(a, b) => {
                let (p, q) = (e(a), e(b));
                if q > p {
                    q
                } else {
                    p
                }
            }
            Node::Clip(v, lo, hi) => {
                let t = e(v);
                if t <= *lo {
                    *lo
                } else if t > *hi {
                    *hi
                } else {
                    t
                }
            }
            Node::Pick { a, b, x: p, y: q } => {
                if e(b) > e(a) {
                    e(q)
                } else {
                    e(p)
                }
            }
            Node::Pass { v, lo, hi, x: p } => {
                let t = e(v);
                if t > *lo && t <= *hi {
                    e(p)
                } else {
                    0.0
                }
            }
        };
        memo.insert(self.key(), v);
        v
    }

    /// Evaluate with jet arithmetic, so the same expression can be fed to
    /// the jet engine. Selection nodes are not expected here.
    pub fn eval_jet(&self, x: &[JetValue]) -> JetValue {
        let mut memo = HashMap::new();
        self.jet_memo(x, &mut memo)
    }

    fn jet_memo(&self, x: &[JetValue], memo: &mut HashMap<usize, JetValue>) -> JetValue {
        if let Some(v) = memo.get(&self.key()) {
            return *v;
        }
        let mut e = |a: &Expr| a.jet_memo(x, memo);
        let v = match &*self.0 {
            Node::Const(c) => JetValue::constant(*c),
            Node::Var(i) => x[*i],
            Node::Add(a, b) => e(a) + e(b),
            Node::Mul(a, b) => e(a) * e(b),
            Node::Neg(a) => -e(a),
            Node::Tanh(a) => e(a).tanh(),
            Node::Sigmoid(a) => e(a).sigmoid(),
            Node::Exp(a) => e(a).exp(),
            Node::LogSigmoid(a) => e(a).log_sigmoid(),
            Node::Recip(a) => e(a).recip(),
            Node::InvSqrt(a) => e(a).inv_sqrt(),
            Node::Max(a, b) => {
                let p = e(a);
                p.max(e(b))
            }
            Node::Clip(v, lo, hi) => e(v).clip(*lo, *hi),
            Node::Pick { .. } | Node::Pass { .. } => panic!("selection nodes only arise from differentiation"),
        };
        memo.insert(self.key(), v);
        v
    }

    /// `[f, D f, D² f, …, D^order f]` at `point` along `dir`.
    pub fn derivatives(&self, point: &[f64], dir: &[f64], order: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(order + 1);
        let mut e = self.clone();
        out.push(e.eval(point));
        for _ in 0..order {
            e = e.diff(dir);
            out.push(e.eval(point));
        }
        out
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(z), _) if z == 0.0 => rhs,
            (_, Some(z)) if z == 0.0 => self,
            _ => Expr::new(Node::Add(self, rhs)),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(z), _) | (_, Some(z)) if z == 0.0 => Expr::constant(0.0),
            (Some(o), _) if o == 1.0 => rhs,
            (_, Some(o)) if o == 1.0 => self,
            _ => Expr::new(Node::Mul(self, rhs)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.as_const() {
            Some(a) => Expr::constant(-a),
            None => Expr::new(Node::Neg(self)),
        }
    }
}

/// `Σ_j w_j · x_j + b` over expressions.
pub fn affine(weights: &[f64], inputs: &[Expr], bias: f64) -> Expr {
    weights
        .iter()
        .zip(inputs)
        .fold(Expr::constant(bias), |acc, (w, x)| acc + x.scale(*w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        // f = x² y³ along (1, 2)
        let (x, y) = (Expr::var(0), Expr::var(1));
        let f = x.clone() * x * y.clone() * y.clone() * y;
        let d = f.derivatives(&[1.5, -0.5], &[1.0, 0.0], 3);
        assert_eq!(d, vec![2.25 * -0.125, 3.0 * -0.125, 2.0 * -0.125, 0.0]);
    }

    #[test]
    fn transcendental_first_derivatives() {
        let x = Expr::var(0);
        let cases: Vec<(Expr, fn(f64) -> f64)> = vec![
            (x.tanh(), |t| 1.0 - t.tanh().powi(2)),
            (x.exp(), f64::exp),
            (x.recip(), |t| -1.0 / (t * t)),
            (x.inv_sqrt(), |t| -0.5 * t.powf(-1.5)),
            (x.log_sigmoid(), |t| 1.0 / (1.0 + t.exp())),
        ];
        for (e, d) in cases {
            let got = e.diff(&[1.0]).eval(&[0.8]);
            assert!((got - d(0.8)).abs() < 1e-14);
        }
    }

    #[test]
    fn selections_follow_tie_conventions() {
        let x = Expr::var(0);
        let m = x.max(&x.scale(2.0));
        assert_eq!(m.diff(&[1.0]).eval(&[0.0]), 1.0);
        assert_eq!(m.diff(&[1.0]).eval(&[1.0]), 2.0);
        let c = x.clip(-1.0, 0.0);
        assert_eq!(c.diff(&[1.0]).eval(&[-1.0]), 0.0);
        assert_eq!(c.diff(&[1.0]).eval(&[0.0]), 1.0);
        assert_eq!(c.diff(&[1.0]).eval(&[0.5]), 0.0);
    }
}
