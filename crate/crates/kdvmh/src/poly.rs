//! Polynomials in the spectral parameter λ and 2×2 matrices of them.
//!
//! Coefficients are stored in ascending degree and may be plain floats or jets.
//! Lengths are never trimmed, so jet-valued entries keep a fixed shape.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::jets::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly<S = f64> {
    pub coeffs: Vec<S>,
}

impl<S: Scalar> Poly<S> {
    pub fn new(coeffs: Vec<S>) -> Poly<S> {
        Poly { coeffs }
    }

    /// The monomial c·λ^k, with `like` fixing the scalar shape.
    pub fn monomial(like: &S, c: f64, k: usize) -> Poly<S> {
        let mut v = vec![like.cst(0.0); k + 1];
        v[k] = like.cst(c);
        Poly { coeffs: v }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of λ^k, zero beyond the stored length.
    pub fn coeff(&self, k: usize) -> S {
        match self.coeffs.get(k) {
            Some(c) => c.clone(),
            None => self.coeffs[0].cst(0.0),
        }
    }

    /// Horner evaluation at a scalar of the same kind.
    pub fn eval(&self, x: &S) -> S {
        let mut acc = x.cst(0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone();
        }
        acc
    }

    /// Horner evaluation at a plain number.
    pub fn eval_f(&self, x: f64) -> S {
        let mut acc = self.coeffs[0].cst(0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c.clone();
        }
        acc
    }

    pub fn scale(&self, c: f64) -> Poly<S> {
        Poly { coeffs: self.coeffs.iter().map(|a| a.clone() * c).collect() }
    }

    /// Derivative in λ.
    pub fn derivative(&self) -> Poly<S> {
        if self.coeffs.len() <= 1 {
            return Poly { coeffs: vec![self.coeffs[0].cst(0.0)] };
        }
        Poly { coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c.clone() * k as f64).collect() }
    }

    pub fn values(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.value()).collect()
    }
}

impl<S: Scalar> Add for &Poly<S> {
    type Output = Poly<S>;
    fn add(self, rhs: &Poly<S>) -> Poly<S> {
        let n = self.len().max(rhs.len());
        Poly { coeffs: (0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect() }
    }
}

impl<S: Scalar> Sub for &Poly<S> {
    type Output = Poly<S>;
    fn sub(self, rhs: &Poly<S>) -> Poly<S> {
        let n = self.len().max(rhs.len());
        Poly { coeffs: (0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect() }
    }
}

impl<S: Scalar> Mul for &Poly<S> {
    type Output = Poly<S>;
    fn mul(self, rhs: &Poly<S>) -> Poly<S> {
        let zero = self.coeffs[0].cst(0.0);
        let mut out = vec![zero; self.len() + rhs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Poly { coeffs: out }
    }
}

/// 2×2 matrix [[A, B], [C, D]] of polynomials in λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMat2<S = f64> {
    pub a: Poly<S>,
    pub b: Poly<S>,
    pub c: Poly<S>,
    pub d: Poly<S>,
}

impl<S: Scalar> PolyMat2<S> {
    pub fn identity(like: &S) -> PolyMat2<S> {
        PolyMat2 {
            a: Poly::monomial(like, 1.0, 0),
            b: Poly::monomial(like, 0.0, 0),
            c: Poly::monomial(like, 0.0, 0),
            d: Poly::monomial(like, 1.0, 0),
        }
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &PolyMat2<S>) -> PolyMat2<S> {
        PolyMat2 {
            a: &(&self.a * &rhs.a) + &(&self.b * &rhs.c),
            b: &(&self.a * &rhs.b) + &(&self.b * &rhs.d),
            c: &(&self.c * &rhs.a) + &(&self.d * &rhs.c),
            d: &(&self.c * &rhs.b) + &(&self.d * &rhs.d),
        }
    }

    pub fn sub(&self, rhs: &PolyMat2<S>) -> PolyMat2<S> {
        PolyMat2 { a: &self.a - &rhs.a, b: &self.b - &rhs.b, c: &self.c - &rhs.c, d: &self.d - &rhs.d }
    }

    pub fn trace(&self) -> Poly<S> {
        &self.a + &self.d
    }

    pub fn det(&self) -> Poly<S> {
        &(&self.a * &self.d) - &(&self.b * &self.c)
    }

    /// Entry values at a plain λ, as [[a, b], [c, d]].
    pub fn eval_f(&self, lambda: f64) -> [[S; 2]; 2] {
        [[self.a.eval_f(lambda), self.b.eval_f(lambda)], [self.c.eval_f(lambda), self.d.eval_f(lambda)]]
    }

    /// Largest absolute coefficient value over all entries.
    pub fn max_abs(&self) -> f64 {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .flat_map(|p| p.coeffs.iter().map(|c| c.value().abs()))
            .fold(0.0, f64::max)
    }

    pub fn values(&self) -> PolyMat2<f64> {
        PolyMat2 {
            a: Poly::new(self.a.values()),
            b: Poly::new(self.b.values()),
            c: Poly::new(self.c.values()),
            d: Poly::new(self.d.values()),
        }
    }
}

/// Real roots of c0 + c1 x + c2 x² in ascending order; `None` when complex or (near-)double.
pub fn quadratic_roots<S: Scalar>(c0: &S, c1: &S, c2: &S) -> Option<(S, S)> {
    let disc = c1.sq() - c0.clone() * c2.clone() * 4.0;
    let scale = c1.value().powi(2) + (c0.value() * c2.value()).abs() * 4.0;
    if !(disc.value() > 1e-14 * scale) || c2.value() == 0.0 {
        return None;
    }
    let s = disc.try_sqrt().ok()?;
    // cancellation-free pair: q = −(c1 + sign(c1)·s)/2, roots q/c2 and c0/q
    let sign = if c1.value() >= 0.0 { 1.0 } else { -1.0 };
    let q = (c1.clone() + s * sign) * -0.5;
    let r1 = q.try_div(c2).ok()?;
    let r2 = c0.try_div(&q).ok()?;
    if r1.value() <= r2.value() {
        Some((r1, r2))
    } else {
        Some((r2, r1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_eval() {
        let p = Poly::new(vec![1.0, 2.0]);
        let q = Poly::new(vec![-1.0, 0.0, 3.0]);
        let r = &p * &q;
        assert_eq!(r.coeffs, vec![-1.0, -2.0, 3.0, 6.0]);
        assert_eq!(r.eval(&2.0), p.eval(&2.0) * q.eval(&2.0));
    }

    #[test]
    fn determinant_of_product() {
        let m = PolyMat2 {
            a: Poly::new(vec![0.3, 1.0]),
            b: Poly::new(vec![0.5]),
            c: Poly::new(vec![0.0, 0.7]),
            d: Poly::new(vec![0.0, 1.0]),
        };
        let det = m.det();
        let det2 = m.mul(&m).det();
        let sq = &det * &det;
        for k in 0..sq.len() {
            assert!((det2.coeff(k) - sq.coeff(k)).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_roots_are_sorted() {
        let (a, b) = quadratic_roots(&6.0, &-5.0, &1.0).unwrap();
        assert!((a - 2.0).abs() < 1e-15 && (b - 3.0).abs() < 1e-15);
        assert!(quadratic_roots(&1.0, &0.0, &1.0).is_none());
    }
}
