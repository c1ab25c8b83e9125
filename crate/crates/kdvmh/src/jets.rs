//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients of a scalar function around a base
//! point, densely over every multi-index of total degree at most `order`.
//! Monomials are enumerated degree by degree, so the coefficients of a jet of
//! order `k - 1` are a prefix of those of order `k`.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

pub const MAX_ORDER: usize = 8;
pub const MAX_VARS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("a jet needs at least one variable")]
    NoVariables,
    #[error("jet order must be at least 1 for seeding, got 0")]
    ZeroOrder,
    #[error("unsupported jet shape: {nvars} variables at order {order} (limits {MAX_VARS} and {MAX_ORDER})")]
    TooLarge { nvars: usize, order: usize },
    #[error("{op} is undefined at value {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("arity mismatch: expected {expected} variables, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("insufficient jet order: need at least {needed}, have {have}")]
    Order { needed: usize, have: usize },
}

/// Monomial enumeration and product table for a given (nvars, order).
#[derive(Debug)]
struct Layout {
    nvars: usize,
    order: usize,
    exps: Vec<[u8; MAX_VARS]>,
    index: HashMap<[u8; MAX_VARS], usize>,
    // (i, j, k): monomial i times monomial j is monomial k
    products: Vec<(u16, u16, u16)>,
}

impl Layout {
    fn build(nvars: usize, order: usize) -> Layout {
        let mut exps = Vec::new();
        let mut degree = Vec::new();
        for d in 0..=order {
            let mut cur = [0u8; MAX_VARS];
            enumerate(nvars, d, 0, &mut cur, &mut exps);
            while degree.len() < exps.len() {
                degree.push(d);
            }
        }
        let index: HashMap<[u8; MAX_VARS], usize> =
            exps.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut products = Vec::new();
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let mut s = [0u8; MAX_VARS];
                for v in 0..MAX_VARS {
                    s[v] = exps[i][v] + exps[j][v];
                }
                products.push((i as u16, j as u16, index[&s] as u16));
            }
        }
        Layout { nvars, order, exps, index, products }
    }

    fn len(&self) -> usize {
        self.exps.len()
    }
}

fn enumerate(nvars: usize, remaining: usize, var: usize, cur: &mut [u8; MAX_VARS], out: &mut Vec<[u8; MAX_VARS]>) {
    if var + 1 == nvars {
        cur[var] = remaining as u8;
        out.push(*cur);
        cur[var] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[var] = k as u8;
        enumerate(nvars, remaining - k, var + 1, cur, out);
    }
    cur[var] = 0;
}

fn layout(nvars: usize, order: usize) -> Result<Arc<Layout>, JetError> {
    if nvars == 0 {
        return Err(JetError::NoVariables);
    }
    if nvars > MAX_VARS || order > MAX_ORDER {
        return Err(JetError::TooLarge { nvars, order });
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("jet layout cache poisoned");
    Ok(guard
        .entry((nvars, order))
        .or_insert_with(|| Arc::new(Layout::build(nvars, order)))
        .clone())
}

/// Truncated Taylor expansion of a scalar function of `nvars` variables.
#[derive(Clone)]
pub struct Jet {
    layout: Arc<Layout>,
    coeffs: Vec<f64>,
    base: Arc<[f64]>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.layout.nvars)
            .field("order", &self.layout.order)
            .field("coeffs", &self.coeffs)
            .field("base", &self.base)
            .finish()
    }
}

/// One jet per coordinate: value plus a unit first-order self coefficient.
pub fn jet_seed(point: &[f64], order: usize) -> Result<Vec<Jet>, JetError> {
    if point.is_empty() {
        return Err(JetError::NoVariables);
    }
    if order == 0 {
        return Err(JetError::ZeroOrder);
    }
    let lay = layout(point.len(), order)?;
    let base: Arc<[f64]> = point.into();
    Ok((0..point.len())
        .map(|v| {
            let mut coeffs = vec![0.0; lay.len()];
            coeffs[0] = point[v];
            let mut e = [0u8; MAX_VARS];
            e[v] = 1;
            coeffs[lay.index[&e]] = 1.0;
            Jet { layout: lay.clone(), coeffs, base: base.clone() }
        })
        .collect())
}

impl Jet {
    /// Constant jet with the given shape.
    pub fn constant(nvars: usize, order: usize, value: f64) -> Result<Jet, JetError> {
        let lay = layout(nvars, order)?;
        let mut coeffs = vec![0.0; lay.len()];
        coeffs[0] = value;
        Ok(Jet { layout: lay, coeffs, base: vec![0.0; nvars].into() })
    }

    /// Constant with the same shape and base as `self`.
    pub fn constant_like(&self, value: f64) -> Jet {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = value;
        Jet { layout: self.layout.clone(), coeffs, base: self.base.clone() }
    }

    /// Build a jet from explicit coefficients listed in [`Jet::monomials`] order.
    pub fn from_coeffs(nvars: usize, order: usize, base: &[f64], coeffs: Vec<f64>) -> Result<Jet, JetError> {
        let lay = layout(nvars, order)?;
        if coeffs.len() != lay.len() {
            return Err(JetError::Arity { expected: lay.len(), got: coeffs.len() });
        }
        if base.len() != nvars {
            return Err(JetError::Arity { expected: nvars, got: base.len() });
        }
        Ok(Jet { layout: lay, coeffs, base: base.into() })
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Multi-indices in storage order.
    pub fn monomials(&self) -> Vec<Vec<usize>> {
        self.layout
            .exps
            .iter()
            .map(|e| e[..self.layout.nvars].iter().map(|&x| x as usize).collect())
            .collect()
    }

    /// Taylor coefficient of the given multi-index; zero above the order.
    pub fn coeff(&self, alpha: &[usize]) -> f64 {
        assert_eq!(alpha.len(), self.nvars(), "multi-index length");
        let deg: usize = alpha.iter().sum();
        if deg > self.order() {
            return 0.0;
        }
        let mut e = [0u8; MAX_VARS];
        for (v, &a) in alpha.iter().enumerate() {
            e[v] = a as u8;
        }
        self.coeffs[self.layout.index[&e]]
    }

    /// Partial derivative of the underlying function at the base point.
    pub fn partial(&self, alpha: &[usize]) -> f64 {
        let fact: f64 = alpha.iter().map(|&a| factorial(a)).product();
        self.coeff(alpha) * fact
    }

    /// First partial derivatives at the base point.
    pub fn gradient(&self) -> Vec<f64> {
        (0..self.nvars())
            .map(|v| {
                let mut a = vec![0; self.nvars()];
                a[v] = 1;
                self.coeff(&a)
            })
            .collect()
    }

    /// Drop every term above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let lay = layout(self.nvars(), order).expect("smaller shape is valid");
        let n = lay.len();
        Jet { layout: lay, coeffs: self.coeffs[..n].to_vec(), base: self.base.clone() }
    }

    /// Jet of the partial derivative with respect to variable `var`; one order lower.
    pub fn derivative(&self, var: usize) -> Result<Jet, JetError> {
        if self.order() == 0 {
            return Err(JetError::Order { needed: 1, have: 0 });
        }
        assert!(var < self.nvars(), "variable index out of range");
        let lay = layout(self.nvars(), self.order() - 1)?;
        let mut out = vec![0.0; lay.len()];
        for (i, e) in lay.exps.iter().enumerate() {
            let mut up = *e;
            up[var] += 1;
            let src = self.layout.index[&up];
            out[i] = self.coeffs[src] * up[var] as f64;
        }
        Ok(Jet { layout: lay, coeffs: out, base: self.base.clone() })
    }

    /// Compose with a univariate series `c[k] = f^(k)(x0)/k!` where x0 is the value of `self`.
    pub fn compose(&self, c: &[f64]) -> Jet {
        let k = self.order().min(c.len().saturating_sub(1));
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = self.constant_like(c[k]);
        for j in (0..k).rev() {
            acc = &acc * &h;
            acc.coeffs[0] += c[j];
        }
        acc
    }

    /// Substitute jets `h` (one per variable, zero constant part expected) for the
    /// displacements from the base point.
    pub fn substitute(&self, h: &[Jet]) -> Result<Jet, JetError> {
        if h.len() != self.nvars() {
            return Err(JetError::Arity { expected: self.nvars(), got: h.len() });
        }
        let mut acc = h[0].constant_like(0.0);
        for (alpha, c) in self.monomials().iter().zip(&self.coeffs) {
            if *c == 0.0 {
                continue;
            }
            let mut term = h[0].constant_like(*c);
            for (v, &a) in alpha.iter().enumerate() {
                for _ in 0..a {
                    term = &term * &h[v];
                }
            }
            acc = acc + term;
        }
        Ok(acc)
    }

    pub fn try_recip(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(JetError::Domain { op: "division", value: a });
        }
        let c: Vec<f64> = (0..=self.order()).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } / a.powi(k as i32 + 1)).collect();
        Ok(self.compose(&c))
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet, JetError> {
        Ok(self * &other.try_recip()?)
    }

    pub fn try_ln(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if !(a > 0.0) || !a.is_finite() {
            return Err(JetError::Domain { op: "log", value: a });
        }
        let mut c = vec![a.ln()];
        for k in 1..=self.order() {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            c.push(s / (k as f64 * a.powi(k as i32)));
        }
        Ok(self.compose(&c))
    }

    pub fn exp(&self) -> Jet {
        let ea = self.value().exp();
        let c: Vec<f64> = (0..=self.order()).map(|k| ea / factorial(k)).collect();
        self.compose(&c)
    }

    pub fn try_sqrt(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if !(a > 0.0) || !a.is_finite() {
            return Err(JetError::Domain { op: "sqrt", value: a });
        }
        let mut c = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (0.5 - (k as f64 - 1.0)) / k as f64;
            }
            c.push(binom * a.powf(0.5 - k as f64));
        }
        Ok(self.compose(&c))
    }

    /// Integer power; negative exponents require a nonzero value.
    pub fn powi(&self, n: i32) -> Result<Jet, JetError> {
        let base = if n < 0 { self.try_recip()? } else { self.clone() };
        let mut acc = self.constant_like(1.0);
        for _ in 0..n.unsigned_abs() {
            acc = &acc * &base;
        }
        Ok(acc)
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    fn check_shape(&self, other: &Jet) {
        assert_eq!(self.nvars(), other.nvars(), "jets with different variable counts");
    }

    fn common(a: &Jet, b: &Jet) -> (Jet, Jet) {
        a.check_shape(b);
        if a.order() == b.order() {
            (a.clone(), b.clone())
        } else {
            let o = a.order().min(b.order());
            (a.truncate(o), b.truncate(o))
        }
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Which element-wise operation to apply in [`jet_elementary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementary<'a> {
    Add(&'a Jet),
    Sub(&'a Jet),
    Mul(&'a Jet),
    Div(&'a Jet),
    Log,
    Exp,
    Sqrt,
    Powi(i32),
}

impl PartialEq for Jet {
    fn eq(&self, other: &Jet) -> bool {
        self.nvars() == other.nvars() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}
impl Eq for Jet {}

pub fn jet_elementary(x: &Jet, kind: Elementary<'_>) -> Result<Jet, JetError> {
    match kind {
        Elementary::Add(y) => Ok(x + y),
        Elementary::Sub(y) => Ok(x - y),
        Elementary::Mul(y) => Ok(x * y),
        Elementary::Div(y) => x.try_div(y),
        Elementary::Log => x.try_ln(),
        Elementary::Exp => Ok(x.exp()),
        Elementary::Sqrt => x.try_sqrt(),
        Elementary::Powi(n) => x.powi(n),
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let (mut a, b) = Jet::common(self, rhs);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        a
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let (mut a, b) = Jet::common(self, rhs);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x -= y;
        }
        a
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let (a, b) = Jet::common(self, rhs);
        let lay = a.layout.clone();
        let mut out = vec![0.0; lay.len()];
        for &(i, j, k) in &lay.products {
            out[k as usize] += a.coeffs[i as usize] * b.coeffs[j as usize];
        }
        Jet { layout: lay, coeffs: out, base: a.base.clone() }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let mut a = self.clone();
        a.coeffs.iter_mut().for_each(|c| *c = -*c);
        a
    }
}

macro_rules! owned_ops {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl<'a> $tr<Jet> for &'a Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}
owned_ops!(Add, add);
owned_ops!(Sub, sub);
owned_ops!(Mul, mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        *self = &*self + rhs;
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}
impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}
impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}
impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}
impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}
impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

/// Numeric type shared by plain floats and jets, so formulas are written once.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(&self) -> f64;
    fn cst(&self, c: f64) -> Self;
    fn try_recip(&self) -> Result<Self, JetError>;
    fn try_ln(&self) -> Result<Self, JetError>;
    fn exp(&self) -> Self;
    fn try_sqrt(&self) -> Result<Self, JetError>;

    fn try_div(&self, other: &Self) -> Result<Self, JetError> {
        Ok(self.clone() * other.try_recip()?)
    }
    /// `c - self`
    fn rsub(&self, c: f64) -> Self {
        -self.clone() + c
    }
    fn sq(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn cst(&self, c: f64) -> f64 {
        c
    }
    fn try_recip(&self) -> Result<f64, JetError> {
        if *self == 0.0 {
            return Err(JetError::Domain { op: "division", value: *self });
        }
        Ok(1.0 / self)
    }
    fn try_ln(&self) -> Result<f64, JetError> {
        if !(*self > 0.0) {
            return Err(JetError::Domain { op: "log", value: *self });
        }
        Ok(self.ln())
    }
    fn exp(&self) -> f64 {
        f64::exp(*self)
    }
    fn try_sqrt(&self) -> Result<f64, JetError> {
        if *self < 0.0 {
            return Err(JetError::Domain { op: "sqrt", value: *self });
        }
        Ok(self.sqrt())
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn cst(&self, c: f64) -> Jet {
        self.constant_like(c)
    }
    fn try_recip(&self) -> Result<Jet, JetError> {
        Jet::try_recip(self)
    }
    fn try_ln(&self) -> Result<Jet, JetError> {
        Jet::try_ln(self)
    }
    fn exp(&self) -> Jet {
        Jet::exp(self)
    }
    fn try_sqrt(&self) -> Result<Jet, JetError> {
        Jet::try_sqrt(self)
    }
    fn try_div(&self, other: &Jet) -> Result<Jet, JetError> {
        Jet::try_div(self, other)
    }
}

/// Canonical bracket `{F,G} = sum_j F_{q_j} G_{p_j} - F_{p_j} G_{q_j}` at jet level.
///
/// Variables `0..npairs` are positions, `npairs..2*npairs` momenta; any further
/// variables are passive parameters. The result is one order lower than the inputs.
pub fn bracket(f: &Jet, g: &Jet, npairs: usize) -> Result<Jet, JetError> {
    if f.nvars() != g.nvars() {
        return Err(JetError::Arity { expected: f.nvars(), got: g.nvars() });
    }
    if f.nvars() < 2 * npairs || npairs == 0 {
        return Err(JetError::Arity { expected: 2 * npairs.max(1), got: f.nvars() });
    }
    let have = f.order().min(g.order());
    if have == 0 {
        return Err(JetError::Order { needed: 1, have });
    }
    let mut acc = f.truncate(have - 1).constant_like(0.0);
    for j in 0..npairs {
        let fq = f.derivative(j)?;
        let fp = f.derivative(j + npairs)?;
        let gq = g.derivative(j)?;
        let gp = g.derivative(j + npairs)?;
        acc = acc + &fq * &gp - &fp * &gq;
    }
    Ok(acc)
}

/// A scalar function of phase variables, evaluated on jets.
pub trait ScalarField: Send + Sync {
    fn arity(&self) -> usize;
    fn eval(&self, x: &[Jet]) -> Result<Jet, JetError>;

    /// Plain value at a point.
    fn value_at(&self, z: &[f64]) -> Result<f64, JetError> {
        if z.len() != self.arity() {
            return Err(JetError::Arity { expected: self.arity(), got: z.len() });
        }
        let x = jet_seed(z, 1)?;
        Ok(self.eval(&x)?.value())
    }
}

/// Closure-backed [`ScalarField`].
pub struct FnField<F> {
    arity: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[Jet]) -> Result<Jet, JetError> + Send + Sync,
{
    pub fn new(arity: usize, f: F) -> Self {
        FnField { arity, f }
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[Jet]) -> Result<Jet, JetError> + Send + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }
    fn eval(&self, x: &[Jet]) -> Result<Jet, JetError> {
        if x.len() != self.arity {
            return Err(JetError::Arity { expected: self.arity, got: x.len() });
        }
        (self.f)(x)
    }
}

/// Jet of `{F,G}` at `z` to the requested order; seeds internally at `order + 1`.
pub fn poisson_bracket(f: &dyn ScalarField, g: &dyn ScalarField, z: &[f64], order: usize) -> Result<Jet, JetError> {
    if f.arity() != g.arity() {
        return Err(JetError::Arity { expected: f.arity(), got: g.arity() });
    }
    if f.arity() != z.len() {
        return Err(JetError::Arity { expected: f.arity(), got: z.len() });
    }
    if z.len() % 2 != 0 {
        return Err(JetError::Arity { expected: z.len() + 1, got: z.len() });
    }
    let x = jet_seed(z, order + 1)?;
    let fj = f.eval(&x)?;
    let gj = g.eval(&x)?;
    bracket(&fj, &gj, z.len() / 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_has_unit_self_coefficient() {
        let x = jet_seed(&[0.5, 0.3], 6).unwrap();
        assert_eq!(x[0].value(), 0.5);
        assert_eq!(x[1].value(), 0.3);
        assert_eq!(x[0].coeff(&[1, 0]), 1.0);
        assert_eq!(x[0].coeff(&[0, 1]), 0.0);
        assert_eq!(x[1].coeff(&[0, 1]), 1.0);
    }

    #[test]
    fn seed_rejects_bad_shapes() {
        assert_eq!(jet_seed(&[], 2).unwrap_err(), JetError::NoVariables);
        assert_eq!(jet_seed(&[1.0], 0).unwrap_err(), JetError::ZeroOrder);
        assert!(matches!(jet_seed(&[1.0; 5], 2), Err(JetError::TooLarge { .. })));
    }

    #[test]
    fn bilinear_mixed_partial() {
        let x = jet_seed(&[0.0, 0.0], 2).unwrap();
        let f = &x[0] * &x[1];
        assert_eq!(f.partial(&[1, 1]), 1.0);
    }

    #[test]
    fn log_of_one_is_zero() {
        let one = Jet::constant(2, 4, 1.0).unwrap();
        assert!(one.try_ln().unwrap().max_abs() == 0.0);
    }

    #[test]
    fn exp_log_roundtrip() {
        let x = jet_seed(&[0.7, -0.2], 6).unwrap();
        let y = (&x[0] * &x[0] + x[1].exp()) + 1.0;
        let back = y.try_ln().unwrap().exp();
        for (a, b) in back.coeffs().iter().zip(y.coeffs()) {
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let eps = 2.0;
        let q0 = 0.5;
        let f = |q: f64| (eps * eps - q * q).ln();
        let x = jet_seed(&[q0], 3).unwrap();
        let j = (&x[0] * &x[0]).rsub(eps * eps).try_ln().unwrap();
        let h = 1e-5;
        let d1 = (f(q0 + h) - f(q0 - h)) / (2.0 * h);
        let d2 = (f(q0 + h) - 2.0 * f(q0) + f(q0 - h)) / (h * h);
        assert!((j.partial(&[1]) - d1).abs() < 1e-6 * d1.abs());
        assert!((j.partial(&[2]) - d2).abs() < 1e-5 * d2.abs());
    }

    #[test]
    fn sqrt_squares_back() {
        let x = jet_seed(&[2.0, 1.0, 0.5], 5).unwrap();
        let y = &x[0] * &x[1] + x[2].clone() + 3.0;
        let s = y.try_sqrt().unwrap();
        let back = &s * &s;
        for (a, b) in back.coeffs().iter().zip(y.coeffs()) {
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn domain_errors() {
        let x = jet_seed(&[-1.0], 2).unwrap();
        assert!(matches!(x[0].try_ln(), Err(JetError::Domain { op: "log", .. })));
        assert!(matches!(x[0].try_sqrt(), Err(JetError::Domain { op: "sqrt", .. })));
        let z = jet_seed(&[0.0], 2).unwrap();
        assert!(matches!(z[0].try_recip(), Err(JetError::Domain { op: "division", .. })));
    }

    #[test]
    fn powi_matches_products() {
        let x = jet_seed(&[1.3, 0.4], 4).unwrap();
        let y = &x[0] + &x[1];
        let p3 = y.powi(3).unwrap();
        let m = &(&y * &y) * &y;
        assert_eq!(p3, m);
        let inv = y.powi(-2).unwrap();
        let one = &inv * &(&y * &y);
        assert!((one.value() - 1.0).abs() < 1e-15);
        assert!(one.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn canonical_pair_bracket() {
        let x = jet_seed(&[0.3, -0.1], 3).unwrap();
        let b = bracket(&x[0], &x[1], 1).unwrap();
        assert_eq!(b.value(), 1.0);
        assert!(b.coeffs()[1..].iter().all(|&c| c == 0.0));
        assert_eq!(b.order(), 2);
    }

    #[test]
    fn bracket_rejects_order_zero() {
        let c = Jet::constant(2, 0, 1.0).unwrap();
        assert!(matches!(bracket(&c, &c, 1), Err(JetError::Order { .. })));
    }

    #[test]
    fn self_bracket_vanishes() {
        let h = FnField::new(2, |x: &[Jet]| Ok(&(&x[0] * &x[0]) * &x[1] + x[1].exp()));
        let b = poisson_bracket(&h, &h, &[0.4, 0.2], 3).unwrap();
        assert!(b.max_abs() == 0.0);
    }

    #[test]
    fn truncation_prefix_property() {
        let x = jet_seed(&[0.2, 0.1], 5).unwrap();
        let y = (&x[0] * &x[1]).exp();
        let lo = jet_seed(&[0.2, 0.1], 3).unwrap();
        let ylo = (&lo[0] * &lo[1]).exp();
        assert_eq!(y.truncate(3), ylo);
    }
}
