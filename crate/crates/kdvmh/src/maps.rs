//! Staircase reductions of lattice KdV and MKdV: maps, generating functions, invariants.
//!
//! Canonical coordinates are ordered positions first: `(q, p)` for one degree of
//! freedom and `(q1, q2, p1, p2)` for two. The reduced layout stores
//! `[X_1 .. X_P, Y_0 .. Y_{P-1}]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{jet_seed, Jet, JetError, Scalar, ScalarField};
use crate::quad::{self, QuadError, QuadratureSpec};

/// Denominators smaller than this abort the update.
pub const POLE_GUARD: f64 = 1e-14;
/// Tolerance on the periodicity constraints of reduced inputs.
pub const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("singular orbit: denominator {name} = {value:e}")]
    Singular { name: &'static str, value: f64 },
    #[error("domain error: {name} = {value:e}")]
    Domain { name: &'static str, value: f64 },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("iteration {step}: {source}")]
pub struct OrbitError {
    pub step: usize,
    #[source]
    pub source: MapError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "kdv", alias = "KdV")]
    KdV,
    #[serde(rename = "mkdv", alias = "MKdV")]
    MKdV,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub family: Family,
    pub period: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
}

impl MapParams {
    pub fn kdv(period: usize, epsilon: f64, delta: f64) -> Result<MapParams, MapError> {
        let p = MapParams { family: Family::KdV, period, epsilon, delta, rho: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn mkdv(period: usize, rho: f64) -> Result<MapParams, MapError> {
        let p = MapParams { family: Family::MKdV, period, epsilon: 0.0, delta: 0.0, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.period < 2 {
            return Err(MapError::InvalidState(format!("period must be at least 2, got {}", self.period)));
        }
        match self.family {
            Family::KdV if self.epsilon == 0.0 || !self.epsilon.is_finite() || !self.delta.is_finite() => {
                Err(MapError::InvalidState("KdV needs finite epsilon != 0 and finite delta".into()))
            }
            Family::MKdV if !(self.rho > 0.0) || !self.rho.is_finite() => {
                Err(MapError::InvalidState(format!("MKdV needs rho > 0, got {}", self.rho)))
            }
            _ => Ok(()),
        }
    }

    /// ω = εδ for KdV; zero for MKdV.
    pub fn omega(&self) -> f64 {
        match self.family {
            Family::KdV => self.epsilon * self.delta,
            Family::MKdV => 0.0,
        }
    }

    /// Grading parameter: δ for KdV, τ = ρ − 1 for MKdV.
    pub fn grading(&self) -> f64 {
        match self.family {
            Family::KdV => self.delta,
            Family::MKdV => self.rho - 1.0,
        }
    }

    /// Same family and period with a different grading value.
    pub fn with_grading(&self, g: f64) -> MapParams {
        let mut p = *self;
        match self.family {
            Family::KdV => p.delta = g,
            Family::MKdV => p.rho = 1.0 + g,
        }
        p
    }

    /// Number of canonical pairs of the explicit maps (P − 1).
    pub fn npairs(&self) -> usize {
        self.period - 1
    }

    fn canonical_supported(&self) -> Result<(), MapError> {
        match (self.family, self.period) {
            (Family::KdV, 2) | (Family::KdV, 3) | (Family::MKdV, 2) => Ok(()),
            (f, p) => Err(MapError::Unsupported(format!("no canonical map for {f:?} with period {p}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Canonical,
    ReducedXY,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub coords: Vec<f64>,
    pub layout: Layout,
}

impl PhasePoint {
    pub fn canonical(coords: Vec<f64>) -> PhasePoint {
        PhasePoint { coords, layout: Layout::Canonical }
    }

    pub fn reduced(coords: Vec<f64>) -> PhasePoint {
        PhasePoint { coords, layout: Layout::ReducedXY }
    }

    /// Sums of X and Y for the reduced layout.
    pub fn constraint_sums(&self) -> (f64, f64) {
        let p = self.coords.len() / 2;
        (self.coords[..p].iter().sum(), self.coords[p..].iter().sum())
    }
}

fn guard<S: Scalar>(x: S, name: &'static str) -> Result<S, MapError> {
    let v = x.value();
    if v.abs() < POLE_GUARD || !v.is_finite() {
        return Err(MapError::Singular { name, value: v });
    }
    Ok(x)
}

fn recip<S: Scalar>(x: S, name: &'static str) -> Result<S, MapError> {
    Ok(guard(x, name)?.try_recip()?)
}

fn log_pos<S: Scalar>(x: S, name: &'static str) -> Result<S, MapError> {
    let v = x.value();
    if !(v > 0.0) || !v.is_finite() {
        return Err(MapError::Domain { name, value: v });
    }
    Ok(x.try_ln()?)
}

fn cst<S: Scalar>(like: &S, c: f64) -> S {
    like.cst(c)
}

/// KdV P=2 update with a possibly jet-valued ω.
pub fn kdv_p2_generic<S: Scalar>(z: &[S], eps: f64, omega: &S) -> Result<Vec<S>, MapError> {
    let (q, p) = (z[0].clone(), z[1].clone());
    let e2 = eps * eps;
    let pb = p + q.clone() * omega.clone() * 2.0 * recip(q.sq().rsub(e2), "eps^2 - q^2")?;
    let qb = q - pb.clone() * omega.clone() * 2.0 * recip(pb.sq().rsub(e2), "eps^2 - pbar^2")?;
    Ok(vec![qb, pb])
}

/// KdV P=3 update (positions q1, q2 then momenta p1, p2).
pub fn kdv_p3_generic<S: Scalar>(z: &[S], eps: f64, omega: &S) -> Result<Vec<S>, MapError> {
    let (q1, q2, p1, p2) = (z[0].clone(), z[1].clone(), z[2].clone(), z[3].clone());
    let w = omega.clone();
    let a = recip(q1.rsub(eps), "eps - q1")?;
    let b = recip(q1.clone() + q2.clone() + eps, "eps + q1 + q2")?;
    let c = recip(q2.rsub(eps), "eps - q2")?;
    let pb1 = p1 + w.clone() * (a - b.clone());
    let pb2 = p2 + w.clone() * (c - b);
    let d = recip(pb1.rsub(eps), "eps - pbar1")?;
    let f = recip(pb1.clone() - pb2.clone() + eps, "eps + pbar1 - pbar2")?;
    let g = recip(pb2.clone() + eps, "eps + pbar2")?;
    let qb1 = q1 - w.clone() * (d - f.clone());
    let qb2 = q2 + w * (g - f);
    Ok(vec![qb1, qb2, pb1, pb2])
}

fn mkdv_ratio<S: Scalar>(x: &S, rho: &S, name: &'static str) -> Result<S, MapError> {
    // log((rho + e^x) / (1 + rho e^x))
    let ex = x.exp();
    let num = rho.clone() + ex.clone();
    let den = rho.clone() * ex + 1.0;
    Ok(log_pos(num, name)? - log_pos(den, name)?)
}

/// MKdV P=2 update with a possibly jet-valued ρ.
pub fn mkdv_p2_generic<S: Scalar>(z: &[S], rho: &S) -> Result<Vec<S>, MapError> {
    let (q, p) = (z[0].clone(), z[1].clone());
    let pb = p - mkdv_ratio(&q, rho, "mkdv log argument (q)")? * 2.0;
    let qb = q + mkdv_ratio(&pb, rho, "mkdv log argument (pbar)")? * 2.0;
    Ok(vec![qb, pb])
}

/// Canonical-layout update for any supported (family, period), generic over the scalar type.
pub fn step_generic<S: Scalar>(params: &MapParams, z: &[S]) -> Result<Vec<S>, MapError> {
    params.canonical_supported()?;
    let n = 2 * params.npairs();
    if z.len() != n {
        return Err(MapError::InvalidState(format!("expected {n} canonical coordinates, got {}", z.len())));
    }
    match (params.family, params.period) {
        (Family::KdV, 2) => kdv_p2_generic(z, params.epsilon, &cst(&z[0], params.omega())),
        (Family::KdV, 3) => kdv_p3_generic(z, params.epsilon, &cst(&z[0], params.omega())),
        _ => mkdv_p2_generic(z, &cst(&z[0], params.rho)),
    }
}

fn expect_canonical(z: &PhasePoint, params: &MapParams, family: Family, period: usize) -> Result<(), MapError> {
    if z.layout != Layout::Canonical {
        return Err(MapError::InvalidState("expected canonical layout".into()));
    }
    if params.family != family || params.period != period {
        return Err(MapError::Unsupported(format!(
            "parameters are {:?} P={}, map is {family:?} P={period}",
            params.family, params.period
        )));
    }
    Ok(())
}

pub fn kdv_map_p2(z: &PhasePoint, params: &MapParams) -> Result<PhasePoint, MapError> {
    expect_canonical(z, params, Family::KdV, 2)?;
    Ok(PhasePoint::canonical(step_generic(params, &z.coords)?))
}

pub fn kdv_map_p3(z: &PhasePoint, params: &MapParams) -> Result<PhasePoint, MapError> {
    expect_canonical(z, params, Family::KdV, 3)?;
    Ok(PhasePoint::canonical(step_generic(params, &z.coords)?))
}

pub fn mkdv_map_p2(z: &PhasePoint, params: &MapParams) -> Result<PhasePoint, MapError> {
    expect_canonical(z, params, Family::MKdV, 2)?;
    Ok(PhasePoint::canonical(step_generic(params, &z.coords)?))
}

fn check_reduced(z: &PhasePoint, params: &MapParams) -> Result<usize, MapError> {
    if z.layout != Layout::ReducedXY {
        return Err(MapError::InvalidState("expected reducedXY layout".into()));
    }
    let p = params.period;
    if z.coords.len() != 2 * p {
        return Err(MapError::InvalidState(format!("expected {} reduced coordinates, got {}", 2 * p, z.coords.len())));
    }
    let (sx, sy) = z.constraint_sums();
    if sx.abs() > CONSTRAINT_TOL || sy.abs() > CONSTRAINT_TOL {
        return Err(MapError::InvalidState(format!("periodicity constraints violated: sum X = {sx:e}, sum Y = {sy:e}")));
    }
    Ok(p)
}

/// General-P reduced KdV update: X̄ from Y, then Ȳ from X̄ (indices mod P).
pub fn kdv_reduced_generic<S: Scalar>(xy: &[S], period: usize, eps: f64, omega: &S) -> Result<Vec<S>, MapError> {
    let p = period;
    let x = &xy[..p];
    let y = &xy[p..];
    // Y index j is stored at j for j = 0..P-1; X_j (j = 1..P) at j - 1
    let yinv: Vec<S> = y.iter().map(|v| recip(v.rsub(eps), "eps - Y_j")).collect::<Result<_, _>>()?;
    let mut xb = Vec::with_capacity(p);
    for j in 1..=p {
        xb.push(x[j - 1].clone() + omega.clone() * (yinv[j % p].clone() - yinv[j - 1].clone()));
    }
    let xinv: Vec<S> = xb.iter().map(|v| recip(v.rsub(eps), "eps - Xbar_j")).collect::<Result<_, _>>()?;
    let mut out = xb;
    for j in 0..p {
        // X̄_j with X̄_0 ≡ X̄_P, and X̄_{j+1}
        let xj = &xinv[(j + p - 1) % p];
        let xj1 = &xinv[j % p];
        out.push(y[j].clone() - omega.clone() * (xj.clone() - xj1.clone()));
    }
    Ok(out)
}

/// General-P reduced MKdV update.
pub fn mkdv_reduced_generic<S: Scalar>(xy: &[S], period: usize, rho: &S) -> Result<Vec<S>, MapError> {
    let p = period;
    let x = &xy[..p];
    let y = &xy[p..];
    let fy: Vec<S> = y.iter().map(|v| mkdv_ratio(v, rho, "mkdv log argument (Y)")).collect::<Result<_, _>>()?;
    let mut xb = Vec::with_capacity(p);
    for j in 1..=p {
        // log[(ρ+e^{Y_{j-1}})(1+ρe^{Y_j}) / ((ρ+e^{Y_j})(1+ρe^{Y_{j-1}}))]
        xb.push(x[j - 1].clone() + fy[j - 1].clone() - fy[j % p].clone());
    }
    let fx: Vec<S> = xb.iter().map(|v| mkdv_ratio(v, rho, "mkdv log argument (Xbar)")).collect::<Result<_, _>>()?;
    let mut out = xb;
    for j in 0..p {
        let xj = &fx[(j + p - 1) % p];
        let xj1 = &fx[j % p];
        out.push(y[j].clone() + xj.clone() - xj1.clone());
    }
    Ok(out)
}

pub fn kdv_map_generalp(z: &PhasePoint, params: &MapParams) -> Result<PhasePoint, MapError> {
    if params.family != Family::KdV {
        return Err(MapError::Unsupported("kdv_map_generalp needs KdV parameters".into()));
    }
    let p = check_reduced(z, params)?;
    Ok(PhasePoint::reduced(kdv_reduced_generic(&z.coords, p, params.epsilon, &params.omega())?))
}

pub fn mkdv_map_generalp(z: &PhasePoint, params: &MapParams) -> Result<PhasePoint, MapError> {
    if params.family != Family::MKdV {
        return Err(MapError::Unsupported("mkdv_map_generalp needs MKdV parameters".into()));
    }
    let p = check_reduced(z, params)?;
    Ok(PhasePoint::reduced(mkdv_reduced_generic(&z.coords, p, &params.rho)?))
}

/// Dispatch on layout and family.
pub fn apply(params: &MapParams, z: &PhasePoint) -> Result<PhasePoint, MapError> {
    match (z.layout, params.family) {
        (Layout::Canonical, _) => Ok(PhasePoint::canonical(step_generic(params, &z.coords)?)),
        (Layout::ReducedXY, Family::KdV) => kdv_map_generalp(z, params),
        (Layout::ReducedXY, Family::MKdV) => mkdv_map_generalp(z, params),
    }
}

/// Identification of canonical coordinates with the reduced chain (P = 2 or 3).
pub fn canonical_to_reduced(z: &[f64], period: usize) -> Result<PhasePoint, MapError> {
    match (period, z.len()) {
        (2, 2) => Ok(PhasePoint::reduced(vec![z[1], -z[1], -z[0], z[0]])),
        (3, 4) => {
            let (q1, q2, p1, p2) = (z[0], z[1], z[2], z[3]);
            Ok(PhasePoint::reduced(vec![p1, p2 - p1, -p2, -(q1 + q2), q1, q2]))
        }
        _ => Err(MapError::Unsupported(format!("no identification for period {period} with {} coordinates", z.len()))),
    }
}

pub fn reduced_to_canonical(xy: &PhasePoint, period: usize) -> Result<PhasePoint, MapError> {
    let c = &xy.coords;
    match (period, c.len()) {
        (2, 4) => Ok(PhasePoint::canonical(vec![c[3], c[0]])),
        (3, 6) => Ok(PhasePoint::canonical(vec![c[4], c[5], c[0], c[0] + c[1]])),
        _ => Err(MapError::Unsupported(format!("no identification for period {period} with {} coordinates", c.len()))),
    }
}

/// Iterate the map `n` times, returning all `n + 1` points.
pub fn orbit(params: &MapParams, z0: &PhasePoint, n: usize) -> Result<Vec<PhasePoint>, OrbitError> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(z0.clone());
    let mut z = z0.clone();
    for step in 1..=n {
        z = apply(params, &z).map_err(|source| OrbitError { step, source })?;
        out.push(z.clone());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Generating Hamiltonians

/// Which explicit form of the genus-2 invariants to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantVariant {
    /// Abbreviations x₁ = ε−p₁, x₂ = ε+p₂, x₃ = ε+p₁−p₂ (two-degree section).
    #[default]
    Section6,
    /// Abbreviations x_j = ε−X_j, x₃ = ε+X₁+X₂ in reduced variables.
    Section3,
}

/// Separable split H = T(p̄) + V(q) whose symplectic Euler step is the map.
///
/// When `grading_var` is set, the jets carry one extra variable after the phase
/// variables holding the grading value (δ for KdV, τ = ρ − 1 for MKdV).
#[derive(Debug, Clone)]
pub struct SplitHamiltonian {
    pub params: MapParams,
    pub grading_var: bool,
    pub quad: QuadratureSpec,
}

impl SplitHamiltonian {
    pub fn new(params: MapParams) -> Result<SplitHamiltonian, MapError> {
        params.canonical_supported()?;
        Ok(SplitHamiltonian {
            params,
            grading_var: false,
            quad: QuadratureSpec { abs_tol: 1e-14, rel_tol: 1e-14, ..Default::default() },
        })
    }

    pub fn graded(mut self) -> SplitHamiltonian {
        self.grading_var = true;
        self
    }

    pub fn npairs(&self) -> usize {
        self.params.npairs()
    }

    pub fn arity(&self) -> usize {
        2 * self.npairs() + usize::from(self.grading_var)
    }

    fn grading(&self, x: &[Jet]) -> Jet {
        if self.grading_var {
            x[2 * self.npairs()].clone()
        } else {
            x[0].constant_like(self.params.grading())
        }
    }

    fn check(&self, x: &[Jet]) -> Result<(), MapError> {
        if x.len() != self.arity() {
            return Err(JetError::Arity { expected: self.arity(), got: x.len() }.into());
        }
        Ok(())
    }

    /// Kinetic part, a function of the momenta.
    pub fn t(&self, x: &[Jet]) -> Result<Jet, MapError> {
        self.check(x)?;
        let n = self.npairs();
        self.part(&x[n..2 * n], &self.grading(x), true)
    }

    /// Potential part, a function of the positions.
    pub fn v(&self, x: &[Jet]) -> Result<Jet, MapError> {
        self.check(x)?;
        let n = self.npairs();
        self.part(&x[..n], &self.grading(x), false)
    }

    fn part(&self, u: &[Jet], g: &Jet, momenta: bool) -> Result<Jet, MapError> {
        let e = self.params.epsilon;
        match (self.params.family, self.params.period) {
            (Family::KdV, 2) => {
                let w = g.clone() * e;
                Ok(w * log_pos(u[0].sq().rsub(e * e), "eps^2 - u^2")?)
            }
            (Family::KdV, 3) => {
                let w = g.clone() * e;
                let prod = if momenta {
                    (u[0].clone() - u[1].clone() + e) * u[0].rsub(e) * (u[1].clone() + e)
                } else {
                    (u[0].clone() + u[1].clone() + e) * u[0].rsub(e) * u[1].rsub(e)
                };
                Ok(w * log_pos(prod, "generating function log argument")?)
            }
            _ => {
                let rho = g.clone() + 1.0;
                mkdv_potential(&u[0], &rho, &self.quad)
            }
        }
    }
}

/// Jet of 2∫₀^x log((ρ+e^ξ)/(1+ρe^ξ)) dξ with both x and ρ jet-valued.
///
/// The value and pure-ρ coefficients come from quadrature of the ρ-Taylor
/// coefficients of the integrand; every coefficient with an x-derivative
/// comes from the integrand's own jet.
pub fn mkdv_potential(x: &Jet, rho: &Jet, spec: &QuadratureSpec) -> Result<Jet, MapError> {
    let k = x.order();
    let x0 = x.value();
    let r0 = rho.value();
    if !(r0 > 0.0) {
        return Err(MapError::Domain { name: "rho", value: r0 });
    }
    // bivariate Taylor coefficients c[a][b] of F(x0 + hx, r0 + hr)
    let mut c = vec![vec![0.0; k + 1]; k + 1];
    // pure ρ direction: integrate the ρ-jet of f over [0, x0]
    if x0 != 0.0 {
        let ord = k.max(1);
        let seeds_cache = jet_seed(&[r0], ord)?;
        let rj = &seeds_cache[0];
        let mut vals = Vec::with_capacity(k + 1);
        for b in 0..=k {
            let r = quad::integrate(
                |xi: f64| {
                    let f = mkdv_integrand(&rj.constant_like(xi), rj).map_err(|e| QuadError::Integrand { x: xi, msg: e.to_string() })?;
                    Ok(f.coeff(&[b]))
                },
                0.0,
                x0,
                spec,
            )?;
            vals.push(2.0 * r.value);
        }
        for (b, v) in vals.into_iter().enumerate() {
            c[0][b] = v;
        }
    }
    if k >= 1 {
        let s = jet_seed(&[x0, r0], k.max(2) - 1)?;
        let f = mkdv_integrand(&s[0], &s[1])?;
        for a in 1..=k {
            for b in 0..=(k - a) {
                c[a][b] = 2.0 * f.coeff(&[a - 1, b]) / a as f64;
            }
        }
    }
    let hx = x.clone() - x0;
    let hr = rho.clone() - r0;
    let zero = x.constant_like(0.0);
    let mut acc = zero.clone();
    let mut px = x.constant_like(1.0);
    for a in 0..=k {
        let mut pr = x.constant_like(1.0);
        for b in 0..=(k - a) {
            if c[a][b] != 0.0 {
                acc = acc + (&px * &pr) * c[a][b];
            }
            pr = &pr * &hr;
        }
        px = &px * &hx;
    }
    Ok(acc)
}

fn mkdv_integrand<S: Scalar>(xi: &S, rho: &S) -> Result<S, MapError> {
    mkdv_ratio(xi, rho, "mkdv integrand")
}

struct PartField {
    split: SplitHamiltonian,
    kinetic: bool,
}

impl ScalarField for PartField {
    fn arity(&self) -> usize {
        self.split.arity()
    }
    fn eval(&self, x: &[Jet]) -> Result<Jet, JetError> {
        let r = if self.kinetic { self.split.t(x) } else { self.split.v(x) };
        r.map_err(|e| match e {
            MapError::Jet(j) => j,
            other => JetError::Domain { op: "generating function", value: field_value_hint(&other) },
        })
    }
}

fn field_value_hint(e: &MapError) -> f64 {
    match e {
        MapError::Singular { value, .. } | MapError::Domain { value, .. } => *value,
        _ => f64::NAN,
    }
}

/// (T, V) as scalar fields over the full canonical phase vector.
pub fn generating_hamiltonian(params: &MapParams) -> Result<(Box<dyn ScalarField>, Box<dyn ScalarField>), MapError> {
    let split = SplitHamiltonian::new(*params)?;
    Ok((
        Box::new(PartField { split: split.clone(), kinetic: true }),
        Box::new(PartField { split, kinetic: false }),
    ))
}

/// Symplectic Euler step of a split Hamiltonian: p̄ = p − ∂V/∂q, q̄ = q + ∂T/∂p̄.
pub fn euler_step(split: &SplitHamiltonian, z: &[f64]) -> Result<Vec<f64>, MapError> {
    let n = split.npairs();
    let x = jet_seed(z, 1)?;
    let gv = split.v(&x)?.gradient();
    let mut pb = z[n..2 * n].to_vec();
    for j in 0..n {
        pb[j] -= gv[j];
    }
    let mut mid = z[..n].to_vec();
    mid.extend_from_slice(&pb);
    let x = jet_seed(&mid, 1)?;
    let gt = split.t(&x)?.gradient();
    let mut out = z[..n].to_vec();
    for j in 0..n {
        out[j] += gt[n + j];
    }
    out.extend(pb);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Invariants

/// KdV P=2 invariant as a function of (q, p) with jet-valued ω allowed.
pub fn kdv2_invariant<S: Scalar>(z: &[S], eps: f64, omega: &S) -> S {
    let (q, p) = (&z[0], &z[1]);
    let e2 = eps * eps;
    p.sq() * q.sq() - (p.sq() + q.sq()) * e2 - omega.clone() * p.clone() * q.clone() * 2.0
}

/// MKdV P=2 invariant with jet-valued ρ allowed.
pub fn mkdv2_invariant<S: Scalar>(z: &[S], rho: &S) -> S {
    let (q, p) = (&z[0], &z[1]);
    let ep = p.exp();
    let eq = q.exp();
    let emp = (-p.clone()).exp();
    let emq = (-q.clone()).exp();
    let a = (p.clone() - q.clone()).exp() + (q.clone() - p.clone()).exp();
    let b = (ep + eq + emp + emq) * rho.clone() * 2.0;
    let c = ((p.clone() + q.clone()).exp() + (-(p.clone() + q.clone())).exp()) * rho.sq();
    a + b + c
}

/// KdV P=3 invariants (P₁, P₂) in the requested explicit variant.
pub fn kdv3_invariants<S: Scalar>(z: &[S], eps: f64, omega: &S, variant: InvariantVariant) -> Vec<S> {
    let (q1, q2, p1, p2) = (&z[0], &z[1], &z[2], &z[3]);
    let w = omega.clone();
    let w2 = w.sq();
    let y0 = q1.clone() + q2.clone() + eps;
    let y1 = q1.rsub(eps);
    let y2 = q2.rsub(eps);
    match variant {
        InvariantVariant::Section6 => {
            let x1 = p1.rsub(eps);
            let x2 = p2.clone() + eps;
            let x3 = p1.clone() - p2.clone() + eps;
            let lin = x1.clone() * (y0.clone() * 3.0 + y1.clone() * 3.0 - y2.clone())
                + x2.clone() * (y0.clone() * 3.0 + y2.clone() * 3.0 - y1.clone())
                + x3.clone() * (y1.clone() * 3.0 + y2.clone() * 3.0 - y0.clone());
            let quad = x1.clone() * x2.clone() * y0.clone() * (y2.clone() - y1.clone())
                + x1.clone() * x3.clone() * y1.clone() * (y0.clone() - y2.clone())
                + x2.clone() * x3.clone() * y2.clone() * (y1.clone() - y0.clone());
            let top = x1.clone() * x2.clone() * x3.clone() * y0.clone() * y1.clone() * y2.clone();
            let big1 = w2 * lin * 0.125 + w.clone() * quad * 0.5 + top;
            let big2 = w * (x1.clone() * (y0.clone() - y1.clone()) + x2.clone() * (y2.clone() - y0.clone()) + x3.clone() * (y1.clone() - y2.clone()))
                + x1.clone() * x2.clone() * y0.clone() * (y1.clone() + y2.clone())
                + x1 * x3.clone() * y1.clone() * (y0.clone() + y2.clone())
                + x2 * x3 * y2.clone() * (y0 + y1);
            vec![big1, big2]
        }
        InvariantVariant::Section3 => {
            // X₁ = p₁, X₂ = p₂ − p₁, Y_j = q_j
            let x1 = p1.rsub(eps);
            let x2 = (p2.clone() - p1.clone()).rsub(eps);
            let x3 = p2.clone() + eps;
            let lin = x1.clone() * (y0.clone() * 3.0 + y1.clone() * 3.0 - y2.clone())
                + x2.clone() * (y1.clone() * 3.0 + y2.clone() * 3.0 - y0.clone())
                + x3.clone() * (y0.clone() * 3.0 + y2.clone() * 3.0 - y1.clone());
            let quad = x1.clone() * x2.clone() * y1.clone() * (y0.clone() - y2.clone())
                + x1.clone() * x3.clone() * y0.clone() * (y2.clone() - y1.clone())
                + x2.clone() * x3.clone() * y2.clone() * (y1.clone() - y0.clone());
            let top = x1.clone() * x2.clone() * x3.clone() * y0.clone() * y1.clone() * y2.clone();
            let big1 = w2 * lin * 0.125 + w.clone() * quad * 0.5 + top;
            let big2 = w * (x1.clone() * (y0.clone() - y1.clone()) + x2.clone() * (y1.clone() - y2.clone()) + x3.clone() * (y2.clone() - y0.clone()))
                + x1.clone() * x2.clone() * y1.clone() * (y0.clone() + y2.clone())
                + x1 * x3.clone() * y0.clone() * (y1.clone() + y2.clone())
                + x2 * x3 * y2.clone() * (y0 + y1);
            vec![big1, big2]
        }
    }
}

/// Explicit invariants for a canonical point, generic over the scalar type.
pub fn invariants_generic<S: Scalar>(params: &MapParams, z: &[S], variant: InvariantVariant) -> Result<Vec<S>, MapError> {
    params.canonical_supported()?;
    if z.len() != 2 * params.npairs() {
        return Err(MapError::InvalidState(format!("expected {} canonical coordinates, got {}", 2 * params.npairs(), z.len())));
    }
    let w = z[0].cst(params.omega());
    Ok(match (params.family, params.period) {
        (Family::KdV, 2) => vec![kdv2_invariant(z, params.epsilon, &w)],
        (Family::KdV, 3) => kdv3_invariants(z, params.epsilon, &w, variant),
        _ => vec![mkdv2_invariant(z, &z[0].cst(params.rho))],
    })
}

/// (I) for the P=2 families, (P₁, P₂) for KdV P=3, in the canonical variant.
pub fn invariants(z: &PhasePoint, params: &MapParams) -> Result<Vec<f64>, MapError> {
    invariants_variant(z, params, InvariantVariant::Section6)
}

pub fn invariants_variant(z: &PhasePoint, params: &MapParams, variant: InvariantVariant) -> Result<Vec<f64>, MapError> {
    let c = match z.layout {
        Layout::Canonical => z.coords.clone(),
        Layout::ReducedXY => reduced_to_canonical(z, params.period)?.coords,
    };
    invariants_generic(params, &c, variant)
}

// ---------------------------------------------------------------------------
// Symplecticity

/// Jacobian of the canonical map from first-order jets; rows are outputs.
pub fn jacobian(params: &MapParams, z: &[f64]) -> Result<Vec<Vec<f64>>, MapError> {
    let x = jet_seed(z, 1)?;
    let out = step_generic(params, &x)?;
    Ok(out.iter().map(|j| j.gradient()).collect())
}

/// max |JᵀΩJ − Ω| with Ω the standard block form for positions-then-momenta ordering.
pub fn symplecticity_defect(jac: &[Vec<f64>]) -> f64 {
    let n2 = jac.len();
    let n = n2 / 2;
    let omega = |i: usize, j: usize| -> f64 {
        if i < n && j == i + n {
            1.0
        } else if i >= n && j + n == i {
            -1.0
        } else {
            0.0
        }
    };
    let mut worst: f64 = 0.0;
    for a in 0..n2 {
        for b in 0..n2 {
            let mut s = 0.0;
            for i in 0..n2 {
                for j in 0..n2 {
                    let o = omega(i, j);
                    if o != 0.0 {
                        s += jac[i][a] * o * jac[j][b];
                    }
                }
            }
            worst = worst.max((s - omega(a, b)).abs());
        }
    }
    worst
}

pub fn symplecticity_check(params: &MapParams, z: &PhasePoint) -> Result<f64, MapError> {
    if z.layout != Layout::Canonical {
        return Err(MapError::InvalidState("symplecticity check needs canonical layout".into()));
    }
    Ok(symplecticity_defect(&jacobian(params, &z.coords)?))
}

// ---------------------------------------------------------------------------
// Sampling

/// Half-width of the sampling box for canonical coordinates.
pub fn admissible_box(params: &MapParams) -> f64 {
    match (params.family, params.period) {
        (Family::KdV, 2) => 0.6 * params.epsilon.abs(),
        (Family::KdV, _) => 0.3 * params.epsilon.abs(),
        (Family::MKdV, _) => 1.0,
    }
}

/// Uniform point in the admissible box for the explicit maps.
pub fn sample_admissible<R: Rng>(params: &MapParams, rng: &mut R) -> Vec<f64> {
    let b = admissible_box(params);
    (0..2 * params.npairs()).map(|_| rng.gen_range(-b..b)).collect()
}

/// Random reduced point satisfying the periodicity constraints exactly.
pub fn sample_reduced<R: Rng>(period: usize, half_width: f64, rng: &mut R) -> PhasePoint {
    let mut c = Vec::with_capacity(2 * period);
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..period).map(|_| rng.gen_range(-half_width..half_width)).collect();
        let mean = v.iter().sum::<f64>() / period as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let s: f64 = v[..period - 1].iter().sum();
        v[period - 1] = -s;
        c.extend(v);
    }
    PhasePoint::reduced(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kdv2() -> MapParams {
        MapParams::kdv(2, 2.0, 0.1).unwrap()
    }

    #[test]
    fn zero_delta_is_identity() {
        let p = MapParams::kdv(2, 2.0, 0.0).unwrap();
        let z = PhasePoint::canonical(vec![0.4, -0.3]);
        assert_eq!(kdv_map_p2(&z, &p).unwrap(), z);
        let p3 = MapParams::kdv(3, 2.0, 0.0).unwrap();
        let z3 = PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]);
        assert_eq!(kdv_map_p3(&z3, &p3).unwrap(), z3);
    }

    #[test]
    fn rho_one_is_identity() {
        let p = MapParams::mkdv(2, 1.0).unwrap();
        let z = PhasePoint::canonical(vec![0.4, -0.2]);
        let img = mkdv_map_p2(&z, &p).unwrap();
        assert!(img.coords.iter().zip(&z.coords).all(|(a, b)| (a - b).abs() < 1e-16));
    }

    #[test]
    fn pole_is_named() {
        let z = PhasePoint::canonical(vec![2.0, 0.1]);
        match kdv_map_p2(&z, &kdv2()) {
            Err(MapError::Singular { name, .. }) => assert_eq!(name, "eps^2 - q^2"),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn invariant_at_q_zero() {
        let p = kdv2();
        let z = PhasePoint::canonical(vec![0.0, 0.7]);
        let i = invariants(&z, &p).unwrap()[0];
        assert!((i + 4.0 * 0.49).abs() < 1e-15);
    }

    #[test]
    fn mkdv_invariant_at_origin() {
        let rho = 1.3;
        let p = MapParams::mkdv(2, rho).unwrap();
        let i = invariants(&PhasePoint::canonical(vec![0.0, 0.0]), &p).unwrap()[0];
        assert!((i - (2.0 + 8.0 * rho + 2.0 * rho * rho)).abs() < 1e-14);
    }

    #[test]
    fn reduced_constraints_enforced() {
        let p = MapParams::kdv(3, 2.0, 0.05).unwrap();
        let z = PhasePoint::reduced(vec![0.1, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(kdv_map_generalp(&z, &p), Err(MapError::InvalidState(_))));
    }

    #[test]
    fn unsupported_canonical() {
        let p = MapParams::mkdv(3, 1.1).unwrap();
        assert!(matches!(generating_hamiltonian(&p), Err(MapError::Unsupported(_))));
    }

    #[test]
    fn identification_roundtrip() {
        let z = vec![0.2, -0.1, 0.3, 0.15];
        let r = canonical_to_reduced(&z, 3).unwrap();
        assert_eq!(reduced_to_canonical(&r, 3).unwrap().coords, z);
        let z2 = vec![0.2, -0.4];
        let r2 = canonical_to_reduced(&z2, 2).unwrap();
        assert_eq!(reduced_to_canonical(&r2, 2).unwrap().coords, z2);
    }

    #[test]
    fn mkdv_potential_value_matches_quadrature_free_case() {
        // at rho = 1 the integrand vanishes identically
        let x = jet_seed(&[0.7, 1.0], 3).unwrap();
        let f = mkdv_potential(&x[0], &x[1], &QuadratureSpec::default()).unwrap();
        assert!(f.value().abs() < 1e-15);
        // d/dρ at ρ = 1 is 2∫₀^x (1 − e^ξ)/(1 + e^ξ) dξ = 2(x − 2 log((1 + e^x)/2))
        let expect = 2.0 * (0.7 - 2.0 * ((1.0 + 0.7f64.exp()) / 2.0).ln());
        assert!((f.coeff(&[0, 1]) - expect).abs() < 1e-13);
    }
}
