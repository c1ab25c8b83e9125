//! Lax matrices, monodromy, spectral curve, separation variables, and the
//! bracket / Dubrovin residual checks built on them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{bracket, jet_seed, Jet, JetError, Scalar};
use crate::maps::{self, Family, Layout, MapError, MapParams, PhasePoint};
use crate::poly::{quadratic_roots, Poly, PolyMat2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("non-separable point: {0}")]
    NonSeparable(String),
    #[error("domain error: {what} = {value:e}")]
    Domain { what: &'static str, value: f64 },
    #[error("degenerate step: {0}")]
    Degenerate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

type Result<T> = std::result::Result<T, SpectralError>;

/// Single-site KdV Lax factor [[λ + xy − ω, y], [λx, λ]].
pub fn lax_l<S: Scalar>(x: &S, y: &S, omega: f64) -> PolyMat2<S> {
    let one = x.cst(1.0);
    let zero = x.cst(0.0);
    PolyMat2 {
        a: Poly::new(vec![x.clone() * y.clone() - omega, one.clone()]),
        b: Poly::new(vec![y.clone()]),
        c: Poly::new(vec![zero.clone(), x.clone()]),
        d: Poly::new(vec![zero, one]),
    }
}

/// The same factor as the product [[y, 1], [λ, 0]]·[[x, 1], [λ − ω, 0]].
pub fn lax_l_product(x: f64, y: f64, omega: f64) -> PolyMat2<f64> {
    let left = PolyMat2 {
        a: Poly::new(vec![y]),
        b: Poly::new(vec![1.0]),
        c: Poly::new(vec![0.0, 1.0]),
        d: Poly::new(vec![0.0]),
    };
    let right = PolyMat2 {
        a: Poly::new(vec![x]),
        b: Poly::new(vec![1.0]),
        c: Poly::new(vec![-omega, 1.0]),
        d: Poly::new(vec![0.0]),
    };
    left.mul(&right)
}

/// KdV time-step factor M_j = [[−ω/x̄, 1], [λ, −x̄]]·[[x − ω/y, 1], [λ, 0]].
pub fn lax_m(x: f64, y: f64, xbar: f64, omega: f64) -> Result<PolyMat2<f64>> {
    if xbar.abs() < maps::POLE_GUARD || y.abs() < maps::POLE_GUARD {
        return Err(MapError::Singular { name: "xbar or y in M", value: xbar.min(y) }.into());
    }
    let left = PolyMat2 {
        a: Poly::new(vec![-omega / xbar]),
        b: Poly::new(vec![1.0]),
        c: Poly::new(vec![0.0, 1.0]),
        d: Poly::new(vec![-xbar]),
    };
    let right = PolyMat2 {
        a: Poly::new(vec![x - omega / y]),
        b: Poly::new(vec![1.0]),
        c: Poly::new(vec![0.0, 1.0]),
        d: Poly::new(vec![0.0]),
    };
    Ok(left.mul(&right))
}

/// MKdV factor [[1, y], [λ, y]]·[[ρ, x], [λ, ρx]] with x = e^X, y = e^Y.
pub fn mkdv_lax_l<S: Scalar>(x: &S, y: &S, rho: f64) -> PolyMat2<S> {
    let one = x.cst(1.0);
    let zero = x.cst(0.0);
    let left = PolyMat2 {
        a: Poly::new(vec![one.clone()]),
        b: Poly::new(vec![y.clone()]),
        c: Poly::new(vec![zero.clone(), one.clone()]),
        d: Poly::new(vec![y.clone()]),
    };
    let right = PolyMat2 {
        a: Poly::new(vec![one.clone() * rho]),
        b: Poly::new(vec![x.clone()]),
        c: Poly::new(vec![zero, one]),
        d: Poly::new(vec![x.clone() * rho]),
    };
    left.mul(&right)
}

/// Canonical → reduced identification, generic over the scalar type.
pub fn identify<S: Scalar>(z: &[S], period: usize) -> Result<Vec<S>> {
    match (period, z.len()) {
        (2, 2) => Ok(vec![z[1].clone(), -z[1].clone(), -z[0].clone(), z[0].clone()]),
        (3, 4) => {
            let (q1, q2, p1, p2) = (&z[0], &z[1], &z[2], &z[3]);
            Ok(vec![
                p1.clone(),
                p2.clone() - p1.clone(),
                -p2.clone(),
                -(q1.clone() + q2.clone()),
                q1.clone(),
                q2.clone(),
            ])
        }
        _ => Err(SpectralError::Unsupported(format!("no identification for period {period} with {} coordinates", z.len()))),
    }
}

/// Monodromy T = L_{s+P} ⋯ L_{s+1} over one period of reduced variables.
///
/// Site j pairs x_j = ε − X_j with y_j = ε − Y_{j mod P}. `base_site` rotates the
/// starting site cyclically; the trace does not depend on it, B(λ) does.
pub fn monodromy_reduced<S: Scalar>(params: &MapParams, xy: &[S], base_site: usize) -> Result<PolyMat2<S>> {
    let p = params.period;
    if xy.len() != 2 * p {
        return Err(MapError::InvalidState(format!("expected {} reduced coordinates, got {}", 2 * p, xy.len())).into());
    }
    let mut t = PolyMat2::identity(&xy[0]);
    for k in 0..p {
        let j = (k + base_site) % p + 1;
        let xj = &xy[j - 1];
        let yj = &xy[p + j % p];
        let l = match params.family {
            Family::KdV => lax_l(&xj.rsub(params.epsilon), &yj.rsub(params.epsilon), params.omega()),
            Family::MKdV => mkdv_lax_l(&xj.exp(), &yj.exp(), params.rho),
        };
        t = l.mul(&t);
    }
    Ok(t)
}

/// Monodromy of a canonical-layout point, generic over the scalar type.
pub fn monodromy_generic<S: Scalar>(params: &MapParams, z: &[S], base_site: usize) -> Result<PolyMat2<S>> {
    let xy = identify(z, params.period)?;
    monodromy_reduced(params, &xy, base_site)
}

pub fn build_monodromy(z: &PhasePoint, params: &MapParams) -> Result<PolyMat2<f64>> {
    build_monodromy_at(z, params, 0)
}

pub fn build_monodromy_at(z: &PhasePoint, params: &MapParams, base_site: usize) -> Result<PolyMat2<f64>> {
    match z.layout {
        Layout::Canonical => monodromy_generic(params, &z.coords, base_site),
        Layout::ReducedXY => monodromy_reduced(params, &z.coords, base_site),
    }
}

pub fn genus(params: &MapParams) -> usize {
    params.period - 1
}

/// Spectral data read off the monodromy matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub genus: usize,
    /// Trace coefficients I₀ .. I_{g−1} for KdV; I₁ .. I_{P−1} for MKdV.
    pub invariants: Vec<f64>,
    pub casimir_top: f64,
    /// (B_g, C_g)
    pub casimirs: (f64, f64),
    #[serde(rename = "R_coeffs")]
    pub r_coeffs: Vec<f64>,
}

/// R(λ) = (tr T)² − 4 det T.
pub fn discriminant<S: Scalar>(t: &PolyMat2<S>) -> Poly<S> {
    let tr = t.trace();
    &(&tr * &tr) - &t.det().scale(4.0)
}

pub fn spectral_data_from(t: &PolyMat2<f64>, params: &MapParams) -> SpectralData {
    let g = genus(params);
    let tr = t.trace();
    let (invariants, top) = match params.family {
        Family::KdV => ((0..g).map(|k| tr.coeff(k)).collect(), tr.coeff(g)),
        Family::MKdV => ((1..params.period).map(|k| tr.coeff(k)).collect(), tr.coeff(params.period)),
    };
    SpectralData {
        genus: g,
        invariants,
        casimir_top: top,
        casimirs: (t.b.coeff(g), t.c.coeff(g + 1)),
        r_coeffs: discriminant(t).coeffs,
    }
}

pub fn spectral_data(z: &PhasePoint, params: &MapParams) -> Result<SpectralData> {
    Ok(spectral_data_from(&build_monodromy(z, params)?, params))
}

// ---------------------------------------------------------------------------
// Explicit invariants vs trace coefficients

/// Trace coefficients (I₀, …) from the explicit invariants (KdV P = 2, 3).
pub fn trace_from_explicit(params: &MapParams, explicit: &[f64]) -> Result<Vec<f64>> {
    let (e2, w) = (params.epsilon * params.epsilon, params.omega());
    match (params.family, params.period) {
        (Family::KdV, 2) => Ok(vec![explicit[0] + (e2 - w).powi(2)]),
        (Family::KdV, 3) => {
            let i1 = explicit[1] - 9.0 * e2 * w + 3.0 * w * w;
            let i0 = explicit[0] - 0.5 * w * i1 - 27.0 * e2 * w * w / 8.0 + w.powi(3) / 2.0;
            Ok(vec![i0, i1])
        }
        _ => Err(SpectralError::Unsupported("explicit/trace relation is known for KdV P = 2, 3".into())),
    }
}

/// Inverse of [`trace_from_explicit`].
pub fn explicit_from_trace(params: &MapParams, trace: &[f64]) -> Result<Vec<f64>> {
    let (e2, w) = (params.epsilon * params.epsilon, params.omega());
    match (params.family, params.period) {
        (Family::KdV, 2) => Ok(vec![trace[0] - (e2 - w).powi(2)]),
        (Family::KdV, 3) => {
            let p2 = trace[1] + 9.0 * e2 * w - 3.0 * w * w;
            let p1 = trace[0] + 0.5 * w * trace[1] + 27.0 * e2 * w * w / 8.0 - w.powi(3) / 2.0;
            Ok(vec![p1, p2])
        }
        _ => Err(SpectralError::Unsupported("explicit/trace relation is known for KdV P = 2, 3".into())),
    }
}

/// Genus-2 trace polynomial 2λ³ + 3(3ε² − ω)λ² + P₂λ + P₁.
pub fn trace_poly_g2(p1: f64, p2: f64, eps: f64, omega: f64) -> Poly<f64> {
    Poly::new(vec![p1, p2, 3.0 * (3.0 * eps * eps - omega), 2.0])
}

/// Genus-2 discriminant in terms of (P₁, P₂).
pub fn discriminant_g2(p1: f64, p2: f64, eps: f64, omega: f64) -> Poly<f64> {
    let e2 = eps * eps;
    let w = omega;
    Poly::new(vec![
        p1 * p1,
        2.0 * p1 * p2,
        18.0 * e2 * p1 - 6.0 * w * p1 + p2 * p2,
        2.0 * (9.0 * e2 * p2 - 3.0 * w * p2 + 2.0 * p1 + 2.0 * w.powi(3)),
        4.0 * p2 - 3.0 * w * w - 54.0 * e2 * w + 81.0 * e2 * e2,
        36.0 * e2,
    ])
}

/// Coefficients of λ^{g+1}(λ − ω)^{g+1}.
pub fn det_reference(genus: usize, omega: f64) -> Poly<f64> {
    let mut p = Poly::new(vec![1.0]);
    for _ in 0..=genus {
        p = &p * &Poly::new(vec![-omega, 1.0]);
        p = &p * &Poly::new(vec![0.0, 1.0]);
    }
    p
}

/// Max coefficient deviation of det T from λ^{g+1}(λ − ω)^{g+1}.
///
/// Deviations are measured against the size of the cancelling products |A||D| + |B||C|.
pub fn det_defect(t: &PolyMat2<f64>, params: &MapParams) -> f64 {
    let d = t.det();
    let r = det_reference(genus(params), params.omega());
    let abs = |p: &Poly<f64>| Poly::new(p.coeffs.iter().map(|c| c.abs()).collect());
    let mag = &(&abs(&t.a) * &abs(&t.d)) + &(&abs(&t.b) * &abs(&t.c));
    let scale = mag.coeffs.iter().fold(1.0f64, |m, c| m.max(*c));
    let n = d.len().max(r.len());
    (0..n).map(|k| (d.coeff(k) - r.coeff(k)).abs()).fold(0.0, f64::max) / scale
}

// ---------------------------------------------------------------------------
// Zakharov–Shabat compatibility

/// max_j max-coefficient of L̄_j M_j − M_{j+1} L_j for the KdV chain.
pub fn zs_residual(z: &PhasePoint, params: &MapParams) -> Result<f64> {
    if params.family != Family::KdV {
        return Err(SpectralError::Unsupported("ZS residual is implemented for the KdV chain".into()));
    }
    let xy = match z.layout {
        Layout::Canonical => identify(&z.coords, params.period)?,
        Layout::ReducedXY => z.coords.clone(),
    };
    let img = maps::apply(params, &PhasePoint::reduced(xy.clone()))?;
    let p = params.period;
    let e = params.epsilon;
    let w = params.omega();
    let x = |v: &[f64], j: usize| e - v[(j - 1) % p];
    let y = |v: &[f64], j: usize| e - v[p + j % p];
    let m = |j: usize| lax_m(x(&xy, j), y(&xy, j), x(&img.coords, j), w);
    let mut worst: f64 = 0.0;
    for j in 1..=p {
        let lbar = lax_l(&x(&img.coords, j), &y(&img.coords, j), w);
        let l = lax_l(&x(&xy, j), &y(&xy, j), w);
        let lhs = lbar.mul(&m(j)?);
        let rhs = m(j % p + 1)?.mul(&l);
        worst = worst.max(lhs.sub(&rhs).max_abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Separation variables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationState {
    pub mu: Vec<f64>,
    pub nu_sep: Vec<f64>,
    pub kappa: Vec<f64>,
}

/// Roots of B(λ) in ascending order for genus 1 and 2.
pub fn auxiliary_spectrum<S: Scalar>(t: &PolyMat2<S>, genus: usize) -> Result<Vec<S>> {
    match genus {
        1 => {
            let b1 = t.b.coeff(1);
            if b1.value().abs() < 1e-300 {
                return Err(SpectralError::NonSeparable("B has no root".into()));
            }
            Ok(vec![(-t.b.coeff(0)).try_div(&b1)?])
        }
        2 => match quadratic_roots(&t.b.coeff(0), &t.b.coeff(1), &t.b.coeff(2)) {
            Some((a, b)) => Ok(vec![a, b]),
            None => Err(SpectralError::NonSeparable("B(λ) has complex or multiple roots".into())),
        },
        g => Err(SpectralError::Unsupported(format!("root finding for genus {g}"))),
    }
}

/// (μ, ν) with ν_j = ½ log(A(μ_j)/D(μ_j)), generic over the scalar type.
pub fn separation_generic<S: Scalar>(t: &PolyMat2<S>, genus: usize) -> Result<(Vec<S>, Vec<S>)> {
    let mu = auxiliary_spectrum(t, genus)?;
    let mut nu = Vec::with_capacity(genus);
    for m in &mu {
        let a = t.a.eval(m);
        let d = t.d.eval(m);
        let ratio = a.try_div(&d).map_err(|_| SpectralError::Domain { what: "D(mu)", value: d.value() })?;
        if !(ratio.value() > 0.0) {
            return Err(SpectralError::Domain { what: "A(mu)/D(mu)", value: ratio.value() });
        }
        nu.push(ratio.try_ln()? * 0.5);
    }
    Ok((mu, nu))
}

fn kdv_only(params: &MapParams, what: &str) -> Result<()> {
    if params.family != Family::KdV {
        return Err(SpectralError::Unsupported(format!("{what} is implemented for the KdV chain")));
    }
    Ok(())
}

pub fn separation_from(t: &PolyMat2<f64>, genus: usize) -> Result<SeparationState> {
    let (mu, nu) = separation_generic(t, genus)?;
    let kappa = mu
        .iter()
        .map(|m| if t.a.eval(m) - t.d.eval(m) >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    Ok(SeparationState { mu, nu_sep: nu, kappa })
}

pub fn separation_coordinates(z: &PhasePoint, params: &MapParams) -> Result<SeparationState> {
    separation_coordinates_at(z, params, 0)
}

pub fn separation_coordinates_at(z: &PhasePoint, params: &MapParams, base_site: usize) -> Result<SeparationState> {
    kdv_only(params, "separation")?;
    let t = build_monodromy_at(z, params, base_site)?;
    separation_from(&t, genus(params))
}

/// Genus-1 closed forms (μ, ν) at canonical (q, p).
pub fn separation_closed_g1(q: f64, p: f64, eps: f64, omega: f64) -> (f64, f64) {
    let mu = (eps * omega - omega * q - eps.powi(3) - eps * eps * p + eps * q * q + p * q * q) / (2.0 * eps);
    let nu = ((eps + q) / (eps - q)).ln();
    (mu, nu)
}

/// Explicit genus-2 auxiliary spectrum on the slice q₁ = q₂ = 0, as (larger, smaller) root.
pub fn initial_slice_mu_g2(p2: f64, big_p2: f64, eps: f64, omega: f64) -> Result<(f64, f64)> {
    let rad = 40.0 * eps.powi(4) - 4.0 * eps.powi(3) * p2 - 8.0 * eps * eps * p2 * p2 - 6.0 * big_p2 - 3.0 * omega * omega;
    if rad < 0.0 {
        return Err(SpectralError::Domain { what: "initial-slice radicand", value: rad });
    }
    let c = 3.0 * omega + 2.0 * eps * p2 - 4.0 * eps * eps;
    Ok(((c + rad.sqrt()) / 6.0, (c - rad.sqrt()) / 6.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicityReport {
    pub mu_mu: Vec<Vec<f64>>,
    pub nu_nu: Vec<Vec<f64>>,
    /// {μ_i, ν_j} − δ_ij
    pub mu_nu: Vec<Vec<f64>>,
}

impl CanonicityReport {
    pub fn max_residual(&self) -> f64 {
        [&self.mu_mu, &self.nu_nu, &self.mu_nu]
            .iter()
            .flat_map(|m| m.iter().flatten())
            .fold(0.0, |a, b| a.max(b.abs()))
    }
}

pub fn canonicity_check(z: &PhasePoint, params: &MapParams) -> Result<CanonicityReport> {
    kdv_only(params, "canonicity check")?;
    if z.layout != Layout::Canonical {
        return Err(MapError::InvalidState("canonicity check needs canonical layout".into()).into());
    }
    let n = params.npairs();
    let x = jet_seed(&z.coords, 2)?;
    let t = monodromy_generic(params, &x, 0)?;
    let (mu, nu) = separation_generic(&t, genus(params))?;
    let g = mu.len();
    let br = |a: &Jet, b: &Jet| -> Result<f64> { Ok(bracket(a, b, n)?.value()) };
    let mut report = CanonicityReport { mu_mu: vec![vec![0.0; g]; g], nu_nu: vec![vec![0.0; g]; g], mu_nu: vec![vec![0.0; g]; g] };
    for i in 0..g {
        for j in 0..g {
            report.mu_mu[i][j] = br(&mu[i], &mu[j])?;
            report.nu_nu[i][j] = br(&nu[i], &nu[j])?;
            report.mu_nu[i][j] = br(&mu[i], &nu[j])? - if i == j { 1.0 } else { 0.0 };
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketResidual {
    pub relation: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Both sides of the six entry-bracket relations between T(λ₁) and T(λ₂).
pub fn entry_bracket_check(lambda1: f64, lambda2: f64, z: &PhasePoint, params: &MapParams) -> Result<Vec<BracketResidual>> {
    kdv_only(params, "entry bracket check")?;
    if lambda1 == lambda2 {
        return Err(SpectralError::Degenerate("lambda1 = lambda2".into()));
    }
    if lambda1 == 0.0 || lambda2 == 0.0 {
        return Err(SpectralError::Degenerate("lambda must be nonzero".into()));
    }
    if z.layout != Layout::Canonical {
        return Err(MapError::InvalidState("entry bracket check needs canonical layout".into()).into());
    }
    let n = params.npairs();
    let x = jet_seed(&z.coords, 1)?;
    let t = monodromy_generic(params, &x, 0)?;
    let [[a1, b1], [c1, d1]] = t.eval_f(lambda1);
    let [[a2, b2], [c2, d2]] = t.eval_f(lambda2);
    let v = |j: &Jet| j.value();
    let (l1, l2) = (lambda1, lambda2);
    let dl = l1 - l2;
    let rels: Vec<(&str, &Jet, &Jet, f64)> = vec![
        ("{A1,A2}", &a1, &a2, v(&b1) * v(&c2) / l2 - v(&b2) * v(&c1) / l1),
        ("{A1,B2}", &a1, &b2, (v(&a2) * v(&b1) - v(&b2) * v(&a1)) / dl + v(&b1) * v(&d2) / l2),
        ("{A1,D2}", &a1, &d2, (l1 * v(&b1) * v(&c2) - l2 * v(&b2) * v(&c1)) / (l1 * dl)),
        ("{B1,B2}", &b1, &b2, 0.0),
        ("{B1,D2}", &b1, &d2, (l1 * v(&b1) * v(&d2) - l2 * v(&d1) * v(&b2)) / (l1 * dl)),
        ("{D1,D2}", &d1, &d2, 0.0),
    ];
    let mut out = Vec::with_capacity(6);
    for (name, f, g, rhs) in rels {
        let lhs = bracket(f, g, n)?.value();
        out.push(BracketResidual { relation: name.to_string(), lhs, rhs, residual: (lhs - rhs).abs() });
    }
    Ok(out)
}

/// Discrete Dubrovin residuals for one step z → map(z): one for genus 1, three for genus 2.
///
/// √R(μ_j) is taken as (A − D)(μ_j), I₀ is the λ⁰ trace coefficient, and x̄ is the
/// first chain site x̄₁ = ε − X̄₁ of the mapped point.
pub fn dubrovin_residual_discrete(z: &PhasePoint, params: &MapParams) -> Result<Vec<f64>> {
    let zb = maps::apply(params, z)?;
    dubrovin_residual_step(z, &zb, params)
}

/// Same residuals for a given pair of consecutive points.
pub fn dubrovin_residual_step(z: &PhasePoint, zb: &PhasePoint, params: &MapParams) -> Result<Vec<f64>> {
    kdv_only(params, "discrete Dubrovin residual")?;
    let g = genus(params);
    let t = build_monodromy(z, params)?;
    let tb = build_monodromy(zb, params)?;
    let mu = auxiliary_spectrum(&t, g)?;
    let mub = auxiliary_spectrum(&tb, g)?;
    let sr = |t: &PolyMat2<f64>, m: f64| t.a.eval(&m) - t.d.eval(&m);
    let i0 = t.trace().coeff(0);
    let (bg, cg) = (t.b.coeff(g), t.c.coeff(g + 1));
    let w = params.omega();
    let xb = match zb.layout {
        Layout::Canonical => params.epsilon - identify(&zb.coords, params.period)?[0],
        Layout::ReducedXY => params.epsilon - zb.coords[0],
    };
    match g {
        1 => {
            let (m, n) = (mu[0], mub[0]);
            let (r, s) = (sr(&t, m), sr(&tb, n));
            let lhs = (m - n - w) * ((s - i0) / n).powi(2) - (m - n + w) * ((r + i0) / m).powi(2);
            let rhs = 2.0 * w / (m * n) * (s - i0) * (r + i0) - 4.0 * bg * cg * (m - n).powi(2);
            Ok(vec![lhs - rhs])
        }
        2 => {
            let (m1, m2, n1, n2) = (mu[0], mu[1], mub[0], mub[1]);
            if (n1 - n2).abs() < 1e-12 * (1.0 + n1.abs()) || (m1 - m2).abs() < 1e-12 * (1.0 + m1.abs()) {
                return Err(SpectralError::Degenerate("auxiliary spectrum collision".into()));
            }
            let (r1, r2) = (sr(&t, m1), sr(&t, m2));
            let (s1, s2) = (sr(&tb, n1), sr(&tb, n2));
            let a = (r1 / m1 - r2 / m2) / (m1 - m2);
            let b = (s1 / n1 - s2 / n2) / (n1 - n2);
            let c = (m2 / m1 * r1 - m1 / m2 * r2) / (m1 - m2);
            let d = (n2 / n1 * s1 - n1 / n2 * s2) / (n1 - n2);
            let e1 = a - b - (i0 * (1.0 / (m1 * m2) + 1.0 / (n1 * n2)) - 2.0 * bg * xb + 2.0 * cg * w / xb);
            let e2 = a + b - (i0 * (1.0 / (m1 * m2) - 1.0 / (n1 * n2)) + 2.0 * bg * xb / w * (m1 - n1 + m2 - n2));
            let e3 = c + d - (i0 * ((m1 + m2) / (m1 * m2) - (n1 + n2) / (n1 * n2)) + 2.0 * bg * xb / w * (m1 * m2 - n1 * n2));
            Ok(vec![e1, e2, e3])
        }
        _ => Err(SpectralError::Unsupported(format!("Dubrovin residual for genus {g}"))),
    }
}

/// Trace of T(λ) as a jet in the canonical coordinates.
pub fn trace_jet(params: &MapParams, x: &[Jet], lambda: f64) -> Result<Jet> {
    Ok(monodromy_generic(params, x, 0)?.trace().eval_f(lambda))
}
