//! Action-angle quadratures: genus-1 frequencies and closed-form modified
//! Hamiltonians, genus-2 Abelian frequencies, interpolating flows, Jacobi
//! inversion along the flow, and generating-function residuals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{jet_seed, Jet, JetError, Scalar};
use crate::maps::{self, Family, InvariantVariant, Layout, MapError, MapParams, PhasePoint};
use crate::ode::{self, OdeError};
use crate::poly::Poly;
use crate::quad::{self, EndpointHandling, QuadError, QuadratureSpec};
use crate::spectral::{self, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionAngleError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("domain error: {what} = {value:e}")]
    Domain { what: &'static str, value: f64 },
    #[error("real path obstructed: {what} changes sign near {at}")]
    Path { what: &'static str, at: f64 },
    #[error("separation coordinates collide at t = {t}")]
    Collision { t: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

type Result<T> = std::result::Result<T, ActionAngleError>;

/// Tolerances used when callers do not supply their own.
pub fn default_quad() -> QuadratureSpec {
    QuadratureSpec { abs_tol: 1e-14, rel_tol: 1e-13, max_subdivisions: 400, endpoint_handling: EndpointHandling::None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub genus: usize,
    pub freq: Vec<f64>,
    pub lambda_star: Option<f64>,
    pub err_est: Vec<f64>,
    /// Genus 2 only: the same differentials integrated from ω to ∞, when R > 0 there.
    pub freq_from_infinity: Option<Vec<f64>>,
}

fn require(params: &MapParams, family: Family, period: usize) -> Result<()> {
    if params.family != family || params.period != period {
        return Err(ActionAngleError::Unsupported(format!(
            "expected {family:?} with period {period}, got {:?} with period {}",
            params.family, params.period
        )));
    }
    Ok(())
}

fn sqrt_spec(quad: &QuadratureSpec) -> QuadratureSpec {
    quad.with_handling(EndpointHandling::SqrtSubstitution)
}

// ---------------------------------------------------------------------------
// Genus 1, KdV

/// Upper limit q̄ = 2ε²δ√(−P)/(ε⁴+P) of the KdV frequency integral: the map image
/// of the point on q = 0 with invariant P.
pub fn kdv_upper_limit(pval: f64, params: &MapParams) -> Result<f64> {
    require(params, Family::KdV, 2)?;
    let e4 = params.epsilon.powi(4);
    if !(pval < 0.0 && pval > -e4) {
        return Err(ActionAngleError::Domain { what: "P (need -eps^4 < P < 0)", value: pval });
    }
    Ok(2.0 * params.epsilon.powi(2) * params.delta * (-pval).sqrt() / (e4 + pval))
}

/// δ²ε²q² − (ε²−q²)(ε²q²+P).
pub fn kdv_radicand(q: f64, pval: f64, params: &MapParams) -> f64 {
    let (e, d) = (params.epsilon, params.delta);
    d * d * e * e * q * q - (e * e - q * q) * (e * e * q * q + pval)
}

/// ν(P) = ∫₀^q̄ dq / (2√rad(q)).
pub fn frequency_g1_kdv(pval: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    let qbar = kdv_upper_limit(pval, params)?;
    angle_g1_kdv(qbar, pval, params, quad)
}

/// Angle coordinate Q = ∫₀^q dq′/(2√rad) on the branch p = (εδq + √rad)/(q² − ε²).
pub fn angle_g1_kdv(q: f64, pval: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    require(params, Family::KdV, 2)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    check_positive_on(|x| kdv_radicand(x, pval, params), 0.0, q, "KdV radicand")?;
    let r = quad::integrate(|x| Ok(0.5 / kdv_radicand(x, pval, params).sqrt()), 0.0, q, quad)?;
    Ok(r.value)
}

/// ∫ over [a, b] of an inner function, itself a quadrature.
fn outer_integral<F>(mut f: F, a: f64, b: f64, quad: &QuadratureSpec) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let outer = QuadratureSpec { abs_tol: quad.abs_tol.max(1e-15), rel_tol: quad.rel_tol.max(1e-13), ..*quad };
    let r = quad::integrate(
        |p| f(p).map_err(|e| QuadError::Integrand { x: p, msg: e.to_string() }),
        a,
        b,
        &outer.with_handling(EndpointHandling::None),
    )?;
    Ok(r.value)
}

/// H*(P_b) − H*(P_a) = ∫ ν dP for the KdV P=2 map.
pub fn mh_g1_kdv(pa: f64, pb: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    kdv_upper_limit(pa, params)?;
    kdv_upper_limit(pb, params)?;
    outer_integral(|p| frequency_g1_kdv(p, params, quad), pa, pb, quad)
}

// ---------------------------------------------------------------------------
// Genus 1, MKdV

/// (q̄, Δ) with q̄ = 2 log((ρ+Δ)/(1+ρΔ)), the image of a point on q = 0.
pub fn mkdv_upper_limit(pval: f64, rho: f64) -> Result<(f64, f64)> {
    let lower = 2.0 * rho * rho + 8.0 * rho + 2.0;
    if !(pval > lower) {
        return Err(ActionAngleError::Domain { what: "P (need P > 2rho^2 + 8rho + 2)", value: pval });
    }
    let s = ((2.0 * rho * rho + pval + 2.0) * (pval - lower)).sqrt();
    let delta = (pval - 4.0 * rho - s) / (2.0 * (1.0 + rho).powi(2));
    let ratio = (rho + delta) / (1.0 + rho * delta);
    if !(ratio > 0.0) {
        return Err(ActionAngleError::Domain { what: "(rho + Delta)/(1 + rho Delta)", value: ratio });
    }
    Ok((2.0 * ratio.ln(), delta))
}

/// (2ρ²+P+2)(P − 2ρ² − 4ρe^q − 4ρe^{−q} − 2) in expanded form.
pub fn mkdv_radicand(q: f64, pval: f64, rho: f64) -> f64 {
    (2.0 * rho * rho + pval + 2.0) * (pval - 2.0 * rho * rho - 4.0 * rho * q.exp() - 4.0 * rho * (-q).exp() - 2.0)
}

/// ν(P) = ∫₀^q̄ dq/√(radicand).
pub fn frequency_g1_mkdv(pval: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    require(params, Family::MKdV, 2)?;
    if params.rho == 1.0 {
        return Ok(0.0);
    }
    let (qbar, _) = mkdv_upper_limit(pval, params.rho)?;
    angle_g1_mkdv(qbar, pval, params, quad)
}

/// Angle coordinate ∫₀^q dq′/√(radicand) for the MKdV map.
pub fn angle_g1_mkdv(q: f64, pval: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    require(params, Family::MKdV, 2)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    let rho = params.rho;
    check_positive_on(|x| mkdv_radicand(x, pval, rho), 0.0, q, "MKdV radicand")?;
    let r = quad::integrate(|x| Ok(1.0 / mkdv_radicand(x, pval, rho).sqrt()), 0.0, q, quad)?;
    Ok(r.value)
}

/// H*(P_b) − H*(P_a) for the MKdV P=2 map. The map is the flow of the
/// invariant for time −ν, so the MH difference is −∫ν dP.
pub fn mh_g1_mkdv(pa: f64, pb: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    require(params, Family::MKdV, 2)?;
    if params.rho != 1.0 {
        mkdv_upper_limit(pa, params.rho)?;
        mkdv_upper_limit(pb, params.rho)?;
    }
    Ok(-outer_integral(|p| frequency_g1_mkdv(p, params, quad), pa, pb, quad)?)
}

/// Frequency for either genus-1 family, signed so that flowing the invariant
/// for this duration reproduces one map step.
pub fn flow_time_g1(pval: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    match params.family {
        Family::KdV => frequency_g1_kdv(pval, params, quad),
        Family::MKdV => Ok(-frequency_g1_mkdv(pval, params, quad)?),
    }
}

fn check_positive_on<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, what: &'static str) -> Result<()> {
    let n = 64;
    for i in 0..n {
        let x = a + (b - a) * (i as f64 + 0.5) / n as f64;
        if !(f(x) > 0.0) {
            return Err(ActionAngleError::Path { what, at: x });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Genus 2

/// R(μ) = tr² − 4 det for trace coefficients (P₁, P₂) = (λ⁰, λ¹ coefficients of tr T).
pub fn discriminant_from_trace(p1: f64, p2: f64, params: &MapParams) -> Result<Poly> {
    require(params, Family::KdV, 3)?;
    Ok(spectral::discriminant_g2(p1, p2, params.epsilon, params.omega()))
}

fn mu_power(m: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        m
    }
}

/// ν₁ = ∫₀^ω dμ/√R, ν₂ = ∫₀^ω μ dμ/√R and λ* = ν₂/ν₁, with (P₁, P₂) the
/// λ⁰, λ¹ trace coefficients.
pub fn frequencies_g2(p1: f64, p2: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<FrequencyReport> {
    let r = discriminant_from_trace(p1, p2, params)?;
    let w = params.omega();
    if w == 0.0 {
        return Ok(FrequencyReport { genus: 2, freq: vec![0.0, 0.0], lambda_star: None, err_est: vec![0.0, 0.0], freq_from_infinity: None });
    }
    check_positive_on(|m| r.eval(&m), 0.0, w, "R on [0, omega]")?;
    for end in [0.0, w] {
        if !(r.eval(&end) > 0.0) {
            return Err(ActionAngleError::Path { what: "R at the path end", at: end });
        }
    }
    let mut freq = Vec::with_capacity(2);
    let mut err = Vec::with_capacity(2);
    for k in 0..2 {
        let q = quad::integrate(|m| Ok(mu_power(m, k) / r.eval(&m).sqrt()), 0.0, w, quad)?;
        freq.push(q.value);
        err.push(q.err_est);
    }
    let lambda_star = Some(freq[1] / freq[0]);
    let freq_from_infinity = from_infinity(&r, w, quad).ok();
    Ok(FrequencyReport { genus: 2, freq, lambda_star, err_est: err, freq_from_infinity })
}

/// −∫_∞^ω μ^k dμ/√R for k = 0, 1 along the real axis, if R > 0 on [ω, ∞).
fn from_infinity(r: &Poly, w: f64, quad: &QuadratureSpec) -> Result<Vec<f64>> {
    for i in 1..=200 {
        let s = i as f64 / 200.0;
        let m = w + 1.0 / (s * s) - 1.0;
        if !(r.eval(&m) > 0.0) {
            return Err(ActionAngleError::Path { what: "R on [omega, inf)", at: m });
        }
    }
    let mut out = Vec::with_capacity(2);
    for k in 0..2 {
        let q = quad::integrate_to_infinity(|m| Ok(mu_power(m, k) / r.eval(&m).sqrt()), w, quad)?;
        out.push(q.value);
    }
    Ok(out)
}

/// Trace coefficients (λ⁰, λ¹) of the genus-2 monodromy at a point.
pub fn trace_coefficients_g2(z: &PhasePoint, params: &MapParams) -> Result<(f64, f64)> {
    require(params, Family::KdV, 3)?;
    let t = spectral::build_monodromy(z, params)?;
    let tr = t.trace();
    Ok((tr.coeff(0), tr.coeff(1)))
}

pub fn frequencies_g2_at(z: &PhasePoint, params: &MapParams, quad: &QuadratureSpec) -> Result<FrequencyReport> {
    let (p1, p2) = trace_coefficients_g2(z, params)?;
    frequencies_g2(p1, p2, params, quad)
}

/// Real roots of a polynomial inside [lo, hi] by sign scan and bisection.
fn real_roots(r: &Poly, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = r.eval(&x0);
    for i in 1..=n {
        let x1 = lo + (hi - lo) * i as f64 / n as f64;
        let f1 = r.eval(&x1);
        if f0 == 0.0 {
            out.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = r.eval(&m);
                if fm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Synthetic division of r by (x − e).
fn deflate(r: &Poly, e: f64) -> Poly {
    let n = r.len();
    let mut q = vec![0.0; n - 1];
    let mut acc = 0.0;
    for k in (1..n).rev() {
        acc = acc * e + r.coeff(k);
        q[k - 1] = acc;
    }
    Poly::new(q)
}

fn cauchy_bound(r: &Poly) -> f64 {
    let mut n = r.len() - 1;
    while n > 0 && r.coeff(n) == 0.0 {
        n -= 1;
    }
    let lead = r.coeff(n).abs();
    1.0 + (0..n).map(|k| r.coeff(k).abs() / lead).fold(0.0, f64::max)
}

/// ∫ μ^k dμ/(κ√R) from `a` to a branch point `e`, with the factor (μ − e) supplied exactly.
fn to_branch_point(r: &Poly, k: usize, a: f64, e: f64, quad: &QuadratureSpec) -> Result<f64> {
    if a == e {
        return Ok(0.0);
    }
    let rest = deflate(r, e);
    let res = quad::integrate_with_offsets(
        |m, _, db| {
            // R = (μ − e)·rest(μ) and μ − e = −db on the way from a to e
            let v = -db * rest.eval(&m);
            Ok(mu_power(m, k) / v.abs().sqrt())
        },
        a,
        e,
        &sqrt_spec(quad),
    )?;
    Ok(res.value)
}

/// ∫ μ^k dμ / (κ√R) along a real path from (a, κ_a) to (b, κ_b) on the curve;
/// a change of sheet means the path turned at the nearest branch point.
pub fn sheet_integral(r: &Poly, k: usize, a: f64, kappa_a: f64, b: f64, kappa_b: f64, quad: &QuadratureSpec) -> Result<f64> {
    let (lo, hi) = (a.min(b), a.max(b));
    let bound = cauchy_bound(r);
    let roots = real_roots(r, -bound, bound, 4000);
    if let Some(x) = roots.iter().find(|&&x| x > lo && x < hi) {
        if kappa_a == kappa_b || (x - lo).min(hi - x) > 1e-9 * (1.0 + x.abs()) {
            return Err(ActionAngleError::Path { what: "R between successive separation coordinates", at: *x });
        }
    }
    if kappa_a == kappa_b {
        let res = quad::integrate(|m| Ok(mu_power(m, k) / r.eval(&m).abs().sqrt()), a, b, quad)?;
        return Ok(res.value * kappa_a);
    }
    let below = roots.iter().cloned().filter(|&x| x <= lo).fold(f64::NEG_INFINITY, f64::max);
    let above = roots.iter().cloned().filter(|&x| x >= hi).fold(f64::INFINITY, f64::min);
    let e = if lo - below <= above - hi { below } else { above };
    if !e.is_finite() {
        return Err(ActionAngleError::Path { what: "no branch point for a sheet change", at: a });
    }
    Ok(kappa_a * to_branch_point(r, k, a, e, quad)? - kappa_b * to_branch_point(r, k, b, e, quad)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbelReport {
    /// Σ_j ∫_{μ_j}^{μ̄_j} μ^k dμ/(κ_j√R), k = 0, 1.
    pub step_sums: Vec<f64>,
    /// ∫₀^ω μ^k dμ/√R.
    pub base_integrals: Vec<f64>,
    /// ∫_ω^∞ μ^k dμ/√R when the real path exists.
    pub from_infinity: Option<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Abel step identity for one map step from z.
pub fn abel_step_sums(z: &PhasePoint, params: &MapParams, quad: &QuadratureSpec) -> Result<AbelReport> {
    require(params, Family::KdV, 3)?;
    let zb = maps::apply(params, z)?;
    let t = spectral::build_monodromy(z, params)?;
    let a = spectral::separation_from(&t, 2)?;
    let b = spectral::separation_coordinates(&zb, params)?;
    let r = spectral::discriminant(&t);
    let f = frequencies_g2(t.trace().coeff(0), t.trace().coeff(1), params, quad)?;
    let mut sums = vec![0.0; 2];
    for (k, s) in sums.iter_mut().enumerate() {
        for j in 0..2 {
            *s += sheet_integral(&r, k, a.mu[j], a.kappa[j], b.mu[j], b.kappa[j], quad)?;
        }
    }
    let residuals = sums.iter().zip(&f.freq).map(|(s, v)| (s - v).abs()).collect();
    Ok(AbelReport { step_sums: sums, base_integrals: f.freq, from_infinity: f.freq_from_infinity, residuals })
}

/// Line integral of ν₁ dP₁ + ν₂ dP₂ along a polyline in trace coordinates.
pub fn mh_g2(path: &[(f64, f64)], params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    require(params, Family::KdV, 3)?;
    let mut total = 0.0;
    for w in path.windows(2) {
        let ((a1, a2), (b1, b2)) = (w[0], w[1]);
        let (d1, d2) = (b1 - a1, b2 - a2);
        total += outer_integral(
            |s| {
                let f = frequencies_g2(a1 + s * d1, a2 + s * d2, params, quad)?;
                Ok(f.freq[0] * d1 + f.freq[1] * d2)
            },
            0.0,
            1.0,
            quad,
        )?;
    }
    Ok(total)
}

/// Centered-difference |∂ν₁/∂P₂ − ∂ν₂/∂P₁| at (P₁, P₂).
pub fn frequency_cross_derivative(p1: f64, p2: f64, h: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    let f = |a: f64, b: f64| frequencies_g2(a, b, params, quad).map(|r| r.freq);
    let d12 = (f(p1, p2 + h)?[0] - f(p1, p2 - h)?[0]) / (2.0 * h);
    let d21 = (f(p1 + h, p2)?[1] - f(p1 - h, p2)?[1]) / (2.0 * h);
    Ok((d12 - d21).abs())
}

// ---------------------------------------------------------------------------
// Interpolating flows

fn canonical(z: &PhasePoint, params: &MapParams) -> Result<Vec<f64>> {
    Ok(match z.layout {
        Layout::Canonical => z.coords.clone(),
        Layout::ReducedXY => maps::reduced_to_canonical(z, params.period)?.coords,
    })
}

/// Integrate q̇ = ∂H/∂p, ṗ = −∂H/∂q with gradients from first-order jets.
pub fn hamiltonian_flow<H>(h: H, z: &[f64], duration: f64, ode_tol: f64) -> Result<Vec<f64>>
where
    H: Fn(&[Jet]) -> Result<Jet>,
{
    let n = z.len() / 2;
    let (y, _) = ode::integrate(
        |_, y| {
            let x = jet_seed(y, 1).map_err(|e| e.to_string())?;
            let g = h(&x).map_err(|e| e.to_string())?.gradient();
            let mut out = vec![0.0; 2 * n];
            for i in 0..n {
                out[i] = g[n + i];
                out[n + i] = -g[i];
            }
            Ok(out)
        },
        0.0,
        z,
        duration,
        ode_tol,
    )?;
    Ok(y)
}

/// Flow of the genus-1 invariant (H = I) for the given duration.
pub fn interpolating_flow_g1(z: &PhasePoint, params: &MapParams, duration: f64, ode_tol: f64) -> Result<PhasePoint> {
    if params.period != 2 {
        return Err(ActionAngleError::Unsupported("genus-1 flow needs period 2".into()));
    }
    let c = canonical(z, params)?;
    let y = hamiltonian_flow(|x| Ok(maps::invariants_generic(params, x, InvariantVariant::Section6)?.remove(0)), &c, duration, ode_tol)?;
    Ok(PhasePoint::canonical(y))
}

/// Flow of H = tr T(λ*) on the KdV P=3 phase space.
pub fn interpolating_flow_g2(z: &PhasePoint, params: &MapParams, lambda_star: f64, duration: f64, ode_tol: f64) -> Result<PhasePoint> {
    require(params, Family::KdV, 3)?;
    let c = canonical(z, params)?;
    let y = hamiltonian_flow(|x| Ok(spectral::trace_jet(params, x, lambda_star)?), &c, duration, ode_tol)?;
    Ok(PhasePoint::canonical(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingReport {
    pub seed: Vec<f64>,
    pub duration: f64,
    pub lambda_star: Option<f64>,
    /// Max-norm distance between the flow endpoint and the map image.
    pub distance: f64,
    pub ode_tol: f64,
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Flow for one frequency period and compare with one map step.
pub fn landing_check(z: &PhasePoint, params: &MapParams, quad: &QuadratureSpec, ode_tol: f64) -> Result<LandingReport> {
    let image = maps::apply(params, z)?;
    landing_against(z, &image, params, quad, ode_tol)
}

/// Landing distance against a supplied image (which need not come from `params`).
pub fn landing_against(z: &PhasePoint, image: &PhasePoint, params: &MapParams, quad: &QuadratureSpec, ode_tol: f64) -> Result<LandingReport> {
    let c = canonical(z, params)?;
    let image = canonical(image, params)?;
    match params.period {
        2 => {
            let pval = maps::invariants(z, params)?[0];
            let is_identity = match params.family {
                Family::KdV => params.delta == 0.0,
                Family::MKdV => params.rho == 1.0,
            };
            let duration = if is_identity { 0.0 } else { flow_time_g1(pval, params, quad)? };
            let end = interpolating_flow_g1(z, params, duration, ode_tol)?;
            Ok(LandingReport { seed: c, duration, lambda_star: None, distance: max_dist(&end.coords, &image), ode_tol })
        }
        3 => {
            let f = frequencies_g2_at(z, params, quad)?;
            let ls = f.lambda_star.unwrap_or(0.0);
            let end = interpolating_flow_g2(z, params, ls, f.freq[0], ode_tol)?;
            Ok(LandingReport { seed: c, duration: f.freq[0], lambda_star: f.lambda_star, distance: max_dist(&end.coords, &image), ode_tol })
        }
        p => Err(ActionAngleError::Unsupported(format!("landing test for period {p}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiReport {
    pub times: Vec<f64>,
    /// Per sample: Σ_j ∫ μ^k dμ/(κ_j√R) − λ*^k t for k = 0, 1.
    pub residuals: Vec<[f64; 2]>,
}

impl JacobiReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().flat_map(|r| r.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Follow μ_j(t) along the tr T(λ*) flow and compare the Abel sums with λ*^k t.
pub fn jacobi_inversion_check(
    z: &PhasePoint,
    params: &MapParams,
    lambda_star: f64,
    t_end: f64,
    samples: usize,
    quad: &QuadratureSpec,
    ode_tol: f64,
) -> Result<JacobiReport> {
    require(params, Family::KdV, 3)?;
    let t0 = spectral::build_monodromy(z, params)?;
    let r = spectral::discriminant(&t0);
    let mut prev = spectral::separation_from(&t0, 2)?;
    let mut y = canonical(z, params)?;
    let n = samples.max(1);
    let dt = t_end / n as f64;
    let mut sums = [0.0; 2];
    let mut times = vec![0.0];
    let mut residuals = vec![[0.0, 0.0]];
    for i in 1..=n {
        y = hamiltonian_flow(|x| Ok(spectral::trace_jet(params, x, lambda_star)?), &y, dt, ode_tol)?;
        let t = i as f64 * dt;
        let cur = spectral::separation_coordinates(&PhasePoint::canonical(y.clone()), params)
            .map_err(|_| ActionAngleError::Collision { t })?;
        for (k, s) in sums.iter_mut().enumerate() {
            for j in 0..2 {
                *s += sheet_integral(&r, k, prev.mu[j], prev.kappa[j], cur.mu[j], cur.kappa[j], quad)?;
            }
        }
        times.push(t);
        residuals.push([sums[0] - t, sums[1] - lambda_star * t]);
        prev = cur;
    }
    Ok(JacobiReport { times, residuals })
}

/// Distance in (μ, ν) between the flow-transported point and the map image (genus 1).
pub fn commuting_diagram_g1(z: &PhasePoint, params: &MapParams, quad: &QuadratureSpec, ode_tol: f64) -> Result<f64> {
    require(params, Family::KdV, 2)?;
    let pval = maps::invariants(z, params)?[0];
    let end = interpolating_flow_g1(z, params, frequency_g1_kdv(pval, params, quad)?, ode_tol)?;
    let a = spectral::separation_coordinates(&end, params)?;
    let b = spectral::separation_coordinates(&maps::apply(params, z)?, params)?;
    Ok((a.mu[0] - b.mu[0]).abs().max((a.nu_sep[0] - b.nu_sep[0]).abs()))
}

// ---------------------------------------------------------------------------
// Generating functions

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfResidual {
    pub relation: String,
    pub residual: f64,
}

/// F(q, μ) = (ω − μ) log(ε + q) + μ log(ε − q) − εq.
pub fn generating_f<S: Scalar>(q: &S, mu: &S, eps: f64, omega: f64) -> Result<S> {
    let a = (q.clone() + eps).try_ln()?;
    let b = q.rsub(eps).try_ln()?;
    Ok(mu.rsub(omega) * a + mu.clone() * b - q.clone() * eps)
}

/// Explicit genus-1 G integrand, log((a + b)/(a − b)) with a = √(4ε²μ + P + α²),
/// b = √(4μ(μ + α) + P + α²), α = ε² − ω. Returns the real part (log of the modulus).
pub fn g_integrand_g1(mu: f64, pval: f64, eps: f64, omega: f64) -> Result<f64> {
    let alpha = eps * eps - omega;
    let a2 = 4.0 * eps * eps * mu + pval + alpha * alpha;
    let b2 = 4.0 * mu * (mu + alpha) + pval + alpha * alpha;
    if !(a2 >= 0.0) || !(b2 >= 0.0) {
        return Err(ActionAngleError::Domain { what: "G integrand radicand", value: a2.min(b2) });
    }
    let (a, b) = (a2.sqrt(), b2.sqrt());
    Ok(((a + b) / (a - b)).abs().ln())
}

/// arccosh(tr T(μ) / (2√det T(μ))) where defined.
pub fn arccosh_half_trace(t: &crate::poly::PolyMat2<f64>, mu: f64) -> Option<f64> {
    let det = t.det().eval(&mu);
    if !(det > 0.0) {
        return None;
    }
    let x = t.trace().eval(&mu) / (2.0 * det.sqrt());
    if x < 1.0 {
        return None;
    }
    Some(x.acosh())
}

/// S(q, P) = ∫₀^q (εδq′ + s√rad)/(q′² − ε²) dq′ on the branch s of the point.
pub fn generating_s(q: f64, pval: f64, branch: f64, params: &MapParams, quad: &QuadratureSpec) -> Result<f64> {
    require(params, Family::KdV, 2)?;
    let (e, d) = (params.epsilon, params.delta);
    let r = quad::integrate(
        |x| {
            let rad = kdv_radicand(x, pval, params);
            if rad < 0.0 {
                return Err(QuadError::Integrand { x, msg: "negative radicand".into() });
            }
            Ok((e * d * x + branch * rad.sqrt()) / (x * x - e * e))
        },
        0.0,
        q,
        quad,
    )?;
    Ok(r.value)
}

/// Residuals of the defining relations of F, S (genus 1) and G (genus 1 and 2).
pub fn generating_function_checks(z: &PhasePoint, params: &MapParams, quad: &QuadratureSpec) -> Result<Vec<GfResidual>> {
    if params.family != Family::KdV {
        return Err(ActionAngleError::Unsupported("generating functions are implemented for KdV".into()));
    }
    let c = canonical(z, params)?;
    let (eps, w) = (params.epsilon, params.omega());
    let t = spectral::build_monodromy(z, params)?;
    let sep = spectral::separation_from(&t, spectral::genus(params))?;
    let mut out = Vec::new();
    let mut push = |relation: &str, residual: f64| out.push(GfResidual { relation: relation.into(), residual });
    if params.period == 2 {
        let (q, p) = (c[0], c[1]);
        let (mu, nu) = (sep.mu[0], sep.nu_sep[0]);
        let x = jet_seed(&[q, mu], 1)?;
        let f = generating_f(&x[0], &x[1], eps, w)?;
        let g = f.gradient();
        push("dF/dq - p", g[0] - p);
        push("-dF/dmu - nu", -g[1] - nu);

        let pval = maps::invariants(z, params)?[0];
        let rad = kdv_radicand(q, pval, params);
        let branch = if p * (q * q - eps * eps) - eps * params.delta * q >= 0.0 { 1.0 } else { -1.0 };
        let sq = (eps * params.delta * q + branch * rad.max(0.0).sqrt()) / (q * q - eps * eps);
        push("dS/dq - p", sq - p);
        let h = 1e-5 * (1.0 + pval.abs());
        let dsdp = (generating_s(q, pval + h, branch, params, quad)? - generating_s(q, pval - h, branch, params, quad)?) / (2.0 * h);
        let qang = branch * quad::integrate(|x| Ok(0.5 / kdv_radicand(x, pval, params).sqrt()), 0.0, q, quad)?.value;
        push("dS/dP - Q", dsdp - qang);

        if let Some(ac) = arccosh_half_trace(&t, mu) {
            push("|nu| - dG/dmu", nu.abs() - ac);
        }
        // the explicit integrand against the spectral form at a few sample points
        let mut worst: f64 = 0.0;
        for m in sample_points(mu) {
            if let (Ok(gi), Some(ac)) = (g_integrand_g1(m, pval, eps, w), arccosh_half_trace(&t, m)) {
                worst = worst.max((gi - ac).abs());
            }
        }
        push("G integrand - arccosh(tr/2sqrt(det))", worst);
    } else {
        for j in 0..2 {
            if let Some(ac) = arccosh_half_trace(&t, sep.mu[j]) {
                push(if j == 0 { "nu_1 - kappa_1 dG/dmu_1" } else { "nu_2 - kappa_2 dG/dmu_2" }, sep.nu_sep[j] - sep.kappa[j] * ac);
            }
        }
    }
    Ok(out)
}

fn sample_points(mu: f64) -> Vec<f64> {
    let s = 1.0 + mu.abs();
    (-4..=4).map(|i| mu + 0.3 * s * i as f64).collect()
}
