//! Modified Hamiltonians: BCH composition of the split (T, V), the explicit
//! truncated series in phase variables and in invariants, and defect scaling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::{bracket, jet_seed, Jet, JetError, Scalar, ScalarField};
use crate::maps::{self, Family, InvariantVariant, Layout, MapError, MapParams, OrbitError, PhasePoint, SplitHamiltonian};

/// Deepest BCH term with a known coefficient table.
pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MhError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error("BCH depth {0} is outside 1..=4")]
    Depth(usize),
    #[error("domain error: {what} = {value:e}")]
    Domain { what: &'static str, value: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Which explicit series family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    #[serde(rename = "kdv2")]
    KdV2,
    #[serde(rename = "mkdv2")]
    MKdV2,
    #[serde(rename = "kdv3")]
    KdV3,
}

impl SeriesKind {
    pub fn for_params(params: &MapParams) -> Result<SeriesKind, MhError> {
        match (params.family, params.period) {
            (Family::KdV, 2) => Ok(SeriesKind::KdV2),
            (Family::KdV, 3) => Ok(SeriesKind::KdV3),
            (Family::MKdV, 2) => Ok(SeriesKind::MKdV2),
            (f, p) => Err(MhError::Invalid(format!("no explicit series for {f:?} with period {p}"))),
        }
    }

    /// Highest grading order present in the phase-variable series.
    pub fn phase_order(self) -> usize {
        match self {
            SeriesKind::KdV2 => 4,
            SeriesKind::MKdV2 => 3,
            SeriesKind::KdV3 => 2,
        }
    }

    /// Order up to which phase and invariant series are compared.
    pub fn common_order(self) -> usize {
        self.phase_order()
    }

    fn dim(self) -> usize {
        match self {
            SeriesKind::KdV3 => 4,
            _ => 2,
        }
    }
}

// ---------------------------------------------------------------------------
// BCH

fn br(f: &Jet, g: &Jet, npairs: usize) -> Result<Jet, JetError> {
    let k = f.order().min(g.order());
    bracket(&f.truncate(k), &g.truncate(k), npairs)
}

/// The BCH terms of depth 1..=depth for jets of T and V, each truncated to
/// `order(T) − (depth − 1)`.
pub fn bch_terms_jet(t: &Jet, v: &Jet, npairs: usize, depth: usize) -> Result<Vec<Jet>, MhError> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(MhError::Depth(depth));
    }
    let have = t.order().min(v.order());
    if have + 1 < depth {
        return Err(JetError::Order { needed: depth - 1, have }.into());
    }
    let out_order = have + 1 - depth;
    let mut terms = vec![(t.clone() + v.clone()).truncate(out_order)];
    if depth >= 2 {
        let tv = br(t, v, npairs)?;
        terms.push((tv.clone() * 0.5).truncate(out_order));
        if depth >= 3 {
            let ttv = br(t, &tv, npairs)?;
            let vtv = br(v, &tv, npairs)?;
            terms.push(((ttv.clone() - vtv) * (1.0 / 12.0)).truncate(out_order));
            if depth >= 4 {
                let vttv = br(v, &ttv, npairs)?;
                terms.push((vttv * (-1.0 / 24.0)).truncate(out_order));
            }
        }
    }
    Ok(terms)
}

fn canonical_coords(z: &PhasePoint) -> Result<&[f64], MhError> {
    match z.layout {
        Layout::Canonical => Ok(&z.coords),
        Layout::ReducedXY => Err(MhError::Invalid("BCH needs canonical coordinates".into())),
    }
}

/// Sum of BCH terms through `depth` at `point`, as a jet of order `out_order`.
pub fn bch_jet_at(t: &dyn ScalarField, v: &dyn ScalarField, point: &[f64], npairs: usize, depth: usize, out_order: usize) -> Result<Jet, MhError> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(MhError::Depth(depth));
    }
    let x = jet_seed(point, out_order + depth)?;
    let tj = t.eval(&x)?;
    let vj = v.eval(&x)?;
    let terms = bch_terms_jet(&tj, &vj, npairs, depth)?;
    let mut acc = terms[0].clone();
    for term in &terms[1..] {
        acc = acc + term.clone();
    }
    Ok(acc.truncate(out_order))
}

/// Value of the BCH modified Hamiltonian through nested brackets of depth ≤ `depth`.
pub fn bch_mh(t: &dyn ScalarField, v: &dyn ScalarField, z: &PhasePoint, depth: usize) -> Result<f64, MhError> {
    let c = canonical_coords(z)?;
    if t.arity() != c.len() || v.arity() != c.len() {
        return Err(JetError::Arity { expected: t.arity(), got: c.len() }.into());
    }
    Ok(bch_jet_at(t, v, c, c.len() / 2, depth, 0)?.value())
}

/// Grading-order coefficients 1..=order of the BCH series at `z`.
///
/// For KdV the depth-k term is homogeneous of degree k in δ; for MKdV the
/// coefficients come from jets in (q, p, τ) about τ = 0.
pub fn bch_series_coefficients(params: &MapParams, z: &[f64], order: usize) -> Result<Vec<f64>, MhError> {
    if order == 0 || order > MAX_DEPTH {
        return Err(MhError::Depth(order));
    }
    match params.family {
        Family::KdV => {
            let split = SplitHamiltonian::new(params.with_grading(1.0))?;
            let x = jet_seed(z, order)?;
            let terms = bch_terms_jet(&split.t(&x)?, &split.v(&x)?, split.npairs(), order)?;
            Ok(terms.iter().map(|j| j.value()).collect())
        }
        Family::MKdV => {
            let split = SplitHamiltonian::new(params.with_grading(0.0))?.graded();
            let mut pt = z.to_vec();
            pt.push(0.0);
            let x = jet_seed(&pt, 2 * order - 1)?;
            let terms = bch_terms_jet(&split.t(&x)?, &split.v(&x)?, split.npairs(), order)?;
            let mut sum = terms[0].clone();
            for t in &terms[1..] {
                sum = sum + t.clone();
            }
            let mut alpha = vec![0; pt.len()];
            Ok((1..=order)
                .map(|k| {
                    alpha[pt.len() - 1] = k;
                    sum.coeff(&alpha)
                })
                .collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Explicit series

fn log_of<S: Scalar>(x: S, what: &'static str) -> Result<S, MhError> {
    let v = x.value();
    x.try_ln().map_err(|_| MhError::Domain { what, value: v })
}

fn recip_of<S: Scalar>(x: &S, what: &'static str) -> Result<S, MhError> {
    x.try_recip().map_err(|_| MhError::Domain { what, value: x.value() })
}

/// Coefficients of grading^1 .. grading^K of the explicit phase-variable series.
pub fn series_phase_terms<S: Scalar>(z: &[S], eps: f64, kind: SeriesKind) -> Result<Vec<S>, MhError> {
    if z.len() != kind.dim() {
        return Err(MhError::Invalid(format!("expected {} coordinates, got {}", kind.dim(), z.len())));
    }
    let e2 = eps * eps;
    match kind {
        SeriesKind::KdV2 => {
            let (q, p) = (&z[0], &z[1]);
            let a = p.sq().rsub(e2);
            let b = q.sq().rsub(e2);
            let t1 = (log_of(a.clone(), "eps^2 - p^2")? + log_of(b.clone(), "eps^2 - q^2")?) * eps;
            let ia = recip_of(&a, "eps^2 - p^2")?;
            let ib = recip_of(&b, "eps^2 - q^2")?;
            let pq = p.clone() * q.clone();
            let t2 = pq.clone() * ia.clone() * ib.clone() * (-2.0 * e2);
            let num3 = (p.sq() + q.sq()) * e2 + p.sq() * q.sq() * 2.0;
            let t3 = num3 * ia.sq() * ib.sq() * (-2.0 * e2 * eps / 3.0);
            let num4 = pq * (p.sq() + e2) * (q.sq() + e2);
            let t4 = num4 * ia.sq() * ia * ib.sq() * ib * (-4.0 * e2 * e2 / 3.0);
            Ok(vec![t1, t2, t3, t4])
        }
        SeriesKind::MKdV2 => {
            let (q, p) = (&z[0], &z[1]);
            let ep = p.exp();
            let eq = q.exp();
            let d = (ep.clone() + 1.0) * (eq.clone() + 1.0);
            let l = p.clone() + q.clone() - log_of(d.clone(), "(1+e^p)(1+e^q)")? * 2.0;
            let id = recip_of(&d, "(1+e^p)(1+e^q)")?;
            let epq = (p.clone() + q.clone()).exp();
            let t1 = l.clone() * 2.0;
            let t2 = -(l.clone() + (epq.clone() + 1.0) * id.clone() * 4.0);
            let a = ((p.clone() + q.clone() * 2.0).exp() + (p.clone() * 2.0 + q.clone()).exp() + ep + eq) * 3.0;
            let b = ((p.clone() + q.clone()).exp().sq() * 3.0 + epq * 8.0 + 3.0) * 2.0;
            let t3 = (a + b) * id.sq() * (2.0 / 3.0) + l * (2.0 / 3.0);
            Ok(vec![t1, t2, t3])
        }
        SeriesKind::KdV3 => {
            let (q1, q2, p1, p2) = (&z[0], &z[1], &z[2], &z[3]);
            let x1 = p1.rsub(eps);
            let x2 = p2.clone() + eps;
            let x3 = p1.clone() - p2.clone() + eps;
            let y0 = q1.clone() + q2.clone() + eps;
            let y1 = q1.rsub(eps);
            let y2 = q2.rsub(eps);
            let t1 = (log_of(x3.clone() * x1.clone() * x2.clone(), "momentum product")?
                + log_of(y0.clone() * y1.clone() * y2.clone(), "position product")?)
                * eps;
            let r = |x: &S, w: &'static str| recip_of(x, w);
            let (ix1, ix2, ix3) = (r(&x1, "x1")?, r(&x2, "x2")?, r(&x3, "x3")?);
            let (iy0, iy1, iy2) = (r(&y0, "y0")?, r(&y1, "y1")?, r(&y2, "y2")?);
            let bracket = (ix3.clone() - ix1) * (iy0.clone() - iy1) - (ix3 - ix2) * (iy0 - iy2);
            let t2 = bracket * (-e2 / 2.0);
            Ok(vec![t1, t2])
        }
    }
}

fn sum_powers<S: Scalar>(terms: &[S], g: &S, upto: usize) -> S {
    let mut acc = g.cst(0.0);
    let mut gk = g.cst(1.0);
    for t in terms.iter().take(upto) {
        gk = gk * g.clone();
        acc = acc + t.clone() * gk.clone();
    }
    acc
}

/// The explicit phase-variable series at `z`, truncated at grading order `upto`
/// (capped at the explicit order).
pub fn series_phase_truncated(z: &PhasePoint, params: &MapParams, kind: SeriesKind, upto: usize) -> Result<f64, MhError> {
    let c = canonical_coords(z)?;
    let terms = series_phase_terms(c, params.epsilon, kind)?;
    Ok(sum_powers(&terms, &params.grading(), upto))
}

/// The explicit phase-variable series at `z` in expanded form.
pub fn series_phase(z: &PhasePoint, params: &MapParams, kind: SeriesKind) -> Result<f64, MhError> {
    series_phase_truncated(z, params, kind, kind.phase_order())
}

/// The explicit series in the invariants, with the grading as a scalar so it may be a jet.
pub fn series_invariant_generic<S: Scalar>(pvals: &[S], eps: f64, g: &S, kind: SeriesKind) -> Result<S, MhError> {
    let need = match kind {
        SeriesKind::KdV3 => 2,
        _ => 1,
    };
    if pvals.len() < need {
        return Err(MhError::Invalid(format!("expected {need} invariant values, got {}", pvals.len())));
    }
    let p = pvals[0].clone();
    match kind {
        SeriesKind::KdV2 => {
            let e4 = eps.powi(4);
            let u = p.clone() + e4;
            let iu = recip_of(&u, "P + eps^4")?;
            let w = g.clone() * eps;
            let w3 = w.sq() * w.clone();
            let w5 = w3.clone() * w.sq();
            let lead = w * log_of(u, "P + eps^4")?;
            let third = w3 * p.clone() * iu.sq() * (2.0 / 3.0);
            let fifth = w5 * p.clone() * (p - 2.0 * e4) * iu.sq().sq() * (-4.0 / 15.0);
            Ok(lead + third + fifth)
        }
        SeriesKind::MKdV2 => {
            let u = p + 4.0;
            let iu = recip_of(&u, "P + 4")?;
            let lu = log_of(u, "P + 4")?;
            let t2 = g.sq();
            let t3 = t2.clone() * g.clone();
            Ok(g.clone() * lu.clone() * -2.0 + t2 * (lu.clone() - iu.clone() * 8.0)
                - t3 * (lu - iu.clone() * 4.0 - iu.sq() * 24.0) * (2.0 / 3.0))
        }
        SeriesKind::KdV3 => Ok(g.clone() * eps * log_of(p, "P1")?),
    }
}

/// Literal value of the explicit invariant-form series.
pub fn series_invariant(pvals: &[f64], params: &MapParams, kind: SeriesKind) -> Result<f64, MhError> {
    series_invariant_generic(pvals, params.epsilon, &params.grading(), kind)
}

/// Explicit invariants at a canonical point with the grading as a scalar.
pub fn invariants_in_grading<S: Scalar>(params: &MapParams, z: &[S], g: &S) -> Result<Vec<S>, MhError> {
    let kind = SeriesKind::for_params(params)?;
    Ok(match kind {
        SeriesKind::KdV2 => vec![maps::kdv2_invariant(z, params.epsilon, &(g.clone() * params.epsilon))],
        SeriesKind::KdV3 => maps::kdv3_invariants(z, params.epsilon, &(g.clone() * params.epsilon), InvariantVariant::Section6),
        SeriesKind::MKdV2 => vec![maps::mkdv2_invariant(z, &(g.clone() + 1.0))],
    })
}

// ---------------------------------------------------------------------------
// Matching

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMatch {
    pub kind: SeriesKind,
    pub order: usize,
    /// Grading coefficients 1..=order of invariant series minus phase series, before alignment.
    pub raw: Vec<f64>,
    /// The same difference at the reference point (q, p) = 0.
    pub alignment: Vec<f64>,
    /// `raw − alignment`.
    pub residuals: Vec<f64>,
}

impl SeriesMatch {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn difference_coefficients(params: &MapParams, z: &[f64], kind: SeriesKind, order: usize) -> Result<Vec<f64>, MhError> {
    let g = jet_seed(&[0.0], order)?.remove(0);
    let zj: Vec<Jet> = z.iter().map(|&c| g.constant_like(c)).collect();
    let inv = invariants_in_grading(params, &zj, &g)?;
    let lhs = series_invariant_generic(&inv, params.epsilon, &g, kind)?;
    let terms = series_phase_terms(&zj, params.epsilon, kind)?;
    let rhs = sum_powers(&terms, &g, kind.phase_order());
    let d = lhs - rhs;
    Ok((1..=order).map(|k| d.coeff(&[k])).collect())
}

/// Expand (invariant series at I(z)) − (phase series at z) in the grading and
/// subtract the same expansion at the origin.
pub fn series_match(z: &PhasePoint, params: &MapParams, kind: SeriesKind) -> Result<SeriesMatch, MhError> {
    let c = canonical_coords(z)?;
    let order = kind.common_order();
    let raw = difference_coefficients(params, c, kind, order)?;
    let alignment = difference_coefficients(params, &vec![0.0; c.len()], kind, order)?;
    let residuals = raw.iter().zip(&alignment).map(|(a, b)| a - b).collect();
    Ok(SeriesMatch { kind, order, raw, alignment, residuals })
}

/// Grading coefficients 1..=order of the invariant-form series at fixed invariant values.
pub fn invariant_series_coefficients(pvals: &[f64], params: &MapParams, kind: SeriesKind, order: usize) -> Result<Vec<f64>, MhError> {
    let g = jet_seed(&[0.0], order)?.remove(0);
    let pj: Vec<Jet> = pvals.iter().map(|&c| g.constant_like(c)).collect();
    let s = series_invariant_generic(&pj, params.epsilon, &g, kind)?;
    Ok((1..=order).map(|k| s.coeff(&[k])).collect())
}

/// Per-order offsets between the BCH series and the explicit phase series,
/// fixed once at the origin. Zero for KdV; the ∫₀ anchoring of the MKdV
/// generating function leaves a constant at each τ order.
pub fn bch_alignment(params: &MapParams, kind: SeriesKind, order: usize) -> Result<Vec<f64>, MhError> {
    let zero = vec![0.0; kind.dim()];
    let b = bch_series_coefficients(params, &zero, order)?;
    let p = series_phase_terms(&zero, params.epsilon, kind)?;
    Ok(b.iter().zip(&p).map(|(x, y)| x - y).collect())
}

// ---------------------------------------------------------------------------
// Truncated MH and defect scaling

/// Where the values of a truncated modified Hamiltonian come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhSource {
    /// BCH composition through depth K.
    Bch,
    /// The explicit phase-variable series truncated at order K.
    Explicit,
    /// The explicit invariant-form series (a function of conserved quantities).
    Invariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradingName {
    Delta,
    Tau,
}

/// A truncated modified Hamiltonian bound to one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MHSeries {
    pub params: MapParams,
    pub kind: SeriesKind,
    pub order: usize,
    pub source: MhSource,
}

impl MHSeries {
    pub fn new(params: MapParams, order: usize, source: MhSource) -> Result<MHSeries, MhError> {
        let kind = SeriesKind::for_params(&params)?;
        match source {
            MhSource::Bch if order == 0 || order > MAX_DEPTH => return Err(MhError::Depth(order)),
            MhSource::Explicit if order == 0 || order > kind.phase_order() => {
                return Err(MhError::Invalid(format!("explicit series has orders 1..={}", kind.phase_order())))
            }
            _ => {}
        }
        Ok(MHSeries { params, kind, order, source })
    }

    pub fn grading_name(&self) -> GradingName {
        match self.params.family {
            Family::KdV => GradingName::Delta,
            Family::MKdV => GradingName::Tau,
        }
    }

    pub fn with_grading(&self, g: f64) -> MHSeries {
        MHSeries { params: self.params.with_grading(g), ..self.clone() }
    }

    /// Value at a canonical point.
    pub fn value(&self, z: &[f64]) -> Result<f64, MhError> {
        match self.source {
            MhSource::Bch => {
                let (t, v) = maps::generating_hamiltonian(&self.params)?;
                Ok(bch_jet_at(t.as_ref(), v.as_ref(), z, z.len() / 2, self.order, 0)?.value())
            }
            MhSource::Explicit => {
                let terms = series_phase_terms(z, self.params.epsilon, self.kind)?;
                Ok(sum_powers(&terms, &self.params.grading(), self.order))
            }
            MhSource::Invariant => {
                let inv = maps::invariants_generic(&self.params, z, InvariantVariant::Section6)?;
                series_invariant(&inv, &self.params, self.kind)
            }
        }
    }

    /// The truncated MH as a scalar field over canonical coordinates.
    pub fn evaluator(&self) -> Box<dyn ScalarField> {
        Box::new(SeriesField { series: self.clone() })
    }
}

struct SeriesField {
    series: MHSeries,
}

fn jet_err(e: MhError) -> JetError {
    match e {
        MhError::Jet(j) => j,
        MhError::Map(MapError::Jet(j)) => j,
        MhError::Domain { value, .. } => JetError::Domain { op: "modified Hamiltonian", value },
        _ => JetError::Domain { op: "modified Hamiltonian", value: f64::NAN },
    }
}

impl ScalarField for SeriesField {
    fn arity(&self) -> usize {
        self.series.kind.dim()
    }

    fn eval(&self, x: &[Jet]) -> Result<Jet, JetError> {
        let s = &self.series;
        match s.source {
            MhSource::Bch => {
                let z: Vec<f64> = x.iter().map(|j| j.value()).collect();
                let (t, v) = maps::generating_hamiltonian(&s.params).map_err(|e| jet_err(e.into()))?;
                let h = bch_jet_at(t.as_ref(), v.as_ref(), &z, z.len() / 2, s.order, x[0].order()).map_err(jet_err)?;
                let shifts: Vec<Jet> = x.iter().map(|j| j.clone() - j.value()).collect();
                h.substitute(&shifts)
            }
            MhSource::Explicit => {
                let terms = series_phase_terms(x, s.params.epsilon, s.kind).map_err(jet_err)?;
                Ok(sum_powers(&terms, &x[0].constant_like(s.params.grading()), s.order))
            }
            MhSource::Invariant => {
                let inv = maps::invariants_generic(&s.params, x, InvariantVariant::Section6).map_err(|e| jet_err(e.into()))?;
                series_invariant_generic(&inv, s.params.epsilon, &x[0].constant_like(s.params.grading()), s.kind).map_err(jet_err)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub grading: f64,
    pub steps: usize,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectTable {
    pub kind: SeriesKind,
    pub source: MhSource,
    pub order: usize,
    pub rows: Vec<DefectRow>,
    /// Least-squares slope of log(defect) against log(grading); `None` when conserved.
    pub fitted_slope: Option<f64>,
    /// Every defect sits at roundoff level.
    pub conserved: bool,
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Relative level below which a defect counts as roundoff.
const ROUNDOFF_LEVEL: f64 = 1e-12;

/// Fixed-time conservation defect of a truncated MH: for each grading value g,
/// iterate N = ⌈t_fix/g⌉ steps and record max_n |H*_K(z_n) − H*_K(z_0)|.
pub fn defect_scan(series: &MHSeries, z0: &PhasePoint, gradings: &[f64], t_fix: f64) -> Result<DefectTable, MhError> {
    if gradings.is_empty() || gradings.iter().any(|g| !(*g > 0.0)) {
        return Err(MhError::Invalid("grading values must be positive".into()));
    }
    if !(t_fix > 0.0) {
        return Err(MhError::Invalid(format!("t_fix must be positive, got {t_fix}")));
    }
    let mut rows = Vec::with_capacity(gradings.len());
    let mut conserved = true;
    for &g in gradings {
        let s = series.with_grading(g);
        let steps = (t_fix / g).ceil() as usize;
        let orbit = maps::orbit(&s.params, z0, steps)?;
        let mut h0 = None;
        let mut defect: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for z in &orbit {
            let c = match z.layout {
                Layout::Canonical => z.coords.clone(),
                Layout::ReducedXY => maps::reduced_to_canonical(z, s.params.period)?.coords,
            };
            let h = s.value(&c)?;
            let base = *h0.get_or_insert(h);
            defect = defect.max((h - base).abs());
            scale = scale.max(h.abs());
        }
        if defect > ROUNDOFF_LEVEL * scale.max(g) {
            conserved = false;
        }
        rows.push(DefectRow { grading: g, steps, defect });
    }
    let fitted_slope = if conserved {
        None
    } else {
        let x: Vec<f64> = rows.iter().map(|r| r.grading).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.defect).collect();
        loglog_slope(&x, &y)
    };
    Ok(DefectTable { kind: series.kind, source: series.source, order: series.order, rows, fitted_slope, conserved })
}

impl DefectTable {
    /// CSV with header `grading,steps,defect` and a trailing `fitted_slope` record.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("grading,steps,defect\n");
        for r in &self.rows {
            s.push_str(&format!("{:.17e},{},{:.17e}\n", r.grading, r.steps, r.defect));
        }
        match self.fitted_slope {
            Some(v) => s.push_str(&format!("fitted_slope,,{v:.17e}\n")),
            None => s.push_str("fitted_slope,,conserved\n"),
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::FnField;

    #[test]
    fn commuting_split_returns_t() {
        let t = FnField::new(2, |x: &[Jet]| Ok(x[1].sq() * 0.5 + x[1].exp()));
        let v = FnField::new(2, |x: &[Jet]| Ok(x[0].constant_like(0.0)));
        let z = PhasePoint::canonical(vec![0.3, -0.7]);
        for d in 1..=4 {
            let h = bch_mh(&t, &v, &z, d).unwrap();
            assert!((h - (0.245 + (-0.7f64).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn depth_limits() {
        let t = FnField::new(2, |x: &[Jet]| Ok(x[1].clone()));
        let z = PhasePoint::canonical(vec![0.0, 0.0]);
        assert!(matches!(bch_mh(&t, &t, &z, 0), Err(MhError::Depth(0))));
        assert!(matches!(bch_mh(&t, &t, &z, 5), Err(MhError::Depth(5))));
    }

    #[test]
    fn harmonic_split_second_order() {
        // T = p²/2, V = q²/2 gives {T,V} = −qp
        let t = FnField::new(2, |x: &[Jet]| Ok(x[1].sq() * 0.5));
        let v = FnField::new(2, |x: &[Jet]| Ok(x[0].sq() * 0.5));
        let (q, p) = (0.4, -0.9);
        let z = PhasePoint::canonical(vec![q, p]);
        let h1 = bch_mh(&t, &v, &z, 1).unwrap();
        let h2 = bch_mh(&t, &v, &z, 2).unwrap();
        assert!((h2 - h1 - (-0.5 * q * p)).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.05, 0.02, 0.01];
        let y: Vec<f64> = x.iter().map(|g: &f64| 3.0 * g.powi(4)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 4.0).abs() < 1e-12);
    }
}
