use kdvmh::actionangle::{self as aa, ActionAngleError};
use kdvmh::maps::{self, SplitHamiltonian};
use kdvmh::mh::{self, defect_scan, loglog_slope, MHSeries, MhSource, SeriesKind};
use kdvmh::quad::QuadratureSpec;
use kdvmh::{jet_seed, spectral, Family, Layout, MapParams, PhasePoint};
use rand::Rng;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, Cell, Table};

/// Explicit invariants for the explicit maps, trace coefficients otherwise.
pub fn invariants_of(z: &PhasePoint, params: &MapParams) -> Result<Vec<f64>, CliError> {
    match maps::invariants(z, params) {
        Ok(v) => Ok(v),
        Err(kdvmh::MapError::Unsupported(_)) => Ok(spectral::spectral_data(z, params)?.invariants),
        Err(e) => Err(e.into()),
    }
}

fn coord_names(z: &PhasePoint) -> Vec<String> {
    let n = z.coords.len() / 2;
    match z.layout {
        Layout::Canonical if n == 1 => vec!["q".into(), "p".into()],
        Layout::Canonical => (1..=n).map(|i| format!("q{i}")).chain((1..=n).map(|i| format!("p{i}"))).collect(),
        Layout::ReducedXY => (1..=n).map(|i| format!("X{i}")).chain((0..n).map(|i| format!("Y{i}"))).collect(),
    }
}

fn meta(cfg: &ExperimentConfig, params: &MapParams, seed: &PhasePoint) -> Value {
    json!({
        "family": params.family,
        "period": params.period,
        "epsilon": num(params.epsilon),
        "delta": num(params.delta),
        "rho": num(params.rho),
        "rng_seed": cfg.rng_seed,
        "seed_point": seed.coords.iter().map(|x| num(*x)).collect::<Vec<_>>(),
    })
}

// ---------------------------------------------------------------------------
// orbit

pub fn orbit(cfg: &ExperimentConfig) -> Result<(Table, Value), CliError> {
    let params = cfg.params()?;
    let z0 = cfg.seed(&params)?;
    let i0 = invariants_of(&z0, &params)?;
    let mut cols = vec!["step".to_string()];
    cols.extend(coord_names(&z0));
    cols.extend((1..=i0.len()).map(|k| format!("inv{k}")));
    let mut table = Table::new(cols);
    let mut z = z0.clone();
    let mut drift: f64 = 0.0;
    for step in 0..=cfg.iterations {
        if step > 0 {
            z = maps::apply(&params, &z).map_err(|source| maps::OrbitError { step, source })?;
        }
        let inv = invariants_of(&z, &params)?;
        for (a, b) in inv.iter().zip(&i0) {
            drift = drift.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
        let mut row = vec![Cell::Int(step as u64)];
        row.extend(z.coords.iter().map(|x| Cell::Num(*x)));
        row.extend(inv.iter().map(|x| Cell::Num(*x)));
        table.rows.push(row);
    }
    let mut m = meta(cfg, &params, &z0);
    m["iterations"] = json!(cfg.iterations);
    m["max_relative_drift"] = num(drift);
    Ok((table, m))
}

// ---------------------------------------------------------------------------
// mh-compare

fn closed_form_diff(params: &MapParams, z0: &PhasePoint, zr: &PhasePoint, kind: SeriesKind, quad: &QuadratureSpec) -> Result<(f64, f64), CliError> {
    let (pa, pb) = (maps::invariants(zr, params)?, maps::invariants(z0, params)?);
    let closed = match (params.family, params.period) {
        (Family::KdV, 2) => aa::mh_g1_kdv(pa[0], pb[0], params, quad)?,
        (Family::MKdV, 2) => aa::mh_g1_mkdv(pa[0], pb[0], params, quad)?,
        _ => {
            let a = aa::trace_coefficients_g2(zr, params)?;
            let b = aa::trace_coefficients_g2(z0, params)?;
            aa::mh_g2(&[a, b], params, quad)?
        }
    };
    let series = mh::series_invariant(&pb, params, kind)? - mh::series_invariant(&pa, params, kind)?;
    Ok((closed, (closed - series).abs()))
}

pub fn mh_compare(cfg: &ExperimentConfig) -> Result<(Table, Value), CliError> {
    let base = cfg.params()?;
    if !cfg.canonical() {
        return Err(CliError::Config("mh-compare needs KdV P=2, KdV P=3 or MKdV P=2".into()));
    }
    let kind = SeriesKind::for_params(&base)?;
    let z0 = cfg.seed(&base)?;
    let zr = PhasePoint::canonical(z0.coords.iter().map(|x| 0.5 * x).collect());
    let gradings = cfg.gradings();
    let quad = cfg.quad();
    let depth = cfg.depth;
    let explicit_order = depth.min(kind.phase_order());
    let bch_name = format!("bch_depth_{depth}");

    let bch = defect_scan(&MHSeries::new(base, depth, MhSource::Bch)?, &z0, &gradings, 1.0)?;
    let series = defect_scan(&MHSeries::new(base, explicit_order, MhSource::Explicit)?, &z0, &gradings, 1.0)?;
    let mut table = Table::new(vec!["grading".into(), "method".into(), "value".into(), "defect".into()]);
    let mut closed_defects = Vec::new();
    for (i, &g) in gradings.iter().enumerate() {
        let params = base.with_grading(g);
        let (t, v) = maps::generating_hamiltonian(&params)?;
        let mut value = mh::bch_mh(t.as_ref(), v.as_ref(), &z0, depth)?;
        if kind == SeriesKind::MKdV2 {
            // constant per τ order from anchoring the potential at 0
            let align = mh::bch_alignment(&params, kind, depth)?;
            value -= align.iter().enumerate().map(|(k, a)| a * g.powi(k as i32 + 1)).sum::<f64>();
        }
        let explicit = mh::series_phase_truncated(&z0, &params, kind, explicit_order)?;
        let (closed, cdef) = closed_form_diff(&params, &z0, &zr, kind, &quad)?;
        closed_defects.push(cdef);
        table.rows.push(vec![Cell::Num(g), Cell::Text(bch_name.clone()), Cell::Num(value), Cell::Num(bch.rows[i].defect)]);
        table.rows.push(vec![Cell::Num(g), Cell::Text("explicit_series".into()), Cell::Num(explicit), Cell::Num(series.rows[i].defect)]);
        table.rows.push(vec![Cell::Num(g), Cell::Text("closed_form_diff".into()), Cell::Num(closed), Cell::Num(cdef)]);
    }
    let abs: Vec<f64> = gradings.iter().map(|g| g.abs()).collect();
    let slope = |t: &mh::DefectTable| t.fitted_slope.map_or(Cell::Text("conserved".into()), Cell::Num);
    let closed_slope = loglog_slope(&abs, &closed_defects).map_or(Cell::Empty, Cell::Num);
    table.footer = vec![
        vec![Cell::Text("slope".into()), Cell::Text(bch_name), Cell::Empty, slope(&bch)],
        vec![Cell::Text("slope".into()), Cell::Text("explicit_series".into()), Cell::Empty, slope(&series)],
        vec![Cell::Text("slope".into()), Cell::Text("closed_form_diff".into()), Cell::Empty, closed_slope],
    ];
    let mut m = meta(cfg, &base, &z0);
    m["depth"] = json!(depth);
    m["explicit_series_order"] = json!(explicit_order);
    m["reference_point"] = Value::Array(zr.coords.iter().map(|x| num(*x)).collect());
    m["grading_name"] = json!(match base.family {
        Family::KdV => "delta",
        Family::MKdV => "tau",
    });
    Ok((table, m))
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Symplectic,
    Brackets,
    Dubrovin,
    Landing,
    Abel,
    Conservativity,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Symplectic => "symplectic",
            Suite::Brackets => "brackets",
            Suite::Dubrovin => "dubrovin",
            Suite::Landing => "landing",
            Suite::Abel => "abel",
            Suite::Conservativity => "conservativity",
            Suite::All => "all",
        }
    }

    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Symplectic, Suite::Brackets, Suite::Dubrovin, Suite::Landing, Suite::Abel, Suite::Conservativity],
            s => vec![s],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub skipped: Option<String>,
}

impl Check {
    fn new(suite: Suite, name: &str, residual: f64, tolerance: f64) -> Check {
        Check { suite: suite.name(), name: name.into(), residual, tolerance, skipped: None }
    }

    fn skip(suite: Suite, reason: &str) -> Check {
        Check { suite: suite.name(), name: "-".into(), residual: 0.0, tolerance: 0.0, skipped: Some(reason.into()) }
    }

    pub fn passed(&self) -> bool {
        self.skipped.is_some() || self.residual <= self.tolerance
    }

    /// Residual in units of its tolerance.
    pub fn severity(&self) -> f64 {
        if self.skipped.is_some() {
            0.0
        } else if self.residual.is_nan() {
            f64::INFINITY
        } else {
            self.residual / self.tolerance
        }
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    params: MapParams,
    map_params: MapParams,
    seed: PhasePoint,
    quad: QuadratureSpec,
}

impl Ctx<'_> {
    fn points(&self, salt: u64) -> Vec<PhasePoint> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.cfg.rng_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut out = vec![self.seed.clone()];
        out.extend((1..self.cfg.samples).map(|_| self.cfg.random_point(&self.params, &mut rng)));
        out
    }

    fn genus(&self) -> usize {
        spectral::genus(&self.params)
    }

    fn kdv(&self) -> bool {
        self.params.family == Family::KdV
    }

    fn orbit(&self) -> Result<Vec<PhasePoint>, CliError> {
        Ok(maps::orbit(&self.map_params, &self.seed, self.cfg.check_steps)?)
    }
}

fn max_of<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

fn suite_symplectic(c: &Ctx) -> Result<Vec<Check>, CliError> {
    let s = Suite::Symplectic;
    if !c.cfg.canonical() {
        return Ok(vec![Check::skip(s, "no canonical coordinates for this period")]);
    }
    let pts = c.points(1);
    let mut sym = Vec::new();
    let mut euler = Vec::new();
    let split = SplitHamiltonian::new(c.params)?;
    for z in &pts {
        sym.push(maps::symplecticity_check(&c.map_params, z)?);
        let e = maps::euler_step(&split, &z.coords)?;
        let m = maps::apply(&c.map_params, z)?;
        euler.push(max_of(e.iter().zip(&m.coords).map(|(a, b)| (a - b).abs())));
    }
    let etol = if c.kdv() { 1e-11 } else { 1e-9 };
    Ok(vec![Check::new(s, "jacobian_two_form", max_of(sym), 1e-12), Check::new(s, "symplectic_euler_identity", max_of(euler), etol)])
}

fn suite_brackets(c: &Ctx) -> Result<Vec<Check>, CliError> {
    let s = Suite::Brackets;
    if !c.kdv() || !c.cfg.canonical() {
        return Ok(vec![Check::skip(s, "bracket checks cover the KdV P=2 and P=3 maps")]);
    }
    let pts = c.points(2);
    let mut rng = c.cfg.rng();
    let mut canon = Vec::new();
    let mut entry = Vec::new();
    let mut inv = Vec::new();
    for z in &pts {
        canon.push(spectral::canonicity_check(z, &c.params)?.max_residual());
        let l1 = rng.gen_range(0.2..2.0);
        let l2 = rng.gen_range(-2.0..-0.2);
        for r in spectral::entry_bracket_check(l1, l2, z, &c.params)? {
            entry.push(r.residual / (1.0 + r.lhs.abs()));
        }
        if c.genus() == 2 {
            let x = jet_seed(&z.coords, 2)?;
            let p = maps::invariants_generic(&c.params, &x, maps::InvariantVariant::Section6)?;
            inv.push(kdvmh::jets::bracket(&p[0], &p[1], 2)?.value().abs());
        }
    }
    let mut out = vec![Check::new(s, "separation_canonicity", max_of(canon), 1e-9), Check::new(s, "entry_brackets", max_of(entry), 1e-9)];
    if c.genus() == 2 {
        out.push(Check::new(s, "invariants_in_involution", max_of(inv), 1e-10));
    }
    Ok(out)
}

fn suite_dubrovin(c: &Ctx) -> Result<Vec<Check>, CliError> {
    let s = Suite::Dubrovin;
    if !c.kdv() || !c.cfg.canonical() {
        return Ok(vec![Check::skip(s, "discrete Dubrovin residuals cover the KdV P=2 and P=3 maps")]);
    }
    let orbit = c.orbit()?;
    let mut res = Vec::new();
    for w in orbit.windows(2) {
        res.extend(spectral::dubrovin_residual_step(&w[0], &w[1], &c.params)?.iter().map(|r| r.abs()));
    }
    let tol = if c.genus() == 1 { 1e-9 } else { 1e-8 };
    Ok(vec![Check::new(s, "discrete_dubrovin", max_of(res), tol)])
}

fn suite_landing(c: &Ctx) -> Result<Vec<Check>, CliError> {
    let s = Suite::Landing;
    if !c.cfg.canonical() {
        return Ok(vec![Check::skip(s, "interpolating flows cover the P=2 maps and KdV P=3")]);
    }
    let mut d = Vec::new();
    for z in c.points(4) {
        let image = maps::apply(&c.map_params, &z)?;
        d.push(aa::landing_against(&z, &image, &c.params, &c.quad, c.cfg.ode_tol)?.distance);
    }
    let tol = if c.genus() == 1 { 1e-8 } else { 1e-7 };
    Ok(vec![Check::new(s, "flow_lands_on_image", max_of(d), tol)])
}

fn suite_abel(c: &Ctx) -> Result<Vec<Check>, CliError> {
    let s = Suite::Abel;
    match (c.params.family, c.params.period) {
        (Family::KdV, 2) => {
            let d = aa::commuting_diagram_g1(&c.seed, &c.params, &c.quad, c.cfg.ode_tol)?;
            Ok(vec![Check::new(s, "separation_commuting_diagram", d, 1e-7)])
        }
        (Family::KdV, 3) => {
            let orbit = c.orbit()?;
            let mut res = Vec::new();
            for z in &orbit[..orbit.len() - 1] {
                res.extend(aa::abel_step_sums(z, &c.params, &c.quad)?.residuals);
            }
            let f = aa::frequencies_g2_at(&c.seed, &c.params, &c.quad)?;
            let ls = f.lambda_star.ok_or_else(|| ActionAngleError::Unsupported("zero first frequency".into()))?;
            let jac = aa::jacobi_inversion_check(&c.seed, &c.params, ls, f.freq[0], 20, &c.quad, c.cfg.ode_tol)?;
            Ok(vec![Check::new(s, "abel_step_sums", max_of(res), 1e-7), Check::new(s, "jacobi_inversion", jac.max_residual(), 1e-6)])
        }
        _ => Ok(vec![Check::skip(s, "Abel checks cover KdV P=2 and P=3")]),
    }
}

fn suite_conservativity(c: &Ctx) -> Result<Vec<Check>, CliError> {
    let s = Suite::Conservativity;
    match (c.params.family, c.params.period) {
        (_, 2) => {
            let p = maps::invariants(&c.seed, &c.params)?[0];
            let h = 1e-4 * (1.0 + p.abs());
            let mh = |a: f64, b: f64| match c.params.family {
                Family::KdV => aa::mh_g1_kdv(a, b, &c.params, &c.quad),
                Family::MKdV => aa::mh_g1_mkdv(a, b, &c.params, &c.quad),
            };
            let d = (mh(p, p + h)? - mh(p, p - h)?) / (2.0 * h);
            let nu = aa::flow_time_g1(p, &c.params, &c.quad)?;
            Ok(vec![Check::new(s, "mh_derivative_is_frequency", (d - nu).abs(), 1e-6)])
        }
        (Family::KdV, 3) => {
            let (p1, p2) = aa::trace_coefficients_g2(&c.seed, &c.params)?;
            let (h1, h2) = (0.05 * p1.abs().max(1e-3), 0.05 * p2.abs().max(1e-3));
            let lp = [(p1, p2), (p1 + h1, p2), (p1 + h1, p2 + h2), (p1, p2 + h2), (p1, p2)];
            let lo = aa::mh_g2(&lp, &c.params, &c.quad)?.abs();
            let cross = aa::frequency_cross_derivative(p1, p2, 1e-3 * p1.abs().max(1e-3), &c.params, &c.quad)?;
            Ok(vec![Check::new(s, "closed_loop_integral", lo, 1e-7), Check::new(s, "cross_derivative", cross, 1e-6)])
        }
        _ => Ok(vec![Check::skip(s, "conservativity covers P=2 and KdV P=3")]),
    }
}

pub fn verify(cfg: &ExperimentConfig, suite: Suite) -> Result<(Vec<Check>, Value), CliError> {
    let params = cfg.params()?;
    let ctx = Ctx { cfg, params, map_params: cfg.map_params()?, seed: cfg.seed(&params)?, quad: cfg.quad() };
    let mut checks = Vec::new();
    for s in suite.members() {
        checks.extend(match s {
            Suite::Symplectic => suite_symplectic(&ctx)?,
            Suite::Brackets => suite_brackets(&ctx)?,
            Suite::Dubrovin => suite_dubrovin(&ctx)?,
            Suite::Landing => suite_landing(&ctx)?,
            Suite::Abel => suite_abel(&ctx)?,
            Suite::Conservativity => suite_conservativity(&ctx)?,
            Suite::All => unreachable!(),
        });
    }
    let mut m = meta(cfg, &params, &ctx.seed);
    m["suite"] = json!(suite.name());
    m["map_grading"] = num(ctx.map_params.grading());
    m["samples"] = json!(cfg.samples);
    m["check_steps"] = json!(cfg.check_steps);
    Ok((checks, m))
}

pub fn verify_table(checks: &[Check]) -> Table {
    let mut t = Table::new(["suite", "check", "residual", "tolerance", "status"].map(String::from).to_vec());
    for c in checks {
        let status = match (&c.skipped, c.passed()) {
            (Some(r), _) => format!("skipped ({r})"),
            (None, true) => "pass".into(),
            (None, false) => "fail".into(),
        };
        let (res, tol) = if c.skipped.is_some() { (Cell::Empty, Cell::Empty) } else { (Cell::Num(c.residual), Cell::Num(c.tolerance)) };
        t.rows.push(vec![Cell::Text(c.suite.into()), Cell::Text(c.name.clone()), res, tol, Cell::Text(status)]);
    }
    t
}

pub fn verify_json(checks: &[Check], meta: Value) -> Value {
    let items: Vec<Value> = checks
        .iter()
        .map(|c| match &c.skipped {
            Some(r) => json!({"suite": c.suite, "status": "skipped", "reason": r}),
            None => json!({
                "suite": c.suite,
                "check": c.name,
                "residual": num(c.residual),
                "tolerance": num(c.tolerance),
                "status": if c.passed() { "pass" } else { "fail" },
            }),
        })
        .collect();
    let worst = worst(checks).map(|c| json!({"suite": c.suite, "check": c.name, "residual": num(c.residual), "tolerance": num(c.tolerance)}));
    json!({
        "meta": meta,
        "passed": checks.iter().all(Check::passed),
        "checks": items,
        "worst": worst,
    })
}

/// Check with the largest residual relative to its tolerance.
pub fn worst(checks: &[Check]) -> Option<&Check> {
    checks.iter().filter(|c| c.skipped.is_none()).max_by(|a, b| a.severity().total_cmp(&b.severity()))
}

// ---------------------------------------------------------------------------
// freq-sweep

fn frequency_row(params: &MapParams, z: &PhasePoint, quad: &QuadratureSpec) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let inv = maps::invariants(z, params)?;
    let freq = match (params.family, params.period) {
        (Family::KdV, 2) => vec![aa::frequency_g1_kdv(inv[0], params, quad)?],
        (Family::MKdV, 2) => vec![aa::frequency_g1_mkdv(inv[0], params, quad)?],
        _ => {
            let f = aa::frequencies_g2_at(z, params, quad)?;
            vec![f.freq[0], f.freq[1], f.lambda_star.unwrap_or(f64::NAN)]
        }
    };
    Ok((inv, freq))
}

pub fn freq_sweep(cfg: &ExperimentConfig) -> Result<(Table, Value), CliError> {
    let params = cfg.params()?;
    if !cfg.canonical() {
        return Err(CliError::Config("freq-sweep needs KdV P=2, KdV P=3 or MKdV P=2".into()));
    }
    let z0 = cfg.seed(&params)?;
    let quad = cfg.quad();
    let n = cfg.sweep_points;
    let scales: Vec<f64> = (0..n).map(|i| cfg.sweep_min + (cfg.sweep_max - cfg.sweep_min) * i as f64 / (n - 1) as f64).collect();
    let points: Vec<PhasePoint> = scales.iter().map(|s| PhasePoint::canonical(z0.coords.iter().map(|x| s * x).collect())).collect();

    // independent points fan out over threads; results are collected in input order
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n);
    let chunk = n.div_ceil(workers);
    let results: Vec<Result<(Vec<f64>, Vec<f64>), CliError>> = std::thread::scope(|sc| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|pts| sc.spawn(|| pts.iter().map(|z| frequency_row(&params, z, &quad)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });

    let mut cols = vec!["scale".to_string()];
    cols.extend(coord_names(&z0));
    if params.period == 2 {
        cols.extend(["inv1", "freq1"].map(String::from));
    } else {
        cols.extend(["inv1", "inv2", "freq1", "freq2", "lambda_star"].map(String::from));
    }
    let mut table = Table::new(cols);
    for ((s, z), r) in scales.iter().zip(&points).zip(results) {
        let (inv, freq) = r?;
        let mut row = vec![Cell::Num(*s)];
        row.extend(z.coords.iter().chain(&inv).chain(&freq).map(|x| Cell::Num(*x)));
        table.rows.push(row);
    }
    let mut m = meta(cfg, &params, &z0);
    m["sweep"] = json!({"min": num(cfg.sweep_min), "max": num(cfg.sweep_max), "points": n});
    Ok((table, m))
}
