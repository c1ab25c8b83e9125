use kdvmh::maps::{self, generating_hamiltonian, sample_admissible, MapParams, PhasePoint};
use kdvmh::mh::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn kdv2_bch_reproduces_explicit_series() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let (t, v) = generating_hamiltonian(&params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
        for depth in 1..=4 {
            let h = bch_mh(t.as_ref(), v.as_ref(), &z, depth).unwrap();
            let s = series_phase_truncated(&z, &params, SeriesKind::KdV2, depth).unwrap();
            assert!(rel(h, s) < 1e-9, "depth {depth}: {h} vs {s}");
        }
    }
}

#[test]
fn kdv3_bch_reproduces_explicit_series() {
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let (t, v) = generating_hamiltonian(&params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
        let h = bch_mh(t.as_ref(), v.as_ref(), &z, 2).unwrap();
        let s = series_phase(&z, &params, SeriesKind::KdV3).unwrap();
        assert!(rel(h, s) < 1e-9, "{h} vs {s}");
    }
}

#[test]
fn kdv3_second_order_term_is_half_bracket_product() {
    let (e, q1, q2, p1, p2) = (2.0f64, 0.1, -0.3, 0.25, 0.05);
    let terms = series_phase_terms(&[q1, q2, p1, p2], e, SeriesKind::KdV3).unwrap();
    let (x1, x2, x3) = (e - p1, e + p2, e + p1 - p2);
    let (y0, y1, y2) = (e + q1 + q2, e - q1, e - q2);
    let prod = (1.0 / x3 - 1.0 / x1) * (1.0 / y0 - 1.0 / y1) - (1.0 / x3 - 1.0 / x2) * (1.0 / y0 - 1.0 / y2);
    assert!(rel(terms[1], -e * e / 2.0 * prod) < 1e-14);
}

#[test]
fn mkdv_bch_matches_explicit_series_after_alignment() {
    let params = MapParams::mkdv(2, 1.05).unwrap();
    let align = bch_alignment(&params, SeriesKind::MKdV2, 3).unwrap();
    assert!((align[0] - 8.0 * 2f64.ln()).abs() < 1e-10, "{align:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let z = sample_admissible(&params, &mut rng);
        let b = bch_series_coefficients(&params, &z, 3).unwrap();
        let p = series_phase_terms(&z, 0.0, SeriesKind::MKdV2).unwrap();
        for k in 0..3 {
            assert!((b[k] - align[k] - p[k]).abs() < 1e-8 * (1.0 + p[k].abs()), "order {}: {} vs {}", k + 1, b[k] - align[k], p[k]);
        }
    }
}

#[test]
fn mkdv_explicit_series_at_origin() {
    let params = MapParams::mkdv(2, 1.1).unwrap();
    let tau: f64 = 0.1;
    let l4 = 4f64.ln();
    let l = -2.0 * l4;
    let t1 = 2.0 * l;
    let t2 = -(l + 4.0 * 2.0 / 4.0);
    let t3 = 2.0 / 3.0 * ((3.0 * 4.0 + 2.0 * 14.0) / 16.0) + 2.0 / 3.0 * l;
    let expect = t1 * tau + t2 * tau * tau + t3 * tau.powi(3);
    let got = series_phase(&PhasePoint::canonical(vec![0.0, 0.0]), &params, SeriesKind::MKdV2).unwrap();
    assert!(rel(got, expect) < 1e-14);
}

#[test]
fn zero_grading_gives_zero_series() {
    let params = MapParams::kdv(2, 2.0, 0.0).unwrap();
    let z = PhasePoint::canonical(vec![0.4, -0.3]);
    assert_eq!(series_phase(&z, &params, SeriesKind::KdV2).unwrap(), 0.0);
}

#[test]
fn series_matching_all_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for params in [MapParams::kdv(2, 2.0, 0.05).unwrap(), MapParams::mkdv(2, 1.05).unwrap(), MapParams::kdv(3, 2.0, 0.05).unwrap()] {
        let kind = SeriesKind::for_params(&params).unwrap();
        for _ in 0..20 {
            let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
            let m = series_match(&z, &params, kind).unwrap();
            assert!(m.max_residual() < 1e-9, "{kind:?}: {m:?}");
        }
    }
}

#[test]
fn kdv3_invariant_series_has_no_second_order_term() {
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let z = PhasePoint::canonical(vec![0.1, -0.2, 0.3, 0.05]);
    let inv = maps::invariants(&z, &params).unwrap();
    let c = invariant_series_coefficients(&inv, &params, SeriesKind::KdV3, 3).unwrap();
    assert!(c[1].abs() < 1e-10 && c[2].abs() < 1e-10);
    assert!(rel(c[0], 2.0 * inv[0].ln()) < 1e-14);
}

#[test]
fn bch_defect_halving() {
    let params = MapParams::kdv(2, 2.0, 0.04).unwrap();
    let s = MHSeries::new(params, 3, MhSource::Bch).unwrap();
    let z0 = PhasePoint::canonical(vec![0.5, -0.3]);
    let t = defect_scan(&s, &z0, &[0.04, 0.02], 1.0).unwrap();
    let ratio = t.rows[0].defect / t.rows[1].defect;
    assert!((ratio / 16.0 - 1.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn explicit_series_defect_slopes() {
    let z2 = PhasePoint::canonical(vec![0.5, -0.3]);
    let s = MHSeries::new(MapParams::kdv(2, 2.0, 0.1).unwrap(), 4, MhSource::Explicit).unwrap();
    let t = defect_scan(&s, &z2, &[0.1, 0.05, 0.02, 0.01], 1.0).unwrap();
    let slope = t.fitted_slope.unwrap();
    assert!((slope - 5.0).abs() < 0.15, "{t:?}");

    let z3 = PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]);
    let s = MHSeries::new(MapParams::kdv(3, 2.0, 0.1).unwrap(), 2, MhSource::Explicit).unwrap();
    let t = defect_scan(&s, &z3, &[0.1, 0.05, 0.02, 0.01], 1.0).unwrap();
    let slope = t.fitted_slope.unwrap();
    assert!((slope - 3.0).abs() < 0.15, "{t:?}");
}

#[test]
fn invariant_form_is_conserved() {
    let s = MHSeries::new(MapParams::kdv(2, 2.0, 0.1).unwrap(), 5, MhSource::Invariant).unwrap();
    let t = defect_scan(&s, &PhasePoint::canonical(vec![0.5, -0.3]), &[0.1, 0.05], 1.0).unwrap();
    assert!(t.conserved && t.fitted_slope.is_none(), "{t:?}");
    assert!(t.to_csv().ends_with("fitted_slope,,conserved\n"));
}

#[test]
fn evaluator_gradient_matches_jets_of_formula() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let z = [0.3, -0.2];
    let bch = MHSeries::new(params, 4, MhSource::Bch).unwrap().evaluator();
    let explicit = MHSeries::new(params, 4, MhSource::Explicit).unwrap().evaluator();
    let x = kdvmh::jet_seed(&z, 2).unwrap();
    let a = bch.eval(&x).unwrap();
    let b = explicit.eval(&x).unwrap();
    for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
        assert!((u - v).abs() < 1e-12 * (1.0 + v.abs()));
    }
}
