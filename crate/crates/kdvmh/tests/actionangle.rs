use kdvmh::actionangle::*;
use kdvmh::maps::{self, sample_admissible, MapParams, PhasePoint};
use kdvmh::mh::{series_invariant, SeriesKind};
use kdvmh::spectral;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn q() -> kdvmh::quad::QuadratureSpec {
    default_quad()
}

#[test]
fn kdv_landing_on_random_seeds() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
        let r = landing_check(&z, &params, &q(), 1e-11).unwrap();
        assert!(r.distance < 1e-8, "{r:?}");
    }
}

#[test]
fn mkdv_landing_on_random_seeds() {
    for rho in [1.1, 0.9] {
        let params = MapParams::mkdv(2, rho).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
            let r = landing_check(&z, &params, &q(), 1e-11).unwrap();
            assert!(r.distance < 1e-8, "rho {rho}: {r:?}");
        }
    }
}

#[test]
fn genus_two_landing() {
    let params = MapParams::kdv(3, 2.0, 0.03).unwrap();
    let z = PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]);
    let r = landing_check(&z, &params, &q(), 1e-11).unwrap();
    assert!(r.distance < 1e-7, "{r:?}");
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
        let r = landing_check(&z, &params, &q(), 1e-11).unwrap();
        assert!(r.distance < 1e-7, "{r:?}");
    }
}

#[test]
fn flow_conserves_invariants() {
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let z = PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]);
    let f = frequencies_g2_at(&z, &params, &q()).unwrap();
    assert!((f.freq[1] - f.lambda_star.unwrap() * f.freq[0]).abs() < 1e-10 * f.freq[1].abs());
    let end = interpolating_flow_g2(&z, &params, f.lambda_star.unwrap(), 3.0 * f.freq[0], 1e-11).unwrap();
    let a = spectral::spectral_data(&z, &params).unwrap().invariants;
    let b = spectral::spectral_data(&end, &params).unwrap().invariants;
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
    }
    let same = interpolating_flow_g2(&z, &params, 0.3, 0.0, 1e-11).unwrap();
    assert_eq!(same.coords, z.coords);
}

#[test]
fn kdv_frequency_matches_time_of_flight_and_angle() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let z = PhasePoint::canonical(vec![0.0, -0.3]);
    let pval = maps::invariants(&z, &params).unwrap()[0];
    let nu = frequency_g1_kdv(pval, &params, &q()).unwrap();
    let zb = maps::apply(&params, &z).unwrap();
    let qbar = kdv_upper_limit(pval, &params).unwrap();
    assert!((zb.coords[0] - qbar).abs() < 1e-14);
    let qa = angle_g1_kdv(zb.coords[0], pval, &params, &q()).unwrap();
    assert!((qa - nu).abs() < 1e-8);
    // points along the same branch advance by ν as well
    let z1 = PhasePoint::canonical(vec![-0.05, -0.3]);
    let p1 = maps::invariants(&z1, &params).unwrap()[0];
    let n1 = frequency_g1_kdv(p1, &params, &q()).unwrap();
    let z1b = maps::apply(&params, &z1).unwrap();
    let d = angle_g1_kdv(z1b.coords[0], p1, &params, &q()).unwrap() - angle_g1_kdv(z1.coords[0], p1, &params, &q()).unwrap();
    assert!((d - n1).abs() < 1e-8, "{d} vs {n1}");
}

#[test]
fn mkdv_upper_limit_is_the_image_of_the_axis() {
    let params = MapParams::mkdv(2, 1.2).unwrap();
    let pval = 20.0;
    let (qbar, _) = mkdv_upper_limit(pval, params.rho).unwrap();
    let rho = params.rho;
    let chp = (pval - 4.0 * rho) / (2.0 * (1.0 + rho).powi(2));
    let p0 = chp.acosh();
    let hits: Vec<f64> = [p0, -p0]
        .iter()
        .map(|&p| maps::apply(&params, &PhasePoint::canonical(vec![0.0, p])).unwrap().coords[0])
        .collect();
    assert!(hits.iter().any(|h| (h - qbar).abs() < 1e-12), "{hits:?} vs {qbar}");
    let nu = frequency_g1_mkdv(pval, &params, &q()).unwrap();
    let qa = angle_g1_mkdv(qbar, pval, &params, &q()).unwrap();
    assert!((qa - nu).abs() < 1e-8);
}

#[test]
fn mh_derivative_is_frequency() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let (pa, pb, h) = (-6.0, -3.0, 1e-3);
    let d = (mh_g1_kdv(pa, pb + h, &params, &q()).unwrap() - mh_g1_kdv(pa, pb - h, &params, &q()).unwrap()) / (2.0 * h);
    assert!((d - frequency_g1_kdv(pb, &params, &q()).unwrap()).abs() < 1e-6);
    assert_eq!(mh_g1_kdv(pa, pa, &params, &q()).unwrap(), 0.0);
}

fn slope(prev: f64, cur: f64) -> f64 {
    (prev.abs() / cur.abs()).log2()
}

#[test]
fn closed_form_matches_invariant_series() {
    let (pa, pb) = (-6.0, -2.0);
    let mut last = None;
    for d in [0.08, 0.04, 0.02] {
        let params = MapParams::kdv(2, 2.0, d).unwrap();
        let mh = mh_g1_kdv(pa, pb, &params, &q()).unwrap();
        let s = series_invariant(&[pb], &params, SeriesKind::KdV2).unwrap() - series_invariant(&[pa], &params, SeriesKind::KdV2).unwrap();
        let r = mh - s;
        if let Some(p) = last {
            assert!(slope(p, r) >= 6.0, "KdV slope {}", slope(p, r));
        }
        last = Some(r);
    }
    let (pa, pb) = (16.0, 20.0);
    let mut last = None;
    for t in [0.08, 0.04, 0.02] {
        let params = MapParams::mkdv(2, 1.0 + t).unwrap();
        let mh = mh_g1_mkdv(pa, pb, &params, &q()).unwrap();
        let s = series_invariant(&[pb], &params, SeriesKind::MKdV2).unwrap() - series_invariant(&[pa], &params, SeriesKind::MKdV2).unwrap();
        let r = mh - s;
        if let Some(p) = last {
            assert!(slope(p, r) >= 4.0 - 0.1, "MKdV slope {}", slope(p, r));
        }
        last = Some(r);
    }
}

#[test]
fn abel_step_identity() {
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let orbit = maps::orbit(&params, &PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]), 30).unwrap();
    for z in &orbit[..30] {
        let r = abel_step_sums(z, &params, &q()).unwrap();
        for v in &r.residuals {
            assert!(*v < 1e-7, "{r:?}");
        }
    }
}

#[test]
fn conservative_frequency_field() {
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let z = PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]);
    let (p1, p2) = trace_coefficients_g2(&z, &params).unwrap();
    let (h1, h2) = (0.05 * p1.abs(), 0.05 * p2.abs());
    let lp = [(p1, p2), (p1 + h1, p2), (p1 + h1, p2 + h2), (p1, p2 + h2), (p1, p2)];
    let loop_int = mh_g2(&lp, &params, &q()).unwrap();
    assert!(loop_int.abs() < 1e-7, "{loop_int}");
    let cross = frequency_cross_derivative(p1, p2, 1e-3 * p1.abs(), &params, &q()).unwrap();
    assert!(cross < 1e-6, "{cross}");
}

#[test]
fn jacobi_inversion_along_flow() {
    let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let z = PhasePoint::canonical(vec![0.2, -0.1, 0.3, 0.15]);
    let f = frequencies_g2_at(&z, &params, &q()).unwrap();
    let r = jacobi_inversion_check(&z, &params, f.lambda_star.unwrap(), f.freq[0], 20, &q(), 1e-11).unwrap();
    assert!(r.max_residual() < 1e-6, "{r:?}");
}

#[test]
fn generating_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for p in [2usize, 3] {
        let params = MapParams::kdv(p, 2.0, 0.05).unwrap();
        for _ in 0..10 {
            let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
            for r in generating_function_checks(&z, &params, &q()).unwrap() {
                assert!(r.residual.abs() < 1e-8, "P={p} {z:?}: {r:?}");
            }
        }
    }
}

#[test]
fn commuting_diagram() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let d = commuting_diagram_g1(&PhasePoint::canonical(vec![0.4, -0.2]), &params, &q(), 1e-11).unwrap();
    assert!(d < 1e-7);
}
