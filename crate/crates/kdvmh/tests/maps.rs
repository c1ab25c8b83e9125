use kdvmh::maps::*;
use kdvmh::{MapParams, PhasePoint};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Direct transcriptions of the maps, used as oracles.
fn kdv2_direct(q: f64, p: f64, e: f64, d: f64) -> (f64, f64) {
    let pb = p + 2.0 * e * d * q / (e * e - q * q);
    let qb = q - 2.0 * e * d * pb / (e * e - pb * pb);
    (qb, pb)
}

fn kdv3_direct(z: [f64; 4], e: f64, d: f64) -> [f64; 4] {
    let [q1, q2, p1, p2] = z;
    let w = e * d;
    let pb1 = p1 + w / (e - q1) - w / (e + q1 + q2);
    let pb2 = p2 + w / (e - q2) - w / (e + q1 + q2);
    let qb1 = q1 - w / (e - pb1) + w / (e + pb1 - pb2);
    let qb2 = q2 + w / (e + pb2) - w / (e + pb1 - pb2);
    [qb1, qb2, pb1, pb2]
}

fn mkdv2_direct(q: f64, p: f64, rho: f64) -> (f64, f64) {
    let pb = p + 2.0 * ((1.0 + rho * q.exp()) / (rho + q.exp())).ln();
    let qb = q + 2.0 * ((rho + pb.exp()) / (1.0 + rho * pb.exp())).ln();
    (qb, pb)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn supported() -> Vec<MapParams> {
    vec![MapParams::kdv(2, 2.0, 0.1).unwrap(), MapParams::kdv(3, 2.0, 0.05).unwrap(), MapParams::mkdv(2, 1.1).unwrap()]
}

#[test]
fn golden_images() {
    let kdv2 = MapParams::kdv(2, 2.0, 0.1).unwrap();
    let img = kdv_map_p2(&PhasePoint::canonical(vec![0.5, 0.3]), &kdv2).unwrap();
    let (qb, pb) = kdv2_direct(0.5, 0.3, 2.0, 0.1);
    assert!((img.coords[0] - qb).abs() < 1e-15 && (img.coords[1] - pb).abs() < 1e-15);
    assert!((img.coords[0] - 0.4635283458155085).abs() < 1e-14, "{:?}", img.coords);
    assert!((img.coords[1] - 0.35333333333333333).abs() < 1e-14, "{:?}", img.coords);

    let kdv3 = MapParams::kdv(3, 2.0, 0.05).unwrap();
    let z = [0.2, -0.1, 0.3, 0.15];
    let img = kdv_map_p3(&PhasePoint::canonical(z.to_vec()), &kdv3).unwrap();
    let want = kdv3_direct(z, 2.0, 0.05);
    for k in 0..4 {
        assert!((img.coords[k] - want[k]).abs() < 1e-15);
    }

    let mk = MapParams::mkdv(2, 1.1).unwrap();
    let img = mkdv_map_p2(&PhasePoint::canonical(vec![0.4, -0.2]), &mk).unwrap();
    let (qb, pb) = mkdv2_direct(0.4, -0.2, 1.1);
    assert!((img.coords[0] - qb).abs() < 1e-15 && (img.coords[1] - pb).abs() < 1e-15);
}

#[test]
fn axis_images_match_closed_forms() {
    let params = MapParams::kdv(2, 2.0, 0.1).unwrap();
    let (e, d) = (2.0f64, 0.1);
    for p in [0.3, -0.7, 1.1] {
        let z = PhasePoint::canonical(vec![0.0, p]);
        let big_p = invariants(&z, &params).unwrap()[0];
        let qb = 2.0 * e * e * d * (-big_p).sqrt() / (e.powi(4) + big_p);
        let img = kdv_map_p2(&z, &params).unwrap();
        assert!((img.coords[0].abs() - qb).abs() < 1e-14, "{} vs {qb}", img.coords[0]);
    }
    let rho = 1.1f64;
    let params = MapParams::mkdv(2, rho).unwrap();
    for p in [0.3, -0.7] {
        let z = PhasePoint::canonical(vec![0.0, p]);
        let big_p = invariants(&z, &params).unwrap()[0];
        let disc = ((2.0 * rho * rho + big_p + 2.0) * (big_p - 2.0 * rho * rho - 8.0 * rho - 2.0)).sqrt();
        let delta = (big_p - 4.0 * rho - disc) / (2.0 * (1.0 + rho) * (1.0 + rho));
        let qb = 2.0 * ((rho + delta) / (1.0 + rho * delta)).ln();
        let img = mkdv_map_p2(&z, &params).unwrap();
        assert!((img.coords[0].abs() - qb.abs()).abs() < 1e-13, "{} vs {qb}", img.coords[0]);
    }
}

#[test]
fn invariants_at_special_points() {
    let params = MapParams::kdv(2, 2.0, 0.1).unwrap();
    let i = invariants(&PhasePoint::canonical(vec![0.0, 0.7]), &params).unwrap()[0];
    assert!((i + 4.0 * 0.49).abs() < 1e-15);
    let rho = 1.3;
    let i = invariants(&PhasePoint::canonical(vec![0.0, 0.0]), &MapParams::mkdv(2, rho).unwrap()).unwrap()[0];
    assert!((i - (2.0 + 8.0 * rho + 2.0 * rho * rho)).abs() < 1e-14);
}

#[test]
fn jet_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for params in supported() {
        for _ in 0..10 {
            let z = sample_admissible(&params, &mut rng);
            let jac = jacobian(&params, &z).unwrap();
            for col in 0..z.len() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[col] += h;
                zm[col] -= h;
                let fp = apply(&params, &PhasePoint::canonical(zp)).unwrap().coords;
                let fm = apply(&params, &PhasePoint::canonical(zm)).unwrap().coords;
                for row in 0..z.len() {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    assert!((jac[row][col] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{params:?} J[{row}][{col}] {} vs {fd}", jac[row][col]);
                }
            }
        }
    }
}

#[test]
fn symplectic_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for params in supported() {
        for _ in 0..100 {
            let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
            let d = symplecticity_check(&params, &z).unwrap();
            assert!(d < 1e-12, "{params:?}: {d:e}");
        }
        let id = params.with_grading(0.0);
        let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
        assert_eq!(symplecticity_check(&id, &z).unwrap(), 0.0);
    }
}

#[test]
fn map_is_symplectic_euler_of_generating_hamiltonian() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for params in supported() {
        let split = SplitHamiltonian::new(params).unwrap();
        let tol = if params.family == kdvmh::Family::MKdV { 1e-9 } else { 1e-11 };
        for _ in 0..100 {
            let z = sample_admissible(&params, &mut rng);
            let e = euler_step(&split, &z).unwrap();
            let m = apply(&params, &PhasePoint::canonical(z)).unwrap().coords;
            for (a, b) in e.iter().zip(&m) {
                assert!((a - b).abs() < tol, "{params:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn generating_hamiltonian_closed_forms() {
    let (e, d) = (2.0f64, 0.1);
    let (t, v) = generating_hamiltonian(&MapParams::kdv(2, e, d).unwrap()).unwrap();
    let z = [0.5, 0.3];
    assert!(rel(v.value_at(&z).unwrap(), e * d * (e * e - 0.25f64).ln()) < 1e-15);
    assert!(rel(t.value_at(&z).unwrap(), e * d * (e * e - 0.09f64).ln()) < 1e-15);
    let d = 0.05;
    let (t, v) = generating_hamiltonian(&MapParams::kdv(3, e, d).unwrap()).unwrap();
    let [q1, q2, p1, p2] = [0.2, -0.1, 0.3, 0.15];
    let zz = [q1, q2, p1, p2];
    let vv = e * d * ((e + q1 + q2) * (e - q1) * (e - q2)).ln();
    let tt = e * d * ((e + p1 - p2) * (e - p1) * (e + p2)).ln();
    assert!(rel(v.value_at(&zz).unwrap(), vv) < 1e-15);
    assert!(rel(t.value_at(&zz).unwrap(), tt) < 1e-15);
    assert!(generating_hamiltonian(&MapParams::kdv(4, e, d).unwrap()).is_err());
}

#[test]
fn general_period_restricts_to_explicit_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for params in supported() {
        for _ in 0..20 {
            let z = sample_admissible(&params, &mut rng);
            let direct = apply(&params, &PhasePoint::canonical(z.clone())).unwrap();
            let red = canonical_to_reduced(&z, params.period).unwrap();
            let via = reduced_to_canonical(&apply(&params, &red).unwrap(), params.period).unwrap();
            for (a, b) in direct.coords.iter().zip(&via.coords) {
                assert!((a - b).abs() < 1e-13, "{params:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn constraint_violation_rejected() {
    let params = MapParams::kdv(4, 2.0, 0.05).unwrap();
    let z = PhasePoint::reduced(vec![0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(matches!(apply(&params, &z), Err(MapError::InvalidState(_))));
}

#[test]
fn mkdv_period_three_keeps_constraints() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let params = MapParams::mkdv(3, 1.05).unwrap();
    let z = sample_reduced(3, 0.5, &mut rng);
    let img = mkdv_map_generalp(&z, &params).unwrap();
    let (sx, sy) = img.constraint_sums();
    assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
}

#[test]
fn orbit_reports_failing_step() {
    let params = MapParams::kdv(2, 2.0, 0.1).unwrap();
    let err = orbit(&params, &PhasePoint::canonical(vec![2.0, 0.1]), 10).unwrap_err();
    assert_eq!(err.step, 1);
    assert!(matches!(err.source, MapError::Singular { name: "eps^2 - q^2", .. }));
}

#[test]
fn long_orbit_stays_on_level_set() {
    let params = MapParams::kdv(2, 2.0, 0.05).unwrap();
    let z0 = PhasePoint::canonical(vec![0.3, -0.4]);
    let i0 = invariants(&z0, &params).unwrap()[0];
    let mut z = z0;
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        z = apply(&params, &z).unwrap();
        worst = worst.max(rel(invariants(&z, &params).unwrap()[0], i0));
    }
    assert!(worst < 1e-10, "{worst:e}");
}

proptest! {
    #[test]
    fn invariants_conserved(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for params in supported() {
            let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
            let zb = apply(&params, &z).unwrap();
            let a = invariants(&z, &params).unwrap();
            let b = invariants(&zb, &params).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert!(rel(*u, *v) < 1e-11, "{:?}: {} vs {}", params, u, v);
            }
        }
    }

    #[test]
    fn reduced_constraints_preserved(seed in any::<u64>(), period in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = sample_reduced(period, 0.3, &mut rng);
        for params in [MapParams::kdv(period, 2.0, 0.05).unwrap(), MapParams::mkdv(period, 1.2).unwrap()] {
            let img = apply(&params, &z).unwrap();
            let (sx, sy) = img.constraint_sums();
            prop_assert!(sx.abs() <= 1e-12 && sy.abs() <= 1e-12);
        }
    }

    #[test]
    fn both_genus_two_variants_conserved(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MapParams::kdv(3, 2.0, 0.05).unwrap();
        let z = PhasePoint::canonical(sample_admissible(&params, &mut rng));
        let zb = apply(&params, &z).unwrap();
        for v in [InvariantVariant::Section6, InvariantVariant::Section3] {
            let a = invariants_variant(&z, &params, v).unwrap();
            let b = invariants_variant(&zb, &params, v).unwrap();
            for (u, w) in a.iter().zip(&b) {
                prop_assert!(rel(*u, *w) < 1e-11);
            }
        }
    }
}
