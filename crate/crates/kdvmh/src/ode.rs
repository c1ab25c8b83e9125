//! Dormand–Prince 5(4) embedded Runge–Kutta integrator with adaptive steps.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("too many steps ({steps}) before reaching t = {t_end}")]
    TooManySteps { steps: usize, t_end: f64 },
    #[error("right-hand side failed at t = {t}: {msg}")]
    Rhs { t: f64, msg: String },
    #[error("invalid tolerance {0}")]
    BadTolerance(f64),
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrate y' = f(t, y) from t0 to t1 (either direction) with mixed local tolerance `tol`.
pub fn integrate<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, tol: f64) -> Result<(Vec<f64>, OdeStats), OdeError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, String>,
{
    if !(tol > 0.0) {
        return Err(OdeError::BadTolerance(tol));
    }
    let mut stats = OdeStats { accepted: 0, rejected: 0 };
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 == t0 {
        return Ok((y, stats));
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut h = span.min(0.01 * span.max(1e-3)).max(span * 1e-3) * dir;
    let mut call = |t: f64, y: &[f64]| f(t, y).map_err(|msg| OdeError::Rhs { t, msg });
    let mut k: Vec<Vec<f64>> = vec![call(t, &y)?];
    let max_steps = 1_000_000;
    while (t1 - t) * dir > 0.0 {
        if stats.accepted + stats.rejected > max_steps {
            return Err(OdeError::TooManySteps { steps: max_steps, t_end: t1 });
        }
        // a remainder at roundoff level of t counts as arrival
        if (t1 - t).abs() <= 8.0 * f64::EPSILON * t1.abs().max(span) {
            break;
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() < 1e-14 * (t.abs() + span) {
            return Err(OdeError::StepUnderflow { t });
        }
        k.truncate(1);
        let mut ok = true;
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            match call(t + C[s] * h, &ys) {
                Ok(v) => k.push(v),
                Err(e) => {
                    // a failing stage usually means the trial step left the domain
                    if h.abs() < 1e-12 * span {
                        return Err(e);
                    }
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            stats.rejected += 1;
            h *= 0.25;
            continue;
        }
        let mut y5 = y.clone();
        let mut errn: f64 = 0.0;
        for i in 0..n {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let sc = tol * (1.0 + y[i].abs().max(y5[i].abs()));
            errn = errn.max((h * (d5 - d4)).abs() / sc);
        }
        if errn <= 1.0 {
            t += h;
            y = y5;
            let last = k.pop().expect("seven stages");
            k.clear();
            k.push(last);
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if errn == 0.0 { 5.0 } else { (0.9 * errn.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok((y, stats))
}
