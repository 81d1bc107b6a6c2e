//! Adaptive Dormand-Prince 5(4) integration for small ODE systems.

use crate::{Error, Result};

/// Error-control tolerances for [`dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerances { rtol, atol }
    }
}

const MAX_STEPS: usize = 1_000_000;

/// Integrate `y' = f(t, y)` from `t0` to `t1` with the Dormand-Prince 5(4)
/// embedded pair and a standard step controller. Returns `y(t1)`.
///
/// `f(t, y, dy)` writes the derivative into `dy`. The integrator is meant for
/// the small stiff-free systems that arise here (Riccati pairs with two or
/// three components), not as a general-purpose solver.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], tol: Tolerances) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    if t1 == t0 {
        return Ok(y0.to_vec());
    }
    let direction = (t1 - t0).signum();
    let span = (t1 - t0).abs();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut y_stage = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    let mut y4 = vec![0.0; n];

    f(t, &y, &mut k[0]);
    let mut h = initial_step(&y, &k[0], span, tol) * direction;

    for _ in 0..MAX_STEPS {
        if (t - t1) * direction >= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * direction > 0.0 {
            h = t1 - t;
        }

        for stage in 1..7 {
            let (c, row) = STAGES[stage - 1];
            for i in 0..n {
                let mut acc = 0.0;
                for (j, &a) in row.iter().enumerate() {
                    acc += a * k[j][i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            f(t + c * h, &y_stage, &mut k[stage]);
        }

        let mut err_sq = 0.0;
        for i in 0..n {
            let mut acc5 = 0.0;
            let mut acc4 = 0.0;
            for j in 0..7 {
                acc5 += B5[j] * k[j][i];
                acc4 += B4[j] * k[j][i];
            }
            y5[i] = y[i] + h * acc5;
            y4[i] = y[i] + h * acc4;
            let scale = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4[i]) / scale;
            err_sq += e * e;
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            h *= 0.25;
            if h.abs() < 1e-14 * span.max(1.0) {
                return Err(Error::numerical(
                    "dopri5: step size collapsed on non-finite error estimate",
                ));
            }
            continue;
        }

        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            // First-same-as-last: the 7th stage derivative is f at (t, y5).
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if h.abs() < 1e-14 * span.max(1.0) {
                return Err(Error::numerical("dopri5: step size underflow"));
            }
            // Step rejected; k[0] still holds f(t, y).
        }
    }
    Err(Error::numerical("dopri5: exceeded maximum step count"))
}

fn initial_step(y: &[f64], dy: &[f64], span: f64, tol: Tolerances) -> f64 {
    let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dnorm = dy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = if dnorm > 0.0 {
        (tol.atol + tol.rtol * ynorm).max(1e-12) / dnorm
    } else {
        span * 1e-3
    };
    h.min(span).max(span * 1e-10)
}

// Butcher tableau for Dormand-Prince 5(4): stage times with the coupling rows,
// then the 5th-order and embedded 4th-order weights.
const STAGES: [(f64, &[f64]); 6] = [
    (1.0 / 5.0, &[1.0 / 5.0]),
    (3.0 / 10.0, &[3.0 / 40.0, 9.0 / 40.0]),
    (4.0 / 5.0, &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0]),
    (
        8.0 / 9.0,
        &[
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
        ],
    ),
    (
        1.0,
        &[
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
        ],
    ),
    (
        1.0,
        &[
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ),
];

const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];
