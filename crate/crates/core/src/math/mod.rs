//! Shared numerical kernels: stable exponential helpers, an adaptive
//! Dormand-Prince integrator, Gauss-Legendre quadrature, Brent minimization,
//! tridiagonal solves, and dense polynomial arithmetic in both plain and
//! double-double precision.
//!
//! Nothing here is model-specific; the pricing and calibration modules build
//! on these primitives.

pub mod dd;
pub mod ode;
pub mod optim;
pub mod poly;
pub mod quad;
pub mod tridiag;

/// `(e^x - 1) / x`, continuous at `x = 0`.
///
/// Built on `exp_m1`, so it keeps full relative accuracy for tiny `|x|` where
/// the naive quotient would cancel catastrophically.
#[inline]
pub fn expm1_div(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// `\int_0^tau e^{lambda s} ds = (e^{lambda tau} - 1) / lambda`, stable as
/// `lambda -> 0` where the integral degenerates to `tau`.
#[inline]
pub fn int_exp(lambda: f64, tau: f64) -> f64 {
    tau * expm1_div(lambda * tau)
}

/// Median of a slice. Returns `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median: NaN in input"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Solve a small dense system `A x = b` in place by Gaussian elimination with
/// partial pivoting. `a` is row-major `n x n`. Returns `None` if a pivot falls
/// below `1e-300` (numerically singular).
pub fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = row;
            }
        }
        if pivot_abs < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in row + 1..n {
            sum -= a[row * n + k] * x[k];
        }
        x[row] = sum / a[row * n + row];
    }
    Some(x)
}
