//! One-dimensional minimization: Brent's method (golden section with
//! parabolic interpolation) over a bracketing interval.

use crate::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt(5)) / 2

/// Result of a scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct MinResult {
    pub x: f64,
    pub f: f64,
    pub iterations: usize,
}

/// Minimize `f` on `[a, b]` with Brent's method.
///
/// Converges when successive steps shrink below `xtol` (plus a relative
/// floor). The objective may fail; its error is propagated. Assumes `f` is
/// unimodal-ish on the bracket; for a multimodal objective this finds a local
/// minimum, which callers guard against by scanning starts where it matters.
pub fn brent_min<F>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<MinResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a < b) {
        return Err(Error::domain(format!("brent_min: invalid bracket [{a}, {b}]")));
    }
    let (mut lo, mut hi) = (a, b);
    let mut x = lo + GOLDEN * (hi - lo);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let tol1 = xtol.max(1e-14 * x.abs());
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() + 0.5 * (hi - lo) <= tol2 {
            return Ok(MinResult {
                x,
                f: fx,
                iterations: iter,
            });
        }

        let mut use_golden = true;
        if e.abs() > tol1 {
            // Fit a parabola through (v, fv), (w, fw), (x, fx).
            let r = (x - w) * (fx - fv);
            let q0 = (x - v) * (fx - fw);
            let p0 = (x - v) * q0 - (x - w) * r;
            let q = 2.0 * (q0 - r);
            let (p, q) = if q > 0.0 { (-p0, q) } else { (p0, -q) };
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (lo - x) && p < q * (hi - x) {
                d = p / q;
                let u = x + d;
                if (u - lo) < tol2 || (hi - u) < tol2 {
                    d = if mid > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < mid { hi - x } else { lo - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u)?;

        if fu <= fx {
            if u < x {
                hi = x;
            } else {
                lo = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::numerical(format!(
        "brent_min: no convergence in {max_iter} iterations (last x = {x})"
    )))
}
