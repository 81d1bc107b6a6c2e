//! Error norms, empirical convergence orders, and coefficient fits used to
//! compare approximations against exact or reference prices.
//!
//! Norms act on log-prices: for an approximation `f` and a reference `g` on a
//! uniform rate grid with spacing `h`,
//!
//! * sup-norm: `max_i |f(r_i) - g(r_i)|`
//! * L2-norm: `sqrt(h * sum_i (f(r_i) - g(r_i))^2)`
//!
//! and the empirical order of convergence between maturities `tau_i > tau_{i+1}`
//! is `ln(err_i / err_{i+1}) / ln(tau_i / tau_{i+1})`.

use crate::{Error, Result};

/// Uniform rate grid description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
}

impl RateGrid {
    pub fn new(r_min: f64, r_max: f64, n: usize) -> Self {
        assert!(n >= 2 && r_max > r_min);
        RateGrid { r_min, r_max, n }
    }

    pub fn spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.n).map(move |i| self.r_min + h * i as f64)
    }
}

/// Sup- and L2-norms of an approximation error over a rate grid, per
/// maturity, with the empirical convergence orders between consecutive
/// maturities.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub taus: Vec<f64>,
    pub sup: Vec<f64>,
    pub l2: Vec<f64>,
    /// `eoc_sup[i]` is the order observed between `taus[i]` and `taus[i+1]`.
    pub eoc_sup: Vec<f64>,
    pub eoc_l2: Vec<f64>,
    /// Grid points skipped because one of the evaluations failed (must stay
    /// below one percent of the grid or the whole report errors out).
    pub skipped: usize,
}

/// Compare two log-price functions over `grid x taus`.
///
/// Either function may fail at isolated points (e.g. a domain edge); those
/// points are skipped. If more than one percent of all evaluations fail, the
/// comparison aborts instead of silently reporting norms over a sparse set.
pub fn grid_error_norms<F, G>(
    mut approx: F,
    mut exact: G,
    grid: &RateGrid,
    taus: &[f64],
) -> Result<ErrorReport>
where
    F: FnMut(f64, f64) -> Result<f64>,
    G: FnMut(f64, f64) -> Result<f64>,
{
    if taus.is_empty() {
        return Err(Error::domain("grid_error_norms: no maturities supplied"));
    }
    let h = grid.spacing();
    let mut sup = Vec::with_capacity(taus.len());
    let mut l2 = Vec::with_capacity(taus.len());
    let mut skipped = 0usize;
    let total = taus.len() * grid.n;
    let budget = total / 100;

    for &tau in taus {
        let mut worst = 0.0f64;
        let mut sum_sq = 0.0f64;
        for r in grid.points() {
            match (approx(r, tau), exact(r, tau)) {
                (Ok(a), Ok(e)) => {
                    let d = a - e;
                    worst = worst.max(d.abs());
                    sum_sq += d * d;
                }
                _ => {
                    skipped += 1;
                    if skipped > budget {
                        return Err(Error::numerical(format!(
                            "grid_error_norms: more than 1% of evaluations failed \
                             ({skipped} of {total})"
                        )));
                    }
                }
            }
        }
        sup.push(worst);
        l2.push((h * sum_sq).sqrt());
    }

    let eoc_sup = eoc(taus, &sup);
    let eoc_l2 = eoc(taus, &l2);
    Ok(ErrorReport {
        taus: taus.to_vec(),
        sup,
        l2,
        eoc_sup,
        eoc_l2,
        skipped,
    })
}

/// Empirical convergence orders between consecutive `(tau, err)` pairs.
/// Produces `NaN` where an error vanishes (the order is then undefined).
pub fn eoc(taus: &[f64], errs: &[f64]) -> Vec<f64> {
    assert_eq!(taus.len(), errs.len());
    taus.windows(2)
        .zip(errs.windows(2))
        .map(|(t, e)| {
            if e[0] > 0.0 && e[1] > 0.0 && t[0] != t[1] {
                (e[0] / e[1]).ln() / (t[0] / t[1]).ln()
            } else {
                f64::NAN
            }
        })
        .collect()
}

/// Least-squares slope of `ln err` against `ln tau`: the observed global
/// order of an `err ~ c tau^p` relationship.
pub fn fit_slope(taus: &[f64], errs: &[f64]) -> Result<f64> {
    assert_eq!(taus.len(), errs.len());
    let pairs: Vec<(f64, f64)> = taus
        .iter()
        .zip(errs)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&t, &e)| (t.ln(), e.ln()))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::numerical(
            "fit_slope: need at least two positive errors",
        ));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &pairs {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        return Err(Error::numerical("fit_slope: degenerate maturity set"));
    }
    Ok(num / den)
}

/// Estimate the leading coefficient `c` of a signed expansion
/// `err(tau) = c tau^order + d tau^{order+1} + ...` from samples at small
/// maturities: regress `err / tau^order` linearly on `tau` and return the
/// intercept.
pub fn fit_power_coefficient(taus: &[f64], errs: &[f64], order: i32) -> Result<f64> {
    assert_eq!(taus.len(), errs.len());
    if taus.len() < 2 {
        return Err(Error::numerical(
            "fit_power_coefficient: need at least two samples",
        ));
    }
    let xs: Vec<f64> = taus.to_vec();
    let ys: Vec<f64> = taus
        .iter()
        .zip(errs)
        .map(|(&t, &e)| e / t.powi(order))
        .collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    if den == 0.0 {
        return Err(Error::numerical("fit_power_coefficient: degenerate taus"));
    }
    let slope = num / den;
    Ok(mean_y - slope * mean_x)
}
