//! Taylor power-series bond pricing for one-factor models.
//!
//! Writing the bond price and its logarithm as series in time to maturity,
//!
//! `P(tau, r) = sum_j c_j(r) tau^j`,  `ln P(tau, r) = sum_j k_j(r) tau^j`,
//!
//! the pricing PDE turns the coefficient functions into recursions:
//!
//! `(j+1) c_{j+1} = (sigma^2(r)/2) c_j'' + mu(r) c_j' - r c_j`, `c_0 = 1`
//!
//! for the price, and for the log-price (whose PDE carries the squared
//! gradient)
//!
//! `(j+1) k_{j+1} = (sigma^2(r)/2) [ sum_{i=1}^{j-1} k_i' k_{j-i}' + k_j'' ] + mu(r) k_j'`,
//! `k_1 = -r`.
//!
//! Every family handled here has drift and squared volatility in the span of
//! `r^p (ln r)^q` terms, and that span is closed under differentiation and
//! multiplication, so the recursions are carried out exactly (up to float
//! rounding) in that basis by [`SeriesInR`].

use crate::models::ShortRateModel1F;
use crate::{Error, Result};

/// One term `coef * r^p * (ln r)^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub p: f64,
    pub q: u32,
}

/// A finite sum of `coef * r^p (ln r)^q` terms with unique `(p, q)` keys.
///
/// The basis is closed under addition, multiplication, and differentiation:
///
/// `d/dr [r^p (ln r)^q] = p r^{p-1} (ln r)^q + q r^{p-1} (ln r)^{q-1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesInR {
    terms: Vec<Term>,
}

/// Coefficients below this magnitude are dropped to bound term growth.
const PRUNE_THRESHOLD: f64 = 1e-300;

impl SeriesInR {
    pub fn zero() -> Self {
        SeriesInR { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        SeriesInR::from_terms(vec![Term { coef: c, p: 0.0, q: 0 }])
    }

    /// The monomial `coef * r^p (ln r)^q`.
    pub fn term(coef: f64, p: f64, q: u32) -> Self {
        SeriesInR::from_terms(vec![Term { coef, p, q }])
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut s = SeriesInR { terms };
        s.normalize();
        s
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sort by key, merge duplicates, prune negligible coefficients.
    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| {
            a.p.partial_cmp(&b.p)
                .expect("series: NaN power")
                .then(a.q.cmp(&b.q))
        });
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.p == t.p && last.q == t.q => last.coef += t.coef,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef.abs() >= PRUNE_THRESHOLD);
        self.terms = merged;
    }

    pub fn add(&self, other: &SeriesInR) -> SeriesInR {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        SeriesInR::from_terms(terms)
    }

    pub fn scale(&self, s: f64) -> SeriesInR {
        SeriesInR::from_terms(
            self.terms
                .iter()
                .map(|t| Term { coef: t.coef * s, ..*t })
                .collect(),
        )
    }

    pub fn mul(&self, other: &SeriesInR) -> SeriesInR {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term {
                    coef: a.coef * b.coef,
                    p: a.p + b.p,
                    q: a.q + b.q,
                });
            }
        }
        SeriesInR::from_terms(terms)
    }

    pub fn derivative(&self) -> SeriesInR {
        let mut terms = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.p != 0.0 {
                terms.push(Term {
                    coef: t.coef * t.p,
                    p: t.p - 1.0,
                    q: t.q,
                });
            }
            if t.q > 0 {
                terms.push(Term {
                    coef: t.coef * t.q as f64,
                    p: t.p - 1.0,
                    q: t.q - 1,
                });
            }
        }
        SeriesInR::from_terms(terms)
    }

    /// Evaluate at `r`. Requires `r > 0` when any term carries `ln r`, a
    /// negative power, or a non-integer power; `r >= 0` otherwise.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if r < 0.0 {
            return Err(Error::domain(format!(
                "series evaluation requires nonnegative r, got {r}"
            )));
        }
        if r == 0.0 {
            let needs_positive = self
                .terms
                .iter()
                .any(|t| t.q > 0 || t.p < 0.0);
            if needs_positive {
                return Err(Error::domain(
                    "series evaluation at r = 0 with ln r or negative-power terms",
                ));
            }
            return Ok(self
                .terms
                .iter()
                .filter(|t| t.p == 0.0)
                .map(|t| t.coef)
                .sum());
        }
        let ln_r = r.ln();
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.coef;
            if t.p != 0.0 {
                v *= r.powf(t.p);
            }
            if t.q > 0 {
                v *= ln_r.powi(t.q as i32);
            }
            acc += v;
        }
        Ok(acc)
    }
}

/// Drift and half squared volatility of a one-factor model in the series
/// basis.
fn drift_and_half_vol2(model: &ShortRateModel1F) -> (SeriesInR, SeriesInR) {
    match model {
        ShortRateModel1F::Ckls(p) => {
            let mu = SeriesInR::from_terms(vec![
                Term { coef: p.alpha, p: 0.0, q: 0 },
                Term { coef: p.beta, p: 1.0, q: 0 },
            ]);
            let half_s2 = SeriesInR::term(0.5 * p.sigma * p.sigma, 2.0 * p.gamma, 0);
            (mu, half_s2)
        }
        ShortRateModel1F::BlackKarasinski(p) => {
            // dr = r (kappa theta + sigma^2/2 - kappa ln r) dt + sigma r dw
            let s2 = p.sigma * p.sigma;
            let mu = SeriesInR::from_terms(vec![
                Term {
                    coef: p.kappa * p.theta + 0.5 * s2,
                    p: 1.0,
                    q: 0,
                },
                Term { coef: -p.kappa, p: 1.0, q: 1 },
            ]);
            let half_s2 = SeriesInR::term(0.5 * s2, 2.0, 0);
            (mu, half_s2)
        }
        ShortRateModel1F::AitSahalia(p) => {
            let mu = SeriesInR::from_terms(vec![
                Term { coef: p.alpha_m1, p: -1.0, q: 0 },
                Term { coef: p.alpha0, p: 0.0, q: 0 },
                Term { coef: p.alpha1, p: 1.0, q: 0 },
                Term { coef: p.alpha2, p: 2.0, q: 0 },
            ]);
            let half_s2 = SeriesInR::term(0.5 * p.sigma * p.sigma, 2.0 * p.gamma, 0);
            (mu, half_s2)
        }
    }
}

/// Price-series coefficients `c_0 .. c_J` from
/// `(j+1) c_{j+1} = (sigma^2/2) c_j'' + mu c_j' - r c_j`, `c_0 = 1`.
pub fn taylor_price_coeffs(model: &ShortRateModel1F, j_max: usize) -> Result<Vec<SeriesInR>> {
    model.validate()?;
    let (mu, half_s2) = drift_and_half_vol2(model);
    let r_term = SeriesInR::term(1.0, 1.0, 0);
    let mut coeffs = Vec::with_capacity(j_max + 1);
    coeffs.push(SeriesInR::constant(1.0));
    for j in 0..j_max {
        let cj = &coeffs[j];
        let d1 = cj.derivative();
        let d2 = d1.derivative();
        let next = half_s2
            .mul(&d2)
            .add(&mu.mul(&d1))
            .add(&r_term.mul(cj).scale(-1.0))
            .scale(1.0 / (j as f64 + 1.0));
        coeffs.push(next);
    }
    Ok(coeffs)
}

/// Log-price series coefficients `k_0 .. k_J` from
/// `(j+1) k_{j+1} = (sigma^2/2) [ sum_{i=1}^{j-1} k_i' k_{j-i}' + k_j'' ] + mu k_j'`
/// with `k_0 = 0`, `k_1 = -r`.
pub fn taylor_log_coeffs(model: &ShortRateModel1F, j_max: usize) -> Result<Vec<SeriesInR>> {
    model.validate()?;
    let (mu, half_s2) = drift_and_half_vol2(model);
    let mut coeffs = vec![SeriesInR::zero()];
    if j_max == 0 {
        return Ok(coeffs);
    }
    coeffs.push(SeriesInR::term(-1.0, 1.0, 0));
    let derivs_cap = j_max;
    let mut derivs: Vec<SeriesInR> = Vec::with_capacity(derivs_cap);
    derivs.push(SeriesInR::zero()); // k_0'
    derivs.push(coeffs[1].derivative()); // k_1'
    for j in 1..j_max {
        let mut gradient_square = SeriesInR::zero();
        for i in 1..j {
            gradient_square = gradient_square.add(&derivs[i].mul(&derivs[j - i]));
        }
        let second = derivs[j].derivative();
        let next = half_s2
            .mul(&gradient_square.add(&second))
            .add(&mu.mul(&derivs[j]))
            .scale(1.0 / (j as f64 + 1.0));
        derivs.push(next.derivative());
        coeffs.push(next);
    }
    Ok(coeffs)
}

/// Precomputed series coefficients of one model, for repeated evaluation.
#[derive(Debug, Clone)]
pub struct TaylorPricer {
    pub model: ShortRateModel1F,
    pub j_max: usize,
    price_coeffs: Vec<SeriesInR>,
    log_coeffs: Vec<SeriesInR>,
}

impl TaylorPricer {
    pub fn new(model: ShortRateModel1F, j_max: usize) -> Result<Self> {
        if j_max < 1 {
            return Err(Error::domain("Taylor pricer needs order J >= 1"));
        }
        Ok(TaylorPricer {
            price_coeffs: taylor_price_coeffs(&model, j_max)?,
            log_coeffs: taylor_log_coeffs(&model, j_max)?,
            model,
            j_max,
        })
    }

    /// Truncated price series `sum_{j<=J} c_j(r) tau^j`.
    pub fn price(&self, r: f64, tau: f64, j: usize) -> Result<f64> {
        self.check_order(j)?;
        let mut acc = 0.0;
        let mut tau_pow = 1.0;
        for cj in &self.price_coeffs[..=j] {
            acc += cj.eval(r)? * tau_pow;
            tau_pow *= tau;
        }
        Ok(acc)
    }

    /// Truncated log-price series, exponentiated:
    /// `exp(sum_{j<=J} k_j(r) tau^j)`.
    pub fn log_series_price(&self, r: f64, tau: f64, j: usize) -> Result<f64> {
        self.check_order(j)?;
        let mut acc = 0.0;
        let mut tau_pow = 1.0;
        for kj in &self.log_coeffs[..=j] {
            acc += kj.eval(r)? * tau_pow;
            tau_pow *= tau;
        }
        Ok(acc.exp())
    }

    /// Price-series partial sums for orders `0 ..= j_max`; column material
    /// for order-by-order reporting.
    pub fn partial_sums(&self, r: f64, tau: f64) -> Result<Vec<f64>> {
        let mut sums = Vec::with_capacity(self.j_max + 1);
        let mut acc = 0.0;
        let mut tau_pow = 1.0;
        for cj in &self.price_coeffs {
            acc += cj.eval(r)? * tau_pow;
            tau_pow *= tau;
            sums.push(acc);
        }
        Ok(sums)
    }

    /// Log-price coefficient functions `k_0 .. k_J`.
    pub fn log_coeffs(&self) -> &[SeriesInR] {
        &self.log_coeffs
    }

    /// Price coefficient functions `c_0 .. c_J`.
    pub fn price_coeffs(&self) -> &[SeriesInR] {
        &self.price_coeffs
    }

    fn check_order(&self, j: usize) -> Result<()> {
        if j > self.j_max {
            return Err(Error::domain(format!(
                "order {j} exceeds precomputed maximum {}",
                self.j_max
            )));
        }
        Ok(())
    }
}

/// Truncated price series at order `J`, plus the stabilization gap
/// `|P_J - P_{J-1}|` that signals whether the truncation has settled.
pub fn taylor_price_with_stabilization(
    model: &ShortRateModel1F,
    r: f64,
    tau: f64,
    j: usize,
) -> Result<(f64, f64)> {
    let pricer = TaylorPricer::new(*model, j)?;
    let p_j = pricer.price(r, tau, j)?;
    let gap = if j == 0 {
        f64::NAN
    } else {
        (p_j - pricer.price(r, tau, j - 1)?).abs()
    };
    Ok((p_j, gap))
}

/// Truncated price series `sum_{j<=J} c_j(r) tau^j`.
pub fn taylor_price(model: &ShortRateModel1F, r: f64, tau: f64, j: usize) -> Result<f64> {
    Ok(taylor_price_with_stabilization(model, r, tau, j)?.0)
}
