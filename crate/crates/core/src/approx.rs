//! Analytical bond-price approximations and their error-coefficient
//! corrections.
//!
//! One-factor CKLS models get two families:
//!
//! * the Choi-Wirjanto expansion [`cw_price`], accurate to `O(tau^5)` in the
//!   log-price, and its corrected form [`cw_ap2_price`] of order `O(tau^7)`;
//! * the Vasicek-substitution formula [`vas_subst_price`] (the Vasicek
//!   closed form with `sigma^2` replaced by `sigma^2 r^{2 gamma}`), of order
//!   `O(tau^4)`.
//!
//! Two-factor convergence models get the analogous substitution formula
//! [`conv_approx_price`] (order `O(tau^4)`) and its corrected form
//! [`conv_ap2_price`] (order `O(tau^6)`).
//!
//! All entry points return the **log**-price: every error statement above is
//! about `ln P`, and differences of log-prices are what the comparison norms
//! consume. The correction coefficients are finite power sums in the rate
//! variables, so their derivatives (needed for the sixth- and fifth-order
//! coefficients) are computed analytically, not by finite differences.

use crate::closedform::{
    check_conv_closed_form, conv_a_eval, conv_a_terms, conv_loadings, vasicek_ab,
};
use crate::models::{pow_gamma, CKLSParams, ConvergenceModel};
use crate::series::{SeriesInR, Term};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which variant of an approximation family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApproxOrder {
    #[default]
    Base,
    Improved,
}

/// `r^e` with the conventions needed by the approximation formulas:
/// a zero exponent is 1 even at `r = 0`, a positive exponent gives 0 at
/// `r = 0`, and a negative exponent at `r = 0` is a domain error.
fn powr(r: f64, e: f64) -> Result<f64> {
    if e == 0.0 {
        return Ok(1.0);
    }
    if r == 0.0 {
        if e > 0.0 {
            return Ok(0.0);
        }
        return Err(Error::domain(format!(
            "r^({e}) diverges at r = 0"
        )));
    }
    Ok(r.powf(e))
}

fn check_one_factor(p: &CKLSParams, r: f64, tau: f64) -> Result<()> {
    p.validate()?;
    if p.beta == 0.0 {
        return Err(Error::domain("approximation formulas require beta != 0"));
    }
    if r < 0.0 {
        return Err(Error::domain(format!("rate must be nonnegative, got {r}")));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!(
            "maturity must be nonnegative, got {tau}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Choi-Wirjanto approximation
// ---------------------------------------------------------------------------

/// The state-dependent coefficient
/// `q(r) = gamma (2 gamma - 1) sigma^2 r^{2(2 gamma - 1)}
///         + 2 gamma r^{2 gamma - 1} (alpha + beta r)`.
///
/// Each addend is skipped when its `gamma` prefactor vanishes, so the
/// negative powers never get evaluated for the models (Vasicek) where they
/// would be spurious.
fn cw_q(p: &CKLSParams, r: f64) -> Result<f64> {
    let g = p.gamma;
    let mut q = 0.0;
    let c1 = g * (2.0 * g - 1.0) * p.sigma * p.sigma;
    if c1 != 0.0 {
        q += c1 * powr(r, 2.0 * (2.0 * g - 1.0))?;
    }
    let c2 = 2.0 * g;
    if c2 != 0.0 {
        q += c2 * powr(r, 2.0 * g - 1.0)? * (p.alpha + p.beta * r);
    }
    Ok(q)
}

/// Choi-Wirjanto approximate **log**-price for a one-factor CKLS model:
///
/// `ln P = -rB + (alpha/beta)(tau - B)
///         + (r^{2 gamma} + q tau)(sigma^2/(4 beta))[B^2 + (2/beta)(tau - B)]
///         - q (sigma^2/(8 beta^2))[B^2(2 beta tau - 1) - 2B(2 tau - 3/beta)
///           + 2 tau^2 - 6 tau/beta]`
///
/// with `B = (e^{beta tau} - 1)/beta`. Exact for `gamma = 0`; the log-price
/// error is `c_5(r) tau^5 + o(tau^5)` in general.
pub fn cw_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    check_one_factor(p, r, tau)?;
    let (alpha, beta, g) = (p.alpha, p.beta, p.gamma);
    let s2 = p.sigma * p.sigma;
    let b = crate::math::int_exp(beta, tau);
    let q = cw_q(p, r)?;
    let r2g = powr(r, 2.0 * g)?;
    let bracket1 = b * b + (2.0 / beta) * (tau - b);
    let bracket2 = b * b * (2.0 * beta * tau - 1.0) - 2.0 * b * (2.0 * tau - 3.0 / beta)
        + 2.0 * tau * tau
        - 6.0 * tau / beta;
    Ok(-r * b + (alpha / beta) * (tau - b) + (r2g + q * tau) * (s2 / (4.0 * beta)) * bracket1
        - q * (s2 / (8.0 * beta * beta)) * bracket2)
}

/// Leading error coefficient of [`cw_price`]: the power sum `c_5(r)` with
/// `ln P^{ap} - ln P^{ex} = c_5(r) tau^5 + o(tau^5)`. Identically zero for
/// `gamma = 0`.
pub fn cw_error_coefficient(p: &CKLSParams) -> SeriesInR {
    let g = p.gamma;
    let s2 = p.sigma * p.sigma;
    let (alpha, beta) = (p.alpha, p.beta);
    let pre = -g * s2 / 120.0;
    if pre == 0.0 {
        return SeriesInR::zero();
    }
    SeriesInR::from_terms(vec![
        Term { coef: pre * 2.0 * alpha * alpha * (2.0 * g - 1.0), p: 2.0 * g - 2.0, q: 0 },
        Term { coef: pre * 4.0 * beta * beta * g, p: 2.0 * g, q: 0 },
        Term { coef: pre * -8.0 * s2, p: 4.0 * g - 1.0, q: 0 },
        Term {
            coef: pre * 2.0 * beta * (1.0 - 5.0 * g + 6.0 * g * g) * s2,
            p: 4.0 * g - 2.0,
            q: 0,
        },
        Term {
            coef: pre * s2 * s2 * (2.0 * g - 1.0) * (2.0 * g - 1.0) * (4.0 * g - 3.0),
            p: 6.0 * g - 4.0,
            q: 0,
        },
        Term { coef: pre * 2.0 * alpha * beta * (4.0 * g - 1.0), p: 2.0 * g - 1.0, q: 0 },
        Term {
            coef: pre * 2.0 * alpha * (2.0 * g - 1.0) * (3.0 * g - 2.0) * s2,
            p: 4.0 * g - 3.0,
            q: 0,
        },
    ])
}

/// The companion power sum `k_5(r)` that enters the sixth-order correction
/// coefficient.
fn cw_k5(p: &CKLSParams) -> SeriesInR {
    let g = p.gamma;
    let s2 = p.sigma * p.sigma;
    let (alpha, beta) = (p.alpha, p.beta);
    let pre = g * s2 / 120.0;
    if pre == 0.0 {
        return SeriesInR::zero();
    }
    let one_m_2g_sq = (1.0 - 2.0 * g) * (1.0 - 2.0 * g);
    SeriesInR::from_terms(vec![
        Term {
            coef: pre * 6.0 * alpha * alpha * beta * (2.0 * g - 1.0),
            p: 2.0 * g - 2.0,
            q: 0,
        },
        Term { coef: pre * 12.0 * beta.powi(3) * g, p: 2.0 * g, q: 0 },
        Term { coef: pre * -10.0 * one_m_2g_sq * s2 * s2, p: 6.0 * g - 3.0, q: 0 },
        Term {
            coef: pre * 6.0 * beta * beta * s2 * (1.0 - 5.0 * g + 6.0 * g * g),
            p: 4.0 * g - 2.0,
            q: 0,
        },
        Term { coef: pre * -10.0 * beta * (5.0 + 2.0 * g) * s2, p: 4.0 * g - 1.0, q: 0 },
        Term {
            coef: pre * 3.0 * beta * one_m_2g_sq * (4.0 * g - 3.0) * s2 * s2,
            p: 6.0 * g - 4.0,
            q: 0,
        },
        Term { coef: pre * 6.0 * alpha * beta * beta * (4.0 * g - 1.0), p: 2.0 * g - 1.0, q: 0 },
        Term {
            coef: pre * 6.0 * alpha * beta * (2.0 - 7.0 * g + 6.0 * g * g) * s2,
            p: 4.0 * g - 3.0,
            q: 0,
        },
        Term { coef: pre * -10.0 * alpha * (2.0 * g - 1.0) * s2, p: 4.0 * g - 2.0, q: 0 },
    ])
}

/// The fifth- and sixth-order correction coefficients `(c_5, c_6)` used by
/// [`cw_ap2_price`]:
///
/// `c_6 = (1/6) [ (sigma^2 r^{2 gamma}/2) c_5'' + (alpha + beta r) c_5' - k_5 ]`.
pub fn cw_correction_series(p: &CKLSParams) -> (SeriesInR, SeriesInR) {
    let c5 = cw_error_coefficient(p);
    let half_vol2 = SeriesInR::term(0.5 * p.sigma * p.sigma, 2.0 * p.gamma, 0);
    let drift = SeriesInR::from_terms(vec![
        Term { coef: p.alpha, p: 0.0, q: 0 },
        Term { coef: p.beta, p: 1.0, q: 0 },
    ]);
    let c6 = half_vol2
        .mul(&c5.derivative().derivative())
        .add(&drift.mul(&c5.derivative()))
        .add(&cw_k5(p).scale(-1.0))
        .scale(1.0 / 6.0);
    (c5, c6)
}

/// Corrected Choi-Wirjanto **log**-price,
/// `ln P^{ap2} = ln P^{ap} - c_5(r) tau^5 - c_6(r) tau^6`,
/// with log-price error `o(tau^6)`.
pub fn cw_ap2_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    let base = cw_price(p, r, tau)?;
    let (c5, c6) = cw_correction_series(p);
    Ok(base - c5.eval(r)? * tau.powi(5) - c6.eval(r)? * tau.powi(6))
}

// ---------------------------------------------------------------------------
// Vasicek-substitution approximation
// ---------------------------------------------------------------------------

/// Vasicek-substitution approximate **log**-price: the Vasicek closed form
/// evaluated with the squared volatility frozen at its current state value
/// `sigma^2 r^{2 gamma}`. Exact for `gamma = 0`; log-price error
/// `c_4(r) tau^4 + o(tau^4)` in general.
pub fn vas_subst_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    check_one_factor(p, r, tau)?;
    let s2 = p.sigma * p.sigma * powr(r, 2.0 * p.gamma)?;
    let (a, b) = vasicek_ab(p.alpha, p.beta, s2, tau);
    Ok(a - b * r)
}

/// Leading error coefficient of [`vas_subst_price`]: the power sum
/// `c_4(r) = -(1/24) gamma r^{2 gamma - 2} sigma^2
///           [2 alpha r + 2 beta r^2 + (2 gamma - 1) r^{2 gamma} sigma^2]`.
pub fn vas_subst_error_coefficient(p: &CKLSParams) -> SeriesInR {
    let g = p.gamma;
    let s2 = p.sigma * p.sigma;
    let pre = -g * s2 / 24.0;
    if pre == 0.0 {
        return SeriesInR::zero();
    }
    SeriesInR::from_terms(vec![
        Term { coef: pre * 2.0 * p.alpha, p: 2.0 * g - 1.0, q: 0 },
        Term { coef: pre * 2.0 * p.beta, p: 2.0 * g, q: 0 },
        Term { coef: pre * (2.0 * g - 1.0) * s2, p: 4.0 * g - 2.0, q: 0 },
    ])
}

// ---------------------------------------------------------------------------
// Convergence-model approximation
// ---------------------------------------------------------------------------

/// One term `coef * rd^{pd} * re^{pe}` of a bivariate power sum.
#[derive(Debug, Clone, Copy)]
struct BiTerm {
    coef: f64,
    pd: f64,
    pe: f64,
}

/// Finite bivariate power sums in `(rd, re)`: the correction coefficients of
/// the convergence approximation and everything the differential operator
/// acting on them produces.
#[derive(Debug, Clone, Default)]
struct BiSeries {
    terms: Vec<BiTerm>,
}

impl BiSeries {
    fn from_terms(terms: Vec<BiTerm>) -> Self {
        let mut s = BiSeries { terms };
        s.normalize();
        s
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| {
            a.pd
                .partial_cmp(&b.pd)
                .expect("bivariate series: NaN power")
                .then(a.pe.partial_cmp(&b.pe).expect("bivariate series: NaN power"))
        });
        let mut merged: Vec<BiTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.pd == t.pd && last.pe == t.pe => last.coef += t.coef,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef.abs() >= 1e-300);
        self.terms = merged;
    }

    fn add(&self, other: &BiSeries) -> BiSeries {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        BiSeries::from_terms(terms)
    }

    fn scale(&self, s: f64) -> BiSeries {
        BiSeries::from_terms(
            self.terms
                .iter()
                .map(|t| BiTerm { coef: t.coef * s, ..*t })
                .collect(),
        )
    }

    fn mul(&self, other: &BiSeries) -> BiSeries {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(BiTerm {
                    coef: a.coef * b.coef,
                    pd: a.pd + b.pd,
                    pe: a.pe + b.pe,
                });
            }
        }
        BiSeries::from_terms(terms)
    }

    fn d_rd(&self) -> BiSeries {
        BiSeries::from_terms(
            self.terms
                .iter()
                .filter(|t| t.pd != 0.0)
                .map(|t| BiTerm {
                    coef: t.coef * t.pd,
                    pd: t.pd - 1.0,
                    pe: t.pe,
                })
                .collect(),
        )
    }

    fn d_re(&self) -> BiSeries {
        BiSeries::from_terms(
            self.terms
                .iter()
                .filter(|t| t.pe != 0.0)
                .map(|t| BiTerm {
                    coef: t.coef * t.pe,
                    pd: t.pd,
                    pe: t.pe - 1.0,
                })
                .collect(),
        )
    }

    fn eval(&self, rd: f64, re: f64) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.coef * powr(rd, t.pd)? * powr(re, t.pe)?;
        }
        Ok(acc)
    }
}

fn check_conv(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<()> {
    m.validate()?;
    check_conv_closed_form(m)?;
    if r_d < 0.0 || r_e < 0.0 {
        return Err(Error::domain(format!(
            "rates must be nonnegative, got ({r_d}, {r_e})"
        )));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!(
            "maturity must be nonnegative, got {tau}"
        )));
    }
    Ok(())
}

/// Substitution approximate **log**-price for the two-factor convergence
/// CKLS model: the Vasicek-type closed form with the volatility constants
/// promoted to their state values `sigma_d rd^{gamma_d}`,
/// `sigma_e re^{gamma_e}`. Exact for `gamma_d = gamma_e = 0`; log-price
/// error `c_4(rd, re) tau^4 + o(tau^4)` in general.
pub fn conv_approx_price(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<f64> {
    check_conv(m, r_d, r_e, tau)?;
    let sd_eff = m.sigma_d * pow_gamma(r_d, m.gamma_d);
    let se_eff = m.sigma_e * pow_gamma(r_e, m.gamma_e);
    let (d, u) = conv_loadings(m.a2, m.a3, m.b2, tau);
    let terms = conv_a_terms(m.a1, m.a2, m.a3, m.b1, m.b2, sd_eff, se_eff, m.rho);
    Ok(conv_a_eval(&terms, tau) - d * r_d - u * r_e)
}

/// The fourth-order error coefficient of [`conv_approx_price`] as a
/// bivariate power sum,
///
/// `c_4 = -(1/24) sigma_d^2 gamma_d rd^{2 gamma_d - 2}
///        (2 a1 rd + 2 a2 rd^2 + 2 a3 rd re
///         - rd^{2 gamma_d} sigma_d^2 + 2 gamma_d rd^{2 gamma_d} sigma_d^2)`.
fn conv_c4(m: &ConvergenceModel) -> BiSeries {
    let g = m.gamma_d;
    let sd2 = m.sigma_d * m.sigma_d;
    let pre = -sd2 * g / 24.0;
    if pre == 0.0 {
        return BiSeries::default();
    }
    BiSeries::from_terms(vec![
        BiTerm { coef: pre * 2.0 * m.a1, pd: 2.0 * g - 1.0, pe: 0.0 },
        BiTerm { coef: pre * 2.0 * m.a2, pd: 2.0 * g, pe: 0.0 },
        BiTerm { coef: pre * 2.0 * m.a3, pd: 2.0 * g - 1.0, pe: 1.0 },
        BiTerm { coef: pre * -sd2, pd: 4.0 * g - 2.0, pe: 0.0 },
        BiTerm { coef: pre * 2.0 * g * sd2, pd: 4.0 * g - 2.0, pe: 0.0 },
    ])
}

/// The fourth-order coefficient `k_4(rd, re)` of the PDE defect of the
/// approximation, needed for the fifth-order correction.
fn conv_k4(m: &ConvergenceModel) -> BiSeries {
    let (a1, a2, a3, b1, b2) = (m.a1, m.a2, m.a3, m.b1, m.b2);
    let (sd, se, rho) = (m.sigma_d, m.sigma_e, m.rho);
    let (gd, ge) = (m.gamma_d, m.gamma_e);
    let pre = sd / 48.0;
    // Powers of rd carry the folded prefactor rd^{gamma_d - 2}; powers of re
    // carry re^{-2}.
    BiSeries::from_terms(vec![
        BiTerm { coef: pre * 12.0 * a2 * a2 * gd * sd, pd: 2.0 * gd, pe: 0.0 },
        BiTerm { coef: pre * -16.0 * gd * sd.powi(3), pd: 4.0 * gd - 1.0, pe: 0.0 },
        BiTerm { coef: pre * 6.0 * a3 * b1 * ge * rho * se, pd: gd, pe: ge - 1.0 },
        BiTerm { coef: pre * 6.0 * a3 * b2 * ge * rho * se, pd: gd, pe: ge },
        BiTerm { coef: pre * 6.0 * a3 * a3 * gd * rho * se, pd: gd - 1.0, pe: 1.0 + ge },
        BiTerm {
            coef: pre * -3.0 * a3 * gd * sd * sd * se * rho,
            pd: 3.0 * gd - 2.0,
            pe: ge,
        },
        BiTerm {
            coef: pre * 3.0 * a3 * gd * gd * sd * sd * se * rho,
            pd: 3.0 * gd - 2.0,
            pe: ge,
        },
        BiTerm {
            coef: pre * 6.0 * a3 * gd * ge * rho * rho * sd * se * se,
            pd: 2.0 * gd - 1.0,
            pe: 2.0 * ge - 1.0,
        },
        BiTerm { coef: pre * -3.0 * a3 * ge * rho * se.powi(3), pd: gd, pe: 3.0 * ge - 2.0 },
        BiTerm {
            coef: pre * 3.0 * a3 * ge * ge * rho * se.powi(3),
            pd: gd,
            pe: 3.0 * ge - 2.0,
        },
        BiTerm { coef: pre * 12.0 * a1 * a2 * gd * sd, pd: 2.0 * gd - 1.0, pe: 0.0 },
        BiTerm { coef: pre * 6.0 * a1 * a3 * gd * rho * se, pd: gd - 1.0, pe: ge },
        BiTerm {
            coef: pre * 6.0 * a2 * gd * (2.0 * gd - 1.0) * sd.powi(3),
            pd: 4.0 * gd - 2.0,
            pe: 0.0,
        },
        BiTerm { coef: pre * 12.0 * a2 * a3 * gd * sd, pd: 2.0 * gd - 1.0, pe: 1.0 },
        BiTerm { coef: pre * 6.0 * a2 * a3 * gd * rho * se, pd: gd, pe: ge },
    ])
}

/// The fourth- and fifth-order correction coefficients `(c_4, c_5)` of the
/// convergence approximation, evaluated at `(rd, re)`:
///
/// `c_5 = (L[c_4] - k_4)/5` where `L` applies the model's drift and
/// diffusion operator to the bivariate power sum `c_4` analytically.
pub fn conv_correction_coeffs(m: &ConvergenceModel, r_d: f64, r_e: f64) -> Result<(f64, f64)> {
    m.validate()?;
    if r_d <= 0.0 || r_e <= 0.0 {
        return Err(Error::domain(format!(
            "correction coefficients need positive rates, got ({r_d}, {r_e})"
        )));
    }
    let c4 = conv_c4(m);
    let drift_d = BiSeries::from_terms(vec![
        BiTerm { coef: m.a1, pd: 0.0, pe: 0.0 },
        BiTerm { coef: m.a2, pd: 1.0, pe: 0.0 },
        BiTerm { coef: m.a3, pd: 0.0, pe: 1.0 },
    ]);
    let drift_e = BiSeries::from_terms(vec![
        BiTerm { coef: m.b1, pd: 0.0, pe: 0.0 },
        BiTerm { coef: m.b2, pd: 0.0, pe: 1.0 },
    ]);
    let half_vol_d = BiSeries::from_terms(vec![BiTerm {
        coef: 0.5 * m.sigma_d * m.sigma_d,
        pd: 2.0 * m.gamma_d,
        pe: 0.0,
    }]);
    let half_vol_e = BiSeries::from_terms(vec![BiTerm {
        coef: 0.5 * m.sigma_e * m.sigma_e,
        pd: 0.0,
        pe: 2.0 * m.gamma_e,
    }]);
    let cross = BiSeries::from_terms(vec![BiTerm {
        coef: 4.0 * m.rho * m.sigma_d * m.sigma_e,
        pd: m.gamma_d,
        pe: m.gamma_e,
    }]);
    let l_c4 = drift_d
        .mul(&c4.d_rd())
        .add(&drift_e.mul(&c4.d_re()))
        .add(&half_vol_d.mul(&c4.d_rd().d_rd()))
        .add(&half_vol_e.mul(&c4.d_re().d_re()))
        .add(&cross.mul(&c4.d_rd().d_re()));
    let c5 = l_c4.add(&conv_k4(m).scale(-1.0)).scale(0.2);
    Ok((c4.eval(r_d, r_e)?, c5.eval(r_d, r_e)?))
}

/// Corrected convergence-model **log**-price,
/// `ln P^{ap2} = ln P^{ap} - c_4 tau^4 - c_5 tau^5`,
/// with log-price error `O(tau^6)`.
pub fn conv_ap2_price(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<f64> {
    let base = conv_approx_price(m, r_d, r_e, tau)?;
    let (c4, c5) = conv_correction_coeffs(m, r_d, r_e)?;
    Ok(base - c4 * tau.powi(4) - c5 * tau.powi(5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fit_power_coefficient, fit_slope, grid_error_norms, RateGrid};
    use crate::closedform::{
        cir_log_price, conv_a_eval, conv_a_terms, conv_cir_log_price, conv_loadings,
        conv_vasicek_log_price, vasicek_log_price,
    };
    use crate::models::yield_from_price;

    fn table3_cir() -> CKLSParams {
        CKLSParams::cir(0.00315, -0.0555, 0.0894)
    }

    fn table9_conv_cir() -> ConvergenceModel {
        ConvergenceModel {
            a1: 0.0075,
            a2: -2.0,
            a3: 2.0,
            b1: 0.003,
            b2: -0.2,
            sigma_d: 0.03,
            sigma_e: 0.01,
            gamma_d: 0.5,
            gamma_e: 0.5,
            rho: 0.0,
        }
    }

    fn ulps_apart(a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        (a - b).abs() / (scale * f64::EPSILON)
    }

    #[test]
    fn cw_reduces_to_vasicek_at_gamma_zero() {
        let p = CKLSParams::vasicek(0.0154, -0.1779, 0.02);
        for i in 0..100 {
            let r = 0.0015 * i as f64;
            let tau = 0.3 + 0.27 * i as f64;
            let cw = cw_price(&p, r, tau).unwrap();
            let exact = vasicek_log_price(&p, r, tau).unwrap();
            assert!(
                ulps_apart(cw, exact) <= 8.0,
                "r={r} tau={tau}: {cw} vs {exact}"
            );
        }
    }

    #[test]
    fn cw_sup_error_on_cir_grid_matches_reference() {
        let p = table3_cir();
        let grid = RateGrid::new(0.0, 0.15, 1501);
        let report = grid_error_norms(
            |r, tau| cw_price(&p, r, tau),
            |r, tau| cir_log_price(&p, r, tau),
            &grid,
            &[1.0, 0.5],
        )
        .unwrap();
        assert!((report.sup[0] / 2.774e-7 - 1.0).abs() < 0.02, "{}", report.sup[0]);
        assert!((report.sup[1] / 9.023e-9 - 1.0).abs() < 0.01, "{}", report.sup[1]);
    }

    #[test]
    fn cw_tau5_coefficient_matches_fitted_expansion() {
        let p = table3_cir();
        let r = 0.04;
        let taus = [0.02, 0.03, 0.04, 0.05, 0.06];
        let errs: Vec<f64> = taus
            .iter()
            .map(|&t| cw_price(&p, r, t).unwrap() - cir_log_price(&p, r, t).unwrap())
            .collect();
        let fitted = fit_power_coefficient(&taus, &errs, 5).unwrap();
        let s2 = p.sigma * p.sigma;
        let closed =
            -(1.0 / 120.0) * s2 * (p.alpha * p.beta + r * (p.beta * p.beta - 4.0 * s2));
        assert!(
            (fitted / closed - 1.0).abs() < 1e-3,
            "fitted {fitted:e}, closed {closed:e}"
        );
        // The general power-sum coefficient agrees with the gamma = 1/2
        // reduction at full precision.
        let series_val = cw_error_coefficient(&p).eval(r).unwrap();
        assert!(ulps_apart(series_val, closed) <= 8.0);
    }

    #[test]
    fn cw_ap2_order_seven_on_cir_grid() {
        let p = table3_cir();
        let grid = RateGrid::new(0.0, 0.15, 1501);
        let report = grid_error_norms(
            |r, tau| cw_ap2_price(&p, r, tau),
            |r, tau| cir_log_price(&p, r, tau),
            &grid,
            &[1.0, 0.75],
        )
        .unwrap();
        assert!((report.sup[0] / 4.682e-10 - 1.0).abs() < 0.02, "{}", report.sup[0]);
        assert!(
            (report.eoc_sup[0] - 7.039).abs() < 0.05,
            "EOC {}",
            report.eoc_sup[0]
        );
    }

    #[test]
    fn cw_ap2_corrections_vanish_at_gamma_zero() {
        let p = CKLSParams::vasicek(0.0154, -0.1779, 0.02);
        let (c5, c6) = cw_correction_series(&p);
        assert!(c5.is_zero() && c6.is_zero());
        let ap = cw_price(&p, 0.03, 4.0).unwrap();
        let ap2 = cw_ap2_price(&p, 0.03, 4.0).unwrap();
        assert_eq!(ap, ap2);
    }

    #[test]
    fn vas_subst_matches_vasicek_at_gamma_zero_and_orders() {
        let vas = CKLSParams::vasicek(0.0154, -0.1779, 0.02);
        for &(r, tau) in &[(0.0, 1.0), (0.03, 5.0), (0.1, 30.0)] {
            let a = vas_subst_price(&vas, r, tau).unwrap();
            let b = vasicek_log_price(&vas, r, tau).unwrap();
            assert!(ulps_apart(a, b) <= 8.0);
        }

        // CIR oracle: the log-price error decays like tau^4 and its fitted
        // coefficient matches the analytic c_4.
        let p = table3_cir();
        let r = 0.04;
        let taus = [0.02, 0.03, 0.04, 0.05, 0.06];
        let errs: Vec<f64> = taus
            .iter()
            .map(|&t| vas_subst_price(&p, r, t).unwrap() - cir_log_price(&p, r, t).unwrap())
            .collect();
        let fitted = fit_power_coefficient(&taus, &errs, 4).unwrap();
        let closed = vas_subst_error_coefficient(&p).eval(r).unwrap();
        assert!(
            (fitted / closed - 1.0).abs() < 1e-3,
            "fitted {fitted:e}, closed {closed:e}"
        );
    }

    #[test]
    fn vas_subst_yield_error_small_at_short_maturities() {
        // Versus exact CIR: |R^ap - R^ex| stays below 1e-3 percentage points
        // (the precision of quoted money-market rates) out to 1.5 years.
        // The error grows like |c4| tau^3 in the yield, so the bound cannot
        // extend to long maturities: at r = 0.02 it is already broken near
        // tau = 2 and an order of magnitude over by tau = 5, which the last
        // block pins down.
        let p = table3_cir();
        let yield_gap = |r: f64, tau: f64| -> f64 {
            let approx_yield =
                100.0 * yield_from_price(vas_subst_price(&p, r, tau).unwrap().exp(), tau).unwrap();
            let exact_yield =
                100.0 * yield_from_price(cir_log_price(&p, r, tau).unwrap().exp(), tau).unwrap();
            approx_yield - exact_yield
        };
        for &r in &[0.02, 0.03, 0.04, 0.05, 0.06] {
            for &tau in &[0.25, 0.5, 1.0, 1.5] {
                assert!(yield_gap(r, tau).abs() < 1e-3, "r={r} tau={tau}");
            }
        }
        let far = yield_gap(0.02, 5.0).abs();
        assert!(
            far > 1e-3 && far < 2e-2,
            "expected the quoting-precision bound to fail by tau = 5, gap {far:e}"
        );
    }

    #[test]
    fn one_factor_eoc_slopes() {
        let p = table3_cir();
        let grid = RateGrid::new(0.0, 0.15, 301);
        let taus = [1.0, 0.75, 0.5, 0.25];
        let cases: [(&str, f64, Box<dyn Fn(f64, f64) -> crate::Result<f64>>); 3] = [
            ("cw", 5.0, Box::new(move |r, t| cw_price(&p, r, t))),
            ("cw_ap2", 7.0, Box::new(move |r, t| cw_ap2_price(&p, r, t))),
            ("vas_subst", 4.0, Box::new(move |r, t| vas_subst_price(&p, r, t))),
        ];
        for (name, want, f) in cases {
            let report =
                grid_error_norms(|r, t| f(r, t), |r, t| cir_log_price(&p, r, t), &grid, &taus)
                    .unwrap();
            let slope = fit_slope(&report.taus, &report.sup).unwrap();
            assert!(
                (slope - want).abs() < 0.15,
                "{name}: slope {slope}, expected {want}"
            );
        }
    }

    #[test]
    fn conv_approx_reduces_to_closed_form_at_gamma_zero() {
        let m = ConvergenceModel {
            a1: 0.0938,
            a2: -3.67,
            a3: 3.67,
            b1: 0.2087 * 0.035,
            b2: -0.2087,
            sigma_d: 0.032,
            sigma_e: 0.016,
            gamma_d: 0.0,
            gamma_e: 0.0,
            rho: 0.219,
        };
        for &(rd, re, tau) in &[(0.02, 0.01, 0.5), (0.05, 0.03, 5.0), (0.0, 0.0, 10.0)] {
            let a = conv_approx_price(&m, rd, re, tau).unwrap();
            let b = conv_vasicek_log_price(&m, rd, re, tau).unwrap();
            assert!(ulps_apart(a, b) <= 8.0, "rd={rd} re={re} tau={tau}");
        }
    }

    #[test]
    fn conv_approx_matches_reference_yields() {
        // Reference table of exact and approximate domestic yields (percent)
        // on two observation days, eight maturities each. The tabulated
        // values carry about 1e-5 of the source pipeline's own integration
        // noise on top of print rounding, so the yield comparisons use a
        // 2e-5 absolute band (5-6 significant digits) rather than exact
        // 6-digit rounding.
        //
        // The quoted state for the second day (rd = 1.75%, re = 1.06%) is
        // inconsistent with that day's own tabulated yields: the yield is an
        // affine function of (rd, re), and inverting it on the exact column
        // recovers rd = 0.9797%, re = 1.0801% with residual ~1e-10, which
        // reproduces every printed cell. The recovered state is used here.
        let m = table9_conv_cir();
        let day1 = (0.017, 0.01);
        let day2 = (0.00979677, 0.01080056);
        // (tau, exact, approx, exact - approx)
        let table: [((f64, f64), &[(f64, f64, f64, f64)]); 2] = [
            (
                day1,
                &[
                    (0.25, 1.63257, 1.63256, 7.1e-6),
                    (0.5, 1.58685, 1.58684, 1.4e-5),
                    (0.75, 1.55614, 1.55614, 4.8e-6),
                    (1.0, 1.53593, 1.53592, 1.1e-5),
                    (5.0, 1.56154, 1.56155, -5.0e-6),
                    (10.0, 1.65315, 1.65323, -8.3e-5),
                    (20.0, 1.74696, 1.74722, -2.5e-4),
                    (30.0, 1.78751, 1.78787, -3.7e-4),
                ],
            ),
            (
                day2,
                &[
                    (0.25, 1.08249, 1.08250, -8.2e-6),
                    (0.5, 1.15994, 1.15996, -1.7e-5),
                    (0.75, 1.21963, 1.21964, -7.0e-6),
                    (1.0, 1.26669, 1.26671, -1.6e-5),
                    (5.0, 1.53685, 1.53691, -6.2e-5),
                    (10.0, 1.65113, 1.65127, -1.4e-4),
                    (20.0, 1.74855, 1.74884, -2.9e-4),
                    (30.0, 1.78879, 1.78918, -3.9e-4),
                ],
            ),
        ];
        for ((rd, re), rows) in table {
            for &(tau, want_ex, want_ap, want_diff) in rows {
                let y_ex = -conv_cir_log_price(&m, rd, re, tau).unwrap() / tau * 100.0;
                let y_ap = -conv_approx_price(&m, rd, re, tau).unwrap() / tau * 100.0;
                assert!(
                    (y_ex - want_ex).abs() < 2e-5,
                    "exact rd={rd} tau={tau}: {y_ex:.6} vs {want_ex}"
                );
                assert!(
                    (y_ap - want_ap).abs() < 2e-5,
                    "approx rd={rd} tau={tau}: {y_ap:.6} vs {want_ap}"
                );
                // The difference column: its sign convention is exact minus
                // approx (that orientation matches at every cell). Below a
                // few units of 1e-5 the tabulated differences sit at the
                // reference noise floor and only the sign is reproducible;
                // above it the magnitudes agree within 20%.
                let diff = y_ex - y_ap;
                assert_eq!(
                    diff.signum(),
                    want_diff.signum(),
                    "diff sign rd={rd} tau={tau}: {diff:e} vs {want_diff:e}"
                );
                if want_diff.abs() >= 5e-5 {
                    assert!(
                        (diff - want_diff).abs() <= 0.2 * want_diff.abs(),
                        "diff rd={rd} tau={tau}: {diff:e} vs {want_diff:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn conv_c4_specializations() {
        // gamma_d = 1/2 collapses to -(sigma_d^2/24)(a1 + a2 rd + a3 re).
        let m = table9_conv_cir();
        let sd2 = m.sigma_d * m.sigma_d;
        for &(rd, re) in &[(0.017, 0.01), (0.04, 0.02), (0.1, 0.08)] {
            let (c4, _) = conv_correction_coeffs(&m, rd, re).unwrap();
            let closed = (1.0 / 24.0)
                * (-m.a2 * sd2 * rd - m.a1 * sd2 - m.a3 * sd2 * re);
            assert!(ulps_apart(c4, closed) <= 8.0, "rd={rd} re={re}");
        }

        // a3 = 0 decouples the domestic factor: c4 agrees with the
        // one-factor coefficient of the substitution approximation.
        let mut solo = table9_conv_cir();
        solo.a3 = 0.0;
        solo.gamma_d = 0.75;
        let one_factor = CKLSParams::new(solo.a1, solo.a2, solo.sigma_d, solo.gamma_d);
        for &rd in &[0.01, 0.04, 0.09] {
            let (c4, _) = conv_correction_coeffs(&solo, rd, 0.02).unwrap();
            let c4_1f = vas_subst_error_coefficient(&one_factor).eval(rd).unwrap();
            assert!(ulps_apart(c4, c4_1f) <= 8.0, "rd={rd}: {c4} vs {c4_1f}");
        }

        // gamma_d = 0 kills c4 entirely.
        let mut flat = table9_conv_cir();
        flat.gamma_d = 0.0;
        let (c4, _) = conv_correction_coeffs(&flat, 0.02, 0.01).unwrap();
        assert_eq!(c4, 0.0);
    }

    #[test]
    fn conv_k4_matches_pde_defect_expansion() {
        // Substitute the approximation into the pricing PDE and fit the
        // tau^3, tau^4 coefficients of the defect; they must match the
        // analytic k3, k4. The rate-derivatives of the approximation are
        // computed analytically from the decomposition
        // ln P = A0 + sd_eff^2 Add + se_eff^2 Aee + rho sd_eff se_eff Ade
        //        - D rd - U re.
        let m = table9_conv_cir();
        let (rd, re): (f64, f64) = (0.02, 0.02);
        let (gd, ge) = (m.gamma_d, m.gamma_e);
        let sd_eff = m.sigma_d * rd.powf(gd);
        let se_eff = m.sigma_e * re.powf(ge);

        let add = conv_a_terms(0.0, m.a2, m.a3, 0.0, m.b2, 1.0, 0.0, 0.0);
        let aee = conv_a_terms(0.0, m.a2, m.a3, 0.0, m.b2, 0.0, 1.0, 0.0);
        let ade_full = conv_a_terms(0.0, m.a2, m.a3, 0.0, m.b2, 1.0, 1.0, 1.0);

        let defect = |tau: f64| -> f64 {
            let (d, u) = conv_loadings(m.a2, m.a3, m.b2, tau);
            // A-pieces: Add = (1/2) int D^2, Aee = (1/2) int U^2,
            // Ade = int D U, so that ln P = A0 + sd_eff^2 Add
            // + se_eff^2 Aee + rho sd_eff se_eff Ade - D rd - U re.
            let v_add = conv_a_eval(&add, tau);
            let v_aee = conv_a_eval(&aee, tau);
            let v_ade = conv_a_eval(&ade_full, tau) - v_add - v_aee;
            let e_a2t = (m.a2 * tau).exp();
            let e_b2t = (m.b2 * tau).exp();
            // Time derivative of ln P^{ap}.
            let d_dot = e_a2t;
            let u_dot = m.a3 * (e_a2t - e_b2t) / (m.a2 - m.b2);
            let a_dot = -m.a1 * d - m.b1 * u
                + 0.5 * sd_eff * sd_eff * d * d
                + 0.5 * se_eff * se_eff * u * u
                + m.rho * sd_eff * se_eff * d * u;
            let f_tau = a_dot - d_dot * rd - u_dot * re;
            // Rate derivatives (the state dependence enters through the
            // promoted volatilities).
            let f_rd = 2.0 * gd * m.sigma_d * m.sigma_d * rd.powf(2.0 * gd - 1.0) * v_add
                + gd * m.rho * m.sigma_d * m.sigma_e * rd.powf(gd - 1.0) * re.powf(ge) * v_ade
                - d;
            let f_rdrd = 2.0 * gd * (2.0 * gd - 1.0) * m.sigma_d * m.sigma_d
                * rd.powf(2.0 * gd - 2.0)
                * v_add
                + gd * (gd - 1.0) * m.rho * m.sigma_d * m.sigma_e * rd.powf(gd - 2.0)
                    * re.powf(ge)
                    * v_ade;
            let f_re = 2.0 * ge * m.sigma_e * m.sigma_e * re.powf(2.0 * ge - 1.0) * v_aee
                + ge * m.rho * m.sigma_d * m.sigma_e * rd.powf(gd) * re.powf(ge - 1.0) * v_ade
                - u;
            let f_rere = 2.0 * ge * (2.0 * ge - 1.0) * m.sigma_e * m.sigma_e
                * re.powf(2.0 * ge - 2.0)
                * v_aee
                + ge * (ge - 1.0) * m.rho * m.sigma_d * m.sigma_e * rd.powf(gd)
                    * re.powf(ge - 2.0)
                    * v_ade;
            let f_rdre = 2.0 * gd * ge * m.rho * m.sigma_d * m.sigma_e * rd.powf(gd - 1.0)
                * re.powf(ge - 1.0)
                * v_ade;
            -f_tau
                + (m.a1 + m.a2 * rd + m.a3 * re) * f_rd
                + (m.b1 + m.b2 * re) * f_re
                + 0.5 * sd_eff * sd_eff * (f_rd * f_rd + f_rdrd)
                + 0.5 * se_eff * se_eff * (f_re * f_re + f_rere)
                + m.rho * sd_eff * se_eff * (f_rd * f_re + f_rdre)
                - rd
        };

        // defect(tau) = k3 tau^3 + k4 tau^4 + ...; solve a small Vandermonde
        // system for the first four coefficients of defect / tau^3. The
        // defect evaluation cancels nine digits at these maturities and the
        // fit truncates at tau^6, so the k4 agreement bottoms out near 1e-4
        // relative in f64 (k3, the leading coefficient, fits much tighter);
        // the exact-arithmetic leg below closes the remaining gap.
        let taus: [f64; 4] = [0.02, 0.04, 0.06, 0.08];
        let mut mat = [0.0f64; 16];
        let mut rhs = [0.0f64; 4];
        for (i, &t) in taus.iter().enumerate() {
            for j in 0..4 {
                mat[i * 4 + j] = t.powi(j as i32);
            }
            rhs[i] = defect(t) / t.powi(3);
        }
        let sol = crate::math::solve_dense(&mut mat, &mut rhs, 4).unwrap();
        let k3_fit = sol[0];
        let k4_fit = sol[1];

        let sd2 = m.sigma_d * m.sigma_d;
        let k3_closed = sd2 / 6.0 * (m.a1 + m.a2 * rd + m.a3 * re);
        let k4_closed = conv_k4(&m).eval(rd, re).unwrap();
        assert!(
            (k3_fit / k3_closed - 1.0).abs() < 1e-6,
            "k3: fit {k3_fit:e} vs closed {k3_closed:e}"
        );
        assert!(
            (k4_fit / k4_closed - 1.0).abs() < 1e-4,
            "k4: fit {k4_fit:e} vs closed {k4_closed:e}"
        );

        // Independent exact check of the general k4 power sum: at
        // gamma = 1/2, rho = 0 it must collapse to
        // (sigma_d^2/8)(a2^2 rd + a1 a2 + a2 a3 re - (4/3) sigma_d^2 rd).
        for &(rd, re) in &[(0.02, 0.02), (0.017, 0.01), (0.08, 0.05)] {
            let reduced = sd2 / 8.0
                * (m.a2 * m.a2 * rd + m.a1 * m.a2 + m.a2 * m.a3 * re
                    - 4.0 / 3.0 * sd2 * rd);
            let general = conv_k4(&m).eval(rd, re).unwrap();
            assert!(
                ulps_apart(general, reduced) <= 8.0,
                "rd={rd} re={re}: {general:e} vs {reduced:e}"
            );
        }
    }

    #[test]
    fn conv_ap2_improves_and_has_order_six() {
        let m = table9_conv_cir();
        let (rd, re) = (0.017, 0.01);
        let exact = |tau: f64| conv_cir_log_price(&m, rd, re, tau).unwrap();

        // Error at tau = 0.25 must not get worse.
        let e_ap = (conv_approx_price(&m, rd, re, 0.25).unwrap() - exact(0.25)).abs();
        let e_ap2 = (conv_ap2_price(&m, rd, re, 0.25).unwrap() - exact(0.25)).abs();
        assert!(e_ap2 <= e_ap);

        // Fitted slope of the corrected error on tau in [0.05, 0.4]. The
        // measured value is 5.90 less a residue of a few 1e-3 from the
        // next-order term, independent of (rd, re); the band certifies
        // order 6 without demanding more than the window can show.
        let taus = [0.05, 0.1, 0.2, 0.4];
        let errs: Vec<f64> = taus
            .iter()
            .map(|&t| (conv_ap2_price(&m, rd, re, t).unwrap() - exact(t)).abs())
            .collect();
        let slope = fit_slope(&taus, &errs).unwrap();
        assert!(slope > 5.85 && slope < 6.05, "slope {slope}");
    }

    #[test]
    fn conv_eoc_slopes_against_ode_oracle() {
        // Order measurement against the Riccati ODE oracle. The reference
        // parameter set (a2 = -2) is unusable for this purpose: its tau^5
        // error term nearly cancels the tau^4 term over any window the
        // oracle can resolve (measured slopes drift from 3.3 to 3.8 as the
        // window shrinks without reaching the asymptote), so the orders are
        // measured on a slower-reverting configuration where the tau^4
        // regime is visible at moderate maturities.
        let m = ConvergenceModel {
            a1: 0.005,
            a2: -0.3,
            a3: 0.25,
            b1: 0.002,
            b2: -0.1,
            sigma_d: 0.05,
            sigma_e: 0.03,
            gamma_d: 0.5,
            gamma_e: 0.5,
            rho: 0.0,
        };
        // Points keep a1 + a2 rd + a3 re (the c4 envelope) away from its
        // zero so the sup-error cannot collapse at a sign change.
        let pts = [(0.08, 0.05), (0.1, 0.05), (0.12, 0.04), (0.15, 0.05)];
        for (name, want, taus, improved) in [
            ("conv_approx", 4.0, [0.4, 0.3, 0.2, 0.1], false),
            ("conv_ap2", 6.0, [0.6, 0.45, 0.3, 0.15], true),
        ] {
            let mut sup = [0.0f64; 4];
            for &(rd, re) in &pts {
                for (i, &t) in taus.iter().enumerate() {
                    let ex = conv_cir_log_price(&m, rd, re, t).unwrap();
                    let ap = if improved {
                        conv_ap2_price(&m, rd, re, t).unwrap()
                    } else {
                        conv_approx_price(&m, rd, re, t).unwrap()
                    };
                    sup[i] = sup[i].max((ap - ex).abs());
                }
            }
            let slope = fit_slope(&taus, &sup).unwrap();
            assert!(
                (slope - want).abs() < 0.15,
                "{name}: slope {slope}, expected {want}"
            );
        }
    }

    #[test]
    fn approximations_equal_one_at_tau_zero_and_reject_bad_inputs() {
        let p = table3_cir();
        assert_eq!(cw_price(&p, 0.04, 0.0).unwrap(), 0.0);
        assert_eq!(vas_subst_price(&p, 0.04, 0.0).unwrap(), 0.0);
        let m = table9_conv_cir();
        assert_eq!(conv_approx_price(&m, 0.02, 0.01, 0.0).unwrap(), 0.0);
        assert_eq!(conv_ap2_price(&m, 0.02, 0.01, 0.0).unwrap(), 0.0);

        let mut bad = table3_cir();
        bad.beta = 0.0;
        assert!(cw_price(&bad, 0.04, 1.0).is_err());
        assert!(vas_subst_price(&bad, 0.04, 1.0).is_err());
        assert!(conv_correction_coeffs(&m, 0.0, 0.01).is_err());

        // gamma in (0, 1/2) makes q singular at r = 0.
        let frac = CKLSParams::new(0.00315, -0.0555, 0.0894, 0.25);
        assert!(cw_price(&frac, 0.0, 1.0).is_err());
        assert!(cw_price(&frac, 0.02, 1.0).is_ok());
        // The substitution formula stays finite there.
        assert!(vas_subst_price(&frac, 0.0, 1.0).is_ok());
    }
}
