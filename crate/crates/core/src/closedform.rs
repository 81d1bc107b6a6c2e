//! Exact zero-coupon bond prices for the families that admit them: Vasicek,
//! CIR, the Vasicek-type convergence model (closed-form affine functions),
//! the uncorrelated CIR-type convergence model (Riccati ODE system), and
//! additive multi-factor CIR products.
//!
//! All prices use the affine representation `P = exp(A - B r)` for one factor
//! and `P = exp(A - D r_d - U r_e)` for two, with the log-intercept `A` and
//! loadings vanishing at `tau = 0`.

use crate::math::ode::{dopri5, Tolerances};
use crate::math::int_exp;
use crate::models::{CKLSParams, ConvergenceModel, MultiCIRParams};
use crate::{Error, Result};

/// ODE tolerances used wherever a Riccati system replaces a closed form. The
/// integration error must stay far below the order-4 and order-5 differences
/// measured against these prices.
pub(crate) const RICCATI_TOL: Tolerances = Tolerances {
    rtol: 1e-12,
    atol: 1e-14,
};

/// Affine log-price decomposition at a single maturity:
/// `ln P = a - b r` for one-factor models, `ln P = a - b r_d - u r_e` for
/// convergence models (`b` is the loading on the domestic or only rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSolution {
    pub a: f64,
    pub b: f64,
    pub u: Option<f64>,
}

impl AffineSolution {
    /// Reassemble the price at the given rate(s). `r_e` is ignored unless a
    /// second loading is present.
    pub fn price(&self, r: f64, r_e: f64) -> f64 {
        (self.a - self.b * r - self.u.unwrap_or(0.0) * r_e).exp()
    }

    pub fn log_price(&self, r: f64, r_e: f64) -> f64 {
        self.a - self.b * r - self.u.unwrap_or(0.0) * r_e
    }
}

// ---------------------------------------------------------------------------
// Vasicek
// ---------------------------------------------------------------------------

/// Affine functions for the Vasicek model (`gamma = 0`) at maturity `tau`:
///
/// `b(tau) = (e^{beta tau} - 1) / beta`,
/// `a(tau) = (alpha/beta + sigma^2/(2 beta^2)) (tau - b) + sigma^2 b^2 / (4 beta)`.
pub fn vasicek_affine(p: &CKLSParams, tau: f64) -> Result<AffineSolution> {
    if p.gamma != 0.0 {
        return Err(Error::unsupported(format!(
            "Vasicek price requires gamma = 0, got {}",
            p.gamma
        )));
    }
    if p.beta == 0.0 {
        return Err(Error::domain("Vasicek price requires beta != 0"));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("maturity must be nonnegative, got {tau}")));
    }
    let (a, b) = vasicek_ab(p.alpha, p.beta, p.sigma * p.sigma, tau);
    Ok(AffineSolution { a, b, u: None })
}

/// The Vasicek affine pair for a given squared volatility: shared by the
/// exact price and the substitution approximation that replaces `sigma^2`
/// with a state-dependent constant. Caller guarantees `beta != 0`,
/// `tau >= 0`.
pub(crate) fn vasicek_ab(alpha: f64, beta: f64, s2: f64, tau: f64) -> (f64, f64) {
    let b = int_exp(beta, tau);
    let a = (alpha / beta + s2 / (2.0 * beta * beta)) * (tau - b)
        + s2 * b * b / (4.0 * beta);
    (a, b)
}

/// Exact Vasicek bond price.
pub fn vasicek_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    Ok(vasicek_affine(p, tau)?.price(r, 0.0))
}

/// Exact Vasicek log-price; the natural unit for error norms.
pub fn vasicek_log_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    Ok(vasicek_affine(p, tau)?.log_price(r, 0.0))
}

// ---------------------------------------------------------------------------
// CIR
// ---------------------------------------------------------------------------

/// Affine functions for the CIR model (`gamma = 1/2`) from the closed-form
/// Riccati solution. With `eta = sqrt(beta^2 + 2 sigma^2)` the textbook form
/// is
///
/// `b = 2 (e^{eta tau} - 1) / ((eta - beta)(e^{eta tau} - 1) + 2 eta)`,
/// `a = (2 alpha / sigma^2) ln[ 2 eta e^{(eta - beta) tau / 2} / ((eta - beta)(e^{eta tau} - 1) + 2 eta) ]`,
///
/// which overflows for large `eta tau` and loses all precision for small
/// `sigma` (the log approaches `(eta + beta) tau / 2` and the difference is
/// divided by `sigma^2`). This evaluation is algebraically identical but
/// conditioned: it uses `eta + beta = 2 sigma^2 / (eta - beta)` exactly, and
/// folds the log into a single `ln_1p` of an `O(sigma^2)` quantity, so the
/// `sigma -> 0` limit degrades gracefully to the deterministic discount.
pub fn cir_affine(p: &CKLSParams, tau: f64) -> Result<AffineSolution> {
    check_cir(p, tau)?;
    let beta = p.beta;
    let s2 = p.sigma * p.sigma;
    let eta = (beta * beta + 2.0 * s2).sqrt();
    let delta = eta - beta; // always positive: eta > |beta|
    let em = (-eta * tau).exp();
    let one_minus = -(-eta * tau).exp_m1(); // 1 - e^{-eta tau}, no cancellation
    let q = 2.0 * s2 / (delta * delta); // (eta + beta) / (eta - beta)
    let scaled_denom = 1.0 + q * em; // denom / ((eta - beta) e^{eta tau})
    let b = 2.0 * one_minus / (delta * scaled_denom);
    let a = (2.0 * p.alpha / s2) * (q * one_minus / scaled_denom).ln_1p()
        - 2.0 * p.alpha * tau / delta;
    Ok(AffineSolution { a, b, u: None })
}

/// Affine functions for the CIR model by adaptive integration of the Riccati
/// pair `b' = 1 + beta b - sigma^2 b^2 / 2`, `a' = -alpha b`. Slower than
/// [`cir_affine`] but independent of it; the two must agree to about 1e-12.
pub fn cir_affine_ode(p: &CKLSParams, tau: f64) -> Result<AffineSolution> {
    check_cir(p, tau)?;
    let beta = p.beta;
    let half_s2 = 0.5 * p.sigma * p.sigma;
    let alpha = p.alpha;
    let y = dopri5(
        |_, y, dy| {
            let b = y[0];
            dy[0] = 1.0 + beta * b - half_s2 * b * b;
            dy[1] = -alpha * b;
        },
        0.0,
        tau,
        &[0.0, 0.0],
        RICCATI_TOL,
    )?;
    Ok(AffineSolution {
        a: y[1],
        b: y[0],
        u: None,
    })
}

fn check_cir(p: &CKLSParams, tau: f64) -> Result<()> {
    if p.gamma != 0.5 {
        return Err(Error::unsupported(format!(
            "CIR price requires gamma = 1/2, got {}",
            p.gamma
        )));
    }
    if !(p.sigma > 0.0) {
        return Err(Error::domain("CIR price requires sigma > 0"));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("maturity must be nonnegative, got {tau}")));
    }
    Ok(())
}

/// Exact CIR bond price (closed form).
pub fn cir_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::domain(format!("CIR price requires r >= 0, got {r}")));
    }
    Ok(cir_affine(p, tau)?.price(r, 0.0))
}

/// Exact CIR log-price (closed form).
pub fn cir_log_price(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::domain(format!("CIR price requires r >= 0, got {r}")));
    }
    Ok(cir_affine(p, tau)?.log_price(r, 0.0))
}

/// CIR price computed through both routes (closed form and Riccati ODE),
/// erroring if they disagree beyond `1e-12` relative. Tests and reference
/// tables use this guarded version; hot loops call [`cir_price`].
pub fn cir_price_checked(p: &CKLSParams, r: f64, tau: f64) -> Result<f64> {
    if r < 0.0 {
        return Err(Error::domain(format!("CIR price requires r >= 0, got {r}")));
    }
    let closed = cir_affine(p, tau)?;
    let ode = cir_affine_ode(p, tau)?;
    let p_closed = closed.price(r, 0.0);
    let p_ode = ode.price(r, 0.0);
    let rel = (p_closed - p_ode).abs() / p_closed.abs().max(1e-300);
    if rel > 1e-12 {
        return Err(Error::numerical(format!(
            "CIR closed form and ODE integration disagree: {p_closed} vs {p_ode} \
             (relative {rel:.3e}) at r = {r}, tau = {tau}"
        )));
    }
    Ok(p_closed)
}

// ---------------------------------------------------------------------------
// Convergence model, Vasicek type (closed form)
// ---------------------------------------------------------------------------

/// Loadings for the convergence model's affine solution:
/// `D(tau) = (e^{a2 tau} - 1)/a2` and
/// `U(tau) = a3 (D(tau) - E(tau)) / (a2 - b2)` with `E` the same kernel at
/// `b2`. Shared by the exact Vasicek-type price and the CKLS-type
/// approximation (which only swaps the volatility constants).
pub(crate) fn conv_loadings(a2: f64, a3: f64, b2: f64, tau: f64) -> (f64, f64) {
    let d = int_exp(a2, tau);
    let e = int_exp(b2, tau);
    let u = a3 * (d - e) / (a2 - b2);
    (d, u)
}

/// The integrand of `A(tau)` for the Vasicek-type convergence model is a sum
/// of exponentials `sum_k c_k e^{lambda_k s}` with rates drawn from
/// `{0, a2, b2, 2 a2, a2 + b2, 2 b2}`. This builds the `(lambda, c)` terms
/// for given volatility constants, so the antiderivative is
/// `A(tau) = sum_k c_k (e^{lambda_k tau} - 1)/lambda_k`, each term evaluated
/// by the cancellation-safe kernel.
pub(crate) fn conv_a_terms(
    a1: f64,
    a2: f64,
    a3: f64,
    b1: f64,
    b2: f64,
    sd: f64,
    se: f64,
    rho: f64,
) -> Vec<(f64, f64)> {
    // D(s) = (1/a2) e^{a2 s} - 1/a2
    let d_terms = [(a2, 1.0 / a2), (0.0, -1.0 / a2)];
    // U(s) = k [ (1/a2) e^{a2 s} - (1/b2) e^{b2 s} + (1/b2 - 1/a2) ]
    let k = a3 / (a2 - b2);
    let u_terms = [
        (a2, k / a2),
        (b2, -k / b2),
        (0.0, k / b2 - k / a2),
    ];

    let mut acc: Vec<(f64, f64)> = Vec::new();
    let mut add = |lambda: f64, coef: f64| {
        if coef == 0.0 {
            return;
        }
        if let Some(t) = acc.iter_mut().find(|t| t.0 == lambda) {
            t.1 += coef;
        } else {
            acc.push((lambda, coef));
        }
    };

    for &(l, c) in &d_terms {
        add(l, -a1 * c);
    }
    for &(l, c) in &u_terms {
        add(l, -b1 * c);
    }
    for &(l1, c1) in &d_terms {
        for &(l2, c2) in &d_terms {
            add(l1 + l2, 0.5 * sd * sd * c1 * c2);
        }
    }
    for &(l1, c1) in &u_terms {
        for &(l2, c2) in &u_terms {
            add(l1 + l2, 0.5 * se * se * c1 * c2);
        }
    }
    for &(l1, c1) in &d_terms {
        for &(l2, c2) in &u_terms {
            add(l1 + l2, rho * sd * se * c1 * c2);
        }
    }
    acc
}

/// Evaluate `A(tau)` from its exponential-sum terms.
pub(crate) fn conv_a_eval(terms: &[(f64, f64)], tau: f64) -> f64 {
    terms.iter().map(|&(l, c)| c * int_exp(l, tau)).sum()
}

pub(crate) fn check_conv_closed_form(m: &ConvergenceModel) -> Result<()> {
    if m.a2 == m.b2 {
        return Err(Error::unsupported(
            "convergence model closed form requires a2 != b2",
        ));
    }
    if m.a2 == 0.0 || m.b2 == 0.0 {
        return Err(Error::unsupported(
            "convergence model closed form requires a2 != 0 and b2 != 0",
        ));
    }
    Ok(())
}

/// Affine functions of the Vasicek-type convergence model at maturity `tau`.
pub fn conv_vasicek_affine(m: &ConvergenceModel, tau: f64) -> Result<AffineSolution> {
    if m.gamma_d != 0.0 || m.gamma_e != 0.0 {
        return Err(Error::unsupported(
            "convergence Vasicek price requires gamma_d = gamma_e = 0",
        ));
    }
    check_conv_closed_form(m)?;
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("maturity must be nonnegative, got {tau}")));
    }
    let (d, u) = conv_loadings(m.a2, m.a3, m.b2, tau);
    let terms = conv_a_terms(m.a1, m.a2, m.a3, m.b1, m.b2, m.sigma_d, m.sigma_e, m.rho);
    let a = conv_a_eval(&terms, tau);
    Ok(AffineSolution { a, b: d, u: Some(u) })
}

/// Exact bond price in the Vasicek-type convergence model,
/// `P = exp(A - D r_d - U r_e)`.
pub fn conv_vasicek_price(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<f64> {
    Ok(conv_vasicek_affine(m, tau)?.price(r_d, r_e))
}

/// Log of the Vasicek-type convergence bond price. Comparing log-prices
/// avoids the exp/log round trip when an approximation is benchmarked
/// against this solution.
pub fn conv_vasicek_log_price(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<f64> {
    Ok(conv_vasicek_affine(m, tau)?.log_price(r_d, r_e))
}

// ---------------------------------------------------------------------------
// Convergence model, CIR type (ODE system)
// ---------------------------------------------------------------------------

/// Affine functions of the uncorrelated CIR-type convergence model, from the
/// Riccati system
/// `D' = 1 + a2 D - sigma_d^2 D^2 / 2`,
/// `U' = a3 D + b2 U - sigma_e^2 U^2 / 2`,
/// `A' = -a1 D - b1 U`, integrated adaptively to relative tolerance 1e-12.
pub fn conv_cir_affine(m: &ConvergenceModel, tau: f64) -> Result<AffineSolution> {
    if m.rho != 0.0 {
        return Err(Error::unsupported(
            "convergence CIR price requires rho = 0 (no separable solution otherwise)",
        ));
    }
    if m.gamma_d != 0.5 || m.gamma_e != 0.5 {
        return Err(Error::unsupported(
            "convergence CIR price requires gamma_d = gamma_e = 1/2",
        ));
    }
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("maturity must be nonnegative, got {tau}")));
    }
    let (a1, a2, a3, b1, b2) = (m.a1, m.a2, m.a3, m.b1, m.b2);
    let half_sd2 = 0.5 * m.sigma_d * m.sigma_d;
    let half_se2 = 0.5 * m.sigma_e * m.sigma_e;
    let y = dopri5(
        |_, y, dy| {
            let (d, u) = (y[0], y[1]);
            dy[0] = 1.0 + a2 * d - half_sd2 * d * d;
            dy[1] = a3 * d + b2 * u - half_se2 * u * u;
            dy[2] = -a1 * d - b1 * u;
        },
        0.0,
        tau,
        &[0.0, 0.0, 0.0],
        RICCATI_TOL,
    )?;
    Ok(AffineSolution {
        a: y[2],
        b: y[0],
        u: Some(y[1]),
    })
}

/// Bond price in the uncorrelated CIR-type convergence model.
pub fn conv_cir_price(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<f64> {
    if r_d < 0.0 || r_e < 0.0 {
        return Err(Error::domain(format!(
            "convergence CIR price requires nonnegative rates, got ({r_d}, {r_e})"
        )));
    }
    Ok(conv_cir_affine(m, tau)?.price(r_d, r_e))
}

/// Log of the uncorrelated CIR-type convergence bond price.
pub fn conv_cir_log_price(m: &ConvergenceModel, r_d: f64, r_e: f64, tau: f64) -> Result<f64> {
    if r_d < 0.0 || r_e < 0.0 {
        return Err(Error::domain(format!(
            "convergence CIR price requires nonnegative rates, got ({r_d}, {r_e})"
        )));
    }
    Ok(conv_cir_affine(m, tau)?.log_price(r_d, r_e))
}

// ---------------------------------------------------------------------------
// Multi-factor CIR
// ---------------------------------------------------------------------------

/// Bond price when the short rate is a sum of independent CIR factors: the
/// product of the per-factor prices, each with its own risk-neutral
/// parameters.
pub fn multi_cir_price(p: &MultiCIRParams, factors: &[f64], tau: f64) -> Result<f64> {
    p.validate()?;
    if factors.len() != p.factors.len() {
        return Err(Error::domain(format!(
            "multi-factor CIR: {} factor levels supplied for {} factors",
            factors.len(),
            p.factors.len()
        )));
    }
    let mut price = 1.0;
    for (f, &r_i) in p.factors.iter().zip(factors) {
        price *= cir_price(&f.to_risk_neutral(), r_i, tau)?;
    }
    Ok(price)
}
