//! Exponent expansion: small-time Arrow-Debreu kernels and bond prices for
//! constant-volatility transformed models.
//!
//! The state follows `dx = mu(x) dt + sigma dw` with polynomial drift and
//! constant `sigma`, and cash flows are discounted at a state-dependent rate
//! `r(x)`; the log-normal short rate (Ornstein-Uhlenbeck `x`, `r = exp(x)`)
//! is the canonical instance. The discounted transition density is written as
//! the free heat kernel times `exp(-W(x, t))` with `W` expanded in powers of
//! `t`; the coefficient functions `W_n` solve a hierarchy of first-order
//! linear ODEs whose solutions are averaging integrals from the expansion
//! point. The derivation, including the normalization argument that pins
//! `W_0(x0) = 0` and the closed-form checks against the exactly solvable
//! cases, is written out in `docs/exponent-expansion.md`; the recursion here
//! follows it line by line.
//!
//! Each `W_n` is held as a truncated Taylor polynomial in `xi = x - x0`,
//! which turns the averaging integrals into exact coefficient-wise division
//! and sidesteps nested numerical quadrature entirely. For an exponential
//! rate map the `W_n` contain components behaving like `exp(n xi)`, so far
//! from the expansion point the polynomials evaluate small results through
//! violently cancelling partial sums; both the coefficient recursion and the
//! evaluation therefore run in double-double precision, and every evaluation
//! carries a rounding-plus-truncation noise bound that either certifies the
//! value or fails it honestly (see [`ExponentExpansion::log_kernel`]).
//!
//! Single integration of the kernel prices short maturities; for long
//! maturities the expansion is convolved over subintervals via
//! Chapman-Kolmogorov ([`ee_bond_price_convolution`]), trading one
//! `O(tau^{N+1})` error for many `O(step^{N+1})` ones.

use crate::math::dd::DdPoly;
use crate::math::quad;
use crate::models::BlackKarasinskiParams;
use crate::{Error, Result};

/// Highest supported expansion order in `t`.
///
/// Beyond order eight the extra coefficient work buys nothing: where the
/// single-shot expansion converges at all, orders five and six already sit at
/// quoting precision, and longer maturities are better served by the
/// convolution variant at moderate order.
pub const MAX_ORDER: usize = 8;

/// Per-operation scale of the double-double rounding noise, padded well past
/// the worst case of a few hundred fused operations per Horner pass and per
/// recursion level.
const NOISE_EPS: f64 = 3e-27;

/// Largest acceptable noise bound on `W(x, t)`. An error of this size in the
/// log-kernel moves prices at the 1e-7 relative level, far inside every
/// tolerance this module promises.
const TRUST_TOL: f64 = 1e-7;

/// Gaussian decay `xi^2 / (2 sigma^2 t)` beyond which an untrusted
/// evaluation may be replaced by an exact zero: the heat-kernel factor alone
/// is below `exp(-50) ~ 2e-22` of its peak there, so the state contributes
/// nothing to any price integral at this module's tolerances.
const FAR_FIELD_NATS: f64 = 50.0;

/// Nats by which the orders above one may raise the kernel before the
/// truncated series is declared broken at that state. Where the expansion is
/// asymptotically valid these orders move the exponent by well under one
/// nat; raises past ten only happen out in the wings where the series has
/// genuinely left its domain (checked against high-precision profiles of the
/// target models through order six).
const BREAK_NATS: f64 = 10.0;

/// Minimum certified decay `gauss + W_0 + W_1 t` required at a broken state.
/// The zeroth and first coefficients contain no high-order growth and stay
/// meaningful everywhere, so this decay genuinely bounds the true kernel;
/// thirty nats puts the suppressed region below `1e-13` of the peak.
const NEGLIGIBLE_NATS: f64 = 30.0;

/// Discount-rate map `r(x)` applied to the transformed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMap {
    /// `r(x) = c`.
    Constant(f64),
    /// `r(x) = intercept + slope * x`.
    Affine { intercept: f64, slope: f64 },
    /// `r(x) = exp(x)`, the log-normal short-rate map.
    Exp,
}

impl RateMap {
    /// The short rate at transformed state `x`.
    pub fn rate(&self, x: f64) -> f64 {
        match *self {
            RateMap::Constant(c) => c,
            RateMap::Affine { intercept, slope } => intercept + slope * x,
            RateMap::Exp => x.exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RateMap::Constant(c) => c.is_finite(),
            RateMap::Affine { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            RateMap::Exp => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain("rate map coefficients must be finite"))
        }
    }

    /// Taylor coefficients of `r(x0 + xi)` in `xi`, `terms` of them.
    ///
    /// The exponential case divides down the factorial chain in double-double
    /// so the coefficient ratios, which the cancelling far-field evaluation
    /// depends on, stay accurate to the extended precision. The common factor
    /// `exp(x0)` is an overall scale and needs only plain accuracy.
    fn series_at(&self, x0: f64, terms: usize) -> DdPoly {
        match *self {
            RateMap::Constant(c) => DdPoly::constant(c),
            RateMap::Affine { intercept, slope } => {
                DdPoly::from_f64_coeffs(&[intercept + slope * x0, slope])
            }
            RateMap::Exp => {
                let mut p = DdPoly::constant(x0.exp());
                p.c.reserve(terms - 1);
                for k in 1..terms {
                    let prev = p.c[k - 1];
                    p.c.push(prev.div_f64(k as f64));
                }
                p
            }
        }
    }
}

/// Constant-volatility model in the transformed state:
/// `dx = mu(x) dt + sigma dw`, discounted at `rate(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedModel {
    /// Drift coefficients, `mu(x) = drift[0] + drift[1] x + ...`.
    pub drift: Vec<f64>,
    /// Constant volatility of the transformed state.
    pub sigma: f64,
    /// Discount-rate map.
    pub rate: RateMap,
}

impl TransformedModel {
    pub fn new(drift: Vec<f64>, sigma: f64, rate: RateMap) -> Result<Self> {
        let model = TransformedModel { drift, sigma, rate };
        model.validate()?;
        Ok(model)
    }

    /// Log-normal short rate `r = exp(x)` with `x` mean-reverting at speed
    /// `kappa` toward `theta`: `mu(x) = kappa (theta - x)`.
    pub fn black_karasinski(p: &BlackKarasinskiParams) -> Result<Self> {
        p.validate()?;
        TransformedModel::new(vec![p.kappa * p.theta, -p.kappa], p.sigma, RateMap::Exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drift.is_empty() {
            return Err(Error::domain(
                "drift needs at least one coefficient (use [0.0] for a driftless state)",
            ));
        }
        if self.drift.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("drift coefficients must be finite"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::domain(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        self.rate.validate()
    }

    /// Drift `mu(x)` at transformed state `x`.
    pub fn drift_at(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.drift.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Short rate at transformed state `x`.
    pub fn rate_at(&self, x: f64) -> f64 {
        self.rate.rate(x)
    }

    /// `mu(x0 + xi)` as a polynomial in `xi` (exact; the drift has finite
    /// degree).
    fn drift_series_at(&self, x0: f64) -> DdPoly {
        let cap = self.drift.len();
        let lin = DdPoly::from_f64_coeffs(&[x0, 1.0]);
        let mut acc = DdPoly::zero();
        for &c in self.drift.iter().rev() {
            acc = acc.mul_trunc(&lin, cap);
            acc.add_scaled_assign(&DdPoly::constant(c), 1.0);
        }
        acc
    }
}

/// Truncation length for the coefficient polynomials.
///
/// The heaviest series components behave like `exp(j xi)` for small integer
/// `j`, whose Taylor tails need roughly `e * j * half_width` terms to clear
/// double precision; the linear coefficient and the constant margin were
/// fixed against high-precision reference evaluations out to twenty-odd
/// units of `xi` and hold with room to spare. Past the cap the truncation
/// term of the noise bound takes over and fails evaluations honestly.
fn truncation_terms(half_width: f64) -> usize {
    ((6.6 * half_width).ceil() as usize + 60).clamp(64, 320)
}

/// Expansion coefficients `W_0 .. W_order` of the Arrow-Debreu kernel around
/// one source point.
///
/// Every coefficient is a truncated Taylor polynomial in `xi = x - x0`; the
/// half-width given at construction sets both the truncation degree and the
/// guarded evaluation range. Evaluating outside that range, or where the
/// noise bound exceeds the trusted level, is an error rather than a silent
/// loss of accuracy.
#[derive(Debug, Clone)]
pub struct ExponentExpansion {
    x0: f64,
    sigma: f64,
    order: usize,
    half_width: f64,
    terms: usize,
    w: Vec<DdPoly>,
}

/// A truncated-exponent evaluation: the full sum, the stable low-order part
/// `W_0 + W_1 t`, and a rounding-noise bound for each.
struct WEval {
    value: f64,
    noise: f64,
    low: f64,
    low_noise: f64,
}

impl ExponentExpansion {
    /// Build coefficients `W_0 .. W_order` around `x0`, valid for
    /// `|x - x0| <= half_width`.
    pub fn new(
        model: &TransformedModel,
        x0: f64,
        order: usize,
        half_width: f64,
    ) -> Result<Self> {
        model.validate()?;
        if order > MAX_ORDER {
            return Err(Error::domain(format!(
                "expansion order must be at most {MAX_ORDER}, got {order}"
            )));
        }
        if !x0.is_finite() {
            return Err(Error::domain("expansion point must be finite"));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::domain("expansion half-width must be positive"));
        }

        let terms = truncation_terms(half_width);
        let deg = terms - 1;
        let s2 = model.sigma * model.sigma;
        let half_s2 = 0.5 * s2;
        let inv_s2 = 1.0 / s2;

        let mu = model.drift_series_at(x0);
        let mu_d = mu.derivative();
        let rate = model.rate.series_at(x0, terms);

        // W_0' = -mu / sigma^2 with W_0(x0) = 0, integrated term by term.
        // Divide by the exact integer first and apply 1/sigma^2 as a common
        // scale: a per-coefficient rounded divisor would plant independent
        // 1e-16 relative errors that the far-field cancellation amplifies,
        // while a common factor only rescales the whole function.
        let mut w0 = DdPoly::zero();
        w0.c.push(crate::math::dd::Dd::ZERO);
        for (k, &c) in mu.c.iter().enumerate() {
            w0.c.push(c.div_f64(-((k + 1) as f64)).scale(inv_s2));
        }
        let mut w = vec![w0];
        let mut wp = vec![w[0].derivative()];

        // n W_n + xi W_n' = g_{n-1} in Taylor coefficients:
        // (n + k) w_{n,k} = [g_{n-1}]_k.
        for n in 1..=order {
            let m = n - 1;
            let mut g = w[m].derivative().derivative().scale(half_s2);
            for i in 0..=m {
                g.add_scaled_assign(&wp[i].mul_trunc(&wp[m - i], deg), -half_s2);
            }
            g.add_scaled_assign(&mu.mul_trunc(&wp[m], deg), -1.0);
            if m == 0 {
                g.add_scaled_assign(&mu_d, 1.0);
                g.add_scaled_assign(&rate, 1.0);
            }
            let mut wn = DdPoly::zero();
            wn.c.extend(
                (0..g.c.len().min(terms)).map(|k| g.coeff(k).div_f64((n + k) as f64)),
            );
            wp.push(wn.derivative());
            w.push(wn);
        }

        Ok(ExponentExpansion {
            x0,
            sigma: model.sigma,
            order,
            half_width,
            terms,
            w,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    fn xi_checked(&self, x: f64) -> Result<f64> {
        let xi = x - self.x0;
        if !xi.is_finite() || xi.abs() > self.half_width * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::domain(format!(
                "state {x} is outside the expansion range around {} (half-width {})",
                self.x0, self.half_width
            )));
        }
        Ok(xi)
    }

    /// One coefficient polynomial evaluated with its noise bound: rounding
    /// noise proportional to the magnitude the Horner sum works through, plus
    /// a truncation-tail estimate when the polynomial was actually cut off
    /// at the truncation degree.
    fn eval_with_noise(&self, n: usize, xi: f64) -> (f64, f64) {
        let p = &self.w[n];
        let value = p.eval(xi).value();
        let mut noise = p.envelope(xi) * NOISE_EPS;
        if p.c.len() == self.terms && xi.abs() > 1.0 {
            let last = p.c[self.terms - 1].hi.abs().max(1e-300);
            let tail_log = last.ln() + (self.terms - 1) as f64 * xi.abs().ln();
            noise += 4.0 * tail_log.min(700.0).exp();
        }
        (value, noise)
    }

    /// Values `W_0(x) .. W_order(x)`.
    pub fn coeffs_at(&self, x: f64) -> Result<Vec<f64>> {
        let xi = self.xi_checked(x)?;
        (0..=self.order)
            .map(|n| {
                let (value, noise) = self.eval_with_noise(n, xi);
                if noise > TRUST_TOL {
                    Err(Error::numerical(format!(
                        "coefficient {n} lost all accuracy at xi = {xi:.3} \
                         (noise bound {noise:.1e}); the evaluation point is too \
                         far from the expansion point"
                    )))
                } else {
                    Ok(value)
                }
            })
            .collect()
    }

    /// `W(x, t)` truncated at the expansion order, together with its
    /// low-order part `W_0 + W_1 t`. Both carry their own noise bound: the
    /// low-order polynomials are far shorter, so their evaluation often
    /// stays trusted well past the point where the full sum does not.
    fn w_with_noise(&self, xi: f64, t: f64) -> WEval {
        let mut e = WEval {
            value: 0.0,
            noise: 0.0,
            low: 0.0,
            low_noise: 0.0,
        };
        let mut tn = 1.0;
        for n in 0..=self.order {
            if n > 0 {
                tn *= t;
            }
            let (v, dv) = self.eval_with_noise(n, xi);
            e.value += v * tn;
            e.noise += dv * tn;
            if n <= 1 {
                e.low = e.value;
                e.low_noise = e.noise;
            }
        }
        e
    }

    /// `W(x, t)` truncated at the expansion order. Errors if the noise bound
    /// exceeds the trusted level.
    pub fn w_at(&self, x: f64, t: f64) -> Result<f64> {
        let xi = self.xi_checked(x)?;
        let WEval { value, noise, .. } = self.w_with_noise(xi, t);
        if noise > TRUST_TOL {
            return Err(Error::numerical(format!(
                "exponent evaluation lost all accuracy at xi = {xi:.3} \
                 (noise bound {noise:.1e})"
            )));
        }
        Ok(value)
    }

    /// `ln psi(x, t; x0)`: heat-kernel part minus the truncated exponent.
    ///
    /// Returns negative infinity (an exact zero kernel) when the evaluation
    /// is untrusted but the Gaussian factor alone certifies the state as
    /// negligible; errors only when an untrusted value would actually matter.
    ///
    /// A truncated exponent can also leave its domain of validity: far out
    /// in one wing the highest retained orders may swing negative and raise
    /// the kernel instead of damping it. `W_0` and `W_1` never do this
    /// (their growth is at most a single exponential in `xi`), so a large
    /// overturn of the full sum against `W_0 + W_1 t` is a reliable
    /// breakdown signal. Where that happens and the low-order exponent
    /// already certifies the state as negligible, the raise is replaced by
    /// a matching linear decay so the suppressed wing stays continuous for
    /// quadrature; without the certificate the evaluation errors, naming
    /// the order as too low for the requested horizon.
    pub fn log_kernel(&self, x: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(format!(
                "kernel time must be positive and finite, got {t}"
            )));
        }
        let xi = self.xi_checked(x)?;
        let var = self.sigma * self.sigma * t;
        let gauss_decay = xi * xi / (2.0 * var);
        let e = self.w_with_noise(xi, t);
        let low_certifies =
            e.low_noise <= TRUST_TOL && gauss_decay + e.low >= NEGLIGIBLE_NATS;
        if e.noise > TRUST_TOL {
            if low_certifies || gauss_decay >= FAR_FIELD_NATS {
                return Ok(f64::NEG_INFINITY);
            }
            return Err(Error::numerical(format!(
                "kernel evaluation lost all accuracy at x = {x}, t = {t} \
                 (order {}, noise bound {:.1e})",
                self.order, e.noise
            )));
        }
        let log_gauss = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - gauss_decay;
        let overturn = e.low - e.value;
        if overturn > BREAK_NATS {
            if !low_certifies {
                return Err(Error::numerical(format!(
                    "expansion order {} is too low at t = {t}: the \
                     truncated exponent breaks down at x = {x} before the \
                     kernel becomes negligible there",
                    self.order
                )));
            }
            return Ok(log_gauss - e.low + (2.0 * BREAK_NATS - overturn));
        }
        Ok(log_gauss - e.value)
    }

    /// Arrow-Debreu price `psi(x, t; x0)`. Strictly positive wherever the
    /// expansion is numerically meaningful; exactly zero in the certified
    /// far field (see [`log_kernel`](Self::log_kernel)).
    pub fn kernel(&self, x: f64, t: f64) -> Result<f64> {
        let v = self.log_kernel(x, t)?.exp();
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "kernel overflow at x = {x}, t = {t} (order {})",
                self.order
            )));
        }
        Ok(v)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::domain(format!(
            "expansion order must be between 1 and {MAX_ORDER}, got {order}"
        )));
    }
    Ok(())
}

/// Coefficient values `W_0(x) .. W_order(x)` of the kernel expansion around
/// `x0`. The `x -> x0` limit needs no special handling: it is the constant
/// term of each coefficient polynomial.
pub fn ee_coeffs(model: &TransformedModel, x: f64, x0: f64, order: usize) -> Result<Vec<f64>> {
    if order > MAX_ORDER {
        return Err(Error::domain(format!(
            "expansion order must be at most {MAX_ORDER}, got {order}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::domain("evaluation state must be finite"));
    }
    let hw = (x - x0).abs().max(1e-6);
    ExponentExpansion::new(model, x0, order, hw)?.coeffs_at(x)
}

/// Arrow-Debreu price of terminal state `x` at time `t > 0`, expanded to the
/// given order around the initial state `x0`.
pub fn arrow_debreu(model: &TransformedModel, x: f64, t: f64, x0: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    if !x.is_finite() {
        return Err(Error::domain("evaluation state must be finite"));
    }
    let hw = (x - x0).abs().max(1e-6);
    ExponentExpansion::new(model, x0, order, hw)?.kernel(x, t)
}

/// Endpoint of the deterministic mean path `x' = mu(x)` over `[0, tau]`,
/// used only to center the integration window (for small `sigma` the mass
/// sits near the path endpoint, far outside any window built around `x0`).
fn ode_mean(model: &TransformedModel, x0: f64, tau: f64) -> f64 {
    const STEPS: usize = 256;
    let h = tau / STEPS as f64;
    let mut x = x0;
    for _ in 0..STEPS {
        let k1 = model.drift_at(x);
        let k2 = model.drift_at(x + 0.5 * h * k1);
        let k3 = model.drift_at(x + 0.5 * h * k2);
        let k4 = model.drift_at(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !x.is_finite() {
            return x0;
        }
    }
    x
}

/// Zero-coupon bond price by direct integration of the order-`order` kernel
/// over the terminal state.
///
/// The window starts as the hull of the initial state and the deterministic
/// mean endpoint, padded by eight standard deviations `sigma sqrt(tau)`, and
/// grows until the boundary log-density sits sixty nats below the peak, which
/// bounds the discarded tail mass far below the `1e-12` quadrature target.
/// The integrand is exponent-shifted by the peak before exponentiating, so
/// near-deterministic models (tiny `sigma`) price without overflow.
pub fn ee_bond_price(model: &TransformedModel, x0: f64, tau: f64, order: usize) -> Result<f64> {
    check_order(order)?;
    model.validate()?;
    if !x0.is_finite() {
        return Err(Error::domain("initial state must be finite"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!(
            "maturity must be positive and finite, got {tau}"
        )));
    }

    let sig_w = model.sigma * tau.sqrt();
    let x_end = ode_mean(model, x0, tau);
    let mut lo = x0.min(x_end) - 8.0 * sig_w;
    let mut hi = x0.max(x_end) + 8.0 * sig_w;

    const NPROBE: usize = 513;
    for _ in 0..12 {
        let hw = (lo - x0).abs().max((hi - x0).abs()) * 1.000001 + 1e-9;
        let expansion = ExponentExpansion::new(model, x0, order, hw)?;

        let spacing = (hi - lo) / (NPROBE - 1) as f64;
        let mut ln_vals = [0.0; NPROBE];
        let mut peak = f64::NEG_INFINITY;
        for (i, v) in ln_vals.iter_mut().enumerate() {
            *v = expansion.log_kernel(lo + spacing * i as f64, tau)?;
            peak = peak.max(*v);
        }
        if !peak.is_finite() {
            return Err(Error::numerical(format!(
                "kernel expansion diverged over the integration window \
                 (order {order}, tau {tau})"
            )));
        }
        // Grow the window while either edge still carries weight.
        let mut grew = false;
        if ln_vals[0] > peak - 60.0 {
            lo -= 4.0 * sig_w;
            grew = true;
        }
        if ln_vals[NPROBE - 1] > peak - 60.0 {
            hi += 4.0 * sig_w;
            grew = true;
        }
        if grew {
            continue;
        }

        // Integrate only where the density is within 80 nats of the peak;
        // the remainder is below any representable contribution.
        let first = ln_vals.iter().position(|&v| v > peak - 80.0).unwrap_or(0);
        let last = NPROBE - 1
            - ln_vals
                .iter()
                .rev()
                .position(|&v| v > peak - 80.0)
                .unwrap_or(0);
        let a = lo + spacing * first.saturating_sub(1) as f64;
        let b = lo + spacing * (last + 1).min(NPROBE - 1) as f64;

        // The log-density is produced by cancelling the Gaussian exponent
        // against the drift action; at small volatility that cancellation
        // runs through tens of thousands of nats and leaves the integrand
        // with relative jitter around 1e-11. Ask for 1e-9 so the quadrature
        // refines well past any price tolerance without chasing that noise.
        let mut failure = None;
        let integral = quad::integrate_adaptive(
            |x| match expansion.log_kernel(x, tau) {
                Ok(l) => (l - peak).exp(),
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            },
            a,
            b,
            1e-9,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let integral = integral.ok_or_else(|| {
            Error::numerical(format!(
                "bond-price quadrature did not converge at expansion order {order}"
            ))
        })?;
        let price = peak.exp() * integral;
        if !price.is_finite() || !(price > 0.0) {
            return Err(Error::numerical(format!(
                "bond price came out non-positive or non-finite at order {order}"
            )));
        }
        return Ok(price);
    }
    Err(Error::numerical(format!(
        "integration window failed to stabilize at expansion order {order}"
    )))
}

fn build_slices(tau: f64, step: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!(
            "maturity must be positive and finite, got {tau}"
        )));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::domain(format!(
            "convolution step must be positive and finite, got {step}"
        )));
    }
    if step > tau * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "convolution step {step} exceeds the maturity {tau}"
        )));
    }
    let n_full = ((tau / step) + 1e-12).floor().max(1.0) as usize;
    let rem = tau - n_full as f64 * step;
    let mut slices = vec![step.min(tau); n_full];
    if rem > 1e-9 * tau.max(step) {
        slices.push(rem);
    }
    Ok(slices)
}

/// Zero-coupon bond price by convolving the expansion over subintervals.
///
/// `[0, tau]` is split into slices of length `step` (the last one shortened
/// when `tau` is not a multiple), and the discounted state density is pushed
/// through one order-`order` kernel per slice on a 200-node Gauss-Legendre
/// grid. The grid tracks the numerically relevant support of the density,
/// padded by eight single-slice standard deviations; if mass ever reaches the
/// grid boundary the run aborts rather than silently truncating. Kernel
/// contributions beyond twelve single-slice standard deviations of a source
/// are dropped; they sit below `exp(-72)` relative to that source's peak.
pub fn ee_bond_price_convolution(
    model: &TransformedModel,
    x0: f64,
    tau: f64,
    order: usize,
    step: f64,
) -> Result<f64> {
    check_order(order)?;
    model.validate()?;
    if !x0.is_finite() {
        return Err(Error::domain("initial state must be finite"));
    }
    let slices = build_slices(tau, step)?;

    const NODES: usize = 200;
    let (ref_nodes, ref_weights) = quad::gauss_legendre(NODES);

    let mut nodes: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut density: Vec<f64> = Vec::new();
    let mut support = (x0, x0);
    let mut first = true;

    for &dt in &slices {
        let sig = model.sigma * dt.sqrt();
        let pad = 8.0 * sig;
        let band = 12.0 * sig;
        let hw = band * 1.000001 + 1e-9;
        let (glo, ghi) = (support.0 - pad, support.1 + pad);
        let half = 0.5 * (ghi - glo);
        let mid = 0.5 * (glo + ghi);
        let new_nodes: Vec<f64> = ref_nodes.iter().map(|&u| mid + half * u).collect();
        let new_weights: Vec<f64> = ref_weights.iter().map(|&w| w * half).collect();
        let mut new_density = vec![0.0; NODES];

        if first {
            let expansion = ExponentExpansion::new(model, x0, order, hw)?;
            for (j, &y) in new_nodes.iter().enumerate() {
                if (y - x0).abs() <= band {
                    new_density[j] = expansion.kernel(y, dt)?;
                }
            }
        } else {
            let total_mass: f64 = weights
                .iter()
                .zip(&density)
                .map(|(&w, &f)| w * f)
                .sum();
            for i in 0..NODES {
                let contribution = weights[i] * density[i];
                // Sources carrying less than 1e-16 of the mass cannot move
                // the result at the 1e-12 level even in aggregate.
                if contribution <= 1e-16 * total_mass {
                    continue;
                }
                let xi = nodes[i];
                let expansion = ExponentExpansion::new(model, xi, order, hw)?;
                let j_lo = new_nodes.partition_point(|&y| y < xi - band);
                let j_hi = new_nodes.partition_point(|&y| y <= xi + band);
                for j in j_lo..j_hi {
                    new_density[j] += contribution * expansion.kernel(new_nodes[j], dt)?;
                }
            }
        }

        let mass: f64 = new_weights
            .iter()
            .zip(&new_density)
            .map(|(&w, &f)| w * f)
            .sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::numerical(format!(
                "convolution mass degenerated at order {order}, step {step}"
            )));
        }
        let edge_mass =
            new_weights[0] * new_density[0] + new_weights[NODES - 1] * new_density[NODES - 1];
        if edge_mass > 1e-12 * mass {
            return Err(Error::numerical(format!(
                "probability mass reached the convolution grid boundary \
                 (order {order}, step {step}); the drift pushes the state \
                 outside the tracked support"
            )));
        }

        let fmax = new_density.iter().cloned().fold(0.0, f64::max);
        let in_support: Vec<usize> = (0..NODES)
            .filter(|&j| new_density[j] > 1e-13 * fmax)
            .collect();
        let (s_lo, s_hi) = match (in_support.first(), in_support.last()) {
            (Some(&a), Some(&b)) => (new_nodes[a], new_nodes[b]),
            _ => (mid, mid),
        };
        support = (s_lo, s_hi);
        nodes = new_nodes;
        weights = new_weights;
        density = new_density;
        first = false;
    }

    let price: f64 = weights
        .iter()
        .zip(&density)
        .map(|(&w, &f)| w * f)
        .sum();
    if !price.is_finite() || !(price > 0.0) {
        return Err(Error::numerical(format!(
            "convolution price came out non-positive or non-finite at order {order}"
        )));
    }
    Ok(price)
}
