//! Model parameter types for the short-rate families handled by this crate,
//! plus the real-measure to risk-neutral conversions and the basic
//! price/yield algebra.
//!
//! Everything downstream works with risk-neutral dynamics. One-factor models
//! are carried by [`ShortRateModel1F`]; the CKLS family
//! `dr = (alpha + beta r) dt + sigma r^gamma dw` covers Vasicek (`gamma = 0`),
//! CIR (`gamma = 1/2`), and Dothan (`alpha = 0`, `gamma = 1`) as special
//! cases, so those classic names are constructors rather than separate types.
//! Two-factor convergence dynamics, where a domestic rate reverts toward a
//! stochastic European rate, live in [`ConvergenceModel`]. Stochastic
//! volatility (Fong-Vasicek) and additive multi-factor CIR models are carried
//! for simulation and, for the latter, product-form exact pricing.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// CKLS parameters for `dr = (alpha + beta r) dt + sigma r^gamma dw` in the
/// risk-neutral measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CKLSParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl CKLSParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64, gamma: f64) -> Self {
        CKLSParams {
            alpha,
            beta,
            sigma,
            gamma,
        }
    }

    /// Vasicek model: constant volatility, `gamma = 0`.
    pub fn vasicek(alpha: f64, beta: f64, sigma: f64) -> Self {
        Self::new(alpha, beta, sigma, 0.0)
    }

    /// Cox-Ingersoll-Ross model: square-root volatility, `gamma = 1/2`.
    pub fn cir(alpha: f64, beta: f64, sigma: f64) -> Self {
        Self::new(alpha, beta, sigma, 0.5)
    }

    /// Dothan model: `dr = mu r dt + sigma r dw`.
    pub fn dothan(mu: f64, sigma: f64) -> Self {
        Self::new(0.0, mu, sigma, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::domain(format!(
                "CKLS: sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::domain(format!(
                "CKLS: gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::domain("CKLS: non-finite drift parameters"));
        }
        Ok(())
    }

    /// Risk-neutral drift `alpha + beta r`.
    pub fn drift(&self, r: f64) -> f64 {
        self.alpha + self.beta * r
    }

    /// Volatility `sigma r^gamma`. At `r = 0` this is `sigma` for
    /// `gamma = 0` and zero for `gamma > 0`.
    pub fn vol(&self, r: f64) -> f64 {
        self.sigma * pow_gamma(r, self.gamma)
    }

    /// Squared volatility `sigma^2 r^{2 gamma}`.
    pub fn vol2(&self, r: f64) -> f64 {
        let v = self.vol(r);
        v * v
    }
}

/// `r^g` with the conventions needed for state-dependent volatilities:
/// `0^0 = 1`, `0^g = 0` for `g > 0`.
pub(crate) fn pow_gamma(r: f64, g: f64) -> f64 {
    if g == 0.0 {
        1.0
    } else if r == 0.0 {
        0.0
    } else {
        r.powf(g)
    }
}

/// Vasicek model in the real measure: `dr = kappa (theta - r) dt + sigma dw`
/// with a constant market price of risk `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VasicekRealParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub lambda: f64,
}

impl VasicekRealParams {
    /// Risk-neutral CKLS form: `alpha = kappa theta - lambda sigma`,
    /// `beta = -kappa`, volatility unchanged.
    pub fn to_risk_neutral(&self) -> CKLSParams {
        CKLSParams::vasicek(
            self.kappa * self.theta - self.lambda * self.sigma,
            -self.kappa,
            self.sigma,
        )
    }
}

/// CIR model in the real measure:
/// `dr = kappa (theta - r) dt + sigma sqrt(r) dw` with market price of risk
/// `lambda sqrt(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIRRealParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub lambda: f64,
}

impl CIRRealParams {
    /// Risk-neutral CKLS form: the `lambda sqrt(r)` risk premium keeps the
    /// drift affine, shifting only the mean-reversion speed:
    /// `alpha = kappa theta`, `beta = -(kappa + lambda sigma)`.
    pub fn to_risk_neutral(&self) -> CKLSParams {
        CKLSParams::cir(
            self.kappa * self.theta,
            -(self.kappa + self.lambda * self.sigma),
            self.sigma,
        )
    }
}

/// Black-Karasinski model: the log-rate `x = ln r` follows the
/// Ornstein-Uhlenbeck process `dx = kappa (theta - x) dt + sigma dw`.
///
/// By Ito's formula the rate itself satisfies
/// `dr = r (kappa theta + sigma^2/2 - kappa ln r) dt + sigma r dw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlackKarasinskiParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
}

impl BlackKarasinskiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::domain("Black-Karasinski: sigma must be positive"));
        }
        Ok(())
    }

    /// Drift of the log-rate process at `x = ln r`.
    pub fn log_drift(&self, x: f64) -> f64 {
        self.kappa * (self.theta - x)
    }

    /// Short-rate drift `r (kappa theta + sigma^2/2 - kappa ln r)`.
    pub fn drift(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::domain(format!(
                "Black-Karasinski: rate must be positive, got {r}"
            )));
        }
        Ok(r * (self.kappa * self.theta + 0.5 * self.sigma * self.sigma
            - self.kappa * r.ln()))
    }

    /// Short-rate volatility `sigma r`.
    pub fn vol(&self, r: f64) -> f64 {
        self.sigma * r
    }
}

/// Nonlinear-drift model with a `1/r` term:
/// `dr = (alpha_m1 / r + alpha0 + alpha1 r + alpha2 r^2) dt + sigma r^gamma dw`.
///
/// The drift produces little mean reversion in the middle of the rate's range
/// and strong pull at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AitSahaliaDriftParams {
    pub alpha_m1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl AitSahaliaDriftParams {
    pub fn drift(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(Error::domain(format!(
                "nonlinear drift: rate must be positive (1/r term), got {r}"
            )));
        }
        Ok(self.alpha_m1 / r + self.alpha0 + self.alpha1 * r + self.alpha2 * r * r)
    }

    pub fn vol(&self, r: f64) -> f64 {
        self.sigma * pow_gamma(r, self.gamma)
    }
}

/// One-factor short-rate model in the risk-neutral measure.
///
/// Serialized as a tagged JSON object, e.g.
/// `{"family": "ckls", "alpha": 0.00315, "beta": -0.0555, "sigma": 0.0894,
/// "gamma": 0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShortRateModel1F {
    Ckls(CKLSParams),
    BlackKarasinski(BlackKarasinskiParams),
    AitSahalia(AitSahaliaDriftParams),
}

impl ShortRateModel1F {
    /// Risk-neutral drift and volatility at rate `r`.
    ///
    /// Errors when `r` is outside the family's domain: negative rates for
    /// state-dependent volatility, `r <= 0` where the drift involves `ln r`
    /// or `1/r`.
    pub fn drift_vol(&self, r: f64) -> Result<(f64, f64)> {
        match self {
            ShortRateModel1F::Ckls(p) => {
                if p.gamma > 0.0 && r < 0.0 {
                    return Err(Error::domain(format!(
                        "CKLS with gamma = {}: rate must be nonnegative, got {r}",
                        p.gamma
                    )));
                }
                Ok((p.drift(r), p.vol(r)))
            }
            ShortRateModel1F::BlackKarasinski(p) => Ok((p.drift(r)?, p.vol(r))),
            ShortRateModel1F::AitSahalia(p) => Ok((p.drift(r)?, p.vol(r))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ShortRateModel1F::Ckls(p) => p.validate(),
            ShortRateModel1F::BlackKarasinski(p) => p.validate(),
            ShortRateModel1F::AitSahalia(p) => {
                if !(p.sigma > 0.0) {
                    return Err(Error::domain("nonlinear drift: sigma must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Two-factor convergence model of CKLS type in the risk-neutral measure:
///
/// ```text
/// dr_d = (a1 + a2 r_d + a3 r_e) dt + sigma_d r_d^gamma_d dw_d
/// dr_e = (b1 + b2 r_e) dt + sigma_e r_e^gamma_e dw_e,   cov(dw_d, dw_e) = rho dt
/// ```
///
/// The European rate `r_e` is autonomous; the domestic rate `r_d` reverts
/// toward it. `gamma_d = gamma_e = 0` is the Vasicek-type convergence model
/// with exact bond prices; `gamma_d = gamma_e = 1/2` with `rho = 0` is the
/// CIR-type model whose prices come from a Riccati ODE system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub sigma_d: f64,
    pub sigma_e: f64,
    pub gamma_d: f64,
    pub gamma_e: f64,
    pub rho: f64,
}

impl ConvergenceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_d > 0.0 && self.sigma_e > 0.0) {
            return Err(Error::domain("convergence model: volatilities must be positive"));
        }
        if !(self.gamma_d >= 0.0 && self.gamma_e >= 0.0) {
            return Err(Error::domain("convergence model: exponents must be nonnegative"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::domain(format!(
                "convergence model: rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Convenience constructor for the Vasicek-type model in the
    /// Corzo-Schwarz parametrization `dr_d = (a + b (r_e - r_d)) dt + ...`,
    /// `dr_e = c (d - r_e) dt + ...`.
    #[allow(clippy::too_many_arguments)]
    pub fn corzo_schwarz(
        a: f64,
        b: f64,
        sigma_d: f64,
        c: f64,
        d: f64,
        sigma_e: f64,
        rho: f64,
    ) -> Self {
        ConvergenceModel {
            a1: a,
            a2: -b,
            a3: b,
            b1: c * d,
            b2: -c,
            sigma_d,
            sigma_e,
            gamma_d: 0.0,
            gamma_e: 0.0,
            rho,
        }
    }

    pub fn drift_d(&self, r_d: f64, r_e: f64) -> f64 {
        self.a1 + self.a2 * r_d + self.a3 * r_e
    }

    pub fn drift_e(&self, r_e: f64) -> f64 {
        self.b1 + self.b2 * r_e
    }

    pub fn vol_d(&self, r_d: f64) -> f64 {
        self.sigma_d * pow_gamma(r_d, self.gamma_d)
    }

    pub fn vol_e(&self, r_e: f64) -> f64 {
        self.sigma_e * pow_gamma(r_e, self.gamma_e)
    }

    /// The autonomous European factor as a one-factor CKLS model.
    pub fn european_factor(&self) -> CKLSParams {
        CKLSParams::new(self.b1, self.b2, self.sigma_e, self.gamma_e)
    }
}

/// Fong-Vasicek stochastic volatility model in the real measure:
///
/// ```text
/// dr = kappa1 (theta1 - r) dt + sqrt(y) dw1
/// dy = kappa2 (theta2 - y) dt + v sqrt(y) dw2,   cov(dw1, dw2) = rho dt
/// ```
///
/// `y` is the instantaneous variance of the short rate; `v` scales its
/// volatility. Market prices of risk `lambda1 sqrt(y)` and `lambda2 sqrt(y)`
/// are carried with the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FongVasicekParams {
    pub kappa1: f64,
    pub theta1: f64,
    pub kappa2: f64,
    pub theta2: f64,
    pub v: f64,
    pub rho: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl FongVasicekParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0) {
            return Err(Error::domain("Fong-Vasicek: vol-of-vol v must be positive"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::domain("Fong-Vasicek: rho must lie in (-1, 1)"));
        }
        Ok(())
    }
}

/// One factor of an additive multi-factor CIR model, in the real measure:
/// `dr_i = kappa (theta - r_i) dt + sigma sqrt(r_i) dw_i` with market price
/// of risk `lambda sqrt(r_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CIRFactor {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    #[serde(default)]
    pub lambda: f64,
}

impl CIRFactor {
    pub fn to_risk_neutral(&self) -> CKLSParams {
        CIRRealParams {
            kappa: self.kappa,
            theta: self.theta,
            sigma: self.sigma,
            lambda: self.lambda,
        }
        .to_risk_neutral()
    }
}

/// Short rate as a sum of independent CIR factors. Independence makes the
/// bond price the product of the per-factor CIR prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiCIRParams {
    pub factors: Vec<CIRFactor>,
}

impl MultiCIRParams {
    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::domain("multi-factor CIR: needs at least one factor"));
        }
        for (i, f) in self.factors.iter().enumerate() {
            if !(f.sigma > 0.0) {
                return Err(Error::domain(format!(
                    "multi-factor CIR: factor {i} has nonpositive sigma"
                )));
            }
        }
        Ok(())
    }
}

/// Any model this crate prices or simulates, as one tagged type for
/// serialization. The `family` field selects the variant:
/// `ckls`, `black_karasinski`, `ait_sahalia`, `convergence`, `fong_vasicek`,
/// or `multi_cir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Ckls(CKLSParams),
    BlackKarasinski(BlackKarasinskiParams),
    AitSahalia(AitSahaliaDriftParams),
    Convergence(ConvergenceModel),
    FongVasicek(FongVasicekParams),
    MultiCir(MultiCIRParams),
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid_data(format!("model spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serialization cannot fail")
    }

    /// The one-factor view, if this is a one-factor family.
    pub fn as_one_factor(&self) -> Option<ShortRateModel1F> {
        match self {
            ModelSpec::Ckls(p) => Some(ShortRateModel1F::Ckls(*p)),
            ModelSpec::BlackKarasinski(p) => Some(ShortRateModel1F::BlackKarasinski(*p)),
            ModelSpec::AitSahalia(p) => Some(ShortRateModel1F::AitSahalia(*p)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Ckls(p) => p.validate(),
            ModelSpec::BlackKarasinski(p) => p.validate(),
            ModelSpec::AitSahalia(p) => ShortRateModel1F::AitSahalia(*p).validate(),
            ModelSpec::Convergence(m) => m.validate(),
            ModelSpec::FongVasicek(p) => p.validate(),
            ModelSpec::MultiCir(p) => p.validate(),
        }
    }
}

/// Continuously compounded yield `R = -ln P / tau` from a bond price.
pub fn yield_from_price(price: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!(
            "yield: maturity must be positive, got {tau}"
        )));
    }
    if !(price > 0.0) {
        return Err(Error::domain(format!(
            "yield: price must be positive, got {price}"
        )));
    }
    Ok(-price.ln() / tau)
}

/// Bond price `P = e^{-R tau}` from a continuously compounded yield.
pub fn price_from_yield(yield_rate: f64, tau: f64) -> f64 {
    (-yield_rate * tau).exp()
}
