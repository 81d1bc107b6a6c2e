//! Path simulation and Monte Carlo bond pricing.
//!
//! Paths are generated by Euler-Maruyama with full truncation: for models
//! whose volatility carries a power `r^gamma` with `gamma > 0`, drift and
//! volatility are evaluated at `max(r, 0)` and the state is clamped at zero
//! after each step, so square-root and power-volatility paths stay
//! nonnegative. Black-Karasinski paths are simulated in the log-rate, which
//! follows an Ornstein-Uhlenbeck process with a known Gaussian transition;
//! sampling that transition exactly removes state-discretisation bias and the
//! only remaining error in Monte Carlo prices is the left-endpoint Riemann
//! rule for the discount integral.
//!
//! All randomness flows through a counter-based ChaCha generator seeded from
//! an explicit `u64`. Path `i` uses stream `i` of the generator, so results
//! are reproducible bit for bit and independent of how many worker threads
//! the Monte Carlo loop fans out over.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::math::int_exp;
use crate::models::{
    CKLSParams, ConvergenceModel, FongVasicekParams, MultiCIRParams, ShortRateModel1F,
};
use crate::{Error, Result};

/// Discretisation and sampling controls shared by all simulation entry
/// points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Time step, in years.
    pub dt: f64,
    /// Number of steps per path.
    pub n_steps: usize,
    /// Seed for the ChaCha generator. Identical seeds give identical output.
    pub seed: u64,
    /// Number of Monte Carlo paths.
    pub n_paths: usize,
}

impl SimConfig {
    pub fn new(dt: f64, n_steps: usize, seed: u64, n_paths: usize) -> Self {
        SimConfig { dt, n_steps, seed, n_paths }
    }

    /// Convenience constructor for single-trajectory simulation.
    pub fn single_path(dt: f64, n_steps: usize, seed: u64) -> Self {
        SimConfig { dt, n_steps, seed, n_paths: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_sampling()?;
        if self.n_steps == 0 {
            return Err(Error::domain("need at least one time step"));
        }
        Ok(())
    }

    /// The subset of checks that apply when the step count is derived from
    /// a maturity instead of taken from `n_steps`.
    fn validate_sampling(&self) -> Result<()> {
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::domain(format!("time step must be positive, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::domain("need at least one path"));
        }
        Ok(())
    }

    /// Number of steps of size `dt` that tile `[0, tau]`. Errors unless
    /// `tau` is an integer multiple of `dt` (within rounding), because a
    /// ragged final step would silently change the discount grid.
    fn steps_for(&self, tau: f64) -> Result<usize> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::domain(format!("maturity must be positive, got {tau}")));
        }
        let n = (tau / self.dt).round();
        if n < 1.0 || (n * self.dt - tau).abs() > 1e-9 * tau.max(1.0) {
            return Err(Error::domain(format!(
                "maturity {tau} is not an integer multiple of dt {}",
                self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// A single simulated trajectory of a one-factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Strictly increasing grid times, starting at 0.
    pub times: Vec<f64>,
    /// Short-rate values at each grid time.
    pub values: Vec<f64>,
}

impl Path {
    /// Writes the path as CSV with header `t,r`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,r")?;
        for (t, r) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{r}")?;
        }
        Ok(())
    }
}

/// A single simulated trajectory of a two-factor model. For convergence
/// models the channels are the domestic and European rates; for the
/// stochastic-volatility model they are the rate and its variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Path2F {
    pub times: Vec<f64>,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl Path2F {
    /// Writes the path as CSV with header `t,rd,re`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        self.write_csv_labeled(w, "rd", "re")
    }

    /// Writes the path as CSV with caller-chosen channel names.
    pub fn write_csv_labeled<W: std::io::Write>(
        &self,
        w: &mut W,
        first: &str,
        second: &str,
    ) -> std::io::Result<()> {
        writeln!(w, "t,{first},{second}")?;
        for ((t, a), b) in self.times.iter().zip(&self.first).zip(&self.second) {
            writeln!(w, "{t},{a},{b}")?;
        }
        Ok(())
    }
}

/// Trajectories of every factor of a multi-factor sum model.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPath {
    pub times: Vec<f64>,
    /// One vector of values per factor, in model order.
    pub factors: Vec<Vec<f64>>,
}

impl MultiPath {
    /// The short rate implied by the path: the sum over factors at each time.
    pub fn totals(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.times.len()];
        for f in &self.factors {
            for (o, v) in out.iter_mut().zip(f) {
                *o += v;
            }
        }
        out
    }

    /// Writes the path as CSV with header `t,r1,...,rk`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.factors.len() {
            write!(w, ",r{i}")?;
        }
        writeln!(w)?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{t}")?;
            for f in &self.factors {
                write!(w, ",{}", f[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Like [`ShortRateModel1F::validate`] but admitting `sigma = 0` for the
/// CKLS family: a noiseless rate is meaningless to the pricing formulas yet
/// perfectly simulable (the scheme then integrates the drift ODE), and it is
/// the natural smoke test for the discretisation.
fn check_model_1f(model: &ShortRateModel1F) -> Result<()> {
    if let ShortRateModel1F::Ckls(p) = model {
        for (name, v) in [("alpha", p.alpha), ("beta", p.beta), ("sigma", p.sigma), ("gamma", p.gamma)] {
            if !v.is_finite() {
                return Err(Error::domain(format!("CKLS: {name} must be finite, got {v}")));
            }
        }
        if p.sigma < 0.0 {
            return Err(Error::domain(format!("CKLS: sigma must be nonnegative, got {}", p.sigma)));
        }
        if p.gamma < 0.0 {
            return Err(Error::domain(format!("CKLS: gamma must be nonnegative, got {}", p.gamma)));
        }
        Ok(())
    } else {
        model.validate()
    }
}

/// Generator for path `stream` under master seed `seed`. ChaCha streams are
/// statistically independent, so per-path generators can be constructed in
/// any order (or concurrently) without coupling the draws.
fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn grid(dt: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * dt).collect()
}

/// One Euler step of a CKLS rate with full truncation.
fn step_ckls(p: &CKLSParams, r: f64, dt: f64, dw: f64) -> f64 {
    if p.gamma > 0.0 {
        let rp = r.max(0.0);
        let next = rp + p.drift(rp) * dt + p.vol(rp) * dw;
        next.max(0.0)
    } else {
        r + p.drift(r) * dt + p.vol(r) * dw
    }
}

/// State advance for a one-factor model. Black-Karasinski tracks the
/// log-rate internally, so the evolving state is `ln r` there and `r`
/// elsewhere; `rate_of` maps the state back to the rate.
enum Engine1F<'a> {
    Ckls(&'a CKLSParams),
    LogOu { theta: f64, decay: f64, shock_sd: f64 },
    General(&'a ShortRateModel1F),
}

impl Engine1F<'_> {
    fn new(model: &ShortRateModel1F, dt: f64) -> Engine1F<'_> {
        match model {
            ShortRateModel1F::Ckls(p) => Engine1F::Ckls(p),
            ShortRateModel1F::BlackKarasinski(p) => {
                // Exact Ornstein-Uhlenbeck transition over one step:
                // x' = theta + (x - theta) e^{-kappa dt} + N(0, sd^2).
                let decay = (-p.kappa * dt).exp();
                let shock_sd = p.sigma * int_exp(-2.0 * p.kappa, dt).sqrt();
                Engine1F::LogOu { theta: p.theta, decay, shock_sd }
            }
            m => Engine1F::General(m),
        }
    }

    fn initial_state(&self, r0: f64) -> Result<f64> {
        match self {
            Engine1F::LogOu { .. } => {
                if r0 <= 0.0 {
                    return Err(Error::domain(format!(
                        "log-normal rate model needs a positive initial rate, got {r0}"
                    )));
                }
                Ok(r0.ln())
            }
            _ => Ok(r0),
        }
    }

    fn rate_of(&self, state: f64) -> f64 {
        match self {
            Engine1F::LogOu { .. } => state.exp(),
            _ => state,
        }
    }

    fn advance(&self, state: f64, dt: f64, z: f64) -> Result<f64> {
        match self {
            Engine1F::Ckls(p) => Ok(step_ckls(p, state, dt, dt.sqrt() * z)),
            Engine1F::LogOu { theta, decay, shock_sd } => {
                Ok(theta + (state - theta) * decay + shock_sd * z)
            }
            Engine1F::General(m) => {
                // Models with singular drifts (for example a 1/r term) keep
                // their own domain: the state is truncated at zero for the
                // evaluation, and an excursion the model cannot price fails
                // loudly instead of propagating NaN.
                let rp = state.max(0.0);
                let (mu, sigma) = m.drift_vol(rp)?;
                Ok((rp + mu * dt + sigma * dt.sqrt() * z).max(0.0))
            }
        }
    }
}

/// Simulates one trajectory of a one-factor model on the grid
/// `0, dt, ..., n_steps * dt`, using stream 0 of the seeded generator.
pub fn simulate_path_1f(model: &ShortRateModel1F, r0: f64, cfg: &SimConfig) -> Result<Path> {
    cfg.validate()?;
    check_model_1f(model)?;
    let engine = Engine1F::new(model, cfg.dt);
    let mut rng = rng_for(cfg.seed, 0);
    let mut state = engine.initial_state(r0)?;
    let mut values = Vec::with_capacity(cfg.n_steps + 1);
    values.push(engine.rate_of(state));
    for _ in 0..cfg.n_steps {
        let z: f64 = rng.sample(StandardNormal);
        state = engine.advance(state, cfg.dt, z)?;
        values.push(engine.rate_of(state));
    }
    Ok(Path { times: grid(cfg.dt, cfg.n_steps), values })
}

/// Draws a correlated pair of Brownian increments over one step.
fn correlated_increments(rng: &mut ChaCha8Rng, dt: f64, rho: f64) -> (f64, f64) {
    let sqrt_dt = dt.sqrt();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let dw1 = sqrt_dt * z1;
    let dw2 = sqrt_dt * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
    (dw1, dw2)
}

fn step_conv(m: &ConvergenceModel, rd: f64, re: f64, dt: f64, dwd: f64, dwe: f64) -> (f64, f64) {
    let rdp = if m.gamma_d > 0.0 { rd.max(0.0) } else { rd };
    let rep = if m.gamma_e > 0.0 { re.max(0.0) } else { re };
    let mut rd_next = rdp + m.drift_d(rdp, rep) * dt + m.vol_d(rdp) * dwd;
    let mut re_next = rep + m.drift_e(rep) * dt + m.vol_e(rep) * dwe;
    if m.gamma_d > 0.0 {
        rd_next = rd_next.max(0.0);
    }
    if m.gamma_e > 0.0 {
        re_next = re_next.max(0.0);
    }
    (rd_next, re_next)
}

/// Simulates one trajectory of the two-factor convergence model. The first
/// channel is the domestic rate, the second the European rate.
pub fn simulate_path_conv(
    m: &ConvergenceModel,
    rd0: f64,
    re0: f64,
    cfg: &SimConfig,
) -> Result<Path2F> {
    cfg.validate()?;
    m.validate()?;
    let mut rng = rng_for(cfg.seed, 0);
    let (mut rd, mut re) = (rd0, re0);
    let mut first = Vec::with_capacity(cfg.n_steps + 1);
    let mut second = Vec::with_capacity(cfg.n_steps + 1);
    first.push(rd);
    second.push(re);
    for _ in 0..cfg.n_steps {
        let (dwd, dwe) = correlated_increments(&mut rng, cfg.dt, m.rho);
        let next = step_conv(m, rd, re, cfg.dt, dwd, dwe);
        rd = next.0;
        re = next.1;
        first.push(rd);
        second.push(re);
    }
    Ok(Path2F { times: grid(cfg.dt, cfg.n_steps), first, second })
}

/// Simulates one trajectory of the stochastic-volatility model under the
/// real-world measure. The first channel is the rate, the second the
/// variance factor, which is kept nonnegative by full truncation.
pub fn simulate_path_fong_vasicek(
    p: &FongVasicekParams,
    r0: f64,
    y0: f64,
    cfg: &SimConfig,
) -> Result<Path2F> {
    cfg.validate()?;
    p.validate()?;
    if y0 < 0.0 {
        return Err(Error::domain(format!("variance factor must start nonnegative, got {y0}")));
    }
    let mut rng = rng_for(cfg.seed, 0);
    let (mut r, mut y) = (r0, y0);
    let mut first = Vec::with_capacity(cfg.n_steps + 1);
    let mut second = Vec::with_capacity(cfg.n_steps + 1);
    first.push(r);
    second.push(y);
    for _ in 0..cfg.n_steps {
        let (dw1, dw2) = correlated_increments(&mut rng, cfg.dt, p.rho);
        let yp = y.max(0.0);
        let vol = yp.sqrt();
        r += p.kappa1 * (p.theta1 - r) * cfg.dt + vol * dw1;
        y = (yp + p.kappa2 * (p.theta2 - yp) * cfg.dt + p.v * vol * dw2).max(0.0);
        first.push(r);
        second.push(y);
    }
    Ok(Path2F { times: grid(cfg.dt, cfg.n_steps), first, second })
}

/// Simulates one trajectory of each factor of a sum-of-CIR model under the
/// real-world measure, with independent driving noises.
pub fn simulate_path_multi_cir(
    p: &MultiCIRParams,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<MultiPath> {
    cfg.validate()?;
    p.validate()?;
    if x0.len() != p.factors.len() {
        return Err(Error::domain(format!(
            "model has {} factors but {} initial values were given",
            p.factors.len(),
            x0.len()
        )));
    }
    let mut rng = rng_for(cfg.seed, 0);
    let mut states: Vec<f64> = x0.to_vec();
    let mut factors: Vec<Vec<f64>> = states
        .iter()
        .map(|&s| {
            let mut v = Vec::with_capacity(cfg.n_steps + 1);
            v.push(s);
            v
        })
        .collect();
    let sqrt_dt = cfg.dt.sqrt();
    for _ in 0..cfg.n_steps {
        for (i, f) in p.factors.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let xp = states[i].max(0.0);
            states[i] =
                (xp + f.kappa * (f.theta - xp) * cfg.dt + f.sigma * xp.sqrt() * sqrt_dt * z)
                    .max(0.0);
            factors[i].push(states[i]);
        }
    }
    Ok(MultiPath { times: grid(cfg.dt, cfg.n_steps), factors })
}

/// Paths per parallel work unit. Partial sums are produced per chunk in
/// path order and combined sequentially, so totals do not depend on the
/// number of worker threads.
const MC_CHUNK: usize = 4096;

/// Runs `discount` once per path on its own generator stream and returns
/// the sample mean and standard error of the discounted payoffs.
fn mc_run<F>(cfg: &SimConfig, discount: F) -> Result<(f64, f64)>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let n = cfg.n_paths;
    let n_chunks = n.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * MC_CHUNK;
            let hi = ((c + 1) * MC_CHUNK).min(n);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for path in lo..hi {
                let mut rng = rng_for(cfg.seed, path as u64);
                let d = discount(&mut rng)?;
                sum += d;
                sumsq += d * d;
            }
            Ok((sum, sumsq))
        })
        .collect::<Result<_>>()?;
    let (sum, sumsq) = partials.iter().fold((0.0, 0.0), |(s, q), &(ps, pq)| (s + ps, q + pq));
    let nf = n as f64;
    let mean = sum / nf;
    let se = if n > 1 {
        (((sumsq - sum * sum / nf) / (nf - 1.0)).max(0.0) / nf).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}

/// Monte Carlo price of a zero-coupon bond under a one-factor model,
/// discounting along each path by the left-endpoint Riemann sum of the
/// short rate. Returns the sample mean and its standard error. The step
/// count is derived from `tau` and `cfg.dt`; `cfg.n_steps` is ignored.
pub fn mc_bond_price_1f(
    model: &ShortRateModel1F,
    r0: f64,
    tau: f64,
    cfg: &SimConfig,
) -> Result<(f64, f64)> {
    cfg.validate_sampling()?;
    check_model_1f(model)?;
    let n_steps = cfg.steps_for(tau)?;
    let engine = Engine1F::new(model, cfg.dt);
    engine.initial_state(r0)?;
    mc_run(cfg, |rng| {
        let mut state = engine.initial_state(r0)?;
        let mut integral = 0.0;
        for _ in 0..n_steps {
            integral += engine.rate_of(state) * cfg.dt;
            let z: f64 = rng.sample(StandardNormal);
            state = engine.advance(state, cfg.dt, z)?;
        }
        Ok((-integral).exp())
    })
}

/// Monte Carlo price of a domestic zero-coupon bond under the two-factor
/// convergence model. Only the domestic rate enters the discount factor.
pub fn mc_bond_price_conv(
    m: &ConvergenceModel,
    rd0: f64,
    re0: f64,
    tau: f64,
    cfg: &SimConfig,
) -> Result<(f64, f64)> {
    cfg.validate_sampling()?;
    m.validate()?;
    let n_steps = cfg.steps_for(tau)?;
    mc_run(cfg, |rng| {
        let (mut rd, mut re) = (rd0, re0);
        let mut integral = 0.0;
        for _ in 0..n_steps {
            integral += rd * cfg.dt;
            let (dwd, dwe) = correlated_increments(rng, cfg.dt, m.rho);
            let next = step_conv(m, rd, re, cfg.dt, dwd, dwe);
            rd = next.0;
            re = next.1;
        }
        Ok((-integral).exp())
    })
}

/// Monte Carlo price of a zero-coupon bond under a sum-of-CIR model. Each
/// factor is converted to its risk-neutral dynamics before simulation and
/// the discount rate is the sum of the factors.
pub fn mc_bond_price_multi_cir(
    p: &MultiCIRParams,
    x0: &[f64],
    tau: f64,
    cfg: &SimConfig,
) -> Result<(f64, f64)> {
    cfg.validate_sampling()?;
    p.validate()?;
    if x0.len() != p.factors.len() {
        return Err(Error::domain(format!(
            "model has {} factors but {} initial values were given",
            p.factors.len(),
            x0.len()
        )));
    }
    let n_steps = cfg.steps_for(tau)?;
    let rn: Vec<CKLSParams> = p.factors.iter().map(|f| f.to_risk_neutral()).collect();
    let sqrt_dt = cfg.dt.sqrt();
    mc_run(cfg, |rng| {
        let mut states: Vec<f64> = x0.to_vec();
        let mut integral = 0.0;
        for _ in 0..n_steps {
            integral += states.iter().sum::<f64>() * cfg.dt;
            for (state, q) in states.iter_mut().zip(&rn) {
                let z: f64 = rng.sample(StandardNormal);
                *state = step_ckls(q, *state, cfg.dt, sqrt_dt * z);
            }
        }
        Ok((-integral).exp())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{multi_cir_price, vasicek_price};
    use crate::models::{BlackKarasinskiParams, CIRFactor};
    use proptest::prelude::*;

    fn table_cir() -> CKLSParams {
        CKLSParams { alpha: 0.00315, beta: -0.0555, sigma: 0.0894, gamma: 0.5 }
    }

    /// Real-world two-factor convergence parameters estimated for the
    /// Czech koruna against the euro area in Corzo and Schwartz form.
    fn koruna_eur() -> ConvergenceModel {
        ConvergenceModel::corzo_schwarz(0.0938, 3.67, 0.032, 0.2087, 0.035, 0.016, 0.219)
    }

    fn two_factor_cir() -> MultiCIRParams {
        MultiCIRParams {
            factors: vec![
                CIRFactor { kappa: 0.7298, theta: 0.04013, sigma: 0.16885, lambda: 0.0 },
                CIRFactor { kappa: 0.021185, theta: 0.022543, sigma: 0.054415, lambda: 0.0 },
            ],
        }
    }

    #[test]
    fn zero_volatility_path_follows_the_ode() {
        // With sigma = 0 the scheme integrates dr = (alpha + beta r) dt, so
        // the endpoint must match r(t) = r0 e^{bt} - (a/b)(1 - e^{bt}) up to
        // the O(dt) Euler error.
        let (alpha, beta, r0) = (0.0154, -0.1779, 0.02);
        let model =
            ShortRateModel1F::Ckls(CKLSParams { alpha, beta, sigma: 0.0, gamma: 0.0 });
        let cfg = SimConfig::single_path(1.0 / 5000.0, 5000, 7);
        let path = simulate_path_1f(&model, r0, &cfg).unwrap();
        let exact = r0 * beta.exp() - (alpha / beta) * (1.0 - beta.exp());
        assert!(
            (path.values[5000] - exact).abs() < 2e-7,
            "sigma=0 endpoint {} vs ODE {}",
            path.values[5000],
            exact
        );
        // And the whole trajectory, not just the endpoint.
        for (k, &v) in path.values.iter().enumerate().step_by(500) {
            let t = k as f64 * cfg.dt;
            let want = r0 * (beta * t).exp() - (alpha / beta) * (1.0 - (beta * t).exp());
            assert!((v - want).abs() < 2e-7);
        }
    }

    #[test]
    fn ou_sample_mean_matches_conditional_mean() {
        // Mean-reverting Gaussian rate: E[r_T] = theta + (r0 - theta)
        // e^{-kappa T}. The Euler mean recursion is exact in expectation up
        // to the (1 - kappa dt)^n vs e^{-kappa T} factor, which at this dt
        // is far below the Monte Carlo resolution.
        let (kappa, theta, sigma, r0) = (5.0, 0.03, 0.01, 0.05);
        let p = CKLSParams { alpha: kappa * theta, beta: -kappa, sigma, gamma: 0.0 };
        let t_end = 0.2;
        let cfg = SimConfig::new(1.0 / 2000.0, 400, 11, 100_000);
        let sum: f64 = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(cfg.seed, i as u64);
                let mut r = r0;
                for _ in 0..cfg.n_steps {
                    let z: f64 = rng.sample(StandardNormal);
                    r = step_ckls(&p, r, cfg.dt, cfg.dt.sqrt() * z);
                }
                r
            })
            .sum();
        let mean = sum / cfg.n_paths as f64;
        let want = theta + (r0 - theta) * (-kappa * t_end).exp();
        // Terminal standard deviation is essentially the stationary value
        // sigma / sqrt(2 kappa); three standard errors of the mean.
        let sd = sigma / (2.0 * kappa).sqrt();
        let tol = 3.0 * sd / (cfg.n_paths as f64).sqrt();
        assert!(
            (mean - want).abs() < tol,
            "sample mean {mean} vs conditional mean {want} (tol {tol})"
        );
    }

    #[test]
    fn identical_seeds_reproduce_paths_bitwise() {
        let model = ShortRateModel1F::Ckls(table_cir());
        let cfg = SimConfig::single_path(0.01, 200, 42);
        let a = simulate_path_1f(&model, 0.04, &cfg).unwrap();
        let b = simulate_path_1f(&model, 0.04, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate_path_1f(&model, 0.04, &SimConfig::single_path(0.01, 200, 43)).unwrap();
        assert_ne!(a.values, c.values);

        // Monte Carlo prices are likewise deterministic, including across
        // the parallel fan-out.
        let mc_cfg = SimConfig::new(0.01, 100, 9, 10_000);
        let p1 = mc_bond_price_1f(&model, 0.04, 1.0, &mc_cfg).unwrap();
        let p2 = mc_bond_price_1f(&model, 0.04, 1.0, &mc_cfg).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn correlated_increments_recover_rho() {
        // Recover the driving increments from a simulated convergence path
        // by inverting the Euler step, then correlate them.
        for rho in [0.219, 0.0] {
            let mut m = koruna_eur();
            m.rho = rho;
            let cfg = SimConfig::single_path(1.0 / 250.0, 100_000, 5);
            let path = simulate_path_conv(&m, 0.03, 0.035, &cfg).unwrap();
            let mut xs = Vec::with_capacity(cfg.n_steps);
            let mut ys = Vec::with_capacity(cfg.n_steps);
            for k in 0..cfg.n_steps {
                let (rd, re) = (path.first[k], path.second[k]);
                xs.push((path.first[k + 1] - rd - m.drift_d(rd, re) * cfg.dt) / m.vol_d(rd));
                ys.push((path.second[k + 1] - re - m.drift_e(re) * cfg.dt) / m.vol_e(re));
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let cov: f64 =
                xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
            let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / n;
            let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>() / n;
            let corr = cov / (vx * vy).sqrt();
            assert!(
                (corr - rho).abs() < 0.02,
                "empirical increment correlation {corr} vs rho {rho}"
            );
        }
    }

    #[test]
    fn koruna_spread_approaches_long_run_mean() {
        // In the convergence dynamics the domestic rate tracks the European
        // rate plus a/b. Starting the European rate at its own mean, the
        // expected spread after time T is (a/b)(1 - e^{-bT}).
        let m = koruna_eur();
        let (a, b) = (0.0938f64, 3.67f64);
        let (re0, t_end) = (0.035f64, 2.0f64);
        let cfg = SimConfig::new(0.01, 200, 17, 40_000);
        let spreads: Vec<f64> = (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(cfg.seed, i as u64);
                let (mut rd, mut re) = (re0, re0);
                for _ in 0..cfg.n_steps {
                    let (dwd, dwe) = correlated_increments(&mut rng, cfg.dt, m.rho);
                    let next = step_conv(&m, rd, re, cfg.dt, dwd, dwe);
                    rd = next.0;
                    re = next.1;
                }
                rd - re
            })
            .collect();
        let n = cfg.n_paths as f64;
        let mean = spreads.iter().sum::<f64>() / n;
        let var = spreads.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let want = a / b * (1.0 - (-b * t_end).exp());
        assert!(
            (mean - want).abs() < 3.0 * se,
            "mean spread {mean} vs a/b {want} (se {se})"
        );
    }

    #[test]
    fn square_root_factor_paths_stay_nonnegative() {
        let p = two_factor_cir();
        for seed in 0..50 {
            let cfg = SimConfig::single_path(1.0 / 250.0, 1250, seed);
            let path = simulate_path_multi_cir(&p, &[0.002, 0.002], &cfg).unwrap();
            for f in &path.factors {
                assert!(f.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn stochastic_volatility_variance_stays_nonnegative() {
        let p = FongVasicekParams {
            kappa1: 0.109,
            kappa2: 1.482,
            theta1: 0.0652,
            theta2: 0.000264,
            v: 0.01934,
            rho: 0.0,
            lambda1: -11.0,
            lambda2: -6.0,
        };
        let cfg = SimConfig::single_path(1.0 / 250.0, 2500, 3);
        let path = simulate_path_fong_vasicek(&p, 0.05, 0.000264, &cfg).unwrap();
        assert!(path.second.iter().all(|&y| y >= 0.0));
        assert!(path.first.iter().all(|&r| r.is_finite()));
    }

    #[test]
    fn mc_price_matches_gaussian_closed_form() {
        let p = CKLSParams { alpha: 0.00315, beta: -0.0555, sigma: 0.0894, gamma: 0.0 };
        let model = ShortRateModel1F::Ckls(p);
        let cfg = SimConfig::new(0.01, 0, 29, 20_000);
        let (mc, se) = mc_bond_price_1f(&model, 0.04, 1.0, &cfg).unwrap();
        let exact = vasicek_price(&p, 0.04, 1.0).unwrap();
        assert!(se > 0.0);
        assert!(
            (mc - exact).abs() < 3.0 * se + 1e-4,
            "MC {mc} vs closed form {exact} (se {se})"
        );
    }

    #[test]
    fn mc_price_matches_lognormal_reference() {
        // Log-normal rate model at kappa = 0.1, theta = ln 0.04,
        // sigma = 0.85: the ten-year bond at r = 6% prices at 0.4623.
        let model = ShortRateModel1F::BlackKarasinski(BlackKarasinskiParams {
            kappa: 0.1,
            theta: 0.04f64.ln(),
            sigma: 0.85,
        });
        let cfg = SimConfig::new(1.0 / 50.0, 0, 101, 100_000);
        let (mc, se) = mc_bond_price_1f(&model, 0.06, 10.0, &cfg).unwrap();
        assert!(
            (mc - 0.4623).abs() < 3.0 * se + 5e-5,
            "MC {mc} vs reference 0.4623 (se {se})"
        );
    }

    #[test]
    fn mc_price_matches_two_factor_cir_product() {
        let p = two_factor_cir();
        let x0 = [0.02, 0.02];
        let cfg = SimConfig::new(1.0 / 200.0, 0, 23, 20_000);
        let (mc, se) = mc_bond_price_multi_cir(&p, &x0, 1.0, &cfg).unwrap();
        let exact = multi_cir_price(&p, &x0, 1.0).unwrap();
        assert!(
            (mc - exact).abs() < 3.0 * se + 1e-4,
            "MC {mc} vs factor product {exact} (se {se})"
        );
    }

    #[test]
    fn zero_volatility_price_has_zero_standard_error() {
        let p = CKLSParams { alpha: 0.0154, beta: -0.1779, sigma: 0.0, gamma: 0.0 };
        let model = ShortRateModel1F::Ckls(p);
        let cfg = SimConfig::new(0.01, 0, 1, 500);
        let (mc, se) = mc_bond_price_1f(&model, 0.03, 2.0, &cfg).unwrap();
        assert_eq!(se, 0.0);
        assert!(mc > 0.0 && mc < 1.0);
    }

    #[test]
    fn standard_error_shrinks_like_sqrt_n() {
        let model = ShortRateModel1F::Ckls(table_cir());
        let base = SimConfig::new(0.02, 0, 31, 20_000);
        let double = SimConfig { n_paths: 40_000, ..base };
        let (_, se1) = mc_bond_price_1f(&model, 0.04, 1.0, &base).unwrap();
        let (_, se2) = mc_bond_price_1f(&model, 0.04, 1.0, &double).unwrap();
        let ratio = se1 / se2;
        assert!(
            (ratio - std::f64::consts::SQRT_2).abs() < 0.1 * std::f64::consts::SQRT_2,
            "se ratio {ratio} vs sqrt(2)"
        );
    }

    #[test]
    fn csv_export_round_trips_headers() {
        let model = ShortRateModel1F::Ckls(table_cir());
        let path = simulate_path_1f(&model, 0.04, &SimConfig::single_path(0.25, 4, 2)).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,r");
        assert_eq!(lines.len(), 6);

        let m = koruna_eur();
        let p2 = simulate_path_conv(&m, 0.03, 0.035, &SimConfig::single_path(0.25, 4, 2)).unwrap();
        let mut buf2 = Vec::new();
        p2.write_csv(&mut buf2).unwrap();
        assert!(String::from_utf8(buf2).unwrap().starts_with("t,rd,re\n"));

        let mp = simulate_path_multi_cir(
            &two_factor_cir(),
            &[0.02, 0.02],
            &SimConfig::single_path(0.25, 4, 2),
        )
        .unwrap();
        let mut buf3 = Vec::new();
        mp.write_csv(&mut buf3).unwrap();
        let text3 = String::from_utf8(buf3).unwrap();
        assert!(text3.starts_with("t,r1,r2\n"));
        let totals = mp.totals();
        assert_eq!(totals.len(), 5);
        assert!((totals[0] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_configs_and_states() {
        let model = ShortRateModel1F::Ckls(table_cir());
        assert!(simulate_path_1f(&model, 0.04, &SimConfig::new(0.0, 10, 1, 1)).is_err());
        assert!(simulate_path_1f(&model, 0.04, &SimConfig::new(0.01, 0, 1, 1)).is_err());
        assert!(mc_bond_price_1f(&model, 0.04, 1.0, &SimConfig::new(0.01, 1, 1, 0)).is_err());
        // Maturity not on the step grid.
        assert!(mc_bond_price_1f(&model, 0.04, 1.005, &SimConfig::new(0.01, 1, 1, 10)).is_err());
        // Log-normal model cannot start at a nonpositive rate.
        let bk = ShortRateModel1F::BlackKarasinski(BlackKarasinskiParams {
            kappa: 0.1,
            theta: 0.04f64.ln(),
            sigma: 0.85,
        });
        assert!(simulate_path_1f(&bk, 0.0, &SimConfig::single_path(0.01, 10, 1)).is_err());
        // Factor count mismatch.
        assert!(
            simulate_path_multi_cir(&two_factor_cir(), &[0.02], &SimConfig::single_path(0.01, 1, 1))
                .is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn paths_are_reproducible_and_well_formed(
            seed in any::<u64>(),
            n_steps in 1usize..60,
            dt in 1e-3f64..0.5,
            r0 in 0.001f64..0.2,
        ) {
            let model = ShortRateModel1F::Ckls(table_cir());
            let cfg = SimConfig::single_path(dt, n_steps, seed);
            let a = simulate_path_1f(&model, r0, &cfg).unwrap();
            let b = simulate_path_1f(&model, r0, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.times.len(), n_steps + 1);
            prop_assert_eq!(a.values.len(), n_steps + 1);
            prop_assert!(a.times.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(a.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
