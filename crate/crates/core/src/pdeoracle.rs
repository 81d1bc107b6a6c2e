//! Finite-difference reference prices for the one-factor pricing equation
//! and the two-factor convergence equation.
//!
//! The solver exists as ground truth for model families without a usable
//! closed form (general CKLS exponents, correlated convergence models), so
//! the design favors verifiable accuracy over speed: uniform grids,
//! Crank-Nicolson stepping with an implicit-Euler start-up, second-order
//! central differences wherever the cell Peclet number allows and monotone
//! upwinding where it does not.
//!
//! Degenerate boundaries are handled in the spirit of Fichera's
//! classification: where the diffusion coefficient vanishes and the drift
//! points into the domain (the `r = 0` edge of square-root and power
//! volatility models), no boundary value is imposed; the equation itself,
//! reduced to its first-order terms, is discretized one-sidedly on that
//! edge. Non-degenerate artificial edges use zero-curvature extrapolation,
//! and the grid is expected to put them far enough from the evaluation
//! region that their influence dies out; the agreement tests against the
//! closed forms are the check that this is so.

use crate::math::tridiag::{Tridiag, TridiagLU};
use crate::models::{yield_from_price, ConvergenceModel, ShortRateModel1F};
use crate::{Error, Result};

/// Number of implicit-Euler steps taken before switching to Crank-Nicolson.
/// Two suffice to damp the high-frequency components the trapezoidal rule
/// would otherwise preserve.
const RANNACHER_STEPS: usize = 2;

/// Tolerated relative overshoot of the discrete solution beyond the exact
/// growth bound before a solve is declared unstable. The implicit-Euler
/// start-up steps legitimately exceed the continuous bound by about
/// `(r dtau)^2 / 2` per step, so this cannot be at machine-precision level.
const STABILITY_SLACK: f64 = 1e-4;

/// Matching tolerance when looking up a stored time slice.
fn tau_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Uniform spatial-temporal grid for the one-factor solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub r_min: f64,
    pub r_max: f64,
    /// Number of spatial nodes (including both ends).
    pub n_r: usize,
    /// Number of time steps from 0 to `tau_max`.
    pub n_tau: usize,
    pub tau_max: f64,
}

impl Grid1D {
    pub fn new(r_min: f64, r_max: f64, n_r: usize, n_tau: usize, tau_max: f64) -> Self {
        Grid1D { r_min, r_max, n_r, n_tau, tau_max }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 16 {
            return Err(Error::domain(format!("need at least 16 spatial nodes, got {}", self.n_r)));
        }
        if self.n_tau < 1 {
            return Err(Error::domain("need at least one time step"));
        }
        if !(self.r_max > self.r_min) {
            return Err(Error::domain(format!(
                "empty rate range [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if !(self.tau_max > 0.0) {
            return Err(Error::domain(format!("maturity horizon must be positive, got {}", self.tau_max)));
        }
        Ok(())
    }

    fn nodes(&self) -> (Vec<f64>, f64) {
        let h = (self.r_max - self.r_min) / (self.n_r - 1) as f64;
        ((0..self.n_r).map(|i| self.r_min + i as f64 * h).collect(), h)
    }
}

/// Uniform grid for the two-factor solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub rd_min: f64,
    pub rd_max: f64,
    pub n_rd: usize,
    pub re_min: f64,
    pub re_max: f64,
    pub n_re: usize,
    pub n_tau: usize,
    pub tau_max: f64,
}

impl Grid2D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rd_min: f64,
        rd_max: f64,
        n_rd: usize,
        re_min: f64,
        re_max: f64,
        n_re: usize,
        n_tau: usize,
        tau_max: f64,
    ) -> Self {
        Grid2D { rd_min, rd_max, n_rd, re_min, re_max, n_re, n_tau, tau_max }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("domestic", self.n_rd), ("European", self.n_re)] {
            if n < 16 {
                return Err(Error::domain(format!(
                    "need at least 16 {name} nodes, got {n}"
                )));
            }
        }
        if self.n_tau < 1 {
            return Err(Error::domain("need at least one time step"));
        }
        if !(self.rd_max > self.rd_min) || !(self.re_max > self.re_min) {
            return Err(Error::domain("empty rate range"));
        }
        if !(self.tau_max > 0.0) {
            return Err(Error::domain(format!("maturity horizon must be positive, got {}", self.tau_max)));
        }
        Ok(())
    }
}

/// How an edge of the grid was treated, recorded for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Diffusion vanishes and the drift points inward: the degenerate
    /// equation is discretized one-sidedly, no value imposed.
    DegenerateInflow,
    /// Diffusion vanishes but the drift points outward; the same one-sided
    /// row is used, which amounts to extrapolating along characteristics.
    DegenerateOutflow,
    /// Artificial edge closed by a zero-second-derivative ghost node.
    ZeroCurvature,
}

/// Discretisation metadata attached to a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeMeta {
    pub dr: f64,
    pub dtau: f64,
    pub rannacher_steps: usize,
    pub left_boundary: BoundaryTag,
    pub right_boundary: BoundaryTag,
    /// Interior nodes where the drift term was upwinded (cell Peclet
    /// number above 2).
    pub upwind_nodes: usize,
}

/// Spatial operator `L = D(r) d²/dr² + mu(r) d/dr - c(r)` discretized as a
/// tridiagonal matrix, together with how its edges were closed.
struct SpaceOp {
    tri: Tridiag,
    left: BoundaryTag,
    right: BoundaryTag,
    upwind_nodes: usize,
}

/// Builds the tridiagonal discretisation of `L` on `nodes` with spacing
/// `h`. `coeffs` returns `(D, mu, c)` at a node.
fn build_space_op(nodes: &[f64], h: f64, coeffs: &dyn Fn(f64) -> Result<(f64, f64, f64)>) -> Result<SpaceOp> {
    let n = nodes.len();
    let mut lo = vec![0.0; n - 1];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n - 1];
    let mut upwind_nodes = 0;

    let boundary_tag = |d: f64, mu: f64, inward: f64| {
        if d > 0.0 {
            BoundaryTag::ZeroCurvature
        } else if mu * inward >= 0.0 {
            BoundaryTag::DegenerateInflow
        } else {
            BoundaryTag::DegenerateOutflow
        }
    };

    // Left edge: the zero-curvature ghost turns the usual stencil into a
    // one-sided first-order row, which is also exactly the discretisation
    // of the degenerate (diffusion-free) equation, so one row serves both
    // cases and only the tag differs.
    let (d0, mu0, c0) = coeffs(nodes[0])?;
    di[0] = -mu0 / h - c0;
    up[0] = mu0 / h;
    let left = boundary_tag(d0, mu0, 1.0);

    let (dn, mun, cn) = coeffs(nodes[n - 1])?;
    di[n - 1] = mun / h - cn;
    lo[n - 2] = -mun / h;
    let right = boundary_tag(dn, mun, -1.0);

    for i in 1..n - 1 {
        let (d, mu, c) = coeffs(nodes[i])?;
        if !(d.is_finite() && mu.is_finite() && c.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite PDE coefficients at r = {}",
                nodes[i]
            )));
        }
        let central_ok = d > 0.0 && mu.abs() * h / d <= 2.0;
        if central_ok {
            lo[i - 1] = d / (h * h) - mu / (2.0 * h);
            di[i] = -2.0 * d / (h * h) - c;
            up[i] = d / (h * h) + mu / (2.0 * h);
        } else {
            upwind_nodes += 1;
            // Monotone splitting: diffusion central, drift one-sided in
            // its own direction.
            lo[i - 1] = d / (h * h);
            di[i] = -2.0 * d / (h * h) - c - mu.abs() / h;
            up[i] = d / (h * h);
            if mu >= 0.0 {
                up[i] += mu / h;
            } else {
                lo[i - 1] += -mu / h;
            }
        }
    }
    Ok(SpaceOp { tri: Tridiag::new(lo, di, up), left, right, upwind_nodes })
}

/// `I + w L` as a tridiagonal matrix.
fn shifted(op: &Tridiag, w: f64) -> Tridiag {
    let n = op.diag.len();
    let mut out = op.clone();
    for i in 0..n {
        out.diag[i] = 1.0 + w * op.diag[i];
    }
    for i in 0..n - 1 {
        out.lower[i] = w * op.lower[i];
        out.upper[i] = w * op.upper[i];
    }
    out
}

/// Validates a freshly computed slice. `r_floor` is the lowest discount
/// rate on the grid: where rates can go negative the exact solution grows
/// like `exp(-r_floor tau)`, so the admissible upper bound scales with it
/// instead of being pinned at 1.
fn check_slice(p: &[f64], step: usize, tau: f64, r_floor: f64, dr: f64, dtau: f64) -> Result<()> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in p {
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite price at time step {step} (dr = {dr}, dtau = {dtau})"
            )));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let bound = (-r_floor.min(0.0) * tau).exp() * (1.0 + STABILITY_SLACK);
    if lo < -STABILITY_SLACK * bound || hi > bound {
        return Err(Error::numerical(format!(
            "instability at time step {step}: prices in [{lo}, {hi}], bound {bound} (dr = {dr}, dtau = {dtau})"
        )));
    }
    Ok(())
}

/// Price surface of a one-factor solve, one slice per time step.
#[derive(Debug, Clone)]
pub struct PDESolution1F {
    pub grid: Grid1D,
    pub nodes: Vec<f64>,
    pub taus: Vec<f64>,
    /// `surface[k][i]` is the price at `taus[k]`, `nodes[i]`.
    pub surface: Vec<Vec<f64>>,
    pub meta: SchemeMeta,
}

impl PDESolution1F {
    /// The stored slice closest to `tau`; errors if no stored time matches.
    pub fn slice(&self, tau: f64) -> Result<&[f64]> {
        self.taus
            .iter()
            .position(|&t| tau_matches(t, tau))
            .map(|k| self.surface[k].as_slice())
            .ok_or_else(|| Error::domain(format!("no stored time slice at tau = {tau}")))
    }

    /// Price at `(tau, r)`, linearly interpolated in `r` on the matching
    /// time slice.
    pub fn value(&self, tau: f64, r: f64) -> Result<f64> {
        let slice = self.slice(tau)?;
        interp_linear(&self.nodes, slice, r)
    }

    /// Continuously compounded yield at `(tau, r)`.
    pub fn yield_at(&self, tau: f64, r: f64) -> Result<f64> {
        yield_from_price(self.value(tau, r)?, tau)
    }

    /// Writes the surface as CSV with header `tau,r,P`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "tau,r,P")?;
        for (k, tau) in self.taus.iter().enumerate() {
            for (i, r) in self.nodes.iter().enumerate() {
                writeln!(w, "{tau},{r},{}", self.surface[k][i])?;
            }
        }
        Ok(())
    }
}

fn interp_linear(nodes: &[f64], values: &[f64], x: f64) -> Result<f64> {
    let n = nodes.len();
    if x < nodes[0] || x > nodes[n - 1] {
        return Err(Error::domain(format!(
            "evaluation point {x} outside grid [{}, {}]",
            nodes[0],
            nodes[n - 1]
        )));
    }
    let h = (nodes[n - 1] - nodes[0]) / (n - 1) as f64;
    let i = (((x - nodes[0]) / h) as usize).min(n - 2);
    let w = (x - nodes[i]) / h;
    Ok(values[i] * (1.0 - w) + values[i + 1] * w)
}

/// Solves the one-factor pricing equation
/// `dP/dtau = (1/2) sigma(r)^2 P_rr + mu(r) P_r - r P`, `P(0, r) = 1`,
/// on the given grid, and returns the full price surface.
///
/// For power-volatility models (`gamma > 0`) the grid must start exactly at
/// `r = 0`, where the equation degenerates and regulates itself; models
/// whose coefficients are singular at an endpoint (a log-normal rate at
/// `r = 0`, a `1/r` drift) must be given a grid that avoids it.
pub fn solve_pde_1f(model: &ShortRateModel1F, grid: &Grid1D) -> Result<PDESolution1F> {
    grid.validate()?;
    model.validate()?;
    if let ShortRateModel1F::Ckls(p) = model {
        if p.gamma > 0.0 && grid.r_min != 0.0 {
            return Err(Error::domain(format!(
                "power-volatility model needs the left boundary at r = 0, got {}",
                grid.r_min
            )));
        }
    }
    let (nodes, h) = grid.nodes();
    let coeffs = |r: f64| -> Result<(f64, f64, f64)> {
        let (mu, sigma) = model.drift_vol(r)?;
        Ok((0.5 * sigma * sigma, mu, r))
    };
    let op = build_space_op(&nodes, h, &coeffs)?;
    let dt = grid.tau_max / grid.n_tau as f64;

    // One factored implicit matrix per phase: implicit Euler for the
    // start-up steps, Crank-Nicolson afterwards.
    let ie_lhs = shifted(&op.tri, -dt).factor()?;
    let cn_lhs = shifted(&op.tri, -0.5 * dt).factor()?;

    let n = nodes.len();
    let mut p = vec![1.0; n];
    let mut scratch = vec![0.0; n];
    let mut surface = Vec::with_capacity(grid.n_tau + 1);
    let mut taus = Vec::with_capacity(grid.n_tau + 1);
    surface.push(p.clone());
    taus.push(0.0);
    for step in 1..=grid.n_tau {
        if step <= RANNACHER_STEPS {
            // (I - dt L) P_next = P
            scratch.copy_from_slice(&p);
            ie_lhs.solve_in_place(&mut scratch);
        } else {
            // (I - dt/2 L) P_next = (I + dt/2 L) P
            let rhs_mat = shifted(&op.tri, 0.5 * dt);
            rhs_mat.mul_vec(&p, &mut scratch);
            cn_lhs.solve_in_place(&mut scratch);
        }
        std::mem::swap(&mut p, &mut scratch);
        check_slice(&p, step, step as f64 * dt, grid.r_min, h, dt)?;
        surface.push(p.clone());
        taus.push(step as f64 * dt);
    }
    Ok(PDESolution1F {
        grid: *grid,
        nodes,
        taus,
        surface,
        meta: SchemeMeta {
            dr: h,
            dtau: dt,
            rannacher_steps: RANNACHER_STEPS,
            left_boundary: op.left,
            right_boundary: op.right,
            upwind_nodes: op.upwind_nodes,
        },
    })
}

/// Discretisation metadata for a two-factor solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeMeta2F {
    pub dr_d: f64,
    pub dr_e: f64,
    pub dtau: f64,
    pub rannacher_steps: usize,
    pub boundaries_d: (BoundaryTag, BoundaryTag),
    pub boundaries_e: (BoundaryTag, BoundaryTag),
    pub upwind_nodes_d: usize,
    pub upwind_nodes_e: usize,
}

/// Snapshots of a two-factor solve at requested maturities. Values are
/// stored row-major: index `i * n_re + j` for domestic node `i`, European
/// node `j`.
#[derive(Debug, Clone)]
pub struct PDESolution2F {
    pub grid: Grid2D,
    pub rd_nodes: Vec<f64>,
    pub re_nodes: Vec<f64>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub meta: SchemeMeta2F,
}

impl PDESolution2F {
    pub fn snapshot(&self, tau: f64) -> Result<&[f64]> {
        self.snapshots
            .iter()
            .find(|(t, _)| tau_matches(*t, tau))
            .map(|(_, s)| s.as_slice())
            .ok_or_else(|| Error::domain(format!("no stored snapshot at tau = {tau}")))
    }

    /// Price at `(tau, rd, re)`, bilinearly interpolated on the matching
    /// snapshot.
    pub fn value(&self, tau: f64, rd: f64, re: f64) -> Result<f64> {
        let s = self.snapshot(tau)?;
        let n_re = self.re_nodes.len();
        // Interpolate along re on the two bracketing rd rows, then along rd.
        let (nodes, h) = (&self.rd_nodes, self.rd_nodes[1] - self.rd_nodes[0]);
        if rd < nodes[0] || rd > nodes[nodes.len() - 1] {
            return Err(Error::domain(format!(
                "evaluation point {rd} outside domestic grid"
            )));
        }
        let i = (((rd - nodes[0]) / h) as usize).min(nodes.len() - 2);
        let w = (rd - nodes[i]) / h;
        let lo = interp_linear(&self.re_nodes, &s[i * n_re..(i + 1) * n_re], re)?;
        let hi = interp_linear(&self.re_nodes, &s[(i + 1) * n_re..(i + 2) * n_re], re)?;
        Ok(lo * (1.0 - w) + hi * w)
    }

    pub fn yield_at(&self, tau: f64, rd: f64, re: f64) -> Result<f64> {
        yield_from_price(self.value(tau, rd, re)?, tau)
    }

    /// Writes the snapshots as CSV with header `tau,rd,re,P`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "tau,rd,re,P")?;
        let n_re = self.re_nodes.len();
        for (tau, s) in &self.snapshots {
            for (i, rd) in self.rd_nodes.iter().enumerate() {
                for (j, re) in self.re_nodes.iter().enumerate() {
                    writeln!(w, "{tau},{rd},{re},{}", s[i * n_re + j])?;
                }
            }
        }
        Ok(())
    }
}

/// Solves the two-factor convergence pricing equation by
/// alternating-direction implicit stepping (Douglas splitting), with the
/// mixed derivative handled explicitly. Snapshots of the price surface are
/// stored at each requested maturity, which must lie on the time grid.
pub fn solve_pde_2f(
    m: &ConvergenceModel,
    grid: &Grid2D,
    snap_taus: &[f64],
) -> Result<PDESolution2F> {
    grid.validate()?;
    m.validate()?;
    if m.gamma_d > 0.0 && grid.rd_min != 0.0 {
        return Err(Error::domain(format!(
            "power-volatility domestic factor needs its left boundary at 0, got {}",
            grid.rd_min
        )));
    }
    if m.gamma_e > 0.0 && grid.re_min != 0.0 {
        return Err(Error::domain(format!(
            "power-volatility European factor needs its left boundary at 0, got {}",
            grid.re_min
        )));
    }
    if snap_taus.is_empty() {
        return Err(Error::domain("no snapshot maturities requested"));
    }
    let dt = grid.tau_max / grid.n_tau as f64;
    let mut snap_steps = Vec::with_capacity(snap_taus.len());
    for &t in snap_taus {
        let k = (t / dt).round();
        if !tau_matches(k * dt, t) || k < 0.0 || k > grid.n_tau as f64 {
            return Err(Error::domain(format!(
                "snapshot maturity {t} does not lie on the time grid (dt = {dt})"
            )));
        }
        snap_steps.push(k as usize);
    }

    let hd = (grid.rd_max - grid.rd_min) / (grid.n_rd - 1) as f64;
    let he = (grid.re_max - grid.re_min) / (grid.n_re - 1) as f64;
    let rd_nodes: Vec<f64> = (0..grid.n_rd).map(|i| grid.rd_min + i as f64 * hd).collect();
    let re_nodes: Vec<f64> = (0..grid.n_re).map(|j| grid.re_min + j as f64 * he).collect();
    let (n_rd, n_re) = (grid.n_rd, grid.n_re);

    // Domestic-direction operator: one tridiagonal system per European
    // node, because the domestic drift depends on re. Carries the full
    // reaction term -rd. The European-direction operator is the same for
    // every domestic row.
    let mut ops_d = Vec::with_capacity(n_re);
    for &re in &re_nodes {
        let coeffs = |rd: f64| -> Result<(f64, f64, f64)> {
            let v = m.vol_d(rd);
            Ok((0.5 * v * v, m.drift_d(rd, re), rd))
        };
        ops_d.push(build_space_op(&rd_nodes, hd, &coeffs)?);
    }
    let coeffs_e = |re: f64| -> Result<(f64, f64, f64)> {
        let v = m.vol_e(re);
        Ok((0.5 * v * v, m.drift_e(re), 0.0))
    };
    let op_e = build_space_op(&re_nodes, he, &coeffs_e)?;

    struct Phase {
        lhs_d: Vec<TridiagLU>,
        lhs_e: TridiagLU,
        theta: f64,
    }
    let make_phase = |theta: f64| -> Result<Phase> {
        let lhs_d = ops_d
            .iter()
            .map(|op| shifted(&op.tri, -theta * dt).factor())
            .collect::<Result<Vec<_>>>()?;
        let lhs_e = shifted(&op_e.tri, -theta * dt).factor()?;
        Ok(Phase { lhs_d, lhs_e, theta })
    };
    let ie = make_phase(1.0)?;
    let cn = make_phase(0.5)?;

    let upwind_d: usize = ops_d.iter().map(|o| o.upwind_nodes).sum::<usize>() / n_re.max(1);
    let meta = SchemeMeta2F {
        dr_d: hd,
        dr_e: he,
        dtau: dt,
        rannacher_steps: RANNACHER_STEPS,
        boundaries_d: (ops_d[0].left, ops_d[0].right),
        boundaries_e: (op_e.left, op_e.right),
        upwind_nodes_d: upwind_d,
        upwind_nodes_e: op_e.upwind_nodes,
    };

    let size = n_rd * n_re;
    let mut p = vec![1.0; size];
    let mut ldp = vec![0.0; size];
    let mut lep = vec![0.0; size];
    let mut lcp = vec![0.0; size];
    let mut y = vec![0.0; size];
    let mut col_in = vec![0.0; n_rd];
    let mut col_out = vec![0.0; n_rd];

    // Cross-term coefficient rho sigma_d rd^gd sigma_e re^ge at each node;
    // zero on the edges where the one-sided stencil would be needed.
    let cross: Vec<f64> = (0..size)
        .map(|idx| {
            let (i, j) = (idx / n_re, idx % n_re);
            if i == 0 || i == n_rd - 1 || j == 0 || j == n_re - 1 {
                0.0
            } else {
                m.rho * m.vol_d(rd_nodes[i]) * m.vol_e(re_nodes[j])
            }
        })
        .collect();

    let apply_ld = |p: &[f64], out: &mut [f64], col_in: &mut [f64], col_out: &mut [f64]| {
        for j in 0..n_re {
            for i in 0..n_rd {
                col_in[i] = p[i * n_re + j];
            }
            ops_d[j].tri.mul_vec(col_in, col_out);
            for i in 0..n_rd {
                out[i * n_re + j] = col_out[i];
            }
        }
    };
    let apply_le = |p: &[f64], out: &mut [f64]| {
        for i in 0..n_rd {
            op_e.tri.mul_vec(&p[i * n_re..(i + 1) * n_re], &mut out[i * n_re..(i + 1) * n_re]);
        }
    };
    let apply_cross = |p: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        for i in 1..n_rd - 1 {
            for j in 1..n_re - 1 {
                let idx = i * n_re + j;
                let k = cross[idx];
                if k != 0.0 {
                    let mixed = p[idx + n_re + 1] - p[idx + n_re - 1] - p[idx - n_re + 1]
                        + p[idx - n_re - 1];
                    out[idx] = k * mixed / (4.0 * hd * he);
                }
            }
        }
    };

    let mut snapshots: Vec<(f64, Vec<f64>)> = Vec::new();
    for (&t, &k) in snap_taus.iter().zip(&snap_steps) {
        if k == 0 {
            snapshots.push((t, p.clone()));
        }
    }
    for step in 1..=grid.n_tau {
        let phase = if step <= RANNACHER_STEPS { &ie } else { &cn };
        apply_ld(&p, &mut ldp, &mut col_in, &mut col_out);
        apply_le(&p, &mut lep);
        if m.rho != 0.0 {
            apply_cross(&p, &mut lcp);
        }
        // Predictor: fully explicit step.
        for idx in 0..size {
            y[idx] = p[idx] + dt * (ldp[idx] + lep[idx] + lcp[idx]);
        }
        // Domestic-direction correction.
        for j in 0..n_re {
            for i in 0..n_rd {
                col_in[i] = y[i * n_re + j] - phase.theta * dt * ldp[i * n_re + j];
            }
            phase.lhs_d[j].solve_in_place(&mut col_in);
            for i in 0..n_rd {
                y[i * n_re + j] = col_in[i];
            }
        }
        // European-direction correction.
        for i in 0..n_rd {
            let row = &mut y[i * n_re..(i + 1) * n_re];
            for (v, l) in row.iter_mut().zip(&lep[i * n_re..(i + 1) * n_re]) {
                *v -= phase.theta * dt * l;
            }
            phase.lhs_e.solve_in_place(row);
        }
        std::mem::swap(&mut p, &mut y);
        check_slice(&p, step, step as f64 * dt, grid.rd_min, hd.min(he), dt)?;
        for (&t, &k) in snap_taus.iter().zip(&snap_steps) {
            if k == step {
                snapshots.push((t, p.clone()));
            }
        }
    }
    Ok(PDESolution2F { grid: *grid, rd_nodes, re_nodes, snapshots, meta })
}
