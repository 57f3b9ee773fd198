//! Numerical evaluation of the analytic layer.
//!
//! The central object is the flow u_t(lambda), the unique solution of
//!
//! ```text
//! u_t(lambda) + ∫_0^t psi(u_s(lambda)) ds = lambda,
//! ```
//!
//! solved here as the initial-value problem du/ds = -psi(u), u(0) = lambda,
//! by adaptive Runge-Kutta. Everything else is assembled from it:
//!
//! * `u_star` — the same flow for the tilted mechanism psi*;
//! * `v_star` — the excursion survival mass, the root of
//!   ∫_{v}^{∞} d xi / psi*(xi) = s;
//! * `w` — the per-individual exponent of the joint backbone functional,
//!   lambda_star (1 - e^{-w_t(r,theta)}) = u_t(theta + lambda_star (1-r)) -
//!   u*_t(theta);
//! * the immigration integral ∫_0^t phi(u_{t-s}(lambda)) ds and the full
//!   generating functionals built from it;
//! * the backbone generators F and G.
//!
//! `w = +infinity` is a legitimate value (at r = 0, theta = 0 the backbone
//! never dies out) and is returned as `f64::INFINITY`, not an error.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism, TiltedMechanism};
use crate::numerics::ode::{integrate, OdeOptions};
use crate::numerics::quadrature::gauss_legendre;
use crate::numerics::roots::newton_bracketed;

/// Numerical controls for the solver. The defaults resolve the analytic
/// layer several orders of magnitude below Monte Carlo noise.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Gauss-Legendre panel order for the time integrals.
    pub quad_order: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ode_rel_tol: 1e-10,
            ode_abs_tol: 1e-12,
            quad_order: 16,
        }
    }
}

/// Cached evaluator for the flow and every derived functional. Immutable
/// after construction; the memo tables hold pure function values keyed by
/// exact input bits, so sharing across workers cannot change results.
pub struct SemigroupSolver {
    mech: BranchingMechanism,
    tilted: TiltedMechanism,
    imm: ImmigrationMechanism,
    opts: SolverOptions,
    lambda_star: f64,
    branch_rate: f64,
    cache_u: Mutex<HashMap<(u64, u64), f64>>,
    cache_u_star: Mutex<HashMap<(u64, u64), f64>>,
    cache_v_star: Mutex<HashMap<u64, f64>>,
}

impl SemigroupSolver {
    pub fn new(mech: BranchingMechanism, imm: ImmigrationMechanism) -> Result<Self> {
        Self::with_options(mech, imm, SolverOptions::default())
    }

    pub fn with_options(
        mech: BranchingMechanism,
        imm: ImmigrationMechanism,
        opts: SolverOptions,
    ) -> Result<Self> {
        mech.validate()?;
        imm.validate()?;
        let tilted = mech.conditioned()?;
        let lambda_star = tilted.shift();
        let branch_rate = tilted.rate();
        Ok(Self {
            mech,
            tilted,
            imm,
            opts,
            lambda_star,
            branch_rate,
            cache_u: Mutex::new(HashMap::new()),
            cache_u_star: Mutex::new(HashMap::new()),
            cache_v_star: Mutex::new(HashMap::new()),
        })
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    pub fn tilted(&self) -> &TiltedMechanism {
        &self.tilted
    }

    pub fn immigration(&self) -> &ImmigrationMechanism {
        &self.imm
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// q = psi'(lambda_star).
    pub fn branch_rate(&self) -> f64 {
        self.branch_rate
    }

    /// p = phi(lambda_star).
    pub fn immigration_rate(&self) -> f64 {
        self.imm.phi_unchecked(self.lambda_star)
    }

    fn ode_opts(&self) -> OdeOptions {
        OdeOptions {
            rel_tol: self.opts.ode_rel_tol,
            abs_tol: self.opts.ode_abs_tol,
            max_steps: 1_000_000,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        Ok(())
    }

    /// u_t(lambda): the flow du/ds = -psi(u) started from lambda.
    pub fn u(&self, t: f64, lam: f64) -> Result<f64> {
        self.check_time(t)?;
        if lam < 0.0 || !lam.is_finite() {
            return Err(Error::Domain(format!("u requires lam >= 0, got {lam}")));
        }
        let key = (t.to_bits(), lam.to_bits());
        if let Some(v) = self.cache_u.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let val = integrate(
            |_, y: &[f64; 1]| [-self.mech.psi_unchecked(y[0].max(0.0))],
            0.0,
            t,
            [lam],
            &self.ode_opts(),
        )
        .map_err(|e| Error::Numerical(format!("u({t}, {lam}): {e}")))?[0]
            .max(0.0);
        self.cache_u.lock().unwrap().insert(key, val);
        Ok(val)
    }

    /// u*_t(theta): the flow for the tilted mechanism.
    pub fn u_star(&self, t: f64, theta: f64) -> Result<f64> {
        self.check_time(t)?;
        if theta < 0.0 || !theta.is_finite() {
            return Err(Error::Domain(format!(
                "u_star requires theta >= 0, got {theta}"
            )));
        }
        let key = (t.to_bits(), theta.to_bits());
        if let Some(v) = self.cache_u_star.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let val = integrate(
            |_, y: &[f64; 1]| [-self.tilted.psi_star(y[0].max(0.0))],
            0.0,
            t,
            [theta],
            &self.ode_opts(),
        )
        .map_err(|e| Error::Numerical(format!("u_star({t}, {theta}): {e}")))?[0]
            .max(0.0);
        self.cache_u_star.lock().unwrap().insert(key, val);
        Ok(val)
    }

    /// The shift identity u*_t(theta) = u_t(theta + lambda_star) -
    /// lambda_star, as an independent route for cross-checking `u_star`.
    pub fn u_star_via_shift(&self, t: f64, theta: f64) -> Result<f64> {
        Ok(self.u(t, theta + self.lambda_star)? - self.lambda_star)
    }

    /// ∫_0^g u*_s(theta) ds, accumulated alongside the flow itself.
    pub fn u_star_integral(&self, g: f64, theta: f64) -> Result<f64> {
        self.check_time(g)?;
        let y = integrate(
            |_, y: &[f64; 2]| {
                let u = y[0].max(0.0);
                [-self.tilted.psi_star(u), u]
            },
            0.0,
            g,
            [theta, 0.0],
            &self.ode_opts(),
        )
        .map_err(|e| Error::Numerical(format!("u_star_integral({g}, {theta}): {e}")))?;
        Ok(y[1])
    }

    /// v*_s: the excursion mass still alive a time-gap `s` later, i.e. the
    /// root of ∫_{v}^{∞} d xi / psi*(xi) = s. Requires the tail integral to
    /// converge, which for these families means beta > 0.
    pub fn v_star(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::Domain(format!("v_star requires s > 0, got {s}")));
        }
        if self.mech.beta == 0.0 {
            return Err(Error::SurvivalMassUndefined(
                "beta = 0: the tail integral of 1/psi* diverges and the excursion measure \
                 has no finite survival mass"
                    .into(),
            ));
        }
        let key = s.to_bits();
        if let Some(v) = self.cache_v_star.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let tail = |v: f64| self.psi_star_tail_integral(v);
        // Bracket: tail is decreasing in v.
        let mut lo = 1.0;
        let mut hi = 1.0;
        let mut guard = 0;
        while tail(lo) < s {
            lo *= 0.5;
            guard += 1;
            if guard > 2048 {
                return Err(Error::Numerical("v_star bracket (low side) failed".into()));
            }
        }
        guard = 0;
        while tail(hi) > s {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::Numerical("v_star bracket (high side) failed".into()));
            }
        }
        let val = newton_bracketed(
            |v| tail(v) - s,
            |v| -1.0 / self.tilted.psi_star(v),
            lo,
            hi,
            1e-12,
            1e-13 * s.max(1.0),
            200,
        )
        .map_err(|e| Error::Numerical(format!("v_star({s}): {e}")))?;
        self.cache_v_star.lock().unwrap().insert(key, val);
        Ok(val)
    }

    /// ∫_{v}^{∞} d xi / psi*(xi), via the substitution xi = v / w which
    /// maps the tail onto (0, 1] with a smooth integrand when beta > 0.
    fn psi_star_tail_integral(&self, v: f64) -> f64 {
        let (nodes, weights) = gauss_legendre(48);
        let mut acc = 0.0;
        for (x, wt) in nodes.iter().zip(weights.iter()) {
            let w = 0.5 * (x + 1.0);
            let xi = v / w;
            acc += wt * v / (w * w * self.tilted.psi_star(xi));
        }
        acc * 0.5
    }

    /// w_t(r, theta) >= 0, defined by lambda_star (1 - e^{-w}) =
    /// u_t(theta + lambda_star (1 - r)) - u*_t(theta).
    ///
    /// At r = 0 (any theta, t > 0) the value is `f64::INFINITY` and
    /// legitimately so: single-root backbone trees never die out, so the
    /// functional behind e^{-w} vanishes; equivalently the tilt identity
    /// makes the difference above exactly lambda_star. Handled exactly
    /// rather than through the cancellation-prone formula.
    pub fn w(&self, t: f64, r: f64, theta: f64) -> Result<f64> {
        self.check_time(t)?;
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("w requires r in [0, 1], got {r}")));
        }
        if theta < 0.0 {
            return Err(Error::Domain(format!("w requires theta >= 0, got {theta}")));
        }
        if r == 0.0 {
            // -log r at t = 0, and the tilt identity for t > 0: infinite
            // either way.
            return Ok(f64::INFINITY);
        }
        let lam_eff = theta + self.lambda_star * (1.0 - r);
        let diff = self.u(t, lam_eff)? - self.u_star(t, theta)?;
        let arg = 1.0 - diff / self.lambda_star;
        let tol = 1e3 * self.opts.ode_abs_tol.max(1e-15) / self.lambda_star.min(1.0);
        if arg < -tol || arg > 1.0 + tol {
            return Err(Error::InvariantViolation(format!(
                "exp(-w) = {arg} outside [0, 1] at (t={t}, r={r}, theta={theta}); \
                 upstream flow accuracy is suspect"
            )));
        }
        let arg = arg.clamp(0.0, 1.0);
        Ok(if arg == 0.0 { f64::INFINITY } else { -arg.ln() })
    }

    /// The flow evaluated along a sorted sequence of times in one pass.
    fn flow_along(&self, times: &[f64], start: f64, tilted: bool) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(times.len());
        let mut t_prev = 0.0;
        let mut y = [start];
        for &t in times {
            debug_assert!(t >= t_prev);
            y = if tilted {
                integrate(
                    |_, y: &[f64; 1]| [-self.tilted.psi_star(y[0].max(0.0))],
                    t_prev,
                    t,
                    y,
                    &self.ode_opts(),
                )
            } else {
                integrate(
                    |_, y: &[f64; 1]| [-self.mech.psi_unchecked(y[0].max(0.0))],
                    t_prev,
                    t,
                    y,
                    &self.ode_opts(),
                )
            }
            .map_err(|e| Error::Numerical(format!("flow continuation at t = {t}: {e}")))?;
            out.push(y[0].max(0.0));
            t_prev = t;
        }
        Ok(out)
    }

    /// Gauss-Legendre panels over [0, t] of `integrand(u-flow value)`,
    /// refined by doubling the panel count until the relative change drops
    /// below the ODE relative tolerance.
    fn flow_time_integral(
        &self,
        t: f64,
        start: f64,
        tilted: bool,
        integrand: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let order = self.opts.quad_order.max(4);
        let (nodes, weights) = gauss_legendre(order);
        let mut prev = f64::NAN;
        for level in 0..=7u32 {
            let panels = 1usize << level;
            let width = t / panels as f64;
            let mut times = Vec::with_capacity(panels * order);
            for p in 0..panels {
                let lo = p as f64 * width;
                for x in &nodes {
                    times.push(lo + 0.5 * width * (x + 1.0));
                }
            }
            let values = self.flow_along(&times, start, tilted)?;
            let mut acc = 0.0;
            for (i, v) in values.iter().enumerate() {
                acc += weights[i % order] * integrand(*v);
            }
            acc *= 0.5 * width;
            if level > 0
                && (acc - prev).abs()
                    <= (10.0 * self.opts.ode_abs_tol).max(self.opts.ode_rel_tol * acc.abs())
            {
                return Ok(acc);
            }
            prev = acc;
        }
        Err(Error::Numerical(format!(
            "time-integral quadrature did not converge on [0, {t}]"
        )))
    }

    /// ∫_0^t phi(u_{t-s}(lambda)) ds = ∫_0^t phi(u_s(lambda)) ds.
    pub fn immigration_integral(&self, t: f64, lam: f64) -> Result<f64> {
        self.check_time(t)?;
        if lam < 0.0 {
            return Err(Error::Domain(format!(
                "immigration_integral requires lam >= 0, got {lam}"
            )));
        }
        if self.imm.is_null() {
            return Ok(0.0);
        }
        self.flow_time_integral(t, lam, false, |u| self.imm.phi_unchecked(u))
    }

    /// ∫_0^t phi*(u*_s(theta)) ds, the spine-dressing exponent.
    pub fn spine_dressing_exponent(&self, t: f64, theta: f64) -> Result<f64> {
        self.check_time(t)?;
        if self.imm.is_null() {
            return Ok(0.0);
        }
        let ls = self.lambda_star;
        self.flow_time_integral(t, theta, true, |u| {
            self.imm.delta * u + self.imm.jumps.phi_integral_tilted(ls, u)
        })
    }

    /// E_x[e^{-lambda X_t}] = exp(-x u_t(lambda) - ∫_0^t phi(u_{t-s}) ds).
    pub fn cbi_laplace(&self, x: f64, t: f64, lam: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("initial mass must be >= 0, got {x}")));
        }
        let exponent = x * self.u(t, lam)? + self.immigration_integral(t, lam)?;
        Ok((-exponent).exp())
    }

    /// E_x[r^{Z_t} e^{-theta Lambda_t}] = cbi_laplace at the effective
    /// argument theta + lambda_star (1 - r). This is the analytic target for
    /// the joint backbone functional, immigration factor included.
    pub fn joint_backbone_laplace(&self, x: f64, t: f64, r: f64, theta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("r must be in [0, 1], got {r}")));
        }
        if theta < 0.0 {
            return Err(Error::Domain(format!("theta must be >= 0, got {theta}")));
        }
        self.cbi_laplace(x, t, theta + self.lambda_star * (1.0 - r))
    }

    /// Backbone branching generator F(r) = psi(lambda_star (1 - r)) /
    /// lambda_star.
    pub fn gw_branch_generator(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("r must be in [0, 1], got {r}")));
        }
        Ok(self.mech.psi_unchecked(self.lambda_star * (1.0 - r)) / self.lambda_star)
    }

    /// Backbone immigration generator G(r) = phi(lambda_star) -
    /// phi(lambda_star (1 - r)).
    pub fn gw_immigration_generator(&self, r: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("r must be in [0, 1], got {r}")));
        }
        Ok(self.imm.phi_unchecked(self.lambda_star)
            - self.imm.phi_unchecked(self.lambda_star * (1.0 - r)))
    }

    /// Residual between the two routes to w: the closed form above versus
    /// the generating-function flow
    ///
    /// ```text
    /// d/dt e^{-w_t} = (psi*(u*_t(theta) - lambda_star e^{-w_t})
    ///                  - psi*(u*_t(theta))) / lambda_star,
    /// ```
    ///
    /// integrated jointly with u*, initial value r. The two routes are
    /// independent, so a small residual certifies both.
    pub fn w_flow_residual(&self, t: f64, r: f64, theta: f64) -> Result<f64> {
        self.check_time(t)?;
        // r = 0 is excluded: it is the w = +infinity line (the flow's
        // fixed point at zero), where the comparison is vacuous.
        if r <= 0.0 || r > 1.0 || r.is_nan() {
            return Err(Error::Domain(format!(
                "w_flow_residual requires r in (0, 1], got r={r}"
            )));
        }
        let ls = self.lambda_star;
        let y = integrate(
            |_, y: &[f64; 2]| {
                let u = y[0].max(0.0);
                let g = y[1].clamp(0.0, 1.0);
                [
                    -self.tilted.psi_star(u),
                    (self.tilted.psi_star(u - ls * g) - self.tilted.psi_star(u)) / ls,
                ]
            },
            0.0,
            t,
            [theta, r],
            &self.ode_opts(),
        )
        .map_err(|e| Error::Numerical(format!("w flow at (t={t}, r={r}, theta={theta}): {e}")))?;
        let w_flow = -y[1].clamp(f64::MIN_POSITIVE, 1.0).ln();
        let w_closed = self.w(t, r, theta)?;
        Ok((w_flow - w_closed).abs())
    }
}
