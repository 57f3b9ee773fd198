//! Branching and immigration mechanisms.
//!
//! A branching mechanism is the convex function
//!
//! ```text
//! psi(l) = alpha*l + beta*l^2 + ∫ (e^{-l x} - 1 + l x 1_{x<1}) Pi(dx)
//! ```
//!
//! and an immigration mechanism is
//!
//! ```text
//! phi(l) = delta*l + ∫ (1 - e^{-l x}) nu(dx).
//! ```
//!
//! Jump measures are restricted to a closed set of parametric families with
//! analytic integrals and exact samplers; every downstream consumer (flow
//! equations, tilted sampling, thinning bounds) relies on these closed
//! forms. Supercritical here means psi'(0+) < 0; the unique positive root
//! `lambda_star` of psi and the tilt psi*(l) = psi(l + lambda_star) drive
//! the whole decomposition.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};
use crate::numerics::roots::newton_bracketed;

/// Relative tolerance on the psi-residual when solving for lambda_star.
pub const LAMBDA_STAR_TOL: f64 = 1e-12;
const LAMBDA_STAR_MAX_ITER: usize = 200;

/// A point mass `mass * delta_{size}` of a jump measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub size: f64,
    pub mass: f64,
}

/// Jump measure on (0, infinity). All families integrate (1 ∧ x^2) and have
/// a finite mean on [1, infinity) by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpMeasure {
    /// No jumps.
    Zero,
    /// Density `rate * decay * e^{-decay x} dx`: total mass `rate`, mean
    /// jump size `1/decay`.
    CompoundExponential { rate: f64, decay: f64 },
    /// Finite sum of point masses, sorted by size.
    FiniteAtoms { atoms: Vec<Atom> },
}

/// x * e^{-m x} integrated over [0, 1]; series fallback avoids cancellation
/// for small m.
pub(crate) fn int_x_exp_unit(m: f64) -> f64 {
    if m < 1e-4 {
        // sum_k (-m)^k / (k! (k+2))
        let mut term = 1.0;
        let mut acc = 0.5;
        for k in 1..8 {
            term *= -m / k as f64;
            acc += term / (k as f64 + 2.0);
        }
        acc
    } else {
        (1.0 - (-m).exp() * (1.0 + m)) / (m * m)
    }
}

impl JumpMeasure {
    pub fn is_zero(&self) -> bool {
        matches!(self, JumpMeasure::Zero)
    }

    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        match self {
            JumpMeasure::Zero => Ok(()),
            JumpMeasure::CompoundExponential { rate, decay } => {
                for (name, v) in [("rate", *rate), ("decay", *decay)] {
                    if !v.is_finite() {
                        return Err(ValidationError::NonFiniteParameter { name, value: v });
                    }
                    if v <= 0.0 {
                        return Err(ValidationError::NonPositiveParameter { name, value: v });
                    }
                }
                Ok(())
            }
            JumpMeasure::FiniteAtoms { atoms } => {
                if atoms.is_empty() {
                    return Err(ValidationError::AtomsEmpty);
                }
                for a in atoms {
                    for (name, v) in [("atom size", a.size), ("atom mass", a.mass)] {
                        if !v.is_finite() {
                            return Err(ValidationError::NonFiniteParameter { name, value: v });
                        }
                        if v <= 0.0 {
                            return Err(ValidationError::NonPositiveParameter { name, value: v });
                        }
                    }
                }
                if atoms.windows(2).any(|w| w[1].size <= w[0].size) {
                    return Err(ValidationError::AtomsUnsorted);
                }
                Ok(())
            }
        }
    }

    /// ∫ (e^{-l x} - 1 + l x 1_{x<1}) dM(x), the jump part of psi.
    pub fn psi_integral(&self, lam: f64) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                // Written with lam factored out so psi(0) = 0 holds exactly.
                let (c, mu) = (*rate, *decay);
                lam * (c * mu * int_x_exp_unit(mu) - c / (lam + mu))
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| {
                    let comp = if a.size < 1.0 { lam * a.size } else { 0.0 };
                    a.mass * ((-lam * a.size).exp() - 1.0 + comp)
                })
                .sum(),
        }
    }

    /// d/dl of `psi_integral`: ∫ (x 1_{x<1} - x e^{-l x}) dM(x).
    pub fn psi_integral_deriv(&self, lam: f64) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                let (c, mu) = (*rate, *decay);
                c * mu * (int_x_exp_unit(mu) - 1.0 / ((lam + mu) * (lam + mu)))
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| {
                    let comp = if a.size < 1.0 { a.size } else { 0.0 };
                    a.mass * (comp - a.size * (-lam * a.size).exp())
                })
                .sum(),
        }
    }

    /// ∫ (1 - e^{-l x}) e^{-shift x} dM(x); with `shift = 0` this is the
    /// jump part of phi.
    pub fn phi_integral_tilted(&self, shift: f64, lam: f64) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                let (c, mu) = (*rate, *decay);
                c * mu * (1.0 / (mu + shift) - 1.0 / (mu + shift + lam))
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| a.mass * (-(-lam * a.size).exp_m1()) * (-shift * a.size).exp())
                .sum(),
        }
    }

    /// ∫_{(0,1)} x dM(x), the compensated small-jump mean; together with
    /// alpha it gives the asymptotic slope of psi when beta = 0.
    pub fn compensation_mean(&self) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                rate * decay * int_x_exp_unit(*decay)
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .filter(|a| a.size < 1.0)
                .map(|a| a.mass * a.size)
                .sum(),
        }
    }

    /// ∫_{[1,∞)} x dM(x), the mean mass of large jumps (always finite for
    /// these families; its finiteness is what enforces conservativity).
    pub fn tail_mean(&self) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                let (c, mu) = (*rate, *decay);
                c * (-mu).exp() * (1.0 + mu) / mu
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .filter(|a| a.size >= 1.0)
                .map(|a| a.mass * a.size)
                .sum(),
        }
    }

    /// ∫ e^{-shift x} dM(x).
    pub fn tilted_mass(&self, shift: f64) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => rate * decay / (decay + shift),
            JumpMeasure::FiniteAtoms { atoms } => {
                atoms.iter().map(|a| a.mass * (-shift * a.size).exp()).sum()
            }
        }
    }

    /// ∫ x e^{-shift x} dM(x).
    pub fn tilted_mean(&self, shift: f64) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                let s = decay + shift;
                rate * decay / (s * s)
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| a.mass * a.size * (-shift * a.size).exp())
                .sum(),
        }
    }

    /// ∫ x^2 e^{-shift x} dM(x).
    pub fn tilted_second_moment(&self, shift: f64) -> f64 {
        match self {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::CompoundExponential { rate, decay } => {
                let s = decay + shift;
                2.0 * rate * decay / (s * s * s)
            }
            JumpMeasure::FiniteAtoms { atoms } => atoms
                .iter()
                .map(|a| a.mass * a.size * a.size * (-shift * a.size).exp())
                .sum(),
        }
    }

    /// Draw from the normalized tilted measure e^{-shift x} dM(x).
    pub fn sample_tilted<R: Rng + ?Sized>(&self, shift: f64, rng: &mut R) -> f64 {
        match self {
            JumpMeasure::Zero => panic!("cannot sample from the zero measure"),
            JumpMeasure::CompoundExponential { decay, .. } => {
                Exp::new(decay + shift).unwrap().sample(rng)
            }
            JumpMeasure::FiniteAtoms { atoms } => {
                let weights: Vec<f64> = atoms
                    .iter()
                    .map(|a| a.mass * (-shift * a.size).exp())
                    .collect();
                atoms[discrete_index(&weights, rng)].size
            }
        }
    }

    /// Draw from the normalized size-biased tilted measure
    /// x e^{-shift x} dM(x).
    pub fn sample_tilted_size_biased<R: Rng + ?Sized>(&self, shift: f64, rng: &mut R) -> f64 {
        match self {
            JumpMeasure::Zero => panic!("cannot sample from the zero measure"),
            JumpMeasure::CompoundExponential { decay, .. } => {
                Gamma::new(2.0, 1.0 / (decay + shift)).unwrap().sample(rng)
            }
            JumpMeasure::FiniteAtoms { atoms } => {
                let weights: Vec<f64> = atoms
                    .iter()
                    .map(|a| a.mass * a.size * (-shift * a.size).exp())
                    .collect();
                atoms[discrete_index(&weights, rng)].size
            }
        }
    }
}

/// Index into `weights` proportional to the (nonnegative) weights.
pub(crate) fn discrete_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// The triplet (alpha, beta, Pi) defining psi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingMechanism {
    pub alpha: f64,
    pub beta: f64,
    pub jumps: JumpMeasure,
}

impl BranchingMechanism {
    pub fn new(alpha: f64, beta: f64, jumps: JumpMeasure) -> Result<Self> {
        let mech = Self { alpha, beta, jumps };
        mech.validate()?;
        Ok(mech)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(ValidationError::NonFiniteParameter {
                name: "alpha",
                value: self.alpha,
            }
            .into());
        }
        if !self.beta.is_finite() {
            return Err(ValidationError::NonFiniteParameter {
                name: "beta",
                value: self.beta,
            }
            .into());
        }
        if self.beta < 0.0 {
            return Err(ValidationError::NegativeParameter {
                name: "beta",
                value: self.beta,
            }
            .into());
        }
        self.jumps.validate()?;
        if self.beta == 0.0 && self.jumps.is_zero() {
            return Err(ValidationError::LinearMechanism.into());
        }
        let d0 = self.psi_prime_at_origin();
        if d0 >= 0.0 || d0.is_nan() {
            return Err(ValidationError::NotSupercritical { derivative: d0 }.into());
        }
        // With no diffusion part, psi(l) ~ l * (alpha + ∫_{x<1} x Pi(dx))
        // for large l; the slope must be positive for the root to exist.
        if self.beta == 0.0 {
            let slope = self.alpha + self.jumps.compensation_mean();
            if slope <= 0.0 {
                return Err(ValidationError::NoPositiveRoot { slope }.into());
            }
        }
        Ok(())
    }

    /// psi'(0+) = alpha - ∫_{[1,∞)} x Pi(dx).
    pub fn psi_prime_at_origin(&self) -> f64 {
        self.alpha - self.jumps.tail_mean()
    }

    /// Evaluate psi at `lam >= 0`.
    pub fn psi(&self, lam: f64) -> Result<f64> {
        if lam < 0.0 || !lam.is_finite() {
            return Err(Error::Domain(format!("psi requires lam >= 0, got {lam}")));
        }
        Ok(self.psi_unchecked(lam))
    }

    #[inline]
    pub(crate) fn psi_unchecked(&self, lam: f64) -> f64 {
        self.alpha * lam + self.beta * lam * lam + self.jumps.psi_integral(lam)
    }

    /// psi'(lam) for `lam >= 0`.
    pub fn psi_prime(&self, lam: f64) -> Result<f64> {
        if lam < 0.0 || !lam.is_finite() {
            return Err(Error::Domain(format!(
                "psi_prime requires lam >= 0, got {lam}"
            )));
        }
        Ok(self.alpha + 2.0 * self.beta * lam + self.jumps.psi_integral_deriv(lam))
    }

    /// The unique positive root of psi, by bracketing plus safeguarded
    /// Newton. psi is strictly convex with psi(0) = 0 and psi'(0+) < 0, so
    /// the root exists and the residual shrinks to near machine precision.
    pub fn lambda_star(&self) -> Result<f64> {
        self.validate()?;
        // Double the upper end until psi > 0.
        let mut hi = 1.0;
        let mut iter = 0;
        while self.psi_unchecked(hi) <= 0.0 {
            hi *= 2.0;
            iter += 1;
            if iter > 200 {
                return Err(Error::Numerical(
                    "no positive bracket for lambda_star after 200 doublings".into(),
                ));
            }
        }
        // psi vanishes at 0 too, so the lower end must sit strictly inside
        // (0, root) where psi < 0; convexity guarantees halving finds it.
        let mut lo = 0.5 * hi;
        iter = 0;
        while self.psi_unchecked(lo) >= 0.0 {
            lo *= 0.5;
            iter += 1;
            if iter > 2048 {
                return Err(Error::Numerical(
                    "no negative bracket for lambda_star above zero".into(),
                ));
            }
        }
        // Converge on the abscissa; the residual then lands far below the
        // 1e-12 budget because psi' is O(1) at the root.
        let root = newton_bracketed(
            |l| self.psi_unchecked(l),
            |l| self.alpha + 2.0 * self.beta * l + self.jumps.psi_integral_deriv(l),
            lo,
            hi,
            LAMBDA_STAR_TOL * 1e-3,
            0.0,
            LAMBDA_STAR_MAX_ITER,
        )
        .map_err(Error::Numerical)?;
        Ok(root)
    }

    /// Tilt by the root: psi*(l) = psi(l + lambda_star).
    pub fn conditioned(&self) -> Result<TiltedMechanism> {
        let shift = self.lambda_star()?;
        Ok(TiltedMechanism {
            base: self.clone(),
            shift,
        })
    }
}

/// The subcritical mechanism psi* obtained by shifting psi to its root.
/// Kept as (base, shift) so every evaluation is exact; the tilted jump
/// measure e^{-shift x} Pi(dx) is exposed through the base measure's tilted
/// samplers.
#[derive(Debug, Clone)]
pub struct TiltedMechanism {
    base: BranchingMechanism,
    shift: f64,
}

impl TiltedMechanism {
    pub fn base(&self) -> &BranchingMechanism {
        &self.base
    }

    /// The root lambda_star.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// psi*(l) = psi(l + lambda_star), defined for l >= -lambda_star.
    /// The extended domain is needed by the generating-function flow, whose
    /// argument dips down to -lambda_star.
    pub fn psi_star(&self, lam: f64) -> f64 {
        let arg = (lam + self.shift).max(0.0);
        self.base.psi_unchecked(arg)
    }

    /// (psi*)'(l).
    pub fn psi_star_prime(&self, lam: f64) -> f64 {
        let arg = (lam + self.shift).max(0.0);
        self.base.alpha + 2.0 * self.base.beta * arg + self.base.jumps.psi_integral_deriv(arg)
    }

    /// q = psi'(lambda_star), the backbone branch rate; also (psi*)'(0+).
    pub fn rate(&self) -> f64 {
        self.psi_star_prime(0.0)
    }

    /// (psi*)''(0+) = 2 beta + ∫ x^2 e^{-lambda_star x} Pi(dx).
    pub fn second_derivative_at_origin(&self) -> f64 {
        2.0 * self.base.beta + self.base.jumps.tilted_second_moment(self.shift)
    }
}

/// The pair (delta, nu) defining phi. `(0, Zero)` is allowed and means no
/// immigration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationMechanism {
    pub delta: f64,
    pub jumps: JumpMeasure,
}

impl ImmigrationMechanism {
    pub fn none() -> Self {
        Self {
            delta: 0.0,
            jumps: JumpMeasure::Zero,
        }
    }

    pub fn new(delta: f64, jumps: JumpMeasure) -> Result<Self> {
        let imm = Self { delta, jumps };
        imm.validate()?;
        Ok(imm)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(ValidationError::NonFiniteParameter {
                name: "delta",
                value: self.delta,
            }
            .into());
        }
        if self.delta < 0.0 {
            return Err(ValidationError::NegativeParameter {
                name: "delta",
                value: self.delta,
            }
            .into());
        }
        self.jumps.validate()?;
        Ok(())
    }

    pub fn is_null(&self) -> bool {
        self.delta == 0.0 && self.jumps.is_zero()
    }

    /// phi(l) for l >= 0.
    pub fn phi(&self, lam: f64) -> Result<f64> {
        if lam < 0.0 || !lam.is_finite() {
            return Err(Error::Domain(format!("phi requires lam >= 0, got {lam}")));
        }
        Ok(self.phi_unchecked(lam))
    }

    #[inline]
    pub(crate) fn phi_unchecked(&self, lam: f64) -> f64 {
        self.delta * lam + self.jumps.phi_integral_tilted(0.0, lam)
    }

    /// phi*(l) = phi(l + lambda_star) - phi(lambda_star), evaluated through
    /// the tilted integral `delta*l + ∫ (1 - e^{-l y}) e^{-lambda_star y}
    /// nu(dy)` rather than by subtracting two phi values.
    pub fn phi_star(&self, lambda_star: f64, lam: f64) -> Result<f64> {
        if lam < 0.0 || !lam.is_finite() {
            return Err(Error::Domain(format!(
                "phi_star requires lam >= 0, got {lam}"
            )));
        }
        Ok(self.delta * lam + self.jumps.phi_integral_tilted(lambda_star, lam))
    }

    /// phi*_u(l) = phi*(l + u) - phi*(u) = delta*l +
    /// ∫ (1 - e^{-l y}) e^{-y (lambda_star + u)} nu(dy), for u >= -lambda_star
    /// and lambda_star + u + l >= 0.
    pub fn phi_star_shifted(&self, lambda_star: f64, u: f64, lam: f64) -> Result<f64> {
        let total = lambda_star + u + lam;
        if total < 0.0 || u < -lambda_star {
            return Err(Error::Domain(format!(
                "phi_star_shifted requires lambda_star + u + lam >= 0, got {total}"
            )));
        }
        Ok(self.delta * lam + self.jumps.phi_integral_tilted(lambda_star + u, lam))
    }
}

/// Scenario-level diagnostics produced by [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct MechanismDiagnostics {
    /// The unique positive root of psi.
    pub lambda_star: f64,
    /// Residual |psi(lambda_star)|.
    pub psi_residual: f64,
    /// psi'(0+), negative for supercritical mechanisms.
    pub psi_prime_at_origin: f64,
    /// q = psi'(lambda_star), the backbone reproduction rate.
    pub branch_rate: f64,
    /// p = phi(lambda_star), the backbone immigration arrival rate.
    pub immigration_rate: f64,
    /// False when (delta, nu) = (0, Zero): the decomposition degenerates to
    /// the no-immigration case.
    pub immigration_enabled: bool,
    /// ∫_{[1,∞)} x Pi(dx), finite by construction.
    pub jump_tail_mean: f64,
}

/// Validate a mechanism pair and report the derived constants. Each failed
/// assertion surfaces as its own named validation error.
pub fn validate(
    mech: &BranchingMechanism,
    imm: &ImmigrationMechanism,
) -> Result<MechanismDiagnostics> {
    mech.validate()?;
    imm.validate()?;
    let lambda_star = mech.lambda_star()?;
    let branch_rate = mech.psi_prime(lambda_star)?;
    let immigration_rate = imm.phi(lambda_star)?;
    Ok(MechanismDiagnostics {
        lambda_star,
        psi_residual: mech.psi_unchecked(lambda_star).abs(),
        psi_prime_at_origin: mech.psi_prime_at_origin(),
        branch_rate,
        immigration_rate,
        immigration_enabled: !imm.is_null(),
        jump_tail_mean: mech.jumps.tail_mean(),
    })
}
