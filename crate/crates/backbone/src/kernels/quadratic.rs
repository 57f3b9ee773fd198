//! Closed-form sampler backend for the diffusion-only mechanism
//! psi(l) = alpha l + beta l^2 (so psi*(l) = q l + beta l^2 with
//! q = -alpha).
//!
//! The tilted flow has the Riccati solution
//!
//! ```text
//! u*_g(theta) = theta e^{-q g} / (1 + b(g) theta),   b(g) = beta (1 - e^{-q g}) / q,
//! ```
//!
//! from which everything is elementary:
//!
//! * v*_g = e^{-q g} / b(g);
//! * the excursion mass alive after gap g is Exp(mean b(g))
//!   (1 - u*/v* = 1 / (1 + b theta));
//! * the transition from mass y is a Poisson(y v*_g) sum of those
//!   exponentials, i.e. an atom at 0 plus Gamma(N, b(g));
//! * ∫_0^g u*_s(theta) ds = log(1 + b(g) theta) / beta, so the aggregated
//!   dressing within gap g of the horizon at coefficient c is
//!   Gamma(c / beta, b(g)).
//!
//! Each identity is unit-tested against the Laplace oracles.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use super::TailKind;

pub struct QuadraticKernel {
    rate_q: f64,
    beta: f64,
    delta: f64,
}

impl QuadraticKernel {
    pub(crate) fn new(rate_q: f64, beta: f64, delta: f64) -> Self {
        Self {
            rate_q,
            beta,
            delta,
        }
    }

    /// b(g) = beta (1 - e^{-q g}) / q.
    #[inline]
    pub fn excursion_scale(&self, gap: f64) -> f64 {
        self.beta * (-(-self.rate_q * gap).exp_m1()) / self.rate_q
    }

    #[inline]
    pub fn v_star(&self, gap: f64) -> f64 {
        (-self.rate_q * gap).exp() / self.excursion_scale(gap)
    }

    pub fn sample_excursion_mass<R: Rng + ?Sized>(&self, gap: f64, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        self.excursion_scale(gap) * e
    }

    pub fn sum_excursions<R: Rng + ?Sized>(&self, n: u64, gap: f64, rng: &mut R) -> f64 {
        if n == 0 {
            return 0.0;
        }
        Gamma::new(n as f64, self.excursion_scale(gap))
            .expect("positive gamma parameters")
            .sample(rng)
    }

    /// Total dressing mass from excursions born within `g_hi` of the
    /// horizon on one stream: Gamma(c / beta, b(g_hi)).
    pub fn sample_excursion_tail<R: Rng + ?Sized>(
        &self,
        kind: TailKind,
        g_hi: f64,
        rng: &mut R,
    ) -> f64 {
        let shape = match kind {
            TailKind::Lifeline => 2.0,
            TailKind::Spine => self.delta / self.beta,
        };
        Gamma::new(shape, self.excursion_scale(g_hi))
            .expect("positive gamma parameters")
            .sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::super::{BackendChoice, KernelOptions, TailKind, TransitionKernel};
    use crate::mechanisms::{BranchingMechanism, ImmigrationMechanism, JumpMeasure};
    use crate::rng::replicate_rng;
    use crate::semigroup::SemigroupSolver;

    fn kernel(alpha: f64, beta: f64, delta: f64) -> TransitionKernel {
        let solver = Arc::new(
            SemigroupSolver::new(
                BranchingMechanism::new(alpha, beta, JumpMeasure::Zero).unwrap(),
                ImmigrationMechanism::new(delta, JumpMeasure::Zero).unwrap(),
            )
            .unwrap(),
        );
        TransitionKernel::new(
            solver,
            BackendChoice::QuadraticExact,
            1.0,
            KernelOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn v_star_agrees_with_solver() {
        let k = kernel(-1.0, 1.0, 1.0);
        for gap in [0.1, 0.5, 1.0] {
            let closed = k.v_star(gap).unwrap();
            let solved = k.solver().v_star(gap).unwrap();
            assert!((closed - solved).abs() < 1e-9 * closed.max(1.0));
        }
        // And for asymmetric parameters.
        let k = kernel(-0.8, 0.35, 0.2);
        for gap in [0.2, 0.9] {
            let closed = k.v_star(gap).unwrap();
            let solved = k.solver().v_star(gap).unwrap();
            assert!((closed - solved).abs() < 1e-9 * closed.max(1.0));
        }
    }

    #[test]
    fn excursion_mass_mean_matches_lt_slope() {
        // E J(g) = (1 - e^{-g}); empirical mean within 4 SE.
        let k = kernel(-1.0, 1.0, 1.0);
        let mut rng = replicate_rng(11, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let j = k.sample_excursion_mass(1.0, &mut rng).unwrap();
            sum += j;
            sumsq += j * j;
        }
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).sqrt();
        let expected = -(-1.0f64).exp_m1();
        assert!((mean - expected).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn excursion_mass_is_monotone_in_gap() {
        let k = kernel(-1.0, 1.0, 1.0);
        // Exponential means b(g) increase with the gap.
        let m1 = 1.0 - (-1.0f64).exp();
        let m2 = 1.0 - (-2.0f64).exp();
        assert!(m2 > m1);
        // Spot-check via Monte Carlo.
        let mut rng = replicate_rng(12, 0);
        let n = 50_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            s1 += k.sample_excursion_mass(1.0, &mut rng).unwrap();
            s2 += k.sample_excursion_mass(2.0, &mut rng).unwrap();
        }
        assert!(s2 / n as f64 > s1 / n as f64);
    }

    #[test]
    fn transition_mean_decays_at_tilted_rate() {
        // E X_g = y e^{-q g}.
        let k = kernel(-1.0, 1.0, 1.0);
        let mut rng = replicate_rng(13, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = k.sample_transition(1.0, 1.0, &mut rng).unwrap();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).sqrt();
        let expected = (-1.0f64).exp();
        assert!(
            (mean - expected).abs() < 4.0 * sd / (n as f64).sqrt(),
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn tail_aggregate_matches_gamma_oracle() {
        // LT of the lifeline tail is (1 + b(eps) theta)^{-2}; compare the
        // empirical LT against the kernel's analytic oracle at several
        // theta.
        let k = kernel(-1.0, 1.0, 1.0);
        let mut rng = replicate_rng(14, 0);
        let n = 100_000;
        let eps = k.tail_gap();
        for theta in [0.5, 1.0, 2.0] {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let v = (-theta
                    * k.sample_excursion_tail(TailKind::Lifeline, eps, &mut rng)
                        .unwrap())
                .exp();
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / n as f64;
            let sd = ((sumsq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).sqrt();
            let target = k
                .excursion_tail_laplace(TailKind::Lifeline, eps, theta)
                .unwrap();
            let b = 1.0 - (-k.tail_gap()).exp();
            let gamma_lt = (1.0 + b * theta).powi(-2);
            assert!((target - gamma_lt).abs() < 1e-8);
            assert!(
                (mean - target).abs() < 4.0 * sd / (n as f64).sqrt(),
                "theta {theta}: {mean} vs {target}"
            );
        }
    }

    #[test]
    fn spine_tail_uses_delta_over_beta_shape() {
        let k = kernel(-1.0, 0.5, 0.7);
        let mut rng = replicate_rng(15, 0);
        let n = 100_000;
        let theta = 1.0;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let v = (-theta
                * k.sample_excursion_tail(TailKind::Spine, k.tail_gap(), &mut rng)
                    .unwrap())
            .exp();
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let sd = ((sumsq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64).sqrt();
        let target = k
            .excursion_tail_laplace(TailKind::Spine, k.tail_gap(), theta)
            .unwrap();
        assert!((mean - target).abs() < 4.0 * sd / (n as f64).sqrt());
    }
}
