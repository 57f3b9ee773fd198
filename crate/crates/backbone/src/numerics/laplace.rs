//! Numerical Laplace-transform inversion for distribution functions.
//!
//! Implements the Fourier-series (Bromwich trapezoid) method with Euler
//! summation in the Abate-Whitt parametrization. Given the
//! Laplace-Stieltjes transform L(s) = E[e^{-sX}] of a nonnegative random
//! variable, the CDF F(x) = P(X <= x) is recovered from the ordinary
//! transform F_hat(s) = L(s)/s evaluated along Re(s) = A/(2x).
//!
//! With the default parameters the discretization error is ~e^{-A} ≈ 1e-8
//! and the Euler-accelerated truncation error is comparable for the smooth
//! CDFs handled here; roundoff enters through e^{A/2} ≈ 1e4, leaving a
//! practical floor around 1e-11. All of this is far below the table
//! accuracy budget `eps_inv`.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct EulerInversion {
    /// Bromwich contour parameter (controls discretization error e^{-a}).
    pub a: f64,
    /// Terms summed before Euler averaging starts.
    pub n_terms: usize,
    /// Euler (binomial) averaging depth.
    pub m_euler: usize,
}

impl Default for EulerInversion {
    fn default() -> Self {
        Self {
            a: 18.4,
            n_terms: 32,
            m_euler: 13,
        }
    }
}

impl EulerInversion {
    /// Number of transform evaluations `cdf_at` performs.
    pub fn evals(&self) -> usize {
        self.n_terms + self.m_euler + 1
    }

    /// Evaluate F(x) from the Laplace-Stieltjes transform `lst`. `x` must be
    /// strictly positive. The closure may fail (the transforms here are
    /// backed by ODE solves); failures propagate.
    pub fn cdf_at<E>(
        &self,
        lst: impl FnMut(Complex64) -> Result<Complex64, E>,
        x: f64,
    ) -> Result<f64, E> {
        Ok(self.invert_pair(lst, x)?.0)
    }

    /// Evaluate (F(x), f(x)) — distribution function and density — sharing
    /// one set of transform evaluations: the density is the inverse of the
    /// transform itself, the CDF that of transform/s.
    pub fn cdf_density_at<E>(
        &self,
        lst: impl FnMut(Complex64) -> Result<Complex64, E>,
        x: f64,
    ) -> Result<(f64, f64), E> {
        self.invert_pair(lst, x)
    }

    fn invert_pair<E>(
        &self,
        mut lst: impl FnMut(Complex64) -> Result<Complex64, E>,
        x: f64,
    ) -> Result<(f64, f64), E> {
        debug_assert!(x > 0.0);
        let total = self.n_terms + self.m_euler;
        // Partial sums of the two alternating series.
        let mut partial_cdf = Vec::with_capacity(total + 1);
        let mut partial_den = Vec::with_capacity(total + 1);
        let s0 = Complex64::new(self.a / (2.0 * x), 0.0);
        let l0 = lst(s0)?;
        let mut sum_cdf = 0.5 * (l0 / s0).re;
        let mut sum_den = 0.5 * l0.re;
        partial_cdf.push(sum_cdf);
        partial_den.push(sum_den);
        for k in 1..=total {
            let s = Complex64::new(self.a / (2.0 * x), k as f64 * std::f64::consts::PI / x);
            let l = lst(s)?;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum_cdf += sign * (l / s).re;
            sum_den += sign * l.re;
            partial_cdf.push(sum_cdf);
            partial_den.push(sum_den);
        }
        // Euler averaging of partial[n_terms ..= n_terms + m_euler].
        let m = self.m_euler;
        let mut acc_cdf = 0.0;
        let mut acc_den = 0.0;
        let mut binom = 1.0f64;
        for j in 0..=m {
            acc_cdf += binom * partial_cdf[self.n_terms + j];
            acc_den += binom * partial_den[self.n_terms + j];
            binom *= (m - j) as f64 / (j + 1) as f64;
        }
        let scale = (self.a / 2.0).exp() / x / 2.0f64.powi(m as i32);
        Ok((scale * acc_cdf, scale * acc_den))
    }
}
