//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)).
//!
//! The solver is generic over a fixed-size state so the same stepper drives
//! the scalar flow u' = -psi(u), the paired system used for the generating
//! function identity, and the complex flows (as 2- or 4-dimensional real
//! systems) behind the Laplace inversion tables.

/// Integration controls. `rel_tol`/`abs_tol` enter the mixed error norm the
/// usual way; `max_steps` is a hard guard against runaway step rejection.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError {
    /// Step size underflowed while the error estimate stayed above tolerance.
    StepUnderflow { t: f64 },
    /// Exceeded the step budget.
    MaxSteps { t: f64 },
}

impl std::fmt::Display for OdeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OdeError::StepUnderflow { t } => {
                write!(
                    f,
                    "ODE step size underflow at t = {t} (tolerance unreachable)"
                )
            }
            OdeError::MaxSteps { t } => write!(f, "ODE step budget exhausted at t = {t}"),
        }
    }
}

// Dormand-Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b (order 5) minus b-hat (order 4), used for the embedded error estimate.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrate dy/dt = f(t, y) from `t0` to `t1` (requires `t1 >= t0`) and
/// return the terminal state.
pub fn integrate<const N: usize, F>(
    f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &OdeOptions,
) -> Result<[f64; N], OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    debug_assert!(t1 >= t0);
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    // First-step heuristic: scale by the size of the right-hand side.
    let ynorm = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let fnorm = k1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut h = (0.01 * (1.0 + ynorm) / (1.0 + fnorm)).min(span);

    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::MaxSteps { t });
        }
        h = h.min(t1 - t);
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t });
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let ynew = axpy(
            &y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        // FSAL stage.
        let k7 = f(t + h, &ynew);

        let mut err_sq = 0.0;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            err_sq += r * r;
        }
        let err = (err_sq / N as f64).sqrt();

        if !err.is_finite() {
            // Reject hard and shrink.
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = ynew;
            k1 = k7;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = OdeOptions::default();
        let y = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, 1.0, [1.0], &opts).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn logistic_flow() {
        // u' = u - u^2, u(0) = 1/2 has u(t) = 1 / (1 + e^{-t}).
        let opts = OdeOptions::default();
        let y = integrate(
            |_, y: &[f64; 1]| [y[0] - y[0] * y[0]],
            0.0,
            2.0,
            [0.5],
            &opts,
        )
        .unwrap();
        assert!((y[0] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn coupled_system() {
        // Harmonic oscillator, period 2*pi.
        let opts = OdeOptions::default();
        let y = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            std::f64::consts::TAU,
            [1.0, 0.0],
            &opts,
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-8);
        assert!(y[1].abs() < 1e-8);
    }

    #[test]
    fn zero_span_is_identity() {
        let opts = OdeOptions::default();
        let y = integrate(|_, y: &[f64; 1]| [-y[0]], 3.0, 3.0, [2.5], &opts).unwrap();
        assert_eq!(y[0], 2.5);
    }

    #[test]
    fn stiff_start_from_large_state() {
        // u' = -u^2 from a huge initial condition relaxes to ~1/t.
        let opts = OdeOptions::default();
        let y = integrate(|_, y: &[f64; 1]| [-y[0] * y[0]], 0.0, 1.0, [1e6], &opts).unwrap();
        let exact = 1e6 / (1.0 + 1e6);
        assert!((y[0] - exact).abs() / exact < 1e-8);
    }
}
