//! Safeguarded Newton iteration on a bracketing interval.

/// Solve f(x) = 0 on [lo, hi] given f(lo) and f(hi) of opposite sign.
/// Newton steps are taken when they stay inside the current bracket,
/// otherwise the step falls back to bisection. Converges when either the
/// bracket or the residual is below its tolerance.
pub fn newton_bracketed<F, D>(
    f: F,
    df: D,
    mut lo: f64,
    mut hi: f64,
    x_rel_tol: f64,
    f_abs_tol: f64,
    max_iter: usize,
) -> Result<f64, String>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(format!(
            "root not bracketed on [{lo}, {hi}]: f(lo) = {flo}, f(hi) = {fhi}"
        ));
    }
    // Normalize so f(lo) < 0 < f(hi) by tracking the sign.
    let sign = if flo < 0.0 { 1.0 } else { -1.0 };

    let mut x = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        let fx = sign * f(x);
        if fx.abs() <= f_abs_tol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo) <= x_rel_tol * x.abs().max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        let d = sign * df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(format!(
        "root finder did not converge after {max_iter} iterations (bracket [{lo}, {hi}])"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_root() {
        let r = newton_bracketed(
            |x| x * x - x,
            |x| 2.0 * x - 1.0,
            0.5,
            10.0,
            1e-14,
            1e-14,
            200,
        )
        .unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decreasing_function() {
        // tail(v) = 1/v - s at s = 2 has root 0.5.
        let r = newton_bracketed(
            |v| 1.0 / v - 2.0,
            |v| -1.0 / (v * v),
            1e-6,
            100.0,
            1e-14,
            1e-14,
            200,
        )
        .unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unbracketed_errors() {
        assert!(
            newton_bracketed(|x| x * x + 1.0, |x| 2.0 * x, -1.0, 1.0, 1e-12, 1e-12, 50).is_err()
        );
    }
}
