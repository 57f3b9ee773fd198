//! Monotone piecewise-cubic interpolation (Fritsch-Carlson) with numeric
//! inversion. Used for tabulated CDFs and the cached survival-mass curve,
//! both of which must stay monotone under interpolation.

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Hermite cubic through `(xs, ys)` with supplied derivatives, limited
    /// where necessary to preserve monotonicity (slopes clamped to
    /// [0, 3 * secant] on nondecreasing data). With exact derivatives the
    /// interpolant is 4th-order accurate; `fit` below (estimated slopes) is
    /// only 2nd-order.
    pub fn with_slopes(xs: Vec<f64>, ys: Vec<f64>, mut slopes: Vec<f64>) -> Result<Self, String> {
        let n = xs.len();
        if n < 2 || ys.len() != n || slopes.len() != n {
            return Err("monotone cubic needs at least two nodes".into());
        }
        for w in xs.windows(2) {
            if w[1] <= w[0] || w[0].is_nan() || w[1].is_nan() {
                return Err("interpolation abscissae must be strictly increasing".into());
            }
        }
        for i in 0..n {
            let d_left = if i > 0 {
                (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1])
            } else {
                f64::INFINITY
            };
            let d_right = if i + 1 < n {
                (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            } else {
                f64::INFINITY
            };
            let cap = 3.0 * d_left.min(d_right);
            slopes[i] = slopes[i].clamp(0.0, cap.max(0.0));
        }
        Ok(Self { xs, ys, slopes })
    }

    /// Fit a monotone cubic through `(xs, ys)`. `xs` must be strictly
    /// increasing; `ys` must be monotone (either direction).
    pub fn fit(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, String> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err("monotone cubic needs at least two nodes".into());
        }
        for w in xs.windows(2) {
            if w[1] <= w[0] || w[0].is_nan() || w[1].is_nan() {
                return Err("interpolation abscissae must be strictly increasing".into());
            }
        }
        let mut deltas = vec![0.0; n - 1];
        for i in 0..n - 1 {
            deltas[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        }
        let mut slopes = vec![0.0; n];
        slopes[0] = deltas[0];
        slopes[n - 1] = deltas[n - 2];
        for i in 1..n - 1 {
            let d0 = deltas[i - 1];
            let d1 = deltas[i];
            if d0 * d1 <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // Weighted harmonic mean keeps the interpolant monotone.
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                slopes[i] = (w0 + w1) / (w0 / d0 + w1 / d1);
            }
        }
        // Endpoint limiter (Fritsch-Carlson three-point rule, simplified).
        for (i, d) in [(0usize, deltas[0]), (n - 1, deltas[n - 2])] {
            if d == 0.0 || slopes[i] * d < 0.0 {
                slopes[i] = 0.0;
            } else if slopes[i].abs() > 3.0 * d.abs() {
                slopes[i] = 3.0 * d;
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn cell(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.clamp(1, self.xs.len() - 1) - 1,
        }
    }

    /// Evaluate at `x`, clamping outside the node range.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= *self.xs.last().unwrap() {
            return *self.ys.last().unwrap();
        }
        let i = self.cell(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + m0 * (s3 - 2.0 * s2 + s)
            + y1 * (-2.0 * s3 + 3.0 * s2)
            + m1 * (s3 - s2)
    }

    /// Invert a nondecreasing interpolant: smallest x with eval(x) = `y`
    /// (clamped to the node range). Bisection on the containing cell.
    pub fn eval_inverse(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.xs[0];
        }
        if y >= self.ys[n - 1] {
            return self.xs[n - 1];
        }
        let i = match self.ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => return self.xs[i],
            Err(i) => i - 1,
        };
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes() {
        let xs = vec![0.0, 1.0, 2.0, 4.0];
        let ys = vec![0.0, 0.5, 0.8, 1.0];
        let c = MonotoneCubic::fit(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(ys.iter()) {
            assert!((c.eval(*x) - y).abs() < 1e-14);
        }
    }

    #[test]
    fn stays_monotone() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - (-x).exp()).collect();
        let c = MonotoneCubic::fit(xs, ys).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let v = c.eval(k as f64 * 5.8 / 1000.0);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn accurate_on_smooth_cdf() {
        let xs: Vec<f64> = (0..80).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - (-x).exp()).collect();
        let c = MonotoneCubic::fit(xs, ys).unwrap();
        for k in 0..790 {
            let x = k as f64 * 0.01;
            assert!((c.eval(x) - (1.0 - (-x).exp())).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_slopes_are_high_order() {
        let xs: Vec<f64> = (0..80).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - (-x).exp()).collect();
        let ds: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        let c = MonotoneCubic::with_slopes(xs, ys, ds).unwrap();
        for k in 0..790 {
            let x = k as f64 * 0.01;
            assert!((c.eval(x) - (1.0 - (-x).exp())).abs() < 5e-7);
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.15).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - (-x).exp()).collect();
        let c = MonotoneCubic::fit(xs, ys).unwrap();
        for k in 1..20 {
            let y = k as f64 * 0.04;
            let x = c.eval_inverse(y);
            assert!((c.eval(x) - y).abs() < 1e-12);
        }
    }
}
