//! Gauss-Legendre quadrature with geometric panel refinement.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

type Rule = (Vec<f64>, Vec<f64>);

fn rule_cache() -> &'static Mutex<HashMap<usize, Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if let Some(rule) = rule_cache().lock().unwrap().get(&n) {
        return rule.clone();
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    rule_cache()
        .lock()
        .unwrap()
        .insert(n, (nodes.clone(), weights.clone()));
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre integral of `f` over [a, b].
pub fn integrate_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integrate over [a, b] by splitting into 1, 2, 4, ... equal panels of the
/// given order until the result changes by less than
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_refined<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    order: usize,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, String> {
    if a == b {
        return Ok(0.0);
    }
    let mut prev = f64::NAN;
    for level in 0..=8u32 {
        let panels = 1usize << level;
        let width = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * width;
            acc += integrate_gl(&mut f, lo, lo + width, order);
        }
        if level > 0 && (acc - prev).abs() <= abs_tol.max(rel_tol * acc.abs()) {
            return Ok(acc);
        }
        prev = acc;
    }
    Err(format!(
        "quadrature did not converge on [{a}, {b}] (rel_tol {rel_tol})"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        // 16-point rule integrates degree-31 polynomials exactly.
        let val = integrate_gl(|x| x.powi(7) - 3.0 * x.powi(2) + 1.0, 0.0, 2.0, 16);
        let exact = 2.0f64.powi(8) / 8.0 - 2.0f64.powi(3) + 2.0;
        assert!((val - exact).abs() < 1e-12);
    }

    #[test]
    fn refined_exponential() {
        let val = integrate_refined(|x| x.exp(), 0.0, 1.0, 16, 1e-12, 1e-14).unwrap();
        assert!((val - (1.0f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(
            integrate_refined(|x| x, 1.0, 1.0, 8, 1e-10, 0.0).unwrap(),
            0.0
        );
    }
}
